"""Config files, the streaming series writer, snapshots, and checkpoints."""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from . import diagnostics
from .domain import (BoxSpec, ConfigError, InitSpec, KernelSpec, OutputSpec,
                     SimConfig, validate_config)

SNAPSHOT_MAGIC = b"CSNS"
SNAPSHOT_VERSION = 1
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIIddQI")
_FIELD_ENTRY = struct.Struct("<16sQQ")


class BadSnapshot(ValueError):
    pass


def _build_section(cls, data, path, errors):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            errors.append((path + key, "unknown key"))
    use = {k: v for k, v in data.items() if k in known}
    try:
        return cls(**use)
    except TypeError as exc:
        errors.append((path.rstrip(".") or "config", str(exc)))
        return None


def config_from_data(data):
    """Build and validate a SimConfig from plain dicts (parsed JSON)."""
    if not isinstance(data, dict):
        raise ConfigError([("config", "top level must be a table")])
    errors = []
    top = dict(data)
    built = {}
    for key, cls in (("box", BoxSpec), ("kernel", KernelSpec),
                     ("init_profile", InitSpec), ("output", OutputSpec)):
        if key in top:
            value = top.pop(key)
            if isinstance(value, dict):
                section = _build_section(cls, value, key + ".", errors)
                if section is not None:
                    built[key] = section
            else:
                errors.append((key, "expected a table"))
    cfg = _build_section(SimConfig, {**top, **built}, "", errors)
    if errors or cfg is None:
        raise ConfigError(errors)
    return validate_config(cfg)


def parse_config(path):
    """Read a JSON run configuration; collects every violation before failing."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("config", f"invalid JSON: {exc}")]) from exc
    return config_from_data(data)


def serialize_config(cfg):
    """JSON text round-trippable through parse_config."""
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True)


def _format_row(row, columns):
    return ",".join(repr(float(row[c])) for c in columns) + "\n"


class TimeseriesWriter:
    """Streams diagnostics rows to CSV.

    fs_residual needs the energy derivative, so each row is held until the
    three-row stencil around it is complete: interior rows get the centered
    derivative, the first and last rows one-sided ones.  close() drains the
    tail; suspend() instead leaves the tail rows in the writer state so a
    resumed run continues the file byte-for-byte.
    """

    def __init__(self, path, columns, c_sq, _append=False):
        self.path = Path(path)
        self.columns = list(columns)
        self.c_sq = float(c_sq)
        self._pending = []
        self._window = []
        self._n_written = 0
        self._fh = open(self.path, "a" if _append else "w", newline="")
        if not _append:
            self._fh.write(",".join(self.columns) + "\n")
            self._fh.flush()

    def add_row(self, row):
        self._pending.append(dict(row))
        self._window.append((float(row["t"]), float(row["E"])))
        if len(self._window) > 3:
            self._window.pop(0)
        if len(self._window) < 3:
            return
        if self._n_written == 0 and len(self._pending) == 3:
            self._write(self._pending.pop(0), stencil_index=0)
            self._write(self._pending.pop(0), stencil_index=1)
        else:
            self._write(self._pending.pop(0), stencil_index=1)

    def _write(self, row, stencil_index=None):
        if stencil_index is not None:
            ts = [w[0] for w in self._window]
            es = [w[1] for w in self._window]
            dedt = diagnostics.lagrange_derivative(ts, es, ts[stencil_index])
            row["fs_residual"] = diagnostics.fs_residual(
                row["t"], row["E"], dedt, row["lowfreq_energy"], self.c_sq)
        self._fh.write(_format_row(row, self.columns))
        self._fh.flush()
        self._n_written += 1

    def close(self):
        """Drain held rows (the last one gets the right one-sided stencil)."""
        if self._fh is None:
            return
        while self._pending:
            last = len(self._pending) == 1
            row = self._pending.pop(0)
            if len(self._window) == 3 and last:
                self._write(row, stencil_index=2)
            else:
                self._write(row, stencil_index=None)
        self._fh.close()
        self._fh = None

    def suspend(self):
        """Stop writing without draining; capture the tail via state_dict."""
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def state_dict(self):
        return {
            "n_written": self._n_written,
            "window": [list(w) for w in self._window],
            "pending": self._pending,
            "c_sq": self.c_sq,
        }

    @classmethod
    def restore(cls, path, columns, state):
        # drop any rows written after the checkpoint, so resuming from a
        # mid-run checkpoint reproduces the uninterrupted series exactly
        keep = 1 + int(state["n_written"])
        with open(path, "r+", newline="") as fh:
            for _ in range(keep):
                if not fh.readline():
                    raise ValueError(
                        f"{path} holds fewer rows than its checkpoint")
            fh.truncate(fh.tell())
        w = cls(path, columns, state["c_sq"], _append=True)
        w._n_written = state["n_written"]
        w._window = [tuple(x) for x in state["window"]]
        w._pending = [dict(r) for r in state["pending"]]
        return w


def read_timeseries(path):
    """Load a diagnostics CSV as a structured array keyed by column name."""
    return np.genfromtxt(path, delimiter=",", names=True)


def write_snapshot(path, box, t, u_phys, X, V, w):
    """Binary state dump: velocity grids plus the particle arrays.

    Fixed little-endian layout: magic, version, (d, N, L, t, n), a field
    table of (name, offset, count) entries, then contiguous f64 payloads.
    """
    fields = [(f"u{a}", np.ascontiguousarray(u_phys[a], dtype="<f8").ravel())
              for a in range(box.d)]
    fields += [("X", np.ascontiguousarray(X, dtype="<f8").ravel()),
               ("V", np.ascontiguousarray(V, dtype="<f8").ravel()),
               ("w", np.ascontiguousarray(w, dtype="<f8").ravel())]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, box.d, box.N,
                              box.L, t, X.shape[0], len(fields)))
        offset = 0
        for name, arr in fields:
            fh.write(_FIELD_ENTRY.pack(name.encode(), offset, arr.size))
            offset += arr.size
        for _, arr in fields:
            fh.write(arr.tobytes())


def read_snapshot(path):
    """Parse a snapshot; returns a dict with box, t, u, X, V, w."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise BadSnapshot("truncated header")
    magic, version, d, n_grid, length, t, n_particles, n_fields = \
        _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise BadSnapshot(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise BadSnapshot(f"unsupported version {version}")
    box = BoxSpec(d=int(d), L=float(length), N=int(n_grid))
    table = []
    pos = _HEADER.size
    for _ in range(n_fields):
        if pos + _FIELD_ENTRY.size > len(raw):
            raise BadSnapshot("truncated field table")
        name, offset, count = _FIELD_ENTRY.unpack_from(raw, pos)
        table.append((name.rstrip(b"\x00").decode(), int(offset), int(count)))
        pos += _FIELD_ENTRY.size
    payload = np.frombuffer(raw, dtype="<f8", offset=pos)
    blobs = {}
    for name, offset, count in table:
        if offset + count > payload.size:
            raise BadSnapshot(f"field {name} overruns payload")
        blobs[name] = np.array(payload[offset:offset + count])
    try:
        u = np.stack([blobs[f"u{a}"].reshape(box.shape) for a in range(box.d)])
        X = blobs["X"].reshape(n_particles, box.d)
        V = blobs["V"].reshape(n_particles, box.d)
        w = blobs["w"]
    except (KeyError, ValueError) as exc:
        raise BadSnapshot(f"inconsistent field table: {exc}") from exc
    if w.size != n_particles:
        raise BadSnapshot("weight count disagrees with particle count")
    return {"box": box, "t": float(t), "u": u, "X": X, "V": V, "w": w}


def write_checkpoint(path, cfg, state, recorder_state, writer_state):
    """Everything needed to continue a run bit-identically."""
    np.savez(path,
             version=np.int64(CHECKPOINT_VERSION),
             config_json=serialize_config(cfg),
             t=np.float64(state.t),
             step_index=np.int64(state.step_index),
             c=state.u.c,
             X=state.ens.X, V=state.ens.V, w=state.ens.w,
             recorder_json=json.dumps(recorder_state),
             writer_json=json.dumps(writer_state))


def read_checkpoint(path):
    with np.load(path, allow_pickle=False) as npz:
        version = int(npz["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return {
            "cfg": config_from_data(json.loads(str(npz["config_json"]))),
            "t": float(npz["t"]),
            "step_index": int(npz["step_index"]),
            "c": npz["c"],
            "X": npz["X"],
            "V": npz["V"],
            "w": npz["w"],
            "recorder_state": json.loads(str(npz["recorder_json"])),
            "writer_state": json.loads(str(npz["writer_json"])),
        }
