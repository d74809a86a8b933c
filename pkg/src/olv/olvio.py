"""Artifact persistence: binary frame stacks, JSONL trajectories and
checkpoints, CSV logs and estimate tables, field snapshots with JSON
sidecars, and the run manifest.

Every writer is deterministic: identical inputs produce byte-identical
files.  Floats are serialized with ``repr``, which is the shortest
string that round-trips the exact double, so readers recover inputs
bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import platform
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, InconsistentLog
from .geometry import FACES, CrossingEvent, SimState

_MAGIC = b"OLV1"
_HEADER = struct.Struct("<IQ")  # particle count, frame count


# ---------------------------------------------------------------------------
# binary frame stacks

def write_frames(path, states) -> int:
    """Store sampled states as a compact binary stack.

    Layout: magic ``OLV1``, uint32 particle count, uint64 frame count,
    then per frame one float64 time followed by the (N, 3) positions and
    (N, 3) momenta, all little-endian doubles in row-major order.
    Returns the number of frames written.
    """
    states = list(states)
    if not states:
        raise ConfigInvalid("refusing to write an empty frame stack")
    n = states[0].n
    if any(s.n != n for s in states):
        raise ConfigInvalid("frame stack needs a constant particle count")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_HEADER.pack(n, len(states)))
        for s in states:
            fh.write(struct.pack("<d", s.t))
            fh.write(np.ascontiguousarray(s.q, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(s.p, dtype="<f8").tobytes())
    return len(states)


def read_frames(path) -> list[SimState]:
    """Load a binary frame stack written by :func:`write_frames`."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise InconsistentLog(f"{path} does not start with the OLV1 magic")
    n, count = _HEADER.unpack_from(raw, 4)
    offset = 4 + _HEADER.size
    per_frame = 8 + 2 * n * 3 * 8
    if len(raw) != offset + count * per_frame:
        raise InconsistentLog(
            f"{path} holds {len(raw)} bytes, expected {offset + count * per_frame}")
    states = []
    for _ in range(count):
        (t,) = struct.unpack_from("<d", raw, offset)
        offset += 8
        q = np.frombuffer(raw, "<f8", n * 3, offset).reshape(n, 3).copy()
        offset += n * 3 * 8
        p = np.frombuffer(raw, "<f8", n * 3, offset).reshape(n, 3).copy()
        offset += n * 3 * 8
        states.append(SimState(t, q, p))
    return states


# ---------------------------------------------------------------------------
# JSONL trajectories and checkpoints

def _float_list(a):
    return [[repr(float(v)) for v in row] for row in np.asarray(a, dtype=float)]


def _parse_rows(rows):
    return np.array([[float(v) for v in row] for row in rows], dtype=float)


def write_trajectory_jsonl(path, states, region=None) -> int:
    """One JSON record per sampled frame: time, positions, momenta, and,
    when a region is given, the per-particle location label."""
    from .geometry import Region, region_labels

    with open(path, "w") as fh:
        for s in states:
            rec = {
                "time": repr(float(s.t)),
                "positions": _float_list(s.q),
                "momenta": _float_list(s.p),
            }
            if region is not None:
                labels = region_labels(s.q, region)
                rec["region"] = [Region(k).name.lower() for k in labels]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return len(list(states))


def read_trajectory_jsonl(path):
    """Records from :func:`write_trajectory_jsonl` with arrays restored."""
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append({
                "time": float(rec["time"]),
                "positions": _parse_rows(rec["positions"]),
                "momenta": _parse_rows(rec["momenta"]),
                "region": rec.get("region"),
            })
    return out


def write_checkpoints_jsonl(path, positions_by_sweep) -> int:
    """Sampler checkpoints: one record per stored configuration, holding
    the sweep index, the occupancy, and the positions."""
    count = 0
    with open(path, "w") as fh:
        for sweep, q in positions_by_sweep:
            q = np.asarray(q, dtype=float).reshape(-1, 3)
            rec = {"sweep": int(sweep), "n": int(q.shape[0]),
                   "positions": _float_list(q)}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            count += 1
    return count


def read_checkpoints_jsonl(path):
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            q = _parse_rows(rec["positions"]).reshape(-1, 3)
            if q.shape[0] != rec["n"]:
                raise InconsistentLog("checkpoint occupancy disagrees with positions")
            out.append((int(rec["sweep"]), q))
    return out


# ---------------------------------------------------------------------------
# CSV logs

def write_events_csv(path, events, dt: float, t0: float = 0.0) -> int:
    """Boundary-crossing log with columns step, time, particle,
    direction, face.  The step index is recovered from the absolute
    event time: a crossing during step k satisfies t0 + (k-1) dt < t
    <= t0 + k dt."""
    if dt <= 0:
        raise ConfigInvalid("event log needs the positive step size")
    with open(path, "w") as fh:
        fh.write("step,time,particle,direction,face\n")
        for ev in events:
            step = int(np.ceil((ev.time - t0) / dt - 1e-9))
            fh.write(f"{step},{_cell(ev.time)},{ev.particle},"
                     f"{ev.direction},{ev.face}\n")
    return len(list(events))


def read_events_csv(path):
    events = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "step,time,particle,direction,face":
            raise InconsistentLog(f"unexpected event-log header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            step, t, particle, direction, face = line.strip().split(",")
            if direction not in ("in", "out") or face not in FACES:
                raise InconsistentLog(f"malformed event row {line!r}")
            events.append((int(step), CrossingEvent(
                int(particle), direction, face, float(t))))
    return events


def write_jump_events_csv(path, events) -> int:
    """Reservoir jump log with columns time, type, n_before, n_after,
    delta_u (the potential-energy change of the jump)."""
    with open(path, "w") as fh:
        fh.write("time,type,n_before,n_after,delta_u\n")
        for ev in events:
            fh.write(f"{_cell(ev.time)},{ev.kind},{ev.n_before},{ev.n_after},"
                     f"{_cell(ev.delta_u)}\n")
    return len(list(events))


def read_jump_events_csv(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "time,type,n_before,n_after,delta_u":
            raise InconsistentLog(f"unexpected jump-log header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            t, kind, nb, na, du = line.strip().split(",")
            rows.append((float(t), kind, int(nb), int(na), float(du)))
    return rows


def write_estimate_csv(path, quantity: str, units: str, columns,
                       rows, meta: dict | None = None) -> int:
    """Estimate table: a commented preamble naming the quantity and its
    units (plus optional extra metadata), a column-header line, then the
    data rows.  Error bars travel as ordinary columns."""
    columns = list(columns)
    rows = [list(r) for r in rows]
    for r in rows:
        if len(r) != len(columns):
            raise ConfigInvalid("estimate rows must match the column count")
    with open(path, "w") as fh:
        fh.write(f"# quantity: {quantity}\n")
        fh.write(f"# units: {units}\n")
        for key in sorted(meta or {}):
            fh.write(f"# {key}: {_cell(meta[key])}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_cell(v) for v in r) + "\n")
    return len(rows)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_estimate_csv(path):
    """Returns (metadata dict, column names, float data array)."""
    meta, columns, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    if columns is None:
        raise InconsistentLog(f"{path} holds no column header")
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(columns)))
    if data.size and data.shape[1] != len(columns):
        raise InconsistentLog(f"{path} rows disagree with the column header")
    return meta, columns, data


# ---------------------------------------------------------------------------
# field snapshots

def write_field(prefix, field, time: float = 0.0) -> Path:
    """Snapshot of a phase-space field: flat binary arrays beside a JSON
    sidecar recording shapes, grid extents, and the snapshot time.
    Returns the sidecar path."""
    from .hierarchy import DensityField, FullField

    prefix = Path(prefix)
    g = field.grid
    side = {
        "time": repr(float(time)),
        "grid": {
            "length": repr(float(g.length)),
            "omega": [repr(float(g.omega[0])), repr(float(g.omega[1]))],
            "nx": int(g.nx), "p_max": repr(float(g.p_max)),
            "np_cells": int(g.np_cells),
            "dt": repr(float(g.dt)), "mass": repr(float(g.mass)),
        },
    }
    if isinstance(field, FullField):
        side["kind"] = "full"
        side["shape"] = list(field.data.shape)
        _write_flat(prefix.with_suffix(".bin"), field.data)
    elif isinstance(field, DensityField):
        side["kind"] = "ladder"
        side["f0"] = repr(field.f0)
        side["shape_f1"] = list(field.f1.shape)
        _write_flat(Path(str(prefix) + "_f1.bin"), field.f1)
        if field.f2 is not None:
            side["shape_f2"] = list(field.f2.shape)
            _write_flat(Path(str(prefix) + "_f2.bin"), field.f2)
    else:
        raise ConfigInvalid("can only snapshot grid fields")
    sidecar = prefix.with_suffix(".json")
    sidecar.write_text(json.dumps(side, sort_keys=True, indent=1) + "\n")
    return sidecar


def _write_flat(path, a):
    Path(path).write_bytes(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_flat(path, shape):
    raw = Path(path).read_bytes()
    a = np.frombuffer(raw, "<f8")
    if a.size != int(np.prod(shape)):
        raise InconsistentLog(f"{path} does not hold {shape} doubles")
    return a.reshape(shape).copy()


def read_field(prefix):
    """Restore a snapshot written by :func:`write_field`.

    Returns (field, time); the grid is rebuilt from the sidecar.
    """
    from .hierarchy import DensityField, FullField, GridSpec

    prefix = Path(prefix)
    side = json.loads(prefix.with_suffix(".json").read_text())
    gg = side["grid"]
    grid = GridSpec(float(gg["length"]),
                    (float(gg["omega"][0]), float(gg["omega"][1])),
                    int(gg["nx"]), float(gg["p_max"]), int(gg["np_cells"]),
                    float(gg["dt"]), float(gg["mass"]))
    t = float(side["time"])
    if side["kind"] == "full":
        data = _read_flat(prefix.with_suffix(".bin"), side["shape"])
        return FullField(grid, data), t
    if side["kind"] == "ladder":
        f1 = _read_flat(Path(str(prefix) + "_f1.bin"), side["shape_f1"])
        f2 = None
        if "shape_f2" in side:
            f2 = _read_flat(Path(str(prefix) + "_f2.bin"), side["shape_f2"])
        return DensityField(grid, float(side["f0"]), f1, f2), t
    raise InconsistentLog(f"unknown snapshot kind {side['kind']!r}")


def write_error_report_csv(path, report) -> int:
    """Per-level discrepancy table for a field comparison."""
    rows = [[k, l1, linf] for k, (l1, linf) in
            enumerate(zip(report.l1, report.linf))]
    return write_estimate_csv(
        path, "field_discrepancy", "probability_mass",
        ["level", "l1", "linf"], rows,
        meta={"total_l1": report.total_l1, "relative_l1": report.relative_l1})


# ---------------------------------------------------------------------------
# run manifest

def write_manifest(out_dir, *, command: str, config_text: str, seed: int,
                   threads: int = 1, extra: dict | None = None) -> Path:
    """Record everything needed to reproduce a run bit for bit in
    single-threaded mode: the config hash, the seed, and the versions of
    the interpreter and the numerical stack."""
    from . import __version__

    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": int(seed),
        "threads": int(threads),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": _scipy_version(),
            "olv": __version__,
        },
    }
    if extra:
        manifest["extra"] = {k: _cell(v) for k, v in sorted(extra.items())}
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


def _scipy_version() -> str:
    try:
        import scipy
        return scipy.__version__
    except ImportError:  # pragma: no cover
        return "absent"


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
