"""CSV time series, text field dumps, binary checkpoints and the run manifest.

Floats are written with 17 significant digits so that a rerun with the
same configuration and seed reproduces every CSV byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import time
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .config import SimConfig, parse_config_text, serialize_config
from .errors import CheckpointError
from .grid import GridField
from .kinematics import RigidState
from .transform import TransformAtlas

TRAJECTORY_COLUMNS = ("t", "q_x", "q_y", "theta", "a_x", "a_y", "omega")
ENERGY_COLUMNS = ("t", "E", "D_visc", "D_slip", "defect")
GAP_COLUMNS = ("t", "gap_L2", "gap_a", "gap_omega", "integrand")


def fmt(x):
    return format(float(x), ".17g")


class CSVSeries:
    """Append-only CSV with a fixed header; ``block`` writes a comment line."""

    def __init__(self, path, columns):
        self.path = path
        self.columns = tuple(columns)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)

    def block(self, label):
        self._fh.write(f"# {label}\n")

    def append(self, row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values, expected {len(self.columns)}")
        self._w.writerow([fmt(v) for v in row])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def trajectory_row(rigid: RigidState):
    return (rigid.t, rigid.q[0], rigid.q[1], rigid.angle, rigid.a[0], rigid.a[1], rigid.omega)


def read_csv(path):
    """(header, {block label: array}) for files written by CSVSeries."""
    blocks = {}
    label = ""
    with open(path, encoding="utf-8") as fh:
        header = tuple(fh.readline().strip().split(","))
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                label = line[1:].strip()
                blocks.setdefault(label, [])
                continue
            blocks.setdefault(label, []).append([float(v) for v in line.split(",")])
    return header, {k: np.array(v, dtype=float).reshape(-1, len(header)) for k, v in blocks.items()}


# ------------------------------------------------------------ field dumps


def write_field(path, values, name, t):
    """Self-describing text dump: a header line then one row per radial index."""
    v = np.asarray(values, dtype=float)
    comps = 1 if v.ndim == 2 else v.shape[0]
    v3 = v.reshape(comps, *v.shape[-2:])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# slipfsi-field 1 name={name} t={fmt(t)} components={comps} "
                 f"n_r={v3.shape[1]} n_theta={v3.shape[2]}\n")
        for c in range(comps):
            for row in v3[c]:
                fh.write(" ".join(fmt(x) for x in row) + "\n")


def read_field(path):
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) < 3 or head[1] != "slipfsi-field":
            raise CheckpointError(f"{path}: not a field dump")
        meta = dict(kv.split("=", 1) for kv in head[3:])
        data = np.loadtxt(fh, ndmin=2)
    comps, nr, nt = int(meta["components"]), int(meta["n_r"]), int(meta["n_theta"])
    if data.size != comps * nr * nt:
        raise CheckpointError(f"{path}: truncated field dump")
    vals = data.reshape(comps, nr, nt)
    return (vals[0] if comps == 1 else vals), meta["name"], float(meta["t"])


# ------------------------------------------------------------- checkpoint

MAGIC = b"SLIPFSI\x00"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<8sIIIdQI")  # magic, version, n_r, n_theta, t, payload length, crc32


def _pack_arrays(arrays):
    meta, chunks, off = {}, [], 0
    for k, a in arrays.items():
        if a is None:
            meta[k] = None
            continue
        a = np.ascontiguousarray(a, dtype="<f8")
        b = a.tobytes()
        meta[k] = [off, list(a.shape)]
        chunks.append(b)
        off += len(b)
    return meta, b"".join(chunks)


def checkpoint(state, path, cfg: SimConfig = None):
    """Write (FlowState, RigidState, TransformAtlas) to ``path`` atomically."""
    flow, rigid, atlas = state
    g = atlas.grid
    bs = atlas.body_state
    arrays = {
        "U": flow.U.values, "U_lo": flow.U.ghost_lo, "U_hi": flow.U.ghost_hi,
        "P": flow.P.values,
        "q": rigid.q, "Q": rigid.Q, "a": rigid.a, "omega": np.atleast_1d(rigid.omega),
        "X": atlas.X, "X_jac": atlas.X_jac, "X_hess": atlas.X_hess,
        "Xdot": atlas.Xdot, "dXdot": atlas.dXdot,
        "bs_q": None if bs is None else bs.q, "bs_Q": None if bs is None else bs.Q,
        "bs_a": None if bs is None else bs.a,
        "bs_omega": None if bs is None else np.atleast_1d(bs.omega),
    }
    meta, blob = _pack_arrays(arrays)
    info = {
        "arrays": meta,
        "flow_t": flow.t, "U_t": flow.U.t, "P_t": flow.P.t, "atlas_ref": flow.atlas_ref,
        "rigid_t": rigid.t, "atlas_t": atlas.t, "flat": atlas.flat, "delta0": atlas.delta0,
        "bs_t": None if bs is None else bs.t,
        "grid": [g.n_r, g.n_theta, g.r_inner, g.r_outer],
        "config": None if cfg is None else serialize_config(cfg),
        "version": __version__,
    }
    js = json.dumps(info, sort_keys=True).encode()
    payload = struct.pack("<Q", len(js)) + js + blob
    head = _HEAD.pack(MAGIC, CHECKPOINT_VERSION, g.n_r, g.n_theta, float(flow.t),
                      len(payload), zlib.crc32(payload) & 0xFFFFFFFF)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(head)
        fh.write(payload)
    os.replace(tmp, path)


def restore(path, with_config=False):
    """Read a checkpoint; raises CheckpointError before building any state."""
    from .grid import AnnulusGrid
    from .solver import FlowState

    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None
    if len(raw) < _HEAD.size:
        raise CheckpointError("truncated checkpoint header")
    magic, ver, nr, nt, t, plen, crc = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError("not a slipfsi checkpoint (bad magic)")
    if ver != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {ver} not supported (expected {CHECKPOINT_VERSION})")
    payload = raw[_HEAD.size:]
    if len(payload) != plen:
        raise CheckpointError("truncated checkpoint payload")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    (jl,) = struct.unpack_from("<Q", payload)
    info = json.loads(payload[8:8 + jl])
    blob = payload[8 + jl:]
    A = {}
    for k, m in info["arrays"].items():
        if m is None:
            A[k] = None
            continue
        off, shape = m
        n = int(np.prod(shape)) * 8
        A[k] = np.frombuffer(blob[off:off + n], dtype="<f8").reshape(shape).astype(float)
    gn = info["grid"]
    if (gn[0], gn[1]) != (nr, nt):
        raise CheckpointError("grid dimensions in header and body disagree")
    grid = AnnulusGrid(int(gn[0]), int(gn[1]), float(gn[2]), float(gn[3]))
    omega = A["omega"] if A["omega"].size > 1 else float(A["omega"][0])
    rigid = RigidState(info["rigid_t"], A["q"], A["Q"], A["a"], omega)
    bs = None
    if A["bs_q"] is not None:
        bo = A["bs_omega"] if A["bs_omega"].size > 1 else float(A["bs_omega"][0])
        bs = RigidState(info["bs_t"], A["bs_q"], A["bs_Q"], A["bs_a"], bo)
    atlas = TransformAtlas(grid, info["atlas_t"], A["X"], A["X_jac"], A["X_hess"], A["Xdot"],
                           A["dXdot"], bs, info["delta0"], info["flat"])
    flow = FlowState(GridField(A["U"], info["U_t"], A["U_lo"], A["U_hi"]),
                     GridField(A["P"], info["P_t"]), info["flow_t"], info["atlas_ref"])
    state = (flow, rigid, atlas)
    if with_config:
        cfg = None if info["config"] is None else parse_config_text(info["config"])
        return state, cfg
    return state


# --------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    config: str
    version: str
    seed: int
    start_time: float = field(default_factory=time.time)
    end_time: float = 0.0
    files: list = field(default_factory=list)
    command: str = ""

    def add(self, path):
        self.files.append(os.path.basename(path))

    def finish(self, out_dir):
        self.end_time = time.time()
        self.files = sorted(set(self.files))
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def new_manifest(cfg: SimConfig, command=""):
    return RunManifest(serialize_config(cfg), __version__, cfg.seed, command=command)


# -------------------------------------------------------------- simulate


def simulate(cfg: SimConfig, out_dir, state=None, t_end=None, manifest=None, max_steps=None):
    """Coupled run writing trajectory.csv, energy.csv and field dumps.

    Returns ((flow, rigid, atlas), summary). ``state`` resumes from a
    restored triple; the CSVs then start at the restored time.
    """
    from .solver import StepInfo, initial_triple, stable_dt, step
    from .verification import EnergyLedger, energy_update

    os.makedirs(out_dir, exist_ok=True)
    flow, rigid, atlas = initial_triple(cfg) if state is None else state
    t_end = cfg.t_end if t_end is None else t_end
    led = EnergyLedger.start(flow, rigid, atlas, cfg)
    paths = [os.path.join(out_dir, n) for n in ("trajectory.csv", "energy.csv")]
    worst = {"divergence": 0.0, "normal_residual": 0.0, "max_defect": 0.0, "steps": 0}
    k = 0

    def dump(k):
        for name, vals in (("U", flow.U.values), ("P", flow.P.values)):
            p = os.path.join(out_dir, f"field_{name}_{k:06d}.txt")
            write_field(p, vals, name, flow.t)
            if manifest is not None:
                manifest.add(p)

    with CSVSeries(paths[0], TRAJECTORY_COLUMNS) as traj, CSVSeries(paths[1], ENERGY_COLUMNS) as en:
        traj.append(trajectory_row(rigid))
        en.append(led.row())
        if cfg.dump_every > 0 or t_end <= flow.t:
            dump(k)
        while flow.t < t_end - 1e-9 * max(cfg.dt, 1e-3) and (max_steps is None or k < max_steps):
            left = t_end - flow.t
            if cfg.dt > 0:
                # fixed steps; only a genuine remainder shortens the last one
                h = cfg.dt if left > cfg.dt * (1 - 1e-9) else left
            else:
                h = cfg.cfl * stable_dt(flow.U.values, atlas, cfg, atlas.grid)
                if left < 2 * h:
                    h = left / np.ceil(left / h - 1e-9)
            info = []
            flow, rigid, atlas = step(flow, rigid, atlas, cfg, dt=h, info=info)
            led = energy_update(flow, rigid, led, h, atlas)
            k += 1
            traj.append(trajectory_row(rigid))
            en.append(led.row())
            si: StepInfo = info[0]
            worst["divergence"] = max(worst["divergence"], si.divergence)
            worst["normal_residual"] = max(worst["normal_residual"], si.normal_residual)
            if cfg.dump_every > 0 and k % cfg.dump_every == 0:
                dump(k)
    worst["steps"] = k
    worst["max_defect"] = (max(abs(r[4]) for r in led.history) / led.E0) if led.E0 else 0.0
    worst["t"] = flow.t
    if manifest is not None:
        for p in paths:
            manifest.add(p)
    return (flow, rigid, atlas), worst
