"""Run configuration, per-step diagnostics, VTK frames and CSV series.

Config files are flat ``key = value`` text with ``#`` comments::

    generator = perturbed-double-bubble
    gamma = 1, 1, 1
    triangles = 2000
    dt = 1e-4
    t_end = 0.01

Series files are CSV with the fixed header :data:`SERIES_FIELDS`. Wall-clock
timings go to a separate file so that identical configs give byte-identical
series.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .cluster_mesh import ClusterMesh, GENERATORS
from .errors import ConfigError
from .nonlinear_stepper import StepRecord, record

DiagnosticsRecord = StepRecord

SERIES_FIELDS = ("step", "time", "energy", "vol12", "vol13", "angle_error", "flux_residual",
                 "ccp_residual", "iterations", "update_norm", "rereferences")
TIMING_FIELDS = ("step", "seconds")


def compute_diagnostics(state, report=None):
    """Energy, volumes and junction residuals of the current flow state."""
    return record(state, report)


# ---------------------------------------------------------------------------
# configuration


def _tuple3(text):
    parts = [p for p in str(text).replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError("expected three numbers")
    return tuple(float(p) for p in parts)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _opt_float(text):
    t = str(text).strip().lower()
    return None if t in ("", "none", "auto") else float(t)


@dataclass
class RunConfig:
    """Resolved run parameters; see :data:`CONFIG_KEYS` for the file keys."""

    generator: str = "perturbed-theta-network"
    gamma: tuple = (1.0, 1.0, 1.0)
    resolution: int = 0
    triangles: int = 0
    amplitude: float = 0.05
    degree: int = 3
    seed: int = 0
    dt: float = 1e-4
    t_end: float = 0.01
    tol: float = 1e-11
    max_iters: int = 30
    full_iteration: bool = True
    weights: str = "voronoi"
    eps_ref: float | None = None
    w_tau: float | None = None
    C_u: float = 0.0
    C_v: float = 0.0
    energy_tol: float = 1e-8
    volume_tol: float = 1e-2
    frame_every: int = 0
    output: str = "triflow-out"
    extras: dict = field(default_factory=dict, repr=False)

    def physics(self):
        from .graph_map import PhysicsParams

        return PhysicsParams(self.gamma, self.C_u, self.C_v, self.dt, self.tol, self.max_iters,
                             self.eps_ref, self.w_tau)

    def cluster_spec(self):
        from .cluster_mesh import ClusterSpec

        return ClusterSpec(self.generator, self.gamma, self.resolution, self.amplitude,
                           self.seed, self.degree, self.triangles)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


_PARSERS = {
    "generator": str, "gamma": _tuple3, "resolution": int, "triangles": int,
    "amplitude": float, "degree": int, "seed": int, "dt": float, "t_end": float, "tol": float,
    "max_iters": int, "full_iteration": _bool, "weights": str, "eps_ref": _opt_float,
    "w_tau": _opt_float, "C_u": float, "C_v": float, "energy_tol": float,
    "volume_tol": float, "frame_every": int, "output": str,
}
CONFIG_KEYS = tuple(_PARSERS)


def parse_config(text, strict=True, base_dir=None):
    """Parse config text into a :class:`RunConfig`."""
    values = {}
    extras = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            if strict:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            extras[key] = val
            continue
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {val!r} ({exc})") from None
    cfg = RunConfig(**values, extras=extras)
    _check_config(cfg)
    if base_dir is not None and not os.path.isabs(cfg.output):
        cfg.output = os.path.join(base_dir, cfg.output)
    return cfg


def _check_config(cfg):
    if cfg.generator not in GENERATORS:
        raise ConfigError(f"unknown generator {cfg.generator!r}; choose from {', '.join(GENERATORS)}")
    if not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        raise ConfigError("dt must be positive")
    if not cfg.t_end > 0:
        raise ConfigError("t_end must be positive")
    if cfg.weights not in ("voronoi", "vector-area"):
        raise ConfigError("weights must be 'voronoi' or 'vector-area'")
    if cfg.max_iters < 1 or cfg.tol <= 0:
        raise ConfigError("need max_iters >= 1 and tol > 0")
    if min(cfg.gamma) <= 0:
        raise ConfigError("surface tensions must be positive")


def load_config(path, strict=True):
    """Read a config file; relative output paths resolve against its directory."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, strict, base_dir=os.path.dirname(os.path.abspath(path)))


def format_config(cfg):
    """Config text with every key written out (the resolved form)."""
    out = []
    for key in CONFIG_KEYS:
        v = getattr(cfg, key)
        if key == "gamma":
            v = ", ".join(repr(float(x)) for x in v)
        elif v is None:
            v = "auto"
        elif isinstance(v, bool):
            v = "true" if v else "false"
        out.append(f"{key} = {v}")
    return "\n".join(out) + "\n"


def write_resolved_config(cfg, directory=None):
    directory = cfg.output if directory is None else directory
    path = os.path.join(directory, "resolved.cfg")
    _write_text(path, format_config(cfg))
    return path


def _write_text(path, text, mode="w"):
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, mode, encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# VTK frames


def _fmt(x):
    return f"{float(x):.12g}"


def vtk_text(mesh, Xs=None, title="triflow frame"):
    """Legacy ASCII VTK polydata of all patches, with a patch-id cell field."""
    if not isinstance(mesh, ClusterMesh):
        raise TypeError("expected a ClusterMesh")
    Xs = mesh.positions() if Xs is None else Xs
    pts = []
    cells = []
    pid = []
    off = 0
    for i, (p, X) in enumerate(zip(mesh.patches, Xs)):
        P = np.asarray(X, dtype=float)
        if P.shape[1] == 2:
            P = np.column_stack([P, np.zeros(len(P))])
        pts.append(P)
        cells.extend((p.elements + off).tolist())
        pid.extend([i] * len(p.elements))
        off += len(P)
    P = np.concatenate(pts)
    kind = "LINES" if mesh.dim == 1 else "POLYGONS"
    k = 2 if mesh.dim == 1 else 3
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write(title.replace("\n", " ")[:255] + "\n")
    buf.write("ASCII\nDATASET POLYDATA\n")
    buf.write(f"POINTS {len(P)} double\n")
    for row in P:
        buf.write(" ".join(_fmt(x) for x in row) + "\n")
    buf.write(f"{kind} {len(cells)} {len(cells) * (k + 1)}\n")
    for c in cells:
        buf.write(f"{k} " + " ".join(str(int(v)) for v in c) + "\n")
    buf.write(f"CELL_DATA {len(cells)}\nSCALARS patch int 1\nLOOKUP_TABLE default\n")
    for v in pid:
        buf.write(f"{v}\n")
    return buf.getvalue()


def write_frame(state_or_mesh, path, Xs=None):
    """Write one frame; accepts a flow state or a mesh (with optional positions)."""
    mesh = getattr(state_or_mesh, "mesh", state_or_mesh)
    if hasattr(state_or_mesh, "positions") and not isinstance(state_or_mesh, ClusterMesh):
        Xs = state_or_mesh.positions()
        title = f"triflow step {state_or_mesh.step} t={state_or_mesh.time:.6g}"
    else:
        title = "triflow frame"
    _write_text(path, vtk_text(mesh, Xs, title))
    return path


# ---------------------------------------------------------------------------
# CSV series


def _value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def append_series(rec, path):
    """Append one record; writes the header when the file is new or empty."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    d = asdict(rec)
    line = ",".join(_value(d[k]) for k in SERIES_FIELDS) + "\n"
    head = ",".join(SERIES_FIELDS) + "\n" if new else ""
    _write_text(path, head + line, mode="a")


def append_timing(rec, path):
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    head = ",".join(TIMING_FIELDS) + "\n" if new else ""
    _write_text(path, head + f"{rec.step},{rec.seconds!r}\n", mode="a")


def read_series(path):
    """Parse a series file back into records (``seconds`` reads as 0)."""
    types = {f.name: f.type for f in fields(StepRecord)}
    out = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read series {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SERIES_FIELDS:
            raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            kw = {}
            for k in SERIES_FIELDS:
                kw[k] = int(row[k]) if types[k] in (int, "int") else float(row[k])
            out.append(StepRecord(seconds=0.0, **kw))
    return out


# ---------------------------------------------------------------------------
# energy report


@dataclass
class EnergyReport:
    """Monotonicity and conservation summary of a series."""

    energy_increases: list
    max_energy_increase: float
    volume_drift: float
    energy_tol: float
    volume_tol: float
    n_records: int

    @property
    def passed(self):
        return not self.energy_increases and self.volume_drift <= self.volume_tol

    def __str__(self):
        lines = [f"records: {self.n_records}",
                 f"max relative energy increase: {self.max_energy_increase:.3e}"
                 f" (tolerance {self.energy_tol:.1e})",
                 f"max relative volume drift: {self.volume_drift:.3e}"
                 f" (tolerance {self.volume_tol:.1e})"]
        if self.energy_increases:
            lines.append("energy increases at steps: "
                         + ", ".join(str(s) for s in self.energy_increases[:20]))
        lines.append("verdict: " + ("pass" if self.passed else "fail"))
        return "\n".join(lines)


def energy_report(series, energy_tol=1e-8, volume_tol=1e-2):
    """Flag steps whose energy rises beyond ``energy_tol`` (relative) and volume drift."""
    if isinstance(series, (str, os.PathLike)):
        series = read_series(series)
    if not series:
        raise ConfigError("empty series")
    E = np.array([r.energy for r in series])
    rel = np.diff(E) / np.abs(E[:-1]) if len(E) > 1 else np.zeros(0)
    bad = [int(series[k + 1].step) for k in np.flatnonzero(rel > energy_tol)]
    V = np.array([[r.vol12, r.vol13] for r in series])
    scale = np.where(np.abs(V[0]) > 0, np.abs(V[0]), 1.0)
    drift = float(np.max(np.abs(V - V[0]) / scale)) if len(V) else 0.0
    return EnergyReport(bad, float(rel.max()) if len(rel) else 0.0, drift, energy_tol,
                        volume_tol, len(series))
