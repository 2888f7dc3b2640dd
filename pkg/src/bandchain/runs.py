"""End-to-end runs: config resolution, simulations, comparisons and presets."""
from __future__ import annotations

import copy
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from . import exact
from . import mps as tn
from .model import SpecError, SystemSpec, assemble_dicke_matrix, spec_from_generator, write_matrix_csv
from .output import emit_csv, emit_map_csv, heatmap, line_plot
from .transform import band_reduce, lanczos_chain_map_oracle, symmetric_spectrum, validate_band_structure

log = logging.getLogger("bandchain")

MODES = ("transform", "exact", "mps", "compare")
HAMILTONIANS = ("dicke", "band")
TOP_FOCK_WARN = 1e-4


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class TruncationConfig:
    chi_max: int = 128
    cutoff: float = 1e-10


@dataclass
class RunConfig:
    """Everything needed to reproduce one run.

    ``spec`` is an inline spec document, a generator block (``{"kind": ...}``)
    or a path to a spec JSON file. ``periods`` is an alternative to ``steps``
    in units of ``2 pi / omega_a1``. ``runs`` holds the two partial configs a
    ``compare`` run merges over this one.
    """

    spec: Any = None
    mode: str = "exact"
    hamiltonian: str = "band"
    initial_state: str = "all_excited"
    amplitudes: list | None = None
    nf: int | None = None
    dt: float | None = None
    steps: int | None = None
    periods: float | None = None
    stride: int = 1
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    atom_gates: str = "bundled"
    grid_points: int = 101
    corr_stride: int | None = None
    output_dir: str = "out"
    seed: int = 0
    dimension_cap: int = exact.DEFAULT_DIMENSION_CAP
    runs: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    tolerance: float = 1e-6
    observables: list | None = None
    base_dir: str = "."

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path = ".") -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        doc = dict(doc)
        trunc = doc.pop("truncation", None) or {}
        if not isinstance(trunc, dict) or set(trunc) - {"chi_max", "cutoff"}:
            raise ConfigError("truncation must be an object with chi_max and/or cutoff")
        doc.setdefault("base_dir", str(base_dir))
        try:
            cfg = cls(truncation=TruncationConfig(**trunc), **doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.check()
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def check(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.hamiltonian not in HAMILTONIANS:
            raise ConfigError(f"hamiltonian must be one of {HAMILTONIANS}, got {self.hamiltonian!r}")
        if self.nf is not None and (not isinstance(self.nf, int) or self.nf < 2):
            raise ConfigError("nf must be an integer >= 2")
        if self.dt is not None and not (isinstance(self.dt, (int, float)) and self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be a positive number")
        if self.steps is not None and (not isinstance(self.steps, int) or self.steps < 0):
            raise ConfigError("steps must be a nonnegative integer")
        if self.periods is not None and not self.periods >= 0:
            raise ConfigError("periods must be nonnegative")
        if not isinstance(self.stride, int) or self.stride < 1:
            raise ConfigError("stride must be a positive integer")
        if self.truncation.chi_max < 1 or not self.truncation.cutoff >= 0:
            raise ConfigError("chi_max must be >= 1 and cutoff >= 0")
        if self.atom_gates not in ("bundled", "per_atom"):
            raise ConfigError("atom_gates must be 'bundled' or 'per_atom'")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if self.mode == "compare" and len(self.runs) != 2:
            raise ConfigError("compare needs exactly two entries in 'runs'")
        if self.mode != "compare" and self.spec is None:
            raise ConfigError("config needs a 'spec'")

    # -- resolution ----------------------------------------------------
    def load_spec(self) -> SystemSpec:
        src = self.spec
        try:
            if isinstance(src, str):
                path = Path(src)
                if not path.is_absolute():
                    path = Path(self.base_dir) / path
                return SystemSpec.from_json(path)
            if isinstance(src, dict):
                if "kind" in src:
                    gen = dict(src)
                    if gen["kind"] == "random":
                        gen.setdefault("seed", self.seed)
                    return spec_from_generator(gen)
                return SystemSpec.from_dict(src)
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load spec: {exc}") from exc
        raise ConfigError("spec must be an object or a file path")

    def resolved(self, spec: SystemSpec) -> "RunConfig":
        """Copy with every default expanded for this spec."""
        cfg = copy.deepcopy(self)
        if cfg.nf is None:
            cfg.nf = 8 if cfg.mode == "mps" else 6
        if cfg.dt is None:
            wmax = float(np.max(spec.mode_frequencies))
            cfg.dt = 2 * math.pi / (wmax * (100 if cfg.mode == "mps" else 200))
        if cfg.steps is None:
            periods = 1.0 if cfg.periods is None else cfg.periods
            cfg.steps = int(round(periods * 2 * math.pi / cfg.dt))
        if cfg.corr_stride is None:
            cfg.corr_stride = cfg.stride
        return cfg


def _check_initial_state(cfg: RunConfig, atom_count: int) -> None:
    try:
        exact.atomic_initial_state(cfg.initial_state, atom_count, cfg.amplitudes)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"initial state: {exc}") from exc


@dataclass
class RunResult:
    records: list[dict]
    columns: list[str]
    out_dir: Path
    manifest: dict
    passed: bool = True
    extra: dict = field(default_factory=dict)


def _write_json(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _manifest(cfg: RunConfig, spec: SystemSpec | None, wall: float, **extra) -> dict:
    doc = {"tool": "bandchain", "version": __version__, "config": cfg.to_dict(), "wall_time_s": wall}
    if spec is not None:
        doc["spec"] = spec.to_dict()
    doc.update(extra)
    return doc


# -- transform ---------------------------------------------------------------

def run_transform(cfg: RunConfig, out_dir: str | Path | None = None) -> RunResult:
    """Write M_D, M_B and Q as CSV plus a JSON report of the structural checks."""
    t0 = time.perf_counter()
    spec = cfg.load_spec()
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dicke = assemble_dicke_matrix(spec)
    band, record = band_reduce(dicke)
    check = validate_band_structure(band, atom_frequencies=spec.atom_frequencies)
    ev_d = symmetric_spectrum(dicke.data)
    ev_b = symmetric_spectrum(band.data)
    spec_dev = float(np.max(np.abs(ev_d - ev_b)))
    orth = record.orthogonality_residual()
    write_matrix_csv(dicke.data, out / "M_D.csv")
    write_matrix_csv(band.data, out / "M_B.csv")
    write_matrix_csv(record.q, out / "Q.csv")
    passed = bool(check.passed and orth <= 1e-12 and spec_dev <= 1e-10 and record.atom_block_exact())
    report = {
        "band_check": check.to_dict(),
        "orthogonality_residual": orth,
        "atom_block_exact": record.atom_block_exact(),
        "spectrum_deviation": spec_dev,
        "degenerate": record.degenerate,
        "skipped_steps": [s.index for s in record.steps if s.skip],
        "passed": passed,
    }
    _write_json(report, out / "transform_report.json")
    man = _manifest(cfg, spec, time.perf_counter() - t0, report=report)
    _write_json(man, out / "manifest.json")
    return RunResult([], [], out, man, passed, {"band": band, "record": record, "report": report})


# -- exact -------------------------------------------------------------------

def exact_columns(atom_count: int) -> list[str]:
    cols = ["time", "time_periods"] + [f"pop{j + 1}" for j in range(atom_count)]
    if atom_count == 2:
        cols += ["gg", "ge", "eg", "ee"]
    return cols + ["energy", "norm", "top_fock"]


def run_exact(cfg: RunConfig, out_dir: str | Path | None = None, write: bool = True) -> RunResult:
    """RK4 evolution of the Dicke or band Hamiltonian in the full truncated space."""
    t0 = time.perf_counter()
    spec = cfg.load_spec()
    cfg = cfg.resolved(spec)
    out = Path(out_dir or cfg.output_dir)
    _check_initial_state(cfg, spec.atom_count)
    layout = exact.HilbertSpaceLayout(spec.atom_count, spec.mode_count, cfg.nf, cfg.dimension_cap)
    if cfg.hamiltonian == "dicke":
        h = exact.build_dicke_hamiltonian(spec, layout)
    else:
        band, _ = band_reduce(assemble_dicke_matrix(spec))
        h = exact.build_band_hamiltonian(band, layout)
    mat = h.compile()
    psi0 = exact.initial_state(layout, cfg.initial_state, cfg.amplitudes)
    na = spec.atom_count
    cols = exact_columns(na)
    records = []
    worst_top = 0.0
    for psi in exact.iter_evolve(mat, psi0, cfg.dt, cfg.steps, cfg.stride):
        rec = {"time": psi.time, "time_periods": psi.time / (2 * math.pi)}
        for j in range(na):
            rec[f"pop{j + 1}"] = exact.atomic_population(psi, j)
        if na == 2:
            rec.update(zip(("gg", "ge", "eg", "ee"), map(float, exact.two_atom_components(psi))))
        rec["energy"] = exact.energy(mat, psi)
        rec["norm"] = psi.norm()
        rec["top_fock"] = exact.top_fock_occupancy(psi)
        worst_top = max(worst_top, rec["top_fock"])
        records.append(rec)
    if worst_top > TOP_FOCK_WARN:
        log.warning("top Fock state occupancy %.3g exceeds %.0e; raise nf", worst_top, TOP_FOCK_WARN)
    wall = time.perf_counter() - t0
    man = _manifest(cfg, spec, wall, dimension=layout.dimension, max_top_fock=worst_top)
    if write:
        emit_csv(records, out / "timeseries.csv", cols)
        _write_json(man, out / "manifest.json")
    return RunResult(records, cols, out, man)


# -- mps ---------------------------------------------------------------------

def mps_columns(atom_count: int) -> list[str]:
    cols = ["time", "time_periods"] + [f"pop{j + 1}" for j in range(atom_count)]
    if atom_count == 2:
        cols += ["gg", "ge", "eg", "ee"]
    cols.append("S1")
    if atom_count >= 2:
        cols.append("S12")
    return cols + ["norm", "discarded", "max_bond"]


def run_mps(cfg: RunConfig, out_dir: str | Path | None = None, write: bool = True,
            progress=None) -> RunResult:
    """TEBD evolution of the band Hamiltonian with the field-correlation map."""
    t0 = time.perf_counter()
    spec = cfg.load_spec()
    cfg = cfg.resolved(spec)
    out = Path(out_dir or cfg.output_dir)
    _check_initial_state(cfg, spec.atom_count)
    layout = exact.HilbertSpaceLayout(spec.atom_count, spec.mode_count, cfg.nf)
    band, record = band_reduce(assemble_dicke_matrix(spec))
    schedule = tn.build_gate_layers(band, layout, cfg.dt, atom_gates=cfg.atom_gates)
    policy = tn.TruncationPolicy(chi_max=cfg.truncation.chi_max, cutoff=cfg.truncation.cutoff)
    mps0 = tn.init_product_mps(layout, cfg.initial_state, cfg.amplitudes)
    x = np.linspace(-0.5, 0.5, cfg.grid_points)
    corr = None
    if spec.mode_harmonics is not None:
        if cfg.corr_stride % cfg.stride:
            raise ConfigError("corr_stride must be a multiple of stride")
        corr = (spec, record, x, cfg.corr_stride)
    res = tn.tebd_run(mps0, schedule, policy, cfg.steps, cfg.stride, correlation=corr, progress=progress)
    cols = mps_columns(spec.atom_count)
    wall = time.perf_counter() - t0
    man = _manifest(cfg, spec, wall, schedule=schedule.summary(), max_bond=res.max_bond,
                    discarded_weight=res.discarded_weight, final_bond_dims=res.final_state.bond_dims)
    if write:
        emit_csv(res.records, out / "timeseries.csv", cols)
        if corr is not None:
            emit_map_csv(res.correlation_times, x, res.correlation_map, out / "correlation.csv")
        _write_json(man, out / "manifest.json")
    extra = {"x": x, "correlation_times": np.array(res.correlation_times),
             "correlation_map": np.array(res.correlation_map), "spec": spec}
    return RunResult(res.records, cols, out, man, extra=extra)


# -- compare -----------------------------------------------------------------

@dataclass
class ComparisonReport:
    """Per-observable deviations between two trajectories."""

    labels: tuple[str, str]
    max_abs: dict[str, float]
    rms: dict[str, float]
    tolerance: float
    samples: int

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.max_abs.values())

    @property
    def worst(self) -> tuple[str, float]:
        if not self.max_abs:
            return "", 0.0
        k = max(self.max_abs, key=self.max_abs.get)
        return k, self.max_abs[k]

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "max_abs": self.max_abs, "rms": self.rms,
                "tolerance": self.tolerance, "samples": self.samples, "passed": self.passed}

    def summary(self) -> str:
        name, val = self.worst
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}: {self.labels[0]} vs {self.labels[1]}, {self.samples} samples, "
                f"worst {name} max-abs {val:.3e} (tolerance {self.tolerance:.1e})")


def compare_trajectories(a: list[dict], b: list[dict], observables: list[str], tolerance: float,
                         labels=("a", "b")) -> ComparisonReport:
    if len(a) != len(b):
        raise ConfigError(f"trajectories have different lengths ({len(a)} vs {len(b)})")
    ta = np.array([r["time"] for r in a])
    tb = np.array([r["time"] for r in b])
    if ta.size and np.max(np.abs(ta - tb)) > 1e-9 * max(1.0, float(np.max(np.abs(ta)))):
        raise ConfigError("trajectories are sampled on different time grids")
    max_abs, rms = {}, {}
    for name in observables:
        if name not in a[0] or name not in b[0]:
            raise ConfigError(f"observable {name!r} missing from a trajectory")
        d = np.array([ra[name] for ra in a]) - np.array([rb[name] for rb in b])
        max_abs[name] = float(np.max(np.abs(d)))
        rms[name] = float(np.sqrt(np.mean(d ** 2)))
    return ComparisonReport(tuple(labels), max_abs, rms, tolerance, len(a))


def _merge(base: dict, override: dict) -> dict:
    doc = dict(base)
    for k, v in override.items():
        if k == "truncation" and isinstance(v, dict):
            doc["truncation"] = {**doc.get("truncation", {}), **v}
        else:
            doc[k] = v
    return doc


def run_compare(cfg: RunConfig, out_dir: str | Path | None = None, plot: bool = True) -> tuple[ComparisonReport, list[RunResult]]:
    """Run the two sub-configs and compare their shared observables."""
    t0 = time.perf_counter()
    out = Path(out_dir or cfg.output_dir)
    base = cfg.to_dict()
    for k in ("runs", "labels", "mode", "observables", "tolerance"):
        base.pop(k)
    labels = list(cfg.labels) or [f"run{i}" for i in range(len(cfg.runs))]
    results = []
    for label, sub in zip(labels, cfg.runs):
        doc = _merge(base, sub)
        doc.setdefault("mode", "exact")
        if doc.get("mode") not in ("exact", "mps"):
            raise ConfigError("compare sub-runs must be 'exact' or 'mps'")
        sub_cfg = RunConfig.from_dict(doc)
        runner = run_exact if sub_cfg.mode == "exact" else run_mps
        results.append(runner(sub_cfg, out / label))
    if cfg.observables:
        observables = list(cfg.observables)
    else:
        observables = [c for c in results[0].columns if c.startswith("pop") and c in results[1].columns]
    report = compare_trajectories(results[0].records, results[1].records, observables, cfg.tolerance, labels)
    doc = report.to_dict()
    doc["wall_time_s"] = time.perf_counter() - t0
    _write_json(doc, out / "comparison.json")
    _write_json(_manifest(cfg, None, doc["wall_time_s"], report=report.to_dict()), out / "manifest.json")
    if plot:
        series = {}
        for label, res in zip(labels, results):
            tp = [r["time_periods"] for r in res.records]
            for name in observables:
                series[f"{name} ({label})"] = (tp, [r[name] for r in res.records])
        line_plot(series, out / "comparison.svg", ylabel="population", title=report.summary(),
                  dashed=[k for k in series if k.endswith(f"({labels[1]})")])
    return report, results


# -- fig7 properties -----------------------------------------------------------

SPEED_OF_LIGHT = 1.0 / math.pi  # cavity length 1, fundamental frequency 1
FRONT_THRESHOLD = 0.05
FRONT_MIN_DISTANCE = 0.05
FRONT_SPEED_FACTOR = 1.1
SYMMETRY_TOL = 1e-6
ENTROPY_BOUND_TOL = 1e-9
MONOTONE_TOL = 1e-3
REVIVAL_THRESHOLD = 0.8
REVIVAL_WINDOW = (4.5, 5.0)


@dataclass
class PropertyCheck:
    name: str
    passed: bool
    value: float
    detail: str

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def wavefront_speed(times, x, cmap, sources, threshold: float = FRONT_THRESHOLD,
                    min_distance: float = FRONT_MIN_DISTANCE) -> tuple[float, float]:
    """Largest apparent propagation speed of the correlation front.

    A grid point counts as reached once its correlation exceeds
    ``threshold * max(cmap)``. The speed at that point is its distance to the
    nearest source divided by the arrival time; points closer than
    ``min_distance`` to a source are ignored. Returns ``(speed, reached
    fraction)``; a point reached at ``t = 0`` gives an infinite speed.
    """
    times = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    c = np.asarray(cmap, dtype=float)
    level = threshold * float(np.max(c))
    dist = np.min(np.abs(x[:, None] - np.asarray(sources, dtype=float)[None, :]), axis=1)
    far = dist >= min_distance
    speed = 0.0
    reached = 0
    for j in np.flatnonzero(far):
        hit = np.flatnonzero(c[:, j] > level)
        if hit.size == 0:
            continue
        reached += 1
        t = times[hit[0]]
        speed = max(speed, math.inf if t <= 0 else dist[j] / t)
    return speed, reached / max(int(far.sum()), 1)


def smoothed(values, window: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    window = max(1, min(window, v.size))
    return np.convolve(v, np.ones(window) / window, mode="valid")


def fig7_properties(records: list[dict], times, x, cmap, sources, initial_state: str) -> list[PropertyCheck]:
    """Structural properties every two-atom symmetric cavity run must satisfy."""
    tp = np.array([r["time_periods"] for r in records])
    p1 = np.array([r["pop1"] for r in records])
    p2 = np.array([r["pop2"] for r in records])
    s1 = np.array([r["S1"] for r in records])
    s12 = np.array([r["S12"] for r in records])
    checks = []
    dev = float(np.max(np.abs(p1 - p2)))
    checks.append(PropertyCheck("symmetric_populations", dev <= SYMMETRY_TOL, dev,
                                f"max |pop1 - pop2| <= {SYMMETRY_TOL:g}"))
    top = float(np.max(s1))
    checks.append(PropertyCheck("entropy_bound", top <= math.log(2) + ENTROPY_BOUND_TOL, top,
                                "max S1 <= ln 2"))
    if initial_state == "psi3":
        per_period = max(1, int(round(1.0 / np.median(np.diff(tp))))) if tp.size > 1 else 1
        start = max(abs(s1[0]), abs(s12[0]))
        worst_drop = 0.0
        for s in (s1, s12):
            d = np.diff(smoothed(s, per_period))
            if d.size:
                worst_drop = max(worst_drop, float(-d.min()))
        ok = start <= 1e-12 and min(s1.min(), s12.min()) >= -1e-12 and worst_drop <= MONOTONE_TOL
        checks.append(PropertyCheck("entropy_growth", ok, worst_drop,
                                    f"start {start:.1e}; largest drop of one-period average <= {MONOTONE_TOL:g}"))
    if initial_state == "psi2":
        lo, hi = REVIVAL_WINDOW
        sel = (tp >= lo - 1e-9) & (tp <= hi + 1e-9)
        rev = float(np.max([r["ge"] + r["eg"] for r, s in zip(records, sel) if s])) if sel.any() else float("nan")
        checks.append(PropertyCheck("revival", rev >= REVIVAL_THRESHOLD, rev,
                                    f"max ge+eg for t/(2pi) in [{lo}, {hi}] >= {REVIVAL_THRESHOLD}"))
    cmin = float(np.min(cmap))
    checks.append(PropertyCheck("correlation_nonnegative", cmin >= -1e-10, cmin, "min correlation >= -1e-10"))
    speed, frac = wavefront_speed(times, x, cmap, sources)
    limit = FRONT_SPEED_FACTOR * SPEED_OF_LIGHT
    checks.append(PropertyCheck("causal_wavefront", speed <= limit and frac >= 0.5, speed / SPEED_OF_LIGHT,
                                f"front speed / c <= {FRONT_SPEED_FACTOR}; {frac:.0%} of grid reached"))
    return checks


# -- presets -----------------------------------------------------------------

FIG5_SPEC = {"kind": "pec_cavity", "atom_positions": [0.0, 0.25, -0.375], "mode_count": 5,
             "harmonic_rule": "all", "coupling_normalization": 0.25, "anchor": [0, 0]}
FIG7_SPEC = {"kind": "pec_cavity", "atom_positions": [-0.25, 0.25], "mode_count": 30,
             "harmonic_rule": "odd", "coupling_normalization": 0.1, "anchor": "max_ratio"}

PRESETS = {
    "fig4": {"spec": {"kind": "periodic_lattice", "mode_count": 50, "coupling_scale": 1.0},
             "mode": "transform", "tolerance": 1e-8},
    "fig5": {"spec": FIG5_SPEC, "mode": "compare", "initial_state": "all_excited", "nf": 6,
             "periods": 3.0, "stride": 10, "tolerance": 1e-6, "labels": ["dicke", "band"],
             "runs": [{"mode": "exact", "hamiltonian": "dicke"}, {"mode": "exact", "hamiltonian": "band"}]},
}
for _name in ("psi1", "psi2", "psi3"):
    PRESETS[f"fig7-{_name}"] = {"spec": FIG7_SPEC, "mode": "mps", "initial_state": _name, "nf": 8,
                                "dt": 0.01, "periods": 5.0, "stride": 10, "corr_stride": 10,
                                "grid_points": 101, "truncation": {"chi_max": 128, "cutoff": 1e-10}}


def preset_config(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    doc = copy.deepcopy(PRESETS[name])
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(doc)


@dataclass
class SuiteReport:
    preset: str
    passed: bool
    metrics: dict
    checks: list = field(default_factory=list)
    out_dir: str = ""

    def to_dict(self) -> dict:
        return {"preset": self.preset, "passed": self.passed, "metrics": self.metrics,
                "checks": [c.to_dict() for c in self.checks], "out_dir": self.out_dir}


def _relative_error(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        return math.inf
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))) if a.size else 0.0


def _repro_fig4(cfg: RunConfig, out: Path) -> SuiteReport:
    t0 = time.perf_counter()
    spec = cfg.load_spec()
    dicke = assemble_dicke_matrix(spec)
    band, _ = band_reduce(dicke)
    b = band.boson_block
    xi_h, t_h = np.diag(b), np.abs(np.diag(b, 1))
    elapsed = time.perf_counter() - t0
    chain = lanczos_chain_map_oracle(dicke)
    xi_err = _relative_error(xi_h, chain.xi)
    t_err = _relative_error(t_h, chain.t)
    n = np.arange(1, xi_h.size + 1)
    recs = [{"n": int(k), "xi_band": xi_h[k - 1], "xi_lanczos": chain.xi[k - 1] if k <= chain.xi.size else math.nan,
             "t_band": t_h[k - 1] if k < xi_h.size else 0.0,
             "t_lanczos": chain.t[k - 1] if k <= chain.t.size else 0.0} for k in n]
    emit_csv(recs, out / "chain_coefficients.csv", ["n", "xi_band", "xi_lanczos", "t_band", "t_lanczos"])
    line_plot({"xi (band reduction)": (n, xi_h), "xi (Lanczos)": (np.arange(1, chain.xi.size + 1), chain.xi),
               "|t| (band reduction)": (n[:-1], t_h), "t (Lanczos)": (np.arange(1, chain.t.size + 1), chain.t)},
              out / "chain_coefficients.svg", xlabel="chain site n", ylabel="coefficient / omega_a1",
              title="chain frequencies and hoppings", markers=True)
    metrics = {"xi_relative_error": xi_err, "t_relative_error": t_err, "reduction_seconds": elapsed,
               "tolerance": cfg.tolerance}
    return SuiteReport("fig4", max(xi_err, t_err) <= cfg.tolerance, metrics)


def _repro_fig5(cfg: RunConfig, out: Path) -> SuiteReport:
    report, results = run_compare(cfg, out)
    metrics = report.to_dict()
    metrics["max_top_fock"] = {r.out_dir.name: r.manifest["max_top_fock"] for r in results}
    return SuiteReport("fig5", report.passed, metrics)


def _repro_fig7(cfg: RunConfig, out: Path, progress=None) -> SuiteReport:
    res = run_mps(cfg, out, progress=progress)
    spec = res.extra["spec"]
    times = res.extra["correlation_times"]
    cmap = res.extra["correlation_map"]
    x = res.extra["x"]
    recs = res.records
    tp = [r["time_periods"] for r in recs]
    line_plot({"atom 1": (tp, [r["pop1"] for r in recs]), "atom 2": (tp, [r["pop2"] for r in recs])},
              out / "populations.svg", ylabel="excited-state population", dashed=["atom 2"])
    line_plot({k: (tp, [r[k] for r in recs]) for k in ("gg", "ge", "eg", "ee")},
              out / "two_atom_components.svg", ylabel="component weight")
    line_plot({"S_1": (tp, [r["S1"] for r in recs]), "S_1:2": (tp, [r["S12"] for r in recs])},
              out / "entropies.svg", ylabel="entanglement entropy (nats)")
    heatmap(x, times / (2 * math.pi), cmap, out / "correlation.svg", title="field correlation")
    checks = fig7_properties(recs, times, x, cmap, spec.atom_positions, cfg.initial_state)
    metrics = {c.name: c.value for c in checks}
    metrics.update(max_bond=res.manifest["max_bond"], discarded_weight=res.manifest["discarded_weight"],
                   wall_time_s=res.manifest["wall_time_s"])
    return SuiteReport(f"fig7-{cfg.initial_state}", all(c.passed for c in checks), metrics, checks)


def run_reproduction_suite(preset: str, out_dir: str | Path | None = None, progress=None,
                           **overrides) -> SuiteReport:
    """Run a named figure preset end to end and write its report."""
    cfg = preset_config(preset, **overrides)
    out = Path(out_dir or Path(cfg.output_dir) / preset)
    out.mkdir(parents=True, exist_ok=True)
    if preset == "fig4":
        rep = _repro_fig4(cfg, out)
    elif preset == "fig5":
        rep = _repro_fig5(cfg, out)
    else:
        rep = _repro_fig7(cfg, out, progress)
    rep.out_dir = str(out)
    _write_json(rep.to_dict(), out / "report.json")
    if preset == "fig4":
        _write_json(_manifest(cfg, cfg.load_spec(), rep.metrics["reduction_seconds"], report=rep.to_dict()),
                    out / "manifest.json")
    return rep
