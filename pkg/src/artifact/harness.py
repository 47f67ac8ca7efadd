"""Desk-scale sweep of the large-N expansion E ~ e_TF(1) alpha^2 N^{7/3} + c_Scott(kappa)."""

from __future__ import annotations

import csv
import json
import math
import platform
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analytic import scott_correction
from .core import NU_SAFETY_LIMIT, CouplingParams, DomainError, InputError, NonConvergenceError, RadialGrid
from .dfscf import scf_solve, scf_solve_projected
from .tf import default_tf_grid, tf_minimize, tf_ode_oracle

REPORT_FORMAT = "artifact-sweep/1"


@dataclass(frozen=True)
class GridPolicy:
    """Grid as a function of (kappa, N).

    The first node shrinks like N^{-1/3} times the (1 - kappa^2)^{1/2} factor of
    the orbital singularity, the box extends over a fixed number of Bohr
    radii 1/alpha, and the node count grows like N^{1/3} log N above a floor.
    """

    r0_base: float = 1e-4
    r_max_bohr: float = 60.0
    min_nodes: int = 2000
    nodes_per_scale: float = 60.0

    def __post_init__(self):
        if self.r0_base <= 0 or self.r_max_bohr <= 0 or self.min_nodes < 16 or self.nodes_per_scale < 0:
            raise InputError("grid policy parameters must be positive")

    def size(self, n_electrons: int) -> int:
        n = float(n_electrons)
        return max(int(self.min_nodes), int(math.ceil(self.nodes_per_scale * n ** (1 / 3) * math.log(n))))

    def grid_for(self, kappa: float, n_electrons: int) -> RadialGrid:
        alpha = kappa / n_electrons
        r0 = self.r0_base * math.sqrt(1.0 - kappa * kappa) / n_electrons ** (1 / 3)
        return RadialGrid.exponential(r0, self.r_max_bohr / alpha, self.size(n_electrons))


@dataclass(frozen=True)
class SweepConfig:
    kappa: float = 0.5
    n_list: tuple[int, ...] = (2, 10, 18, 36)
    policy: GridPolicy = field(default_factory=GridPolicy)
    scf_tol: float = 1e-10
    mixing: float = 0.3
    scheme: str = "anderson"
    max_iter: int = 300
    projected: bool = True
    scott_tol: float = 1e-10
    tf_grid_size: int = 2000

    def __post_init__(self):
        if not (0 < self.kappa < NU_SAFETY_LIMIT):
            raise DomainError(f"kappa must lie in (0, {NU_SAFETY_LIMIT})")
        n_list = tuple(int(n) for n in self.n_list)
        if any(n < 1 for n in n_list):
            raise InputError("every N must be a positive integer")
        object.__setattr__(self, "n_list", n_list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_list"] = list(self.n_list)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "policy" in data:
            data["policy"] = GridPolicy(**data["policy"])
        if "n_list" in data:
            data["n_list"] = tuple(data["n_list"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class SweepRecord:
    N: int
    alpha: float
    E_df: float
    E_projected: float | None
    tf_term: float
    residual: float
    scott_target: float
    scf_iterations: int
    projected_iterations: int | None
    converged: bool
    projected_converged: bool | None
    grid: dict

    @property
    def deviation(self) -> float:
        """residual - c_Scott, the quantity the expansion drives to zero."""
        return self.residual - self.scott_target

    @property
    def projection_gap(self) -> float | None:
        if self.E_projected is None:
            return None
        return abs(self.E_projected - self.E_df) / abs(self.E_df)


@dataclass(frozen=True)
class SweepSummary:
    kappa: float
    e_tf: float
    e_tf_error: float
    c_scott: float
    c_scott_error: float
    deviations: tuple[tuple[int, float], ...]
    projection_gaps: tuple[tuple[int, float], ...]
    deviation_ratios: tuple[float, ...]
    trend_ok: bool
    projection_trend_ok: bool | None
    excluded: tuple[int, ...]
    notes: tuple[str, ...]


@dataclass(frozen=True)
class SweepReport:
    config: SweepConfig
    records: tuple[SweepRecord, ...]
    summary: SweepSummary | None

    @property
    def passed(self) -> bool:
        if self.summary is None:
            return True
        ok = all(r.converged for r in self.records) and self.summary.trend_ok
        if self.summary.projection_trend_ok is not None:
            ok = ok and self.summary.projection_trend_ok
        return bool(ok)


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def summarize(kappa: float, records, e_tf: float, e_tf_error: float, c_scott: float,
              c_scott_error: float) -> SweepSummary:
    """Trend statistic: |residual - c_Scott| must decrease strictly along the list."""
    good = [r for r in records if r.converged]
    excluded = tuple(r.N for r in records if not r.converged)
    notes = [f"N={n} excluded: mean-field iteration did not converge" for n in excluded]
    devs = tuple((r.N, r.deviation) for r in good)
    mags = [abs(d) for _, d in devs]
    ratios = tuple(b / a for a, b in zip(mags, mags[1:]) if a > 0)
    proj = tuple((r.N, r.projection_gap) for r in good
                 if r.projection_gap is not None and r.projected_converged)
    proj_ok = _strictly_decreasing([g for _, g in proj]) if proj else None
    return SweepSummary(kappa, e_tf, e_tf_error, c_scott, c_scott_error, devs, proj, ratios,
                        _strictly_decreasing(mags), proj_ok, excluded, tuple(notes))


def thomas_fermi_reference(grid_size: int = 2000) -> tuple[float, float]:
    """e_TF(1) from the minimizer, with the distance to the ODE value as its error."""
    value = tf_minimize(1.0, grid=default_tf_grid(grid_size)).energy
    oracle = tf_ode_oracle().energy
    return value, abs(value - oracle)


def run_point(kappa: float, n_electrons: int, config: SweepConfig, e_tf: float, c_scott: float) -> SweepRecord:
    params = CouplingParams.neutral(kappa, n_electrons)
    grid = config.policy.grid_for(kappa, n_electrons)
    try:
        state = scf_solve(params, grid, mixing=config.mixing, tol=config.scf_tol,
                          max_iter=config.max_iter, scheme=config.scheme)
        converged = True
    except NonConvergenceError as exc:
        state, converged = exc.partial, False
    e_proj = proj_it = proj_conv = None
    if config.projected and converged:
        try:
            proj = scf_solve_projected(params, grid, mixing=config.mixing, tol=config.scf_tol,
                                       max_iter=config.max_iter, scheme=config.scheme, warm_start=state)
            proj_conv = True
        except NonConvergenceError as exc:
            proj, proj_conv = exc.partial, False
        e_proj, proj_it = float(proj.energy), proj.iterations
    alpha = params.alpha
    tf_term = e_tf * alpha**2 * n_electrons ** (7.0 / 3.0)
    energy = float(state.energy)
    return SweepRecord(n_electrons, alpha, energy, e_proj, tf_term, energy - tf_term, c_scott,
                       state.iterations, proj_it, converged, proj_conv, dict(grid.mapping))


def sweep(kappa: float | None = None, n_list=None, grid_policy: GridPolicy | None = None,
          tol: float | None = None, config: SweepConfig | None = None) -> SweepReport:
    """One record per N, plus the trend summary.

    Explicit arguments override the corresponding config entries. Records are
    computed in list order, so the report is a deterministic function of the
    config.
    """
    config = config or SweepConfig()
    overrides = {}
    if kappa is not None:
        overrides["kappa"] = kappa
    if n_list is not None:
        overrides["n_list"] = tuple(n_list)
    if grid_policy is not None:
        overrides["policy"] = grid_policy
    if tol is not None:
        overrides["scf_tol"] = tol
    if overrides:
        config = replace(config, **overrides)
    if not config.n_list:
        return SweepReport(config, (), None)
    e_tf, e_tf_err = thomas_fermi_reference(config.tf_grid_size)
    scott = scott_correction(config.kappa, tol=config.scott_tol)
    records = tuple(run_point(config.kappa, n, config, e_tf, scott.value) for n in config.n_list)
    for r in records:
        if not r.converged:
            warnings.warn(f"N={r.N}: SCF not converged; record excluded from the trend")
    summary = summarize(config.kappa, records, e_tf, e_tf_err, scott.value, scott.error_bound)
    return SweepReport(config, records, summary)


# reports

def _versions() -> dict:
    return {"artifact": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def report_to_dict(report: SweepReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "versions": _versions(),
        "config": report.config.to_dict(),
        "records": [asdict(r) for r in report.records],
        "summary": None if report.summary is None else asdict(report.summary),
    }


def _tuples(value):
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def report_from_dict(data: dict) -> SweepReport:
    if data.get("format") != REPORT_FORMAT:
        raise InputError(f"not a sweep report (format {data.get('format')!r})")
    config = SweepConfig.from_dict(data["config"])
    records = tuple(SweepRecord(**r) for r in data["records"])
    s = data["summary"]
    summary = None if s is None else SweepSummary(**{k: _tuples(v) for k, v in s.items()})
    return SweepReport(config, records, summary)


CSV_COLUMNS = ("N", "alpha", "E_df", "E_projected", "tf_term", "residual", "scott_target", "deviation",
               "projection_gap", "scf_iterations", "projected_iterations", "converged",
               "projected_converged", "grid_r0", "grid_r_max", "grid_size")


def emit_report(report: SweepReport, json_path, csv_path=None) -> tuple[Path, Path]:
    """Write the JSON report and the residual table; byte-identical for identical reports."""
    json_path = Path(json_path)
    csv_path = Path(csv_path) if csv_path is not None else json_path.with_suffix(".csv")
    text = json.dumps(report_to_dict(report), indent=2, sort_keys=True, allow_nan=True)
    try:
        json_path.write_text(text + "\n")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in report.records:
                w.writerow([r.N, repr(r.alpha), repr(r.E_df), repr(r.E_projected), repr(r.tf_term),
                            repr(r.residual), repr(r.scott_target), repr(r.deviation), repr(r.projection_gap),
                            r.scf_iterations, r.projected_iterations, r.converged, r.projected_converged,
                            repr(r.grid.get("r0")), repr(r.grid.get("r_max")), r.grid.get("size")])
    except OSError as exc:
        raise OSError(f"could not write report: {exc}") from exc
    return json_path, csv_path


def load_report(path) -> SweepReport:
    with open(path) as fh:
        return report_from_dict(json.load(fh))
