"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run standalone with ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from artifact.analytic import scott_correction, sommerfeld_eigenvalue
from artifact.core import CertificationError, CouplingParams, RadialGrid
from artifact.dfscf import retraction_theta, scf_solve_projected
from artifact.discretize import assemble_channel, solve_channel
from artifact.gap import (DEFAULT_SUITE, DensitySpec, FreeChannelCache, birman_schwinger_nu0, certify_gap,
                          loglog_slope, measure_c_kappa, projection_difference_check, tix_check)
from artifact.harness import GridPolicy, SweepConfig, emit_report, sweep
from artifact.tf import tf_minimize, tf_ode_oracle


def test_sommerfeld_reproduction(criterion, hydrogen_grid):
    start = time.perf_counter()
    worst = 0.0
    for kappa in (0.3, 0.5, 0.9):
        for a in range(1, 6):
            for k in (-a, a):
                # principal numbers n = n_r + |k| <= 5
                first = 0 if k < 0 else 1
                count = 5 - a + 1 - first
                if count <= 0:
                    continue
                spec = solve_channel(assemble_channel(k, kappa, hydrogen_grid), (0.0, 1.0), n_lowest=count)
                exact = np.array([sommerfeld_eigenvalue(kappa, n_r, k) for n_r in range(first, first + count)])
                worst = max(worst, float(np.max(np.abs(spec.eigenvalues / exact - 1))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 60
    criterion(1, ok, f"max relative error {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_ground_gap_value(criterion, hydrogen_grid):
    spec = solve_channel(assemble_channel(-1, 0.5, hydrogen_grid), (0.0, 1.0), n_lowest=1)
    err = abs(spec.eigenvalues[0] - math.sqrt(0.75))
    ok = err <= 1e-6 and abs(math.sqrt(0.75) - 0.8660254) < 1e-7
    criterion(2, ok, f"lowest level {spec.eigenvalues[0]:.10f}, error {err:.2e}")
    assert ok


def test_scott_series(criterion):
    bounds = [scott_correction(k, tol=1e-8).error_bound for k in (0.1, 0.3, 0.5, 0.7, 0.9)]
    quartic = np.array([(scott_correction(k).value - k * k / 2) / k**4 for k in (0.05, 0.1, 0.2)])
    spread = float(np.max(np.abs(quartic / quartic.mean() - 1)))
    ok = max(bounds) <= 1e-8 and spread <= 0.2 and np.all(np.isfinite(quartic))
    criterion(3, ok, f"max tail bound {max(bounds):.1e}, quartic coefficients {np.round(quartic, 5).tolist()}, "
                     f"spread {spread:.3f}")
    assert ok


def test_thomas_fermi(criterion):
    start = time.perf_counter()
    sol = tf_minimize(1.0)
    oracle = tf_ode_oracle()
    rel = abs(sol.energy / oracle.energy - 1)
    elapsed = time.perf_counter() - start
    ok = rel <= 1e-4 and sol.virial_defect <= 1e-4 and elapsed < 60
    criterion(4, ok, f"e_TF(1) {sol.energy:.8f} vs {oracle.energy:.8f} (rel {rel:.1e}), "
                     f"virial {sol.virial_defect:.1e}, {elapsed:.1f} s")
    assert ok


def test_critical_coupling(criterion, gap_grid):
    assert len(DEFAULT_SUITE) >= 6
    values = {(d.tag, kappa): birman_schwinger_nu0(kappa, d, gap_grid).nu0
              for d in DEFAULT_SUITE for kappa in (0.0, 0.5, 0.9)}
    lowest = min(values.values())
    concentrated = min(DEFAULT_SUITE, key=lambda d: d.scale if d.family != "far_shell" else math.inf)
    upper = values[(concentrated.tag, 0.0)]
    ok = lowest >= 0.906 - 1e-3 and upper <= 1.05
    criterion(5, ok, f"min nu0 {lowest:.5f} over {len(values)} cases, most concentrated "
                     f"{concentrated.tag} at kappa=0: {upper:.5f}")
    assert ok


def test_gap_certification(criterion, gap_grid):
    cache = FreeChannelCache(gap_grid)
    violations, min_slack, max_upper_excess = [], math.inf, -math.inf
    for kappa in (0.0, 0.5, 0.9):
        ck = measure_c_kappa(kappa, gap_grid, cache=cache)
        for nu in (0.3, 0.6, 0.85):
            for d in DEFAULT_SUITE:
                try:
                    cert = certify_gap(kappa, nu, d, gap_grid, c_kappa=ck, cache=cache)
                except CertificationError as exc:
                    violations.append(str(exc))
                    continue
                min_slack = min(min_slack, cert.slack)
                max_upper_excess = max(max_upper_excess, cert.measured_upper - cert.upper_bound)
    ok = not violations
    criterion(6, ok, f"{len(violations)} violations, min lower slack {min_slack:.3e}, "
                     f"max upper excess {max_upper_excess:.3e}")
    assert ok, violations[:3]


def test_tix(criterion, gap_grid):
    worst = math.inf
    for kappa in (0.3, 0.6, 0.9):
        try:
            res = tix_check(kappa, gap_grid)
            worst = min(worst, res.minimum - (1 - kappa))
        except CertificationError:
            worst = -math.inf
    ok = worst >= -1e-4
    criterion(7, ok, f"min of (compressed minimum - (1 - kappa)) = {worst:.4e}")
    assert ok


def test_projection_differences(criterion, gap_grid):
    V0 = 0.05 * DensitySpec("gaussian", 1.0).build(gap_grid).potential
    slopes, r2, r6 = [], [], []
    for kappa in (0.3, 0.5, 0.9):
        rows = projection_difference_check(kappa, V0, gap_grid)
        slopes.append(loglog_slope([r.grad_l2 for r in rows], [r.lhs_s2 for r in rows]))
        r2 += [r.ratio_s2 for r in rows]
        r6 += [r.ratio_s6 for r in rows]
    # one constant bounds each ratio family: the spread stays within a fixed factor
    spread = max(max(r2) / min(r2), max(r6) / min(r6))
    ok = all(0.9 <= s <= 1.1 for s in slopes) and min(r2 + r6) > 0 and spread <= 10
    criterion(8, ok, f"slopes {np.round(slopes, 4).tolist()}, S2 ratios [{min(r2):.3f}, {max(r2):.3f}], "
                     f"S6 ratios [{min(r6):.4f}, {max(r6):.4f}]")
    assert ok


def test_retraction(criterion):
    kappa, n = 0.5, 10
    params = CouplingParams.neutral(kappa, n)
    grid = RadialGrid.exponential(1e-4 * math.sqrt(1 - kappa**2) / n ** (1 / 3), 60.0 / params.alpha, 600)
    gamma0 = scf_solve_projected(params, grid, scheme="anderson").density_matrix()
    maxima, converged, below_one = [], True, True
    for alpha in (params.alpha, params.alpha / 2, params.alpha / 4):
        trace = retraction_theta(gamma0, CouplingParams(kappa, alpha, n), grid)
        converged &= trace.converged
        below_one &= all(k < 1 for k in trace.contraction_estimates)
        maxima.append(trace.max_ratio)
    decreasing = all(b < a for a, b in zip(maxima, maxima[1:]))
    ok = converged and below_one and decreasing
    criterion(9, ok, f"max k_p {[f'{m:.2e}' for m in maxima]} for alpha = 0.05, 0.025, 0.0125")
    assert ok


def test_main_expansion(criterion, tmp_path):
    start = time.perf_counter()
    report = sweep(kappa=0.5, n_list=(2, 10, 18, 36))
    elapsed = time.perf_counter() - start
    emit_report(report, tmp_path / "report.json")
    s = report.summary
    devs = [f"{abs(d):.4g}" for _, d in s.deviations]
    gaps = [f"{g:.3g}" for _, g in s.projection_gaps]
    ok = report.passed and len(s.deviations) == 4 and len(s.projection_gaps) == 4 and elapsed < 1800
    criterion(10, ok, f"|deviation| {devs}, projection gaps {gaps}, {elapsed:.0f} s")
    assert ok


def test_determinism(criterion, tmp_path):
    config = SweepConfig(kappa=0.5, n_list=(2, 4), policy=GridPolicy(min_nodes=600), tf_grid_size=1000)
    paths = []
    for i in range(2):
        paths.append(emit_report(sweep(config=config), tmp_path / f"run{i}.json"))
    same = all(a.read_bytes() == b.read_bytes() for a, b in zip(paths[0], paths[1]))
    criterion(11, same, "JSON and CSV reports of two runs " + ("identical" if same else "differ"))
    assert same


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
