"""Command-line entry point: ``artifact <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .core import ArtifactError, CouplingParams, RadialGrid, channel_list

log = logging.getLogger("artifact")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _density(text: str):
    from .gap import DensitySpec
    try:
        return DensitySpec.parse(text)
    except ArtifactError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _densities(text: str):
    return [_density(x) for x in text.split(",") if x.strip()]


def _writer(path):
    fh = open(path, "w", newline="") if path else sys.stdout
    return fh, csv.writer(fh, lineterminator="\n")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def cmd_scott(args) -> int:
    from .analytic import scott_correction
    res = scott_correction(args.kappa, tol=args.tol)
    print(f"c_scott,{res.value!r}")
    print(f"error_bound,{res.error_bound!r}")
    print(f"shells_summed,{res.n_summed}")
    fh, w = _writer(args.csv)
    w.writerow(["n", "d_n"])
    for n, d in enumerate(res.shell_terms[: args.shells], start=1):
        w.writerow([n, repr(float(d))])
    _close(fh)
    return 0


def cmd_tf(args) -> int:
    from .tf import default_tf_grid, tf_minimize, tf_ode_oracle
    sol = tf_minimize(args.lam, grid=default_tf_grid(args.grid_size), tol=args.tol)
    print(f"energy,{sol.energy!r}")
    print(f"chemical_potential,{sol.chemical_potential!r}")
    print(f"virial_defect,{sol.virial_defect!r}")
    print(f"iterations,{sol.iterations}")
    if args.lam == 1.0:
        print(f"ode_energy,{tf_ode_oracle().energy!r}")
    if args.density_csv:
        fh, w = _writer(args.density_csv)
        w.writerow(["r", "rho"])
        for r, v in zip(sol.density.grid.nodes, sol.density.values):
            w.writerow([repr(float(r)), repr(float(v))])
        _close(fh)
    return 0


def _scf_grid(args, params: CouplingParams) -> RadialGrid:
    from .harness import GridPolicy
    policy = GridPolicy()
    n = params.n_electrons
    r0 = args.r0 if args.r0 else policy.r0_base * np.sqrt(1 - params.kappa**2) / n ** (1 / 3)
    r_max = args.r_max if args.r_max else policy.r_max_bohr / max(params.alpha, 1e-12)
    return RadialGrid.exponential(r0, r_max, args.grid_size or policy.size(n))


def cmd_scf(args) -> int:
    from .dfscf import df_energy, load_checkpoint, save_checkpoint, scf_solve, scf_solve_projected
    alpha = args.alpha if args.alpha is not None else args.kappa / args.n_electrons
    params = CouplingParams(args.kappa, alpha, args.n_electrons)
    grid = _scf_grid(args, params)
    warm = None
    if args.restart:
        warm = load_checkpoint(args.restart)
        grid = warm.grid
    kw = dict(mixing=args.mixing, tol=args.tol, max_iter=args.max_iter, kmax=args.kmax, scheme=args.scheme)
    if args.projected:
        warm = warm or scf_solve(params, grid, **kw)
        state = scf_solve_projected(params, grid, warm_start=warm, **kw)
    else:
        state = scf_solve(params, grid, initial_potential=None if warm is None else warm.mean_field_potential,
                          **kw)
    print(f"energy,{df_energy(state)!r}")
    print(f"fermi_level,{state.fermi_level!r}")
    print(f"iterations,{state.iterations}")
    for msg in state.warnings:
        log.warning(msg)
    print("k,radial_index,eigenvalue,occupation")
    for o in state.orbitals:
        print(f"{o.channel.k},{o.radial_index},{o.energy!r},{o.occupation!r}")
    if args.trace:
        fh, w = _writer(args.trace)
        w.writerow(["iteration", "energy", "potential_change", "energy_change", "fermi_level"])
        for h in state.history:
            w.writerow([h.iteration, repr(h.energy), repr(h.potential_change), repr(h.energy_change),
                        repr(h.fermi_level)])
        _close(fh)
    if args.checkpoint:
        save_checkpoint(state, args.checkpoint)
    return 0


def cmd_spectrum(args) -> int:
    from .discretize import assemble_channel, solve_channel
    grid = RadialGrid.exponential(args.r0, args.r_max, args.grid_size)
    fh, w = _writer(args.csv)
    w.writerow(["k", "index", "eigenvalue"])
    for ch in channel_list(args.kmax):
        spec = solve_channel(assemble_channel(ch, args.kappa, grid), window=(args.lo, args.hi))
        for i, e in enumerate(spec.eigenvalues):
            w.writerow([ch.k, i, repr(float(e))])
    _close(fh)
    return 0


def _gap_grid(args):
    from .gap import default_gap_grid
    return default_gap_grid(args.grid_size, args.r0, args.r_max)


def cmd_nu0(args) -> int:
    from .gap import birman_schwinger_nu0, crossing_coupling
    grid = _gap_grid(args)
    fh, w = _writer(args.csv)
    w.writerow(["kappa", "density", "nu0", "channel", "at_cutoff", "crossing_oracle"])
    for d in args.density:
        for kappa in args.kappa:
            c = birman_schwinger_nu0(kappa, d, grid, args.k_scan)
            k = c.channel_attaining_min.k if c.channel_attaining_min else ""
            orc = crossing_coupling(kappa, d, grid, k) if k != "" and args.oracle else ""
            w.writerow([kappa, c.density_tag, repr(c.nu0), k, c.at_cutoff, repr(orc) if orc != "" else ""])
    _close(fh)
    return 0


def cmd_gap_cert(args) -> int:
    from .core import CertificationError
    from .gap import FreeChannelCache, certify_gap, measure_c_kappa
    grid = _gap_grid(args)
    cache = FreeChannelCache(grid)
    fh, w = _writer(args.csv)
    w.writerow(["kappa", "nu", "density", "measured", "formula", "c_kappa", "upper_measured", "upper_bound",
                "at_cutoff", "status"])
    failures = 0
    for kappa in args.kappa:
        ck = measure_c_kappa(kappa, grid, args.k_scan, cache)
        for nu in args.nu:
            for d in args.density:
                try:
                    c = certify_gap(kappa, nu, d, grid, args.k_scan, c_kappa=ck, cache=cache)
                    status = "ok"
                except CertificationError as exc:
                    failures += 1
                    log.error(str(exc))
                    w.writerow([kappa, nu, d.tag, "", "", repr(ck), "", "", "", "fail"])
                    continue
                w.writerow([kappa, nu, c.density_tag, repr(c.measured_gap_constant), repr(c.formula_constant),
                            repr(c.c_kappa_measured), repr(c.measured_upper), repr(c.upper_bound),
                            c.at_cutoff_flag, status])
    _close(fh)
    return 1 if failures else 0


def cmd_tix(args) -> int:
    from .gap import tix_check
    grid = _gap_grid(args)
    print("kappa,minimum,bound,channel")
    for kappa in args.kappa:
        r = tix_check(kappa, grid, args.k_scan)
        print(f"{kappa},{r.minimum!r},{r.bound!r},{r.channel.k}")
    return 0


def cmd_proj_diff(args) -> int:
    from .gap import loglog_slope, projection_difference_check
    grid = _gap_grid(args)
    base = args.density.build(grid)
    V0 = args.amplitude * base.potential
    fh, w = _writer(args.csv)
    w.writerow(["kappa", "scale", "grad_l2", "grad_l3", "v_l6", "lhs_s2", "lhs_s6", "rhs_s2", "rhs_s6",
                "ratio_s2", "ratio_s6"])
    for kappa in args.kappa:
        rows = projection_difference_check(kappa, V0, grid, args.scales, args.k_scan, args.eps, args.l6_limit)
        for r in rows:
            w.writerow([kappa, r.scale, repr(r.grad_l2), repr(r.grad_l3), repr(r.v_l6), repr(r.lhs_s2),
                        repr(r.lhs_s6), repr(r.rhs_s2), repr(r.rhs_s6), repr(r.ratio_s2), repr(r.ratio_s6)])
        log.info("kappa=%s slope=%.4f", kappa, loglog_slope([r.grad_l2 for r in rows], [r.lhs_s2 for r in rows]))
    _close(fh)
    return 0


def cmd_sweep(args) -> int:
    from .harness import SweepConfig, emit_report, sweep
    config = SweepConfig.load(args.config) if args.config else SweepConfig()
    report = sweep(kappa=args.kappa, n_list=args.n_list, config=config)
    json_path, csv_path = emit_report(report, args.out)
    for r in report.records:
        print(f"N={r.N} E_df={r.E_df!r} residual={r.residual!r} deviation={r.deviation!r} "
              f"projection_gap={r.projection_gap!r} converged={r.converged}")
    if report.summary is not None:
        print(f"trend_ok={report.summary.trend_ok} projection_trend_ok={report.summary.projection_trend_ok}")
    print(f"report={json_path} table={csv_path}")
    return 0 if report.passed else 1


def _gap_options(p, kappa_default):
    p.add_argument("--kappa", type=_floats, default=kappa_default, help="comma-separated couplings")
    p.add_argument("--k-scan", type=int, default=3, help="channels -K..K")
    p.add_argument("--grid-size", type=int, default=300)
    p.add_argument("--r0", type=float, default=1e-9)
    p.add_argument("--r-max", type=float, default=100.0)
    p.add_argument("--csv", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artifact", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scott", help="relativistic Scott correction")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--shells", type=int, default=20, help="rows of the shell table")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_scott)

    p = sub.add_parser("tf", help="Thomas-Fermi energy")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--grid-size", type=int, default=2000)
    p.add_argument("--density-csv", default=None)
    p.set_defaults(func=cmd_tf)

    p = sub.add_parser("scf", help="reduced Dirac-Fock mean-field solve")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--n-electrons", type=int, required=True)
    p.add_argument("--alpha", type=float, default=None, help="default kappa/N (neutral)")
    p.add_argument("--projected", action="store_true")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--mixing", type=float, default=0.3)
    p.add_argument("--scheme", choices=("linear", "anderson"), default="linear")
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--grid-size", type=int, default=None)
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--kmax", type=int, default=None)
    p.add_argument("--checkpoint", default=None, help="write a JSON checkpoint")
    p.add_argument("--restart", default=None, help="start from a JSON checkpoint")
    p.add_argument("--trace", default=None, help="CSV convergence trace")
    p.set_defaults(func=cmd_scf)

    p = sub.add_parser("spectrum", help="dump channel eigenvalues as CSV")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--kmax", type=int, default=3)
    p.add_argument("--grid-size", type=int, default=4000)
    p.add_argument("--r0", type=float, default=3e-6)
    p.add_argument("--r-max", type=float, default=400.0)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("nu0", help="Birman-Schwinger critical couplings")
    _gap_options(p, [0.0, 0.5, 0.9])
    p.add_argument("--density", type=_densities, default=None, help="comma-separated family:scale tags")
    p.add_argument("--oracle", action="store_true", help="also bisect the eigenvalue crossing")
    p.set_defaults(func=cmd_nu0)

    p = sub.add_parser("gap-cert", help="certify the gap constants")
    _gap_options(p, [0.0, 0.5, 0.9])
    p.add_argument("--nu", type=_floats, default=[0.3, 0.6, 0.85])
    p.add_argument("--density", type=_densities, default=None)
    p.set_defaults(func=cmd_gap_cert)

    p = sub.add_parser("tix", help="compressed Dirac-Coulomb minimum")
    _gap_options(p, [0.3, 0.6, 0.9])
    p.set_defaults(func=cmd_tix)

    p = sub.add_parser("proj-diff", help="projection-difference Schatten norms")
    _gap_options(p, [0.3, 0.5, 0.9])
    p.add_argument("--density", type=_density, default="gaussian:1", help="source of the base potential")
    p.add_argument("--amplitude", type=float, default=0.05, help="V0 = amplitude * V_rho")
    p.add_argument("--scales", type=_floats, default=[1.0, 0.5, 0.25, 0.125])
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--l6-limit", type=float, default=0.1)
    p.set_defaults(func=cmd_proj_diff)

    p = sub.add_parser("sweep", help="large-N expansion sweep")
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--n-list", type=_ints, default=None)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "density", "") is None:
        from .gap import DEFAULT_SUITE
        args.density = list(DEFAULT_SUITE)
    try:
        return int(args.func(args))
    except ArtifactError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
