"""Thomas-Fermi energy of a unit charge in the field of a nucleus of strength lambda.

The functional (Hartree units, so values are the pure numbers multiplying
alpha^2 N^{7/3} in mc^2 units) is

    E(rho) = c_K int rho^{5/3} - lambda int rho/r + (1/2) D(rho, rho),

with c_K = (3/10)(3 pi^2)^{2/3}, minimized over rho >= 0 with int rho = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .core import (DomainError, InputError, NonConvergenceError, NumericalError, RadialDensity,
                   RadialGrid, coulomb_potential)

KINETIC_CONSTANT = 0.3 * (3.0 * np.pi**2) ** (2.0 / 3.0)
# Thomas-Fermi length b with r = b x: b = (1/2)(3 pi/4)^{2/3}
TF_LENGTH = 0.5 * (0.75 * np.pi) ** (2.0 / 3.0)


@dataclass(frozen=True, eq=False)
class TfSolution:
    density: RadialDensity
    energy: float
    chemical_potential: float
    lam: float
    kinetic: float
    attraction: float
    repulsion: float
    iterations: int
    energy_history: tuple[float, ...]
    charge_history: tuple[float, ...]

    @property
    def virial_defect(self) -> float:
        """|K + E| / |E|, zero for the neutral minimizer."""
        return abs(self.kinetic + self.energy) / abs(self.energy)


def default_tf_grid(size: int = 2000) -> RadialGrid:
    # the density behaves like r^{-3/2} at the origin, so the first node must be tiny
    return RadialGrid.exponential(1e-12, 1e4, size)


def tf_terms(rho: RadialDensity, lam: float, grid: RadialGrid) -> tuple[float, float, float]:
    """(kinetic, nuclear attraction, electron repulsion) parts of the functional."""
    r = grid.nodes
    shell = 4 * np.pi * r * r
    v = rho.values
    kin = KINETIC_CONSTANT * grid.integrate(shell * v ** (5.0 / 3.0))
    att = -lam * grid.integrate(shell * v / r)
    rep = 0.5 * grid.integrate(shell * v * coulomb_potential(rho, grid))
    return kin, att, rep


def tf_functional(rho: RadialDensity, lam: float, grid: RadialGrid) -> float:
    return float(sum(tf_terms(rho, lam, grid)))


def _response(potential: np.ndarray, lam: float, grid: RadialGrid) -> tuple[np.ndarray, float]:
    """Unit-charge TF density in the effective field lam/r - potential."""
    r = grid.nodes
    shell = grid.weights * 4 * np.pi * r * r
    drive = lam / r - potential

    def dens(mu):
        return (2.0 * np.clip(drive - mu, 0.0, None)) ** 1.5 / (3.0 * np.pi**2)

    lo, hi = -1.0, 1.0
    while shell @ dens(lo) < 1.0:
        lo *= 2.0
    while shell @ dens(hi) > 1.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if shell @ dens(mid) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    mu = 0.5 * (lo + hi)
    d = dens(mu)
    return d / (shell @ d), mu


def tf_minimize(lam: float = 1.0, grid: RadialGrid | None = None, tol: float = 1e-12,
                max_iter: int = 500) -> TfSolution:
    """Minimize the TF functional at unit charge.

    Each step computes the TF density in the current mean field (the minimizer
    of the linearized functional at unit charge) and moves to the best point on
    the segment towards it. The functional is convex, so the exact line search
    makes the energy non-increasing and the charge stays exactly one.
    """
    lam = float(lam)
    if lam < 1.0:
        raise DomainError("lambda < 1 (anionic regime) is not supported")
    if tol <= 0:
        raise InputError("tol must be positive")
    grid = grid or default_tf_grid()
    r = grid.nodes
    shell = grid.weights * 4 * np.pi * r * r
    rho, mu = _response(np.zeros(grid.size), lam, grid)
    energies, charges = [], []
    for it in range(1, max_iter + 1):
        dens = RadialDensity(rho, grid)
        vh = coulomb_potential(dens, grid)
        kin = KINETIC_CONSTANT * shell @ rho ** (5.0 / 3.0)
        energy = kin + shell @ (rho * (0.5 * vh - lam / r))
        energies.append(float(energy))
        charges.append(float(shell @ rho))
        target, mu = _response(vh, lam, grid)
        step = target - rho
        v_step = _signed_potential(step, grid)
        lin = shell @ (step * (vh - lam / r))
        quad = 0.5 * shell @ (step * v_step)

        def along(s):
            return KINETIC_CONSTANT * shell @ np.abs(rho + s * step) ** (5.0 / 3.0) + lin * s + quad * s * s

        s = minimize_scalar(along, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12}).x
        drop = along(0.0) - along(s)
        if drop < 0.0:
            s, drop = 0.0, 0.0
        rho = np.clip(rho + s * step, 0.0, None)
        if it > 3 and drop < tol * abs(energies[-1]):
            break
    else:
        raise NonConvergenceError(f"TF minimization did not converge in {max_iter} steps",
                                  partial=RadialDensity(rho, grid))
    final = RadialDensity(rho, grid)
    kin, att, rep = tf_terms(final, lam, grid)
    energy = kin + att + rep
    energies.append(float(energy))
    charges.append(final.total_charge)
    # the multiplier above enters as lam/r - V - mu; report dE/dN = -mu <= 0
    return TfSolution(final, float(energy), float(-mu), lam, float(kin), float(att), float(rep), it,
                      tuple(energies), tuple(charges))


def _signed_potential(f: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Coulomb potential of a signed density."""
    r = grid.nodes
    enclosed = grid.cumulative(4 * np.pi * f * r * r)
    outer = grid.cumulative(4 * np.pi * f * r)
    return enclosed / r + (outer[-1] - outer)


@dataclass(frozen=True)
class TfOracleResult:
    energy: float
    energy_error: float
    slope: float
    slope_error: float
    x_end: float


def _series_start(slope: float, x0: float) -> tuple[float, float]:
    s = np.sqrt(x0)
    y = 1.0 + slope * x0 + (4.0 / 3.0) * x0 * s + 0.4 * slope * x0 * x0 * s + x0**3 / 3.0
    dy = slope + 2.0 * s + slope * x0 * s + x0 * x0
    return y, dy


def _shoot(slope: float, rtol: float, x_max: float = 1e4):
    """Integrate y'' = y^{3/2}/sqrt(x); +1 if y turns up, -1 if y crosses zero."""
    x0 = 1e-6

    def rhs(x, z):
        return [z[1], max(z[0], 0.0) ** 1.5 / np.sqrt(x)]

    def hits_zero(x, z):
        return z[0]
    hits_zero.terminal = True

    def turns_up(x, z):
        return z[1]
    turns_up.terminal = True

    sol = solve_ivp(rhs, (x0, x_max), list(_series_start(slope, x0)), method="DOP853",
                    rtol=rtol, atol=1e-15, events=(hits_zero, turns_up), dense_output=False)
    if sol.t_events[0].size:
        return -1, sol
    if sol.t_events[1].size:
        return +1, sol
    return 0, sol


def tf_ode_oracle(lam: float = 1.0, tol: float = 1e-10) -> TfOracleResult:
    """Neutral TF energy from the initial slope B of the TF equation.

    With y(0) = 1, y(inf) = 0 the energy is e_TF(1) = (3/7) B / b where b is
    the TF length. B is bracketed and bisected; its error is the final bracket
    width, and the energy error is that width propagated linearly.
    """
    if lam != 1.0:
        raise DomainError("the ODE oracle covers the neutral case lambda = 1 only")
    lo, hi = -1.60, -1.55
    if _shoot(lo, 1e-12)[0] != -1 or _shoot(hi, 1e-12)[0] != +1:
        raise NumericalError("initial slope bracket does not straddle the TF solution")
    rtol = min(1e-10, tol * 1e-3)
    x_end = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        side, sol = _shoot(mid, max(rtol, 1e-13))
        x_end = max(x_end, float(sol.t[-1]))
        if side < 0:
            lo = mid
        else:
            hi = mid
    slope = 0.5 * (lo + hi)
    err = hi - lo
    scale = (3.0 / 7.0) / TF_LENGTH
    return TfOracleResult(scale * slope, scale * err, slope, err, x_end)
