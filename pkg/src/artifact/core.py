"""Shared types, radial grids, quadrature and spherical Coulomb transforms.

Units are hbar = m = c = 1: energies in mc^2, lengths in reduced Compton
wavelengths. One Hartree equals alpha**2 in these units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import bernoulli

# 2 / (pi/2 + 2/pi): proven lower bound on the critical repulsive charge.
NU0_LOWER_BOUND = 2.0 / (np.pi / 2.0 + 2.0 / np.pi)
NU_SAFETY_LIMIT = 0.906


class ArtifactError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ArtifactError, ValueError):
    """Malformed or inconsistent input."""


class DomainError(ArtifactError, ValueError):
    """Parameter outside the range where the model is defined."""


class NumericalError(ArtifactError, RuntimeError):
    """An eigensolver, quadrature or iteration produced unusable output."""


class NonConvergenceError(ArtifactError, RuntimeError):
    """An iteration stopped before reaching its tolerance.

    ``partial`` carries the last iterate (a partial sum, a state, a trace).
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class CertificationError(ArtifactError, RuntimeError):
    """A proven inequality failed numerically beyond its tolerance."""


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CouplingParams:
    """Physical inputs: kappa = alpha*Z, alpha and the electron number N."""

    kappa: float
    alpha: float
    n_electrons: int
    nu: float = field(init=False)

    def __post_init__(self):
        kappa, alpha, n = float(self.kappa), float(self.alpha), self.n_electrons
        if not (0.0 <= kappa < 1.0):
            raise DomainError(f"kappa must lie in [0, 1), got {kappa}")
        if alpha < 0.0 or not np.isfinite(alpha):
            raise DomainError(f"alpha must be nonnegative, got {alpha}")
        if int(n) != n or n < 1:
            raise InputError(f"n_electrons must be a positive integer, got {n}")
        nu = alpha * int(n)
        if not (0.0 <= nu < NU_SAFETY_LIMIT):
            raise DomainError(f"nu = alpha*N = {nu} must lie in [0, {NU_SAFETY_LIMIT})")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "n_electrons", int(n))
        object.__setattr__(self, "nu", nu)

    @classmethod
    def neutral(cls, kappa: float, n_electrons: int) -> "CouplingParams":
        """Neutral atom N = Z, so alpha = kappa/N and nu = kappa."""
        return cls(kappa=kappa, alpha=kappa / n_electrons, n_electrons=n_electrons)

    @property
    def nuclear_charge(self) -> float:
        return self.kappa / self.alpha if self.alpha > 0 else float("inf")


@dataclass(frozen=True)
class ChannelIndex:
    """Relativistic angular quantum number of a radial Dirac channel."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k == 0:
            raise InputError(f"channel index must be a nonzero integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def degeneracy(self) -> int:
        return 2 * abs(self.k)

    @property
    def abs_k(self) -> int:
        return abs(self.k)

    @property
    def orbital_l(self) -> int:
        return self.k if self.k > 0 else -self.k - 1

    def label(self) -> str:
        l = self.orbital_l
        j2 = 2 * abs(self.k) - 1
        return f"{'spdfghiklmno'[l] if l < 12 else 'l' + str(l)}{j2}/2"


def channel_list(kmax: int) -> list[ChannelIndex]:
    """Channels ordered -1, +1, -2, +2, ..., -kmax, +kmax."""
    if kmax < 1:
        raise InputError("kmax must be at least 1")
    out = []
    for a in range(1, kmax + 1):
        out.append(ChannelIndex(-a))
        out.append(ChannelIndex(a))
    return out


def _end_corrections(order: int) -> np.ndarray:
    """Gregory end corrections to the trapezoid weights (unit spacing)."""
    bern = bernoulli(order + 1)
    mat = np.array([[float(j) ** m for j in range(order)] for m in range(order)])
    mat[0, 0] = 1.0
    rhs = np.array([0.0 if m % 2 == 0 else bern[m + 1] / (m + 1) for m in range(order)])
    return np.linalg.solve(mat, rhs)


_GREGORY_ORDER = 6


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Mapped mesh r(t) = r0*(exp(t) - 1), t_j = j*h, j = 1..M.

    The origin t_0 = 0 is not a node. Midpoints sit at t_{j-1/2}.
    ``weights`` integrate f(r) dr over [0, r_max] from node samples, with
    sixth-order end corrections and the origin value extrapolated.
    """

    r0: float
    r_max: float
    size: int
    h: float
    t: np.ndarray
    nodes: np.ndarray
    midpoints: np.ndarray
    jacobian: np.ndarray
    jacobian_mid: np.ndarray
    weights: np.ndarray

    @classmethod
    def exponential(cls, r0: float, r_max: float, size: int, self_test: bool = True) -> "RadialGrid":
        if not (r0 > 0 and r_max > r0):
            raise InputError(f"need 0 < r0 < r_max, got r0={r0}, r_max={r_max}")
        if size < 4 * _GREGORY_ORDER:
            raise InputError(f"grid needs at least {4 * _GREGORY_ORDER} nodes")
        h = np.log1p(r_max / r0) / size
        j = np.arange(1, size + 1, dtype=float)
        t = h * j
        tm = h * (j - 0.5)
        nodes = r0 * np.expm1(t)
        nodes[-1] = r_max
        mids = r0 * np.expm1(tm)
        jac = r0 * np.exp(t)
        jac_mid = r0 * np.exp(tm)
        base = np.ones(size + 1)
        base[0] = base[-1] = 0.5
        c = _end_corrections(_GREGORY_ORDER)
        base[:_GREGORY_ORDER] += c
        base[-_GREGORY_ORDER:] += c[::-1]
        weights = h * base[1:] * jac
        # origin term by linear extrapolation in t; keeps all weights positive
        w0 = h * base[0]
        weights[0] += 2.0 * w0 * jac[0]
        weights[1] -= w0 * jac[1]
        grid = cls(float(r0), float(r_max), int(size), float(h), _readonly(t), _readonly(nodes),
                   _readonly(mids), _readonly(jac), _readonly(jac_mid), _readonly(weights))
        if self_test:
            grid.check_quadrature()
        return grid

    @property
    def mapping(self) -> dict:
        return {"kind": "r0*(exp(t)-1)", "r0": self.r0, "r_max": self.r_max,
                "size": self.size, "h": self.h}

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or self.mapping == other.mapping

    def check_quadrature(self, rtol: float = 1e-8) -> None:
        r, R = self.nodes, self.r_max
        cases = (
            (np.ones_like(r), R),
            (r * np.exp(-r), 1.0 - np.exp(-R) * (1.0 + R)),
            (r * r * np.exp(-r), 2.0 - np.exp(-R) * (R * R + 2.0 * R + 2.0)),
        )
        for f, exact in cases:
            got = self.integrate(f)
            if abs(got - exact) > rtol * abs(exact):
                raise NumericalError(
                    f"grid quadrature self-test failed: {got!r} vs {exact!r} (mapping {self.mapping})")

    def integrate(self, f: np.ndarray) -> float:
        return float(self.weights @ f)

    def cumulative(self, f: np.ndarray) -> np.ndarray:
        """Running integral from 0 to each node of f(r) dr (f(0) taken as 0)."""
        g = np.concatenate(([0.0], np.asarray(f, dtype=float) * self.jacobian))
        tt = np.concatenate(([0.0], self.t))
        return CubicSpline(tt, g).antiderivative()(self.t)

    def derivative(self, f: np.ndarray) -> np.ndarray:
        """df/dr at the nodes from a spline in t."""
        return CubicSpline(self.t, np.asarray(f, dtype=float))(self.t, 1) / self.jacobian

    def to_midpoints(self, f: np.ndarray) -> np.ndarray:
        """Midpoint values paired with nodes: f_{1/2} = f_1, else neighbour average."""
        f = np.asarray(f, dtype=float)
        out = np.empty_like(f)
        out[0] = f[0]
        out[1:] = 0.5 * (f[1:] + f[:-1])
        return out


@dataclass(frozen=True, eq=False)
class RadialDensity:
    """Non-negative spherically symmetric density sampled on the grid nodes."""

    values: np.ndarray
    grid: RadialGrid
    total_charge: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise InputError(f"density has shape {v.shape}, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InputError("density must be finite and nonnegative")
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "total_charge", self.grid.integrate(4 * np.pi * self.grid.nodes**2 * v))

    @classmethod
    def from_function(cls, grid: RadialGrid, func, normalize: bool = False) -> "RadialDensity":
        d = cls(np.asarray(func(grid.nodes), dtype=float), grid)
        return d.normalized() if normalize else d

    @classmethod
    def zero(cls, grid: RadialGrid) -> "RadialDensity":
        return cls(np.zeros(grid.size), grid)

    def normalized(self, charge: float = 1.0) -> "RadialDensity":
        if self.total_charge <= 0:
            raise InputError("cannot normalize a density with zero charge")
        return RadialDensity(self.values * (charge / self.total_charge), self.grid)

    def scaled(self, factor: float) -> "RadialDensity":
        return RadialDensity(self.values * factor, self.grid)

    @cached_property
    def potential(self) -> np.ndarray:
        return coulomb_potential(self, self.grid)


def _check_grid(rho: RadialDensity, grid: RadialGrid) -> None:
    if not rho.grid.same_as(grid):
        raise InputError("density and grid do not match")


def coulomb_potential(rho: RadialDensity, grid: RadialGrid) -> np.ndarray:
    """V(r) = Q(r)/r + int_r^inf 4 pi rho(s) s ds with Q(r) the enclosed charge."""
    _check_grid(rho, grid)
    r = grid.nodes
    if not np.any(rho.values):
        return np.zeros(grid.size)
    enclosed = grid.cumulative(4 * np.pi * rho.values * r * r)
    outer = grid.cumulative(4 * np.pi * rho.values * r)
    v = enclosed / r + (outer[-1] - outer)
    return np.maximum(v, 0.0)


def coulomb_energy(rho1: RadialDensity, rho2: RadialDensity, grid: RadialGrid) -> float:
    """D(rho1, rho2), symmetrized so that swapping arguments is exact."""
    _check_grid(rho1, grid)
    _check_grid(rho2, grid)
    r2 = 4 * np.pi * grid.nodes**2
    a = grid.integrate(r2 * rho1.values * rho2.potential)
    b = grid.integrate(r2 * rho2.values * rho1.potential)
    return 0.5 * (a + b)


def grad_potential_norms(V: np.ndarray, grid: RadialGrid) -> tuple[float, float, float]:
    """(||grad V||_L2, ||grad V||_L3, ||V||_L6) over the ball of radius r_max."""
    V = np.asarray(V, dtype=float)
    if V.shape != (grid.size,):
        raise InputError("potential does not match the grid")
    if not np.any(V):
        return 0.0, 0.0, 0.0
    dv = np.abs(grid.derivative(V))
    shell = 4 * np.pi * grid.nodes**2
    l2 = np.sqrt(grid.integrate(shell * dv**2))
    l3 = np.cbrt(grid.integrate(shell * dv**3))
    l6 = grid.integrate(shell * np.abs(V) ** 6) ** (1.0 / 6.0)
    return float(l2), float(l3), float(l6)
