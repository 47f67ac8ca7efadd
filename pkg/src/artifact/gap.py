"""Critical couplings, gap constants, the Tix bound and projection-difference estimates.

Everything is evaluated channel by channel on the staggered radial
discretization and reduced over a scan of channels k = -1, +1, ..., -K, +K.
Charges of test densities are normalized to one; a density of total charge
nu enters the operator as nu * V_rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh

from .core import (NU0_LOWER_BOUND, NU_SAFETY_LIMIT, CertificationError, ChannelIndex, DomainError,
                   InputError, NumericalError, RadialDensity, RadialGrid, channel_list,
                   grad_potential_norms)
from .discretize import (_BISECTION_TOL, ChannelOperator, ChannelSpectrum, assemble_channel, full_spectrum,
                         operator_function_norms, solve_channel,
                         spectral_projector, staggered_potential)

DENSITY_FAMILIES = ("gaussian", "exponential", "uniform_ball", "far_shell")
FAR_SHELL_WIDTH = 1.0
CERTIFICATE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DensitySpec:
    """A unit-charge radial test density: family plus length scale.

    For ``far_shell`` the scale is the inner radius R of the shell [R, R + 1].
    """

    family: str
    scale: float

    def __post_init__(self):
        if self.family not in DENSITY_FAMILIES:
            raise InputError(f"unknown density family {self.family!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InputError("density scale must be positive and finite")

    @property
    def tag(self) -> str:
        return f"{self.family}:{self.scale:g}"

    @classmethod
    def parse(cls, tag: str) -> "DensitySpec":
        try:
            family, scale = tag.split(":")
            scale = float(scale)
        except ValueError as exc:
            raise InputError(f"density tag {tag!r} is not of the form family:scale") from exc
        return cls(family.strip().lower().replace("-", "_"), scale)

    def profile(self, r: np.ndarray) -> np.ndarray:
        s = self.scale
        if self.family == "gaussian":
            return np.exp(-((r / s) ** 2))
        if self.family == "exponential":
            return np.exp(-r / s)
        if self.family == "uniform_ball":
            return (r <= s).astype(float)
        return ((r >= s) & (r <= s + FAR_SHELL_WIDTH)).astype(float)

    def build(self, grid: RadialGrid) -> RadialDensity:
        values = self.profile(grid.nodes)
        if not np.any(values > 0):
            raise InputError(f"density {self.tag} is not resolved by the grid")
        return RadialDensity(values, grid).normalized()


DEFAULT_SUITE = (
    DensitySpec("gaussian", 1.0),
    DensitySpec("gaussian", 1e-5),
    DensitySpec("exponential", 1.0),
    DensitySpec("exponential", 0.01),
    DensitySpec("uniform_ball", 2.0),
    DensitySpec("uniform_ball", 0.05),
    DensitySpec("far_shell", 5.0),
    DensitySpec("far_shell", 20.0),
)


def default_gap_grid(size: int = 300, r0: float = 1e-9, r_max: float = 100.0) -> RadialGrid:
    """Grid wide enough for the default suite, from the concentrated Gaussian to the far shells."""
    return RadialGrid.exponential(r0, r_max, size)


def scan_channels(k_scan: int) -> tuple[ChannelIndex, ...]:
    if int(k_scan) < 1:
        raise InputError("k_scan must be at least 1")
    return tuple(channel_list(int(k_scan)))


def _unit_density(rho, grid: RadialGrid) -> tuple[RadialDensity, str]:
    if isinstance(rho, DensitySpec):
        return rho.build(grid), rho.tag
    if isinstance(rho, str):
        spec = DensitySpec.parse(rho)
        return spec.build(grid), spec.tag
    if not isinstance(rho, RadialDensity):
        raise InputError("rho must be a RadialDensity, a DensitySpec or a tag")
    if not rho.grid.same_as(grid):
        raise InputError("density lives on a different grid")
    if abs(rho.total_charge - 1.0) > 1e-8:
        raise InputError(f"test density must have unit charge, got {rho.total_charge}")
    return rho, "custom"


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not (0.0 <= kappa < 1.0):
        raise DomainError(f"kappa must lie in [0, 1), got {kappa}")
    return kappa


# Birman-Schwinger critical coupling

@dataclass(frozen=True)
class CriticalCoupling:
    kappa: float
    density_tag: str
    nu0: float
    channel_attaining_min: ChannelIndex | None
    per_channel: tuple[tuple[int, float], ...]
    at_cutoff: bool
    symmetry_defect: float | None


def birman_schwinger_matrix(op: ChannelOperator, spec: ChannelSpectrum, V_stag: np.ndarray) -> np.ndarray:
    """sqrt(V) D^{-1} sqrt(V) for V >= 0, via the full eigendecomposition of D."""
    if np.any(V_stag < 0):
        raise InputError("Birman-Schwinger construction needs a non-negative potential")
    if np.min(np.abs(spec.eigenvalues)) < 1e-12:
        raise NumericalError(f"channel {op.channel.k} operator is numerically singular")
    B = np.sqrt(V_stag)[:, None] * spec.eigenvectors
    M = (B / spec.eigenvalues) @ B.T
    return 0.5 * (M + M.T)


def birman_schwinger_spectra(kappa: float, rho, grid: RadialGrid,
                             k_scan: int = 3) -> dict[int, np.ndarray]:
    kappa = _check_kappa(kappa)
    dens, _ = _unit_density(rho, grid)
    V_stag = staggered_potential(dens.potential, grid)
    out = {}
    for ch in scan_channels(k_scan):
        op = assemble_channel(ch, kappa, grid)
        out[ch.k] = sla.eigvalsh(birman_schwinger_matrix(op, full_spectrum(op), V_stag))
    return out


def birman_schwinger_nu0(kappa: float, rho, grid: RadialGrid, k_scan: int = 3) -> CriticalCoupling:
    """nu0(kappa, rho) = -1 / min over channels of the spectrum of sqrt(V) D_kappa^{-1} sqrt(V)."""
    kappa = _check_kappa(kappa)
    _, tag = _unit_density(rho, grid)
    spectra = birman_schwinger_spectra(kappa, rho, grid, k_scan)
    per = []
    for k, ev in spectra.items():
        per.append((k, -1.0 / ev[0] if ev[0] < 0 else math.inf))
    best_k, best = min(per, key=lambda kv: (kv[1], abs(kv[0]), kv[0]))
    channel = None if math.isinf(best) else ChannelIndex(best_k)
    at_cutoff = channel is None or channel.abs_k == int(k_scan)
    sym = None
    if kappa == 0.0:
        # charge conjugation pairs channel k with -k and flips the sign of the spectrum
        sym = 0.0
        for a in range(1, int(k_scan) + 1):
            u = np.sort(np.concatenate([spectra[-a], spectra[a]]))
            scale = max(float(np.max(np.abs(u))), 1e-300)
            sym = max(sym, float(np.max(np.abs(u + u[::-1]))) / scale)
    return CriticalCoupling(kappa, tag, float(best), channel, tuple(per), at_cutoff, sym)


def _top_negative(op: ChannelOperator, V_stag: np.ndarray, nu: float) -> float:
    d = op.diagonal + nu * V_stag
    idx = op.size // 2 - 1
    w = sla.eigvalsh_tridiagonal(d, op.offdiagonal, select="i", select_range=(idx, idx), tol=_BISECTION_TOL)
    return float(w[0])


def crossing_coupling(kappa: float, rho, grid: RadialGrid, k: int, rtol: float = 1e-10,
                      nu_max: float = 1e3) -> float:
    """Smallest nu at which an eigenvalue of D_kappa + nu V_rho in channel k reaches 0.

    The discrete free operator has exactly half of its states below zero, so
    the eigenvalue with index dim/2 - 1 is the top of the negative branch; it
    is non-decreasing in nu and is bisected for its zero.
    """
    kappa = _check_kappa(kappa)
    dens, _ = _unit_density(rho, grid)
    V_stag = staggered_potential(dens.potential, grid)
    op = assemble_channel(k, kappa, grid)
    if _top_negative(op, V_stag, 0.0) >= 0:
        raise NumericalError(f"channel {k}: free negative branch does not lie below 0")
    lo, hi = 0.0, 1.0
    while _top_negative(op, V_stag, hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > nu_max:
            return math.inf
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _top_negative(op, V_stag, mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def resolvent_via_birman_schwinger(op: ChannelOperator, V_stag: np.ndarray, nu: float) -> np.ndarray:
    """(A + B)^{-1} = A^{-1} - A^{-1} sqrt(B) (1 + sqrt(B) A^{-1} sqrt(B))^{-1} sqrt(B) A^{-1}.

    Here A = D_kappa of the channel and B = nu V with V >= 0.
    """
    if nu < 0:
        raise InputError("nu must be non-negative")
    spec = full_spectrum(op)
    U, lam = spec.eigenvectors, spec.eigenvalues
    Ainv = (U / lam) @ U.T
    s = np.sqrt(nu * V_stag)
    K = s[:, None] * Ainv * s[None, :]
    inner = np.linalg.solve(np.eye(K.shape[0]) + K, s[:, None] * Ainv)
    return Ainv - (Ainv * s[None, :]) @ inner


# gap constants

class FreeChannelCache:
    """|D_0|^{-1/2} per channel on one grid, shared by repeated pencil evaluations."""

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        self._spectra: dict[int, ChannelSpectrum] = {}
        self._roots: dict[int, np.ndarray] = {}

    def spectrum(self, ch: ChannelIndex) -> ChannelSpectrum:
        if ch.k not in self._spectra:
            self._spectra[ch.k] = full_spectrum(assemble_channel(ch, 0.0, self.grid))
        return self._spectra[ch.k]

    def inverse_root(self, ch: ChannelIndex) -> np.ndarray:
        if ch.k not in self._roots:
            self._roots[ch.k] = self.spectrum(ch).abs_power(-0.5)
        return self._roots[ch.k]


def _free_cache(cache: FreeChannelCache | None, grid: RadialGrid) -> FreeChannelCache:
    if cache is None:
        return FreeChannelCache(grid)
    if not cache.grid.same_as(grid):
        raise InputError("cache was built for a different grid")
    return cache


def _abs_pencil(kappa: float, grid: RadialGrid, ch: ChannelIndex, V_nodes: np.ndarray | None,
                cache: FreeChannelCache) -> np.ndarray:
    """Spectrum of |D_0|^{-1/2} |D| |D_0|^{-1/2} for D = D_kappa + V in channel ch."""
    spec = full_spectrum(assemble_channel(ch, kappa, grid, V_nodes))
    W = cache.inverse_root(ch) @ spec.eigenvectors
    m = (W * np.abs(spec.eigenvalues)) @ W.T
    return sla.eigvalsh(0.5 * (m + m.T))


def _pencil_bottom(kappa: float, grid: RadialGrid, ch: ChannelIndex, cache: FreeChannelCache) -> float:
    """Lowest eigenvalue of |D_0|^{-1/2} |D_kappa| |D_0|^{-1/2} by Lanczos on O(n^2) products."""
    free = cache.spectrum(ch)
    spec = full_spectrum(assemble_channel(ch, kappa, grid))
    U0, s0 = free.eigenvectors, np.abs(free.eigenvalues) ** -0.5
    U, lam = spec.eigenvectors, np.abs(spec.eigenvalues)

    def apply(x):
        y = U0 @ (s0 * np.ravel(x))
        return s0 * (U0.T @ (U @ (lam * (U.T @ y))))

    n = s0.size
    op = LinearOperator((n, n), matvec=apply, dtype=float)
    # fixed start vector keeps the result bit-reproducible
    w = eigsh(op, k=1, which="SA", tol=1e-13, ncv=min(n - 1, 64), maxiter=100 * n,
              v0=np.ones(n), return_eigenvectors=False)
    return float(w[0])


def measure_c_kappa(kappa: float, grid: RadialGrid, k_scan: int = 3,
                    cache: FreeChannelCache | None = None) -> float:
    """Best c with c |D_0| <= |D_kappa| on the scanned channels."""
    kappa = _check_kappa(kappa)
    if kappa == 0.0:
        return 1.0
    cache = _free_cache(cache, grid)
    return min(_pencil_bottom(kappa, grid, ch, cache) for ch in scan_channels(k_scan))


def c_kappa_nu(c_kappa: float, kappa: float, nu: float, nu0: float = NU0_LOWER_BOUND) -> float:
    """Proven lower gap constant for D_0 - kappa/r + rho * 1/|x| with int rho = nu < nu0."""
    if not (0 < c_kappa <= 1 + 1e-12):
        raise InputError("c_kappa must lie in (0, 1]")
    if not (0 <= nu < nu0):
        raise DomainError(f"nu must lie in [0, nu0) = [0, {nu0})")
    growth = 1.0 + math.pi / (2.0 * c_kappa) * nu * nu0 / (nu0 - nu)
    return c_kappa**2 / (1.0 + 2.0 * (nu + kappa)) / growth**2


@dataclass(frozen=True)
class GapCertificate:
    kappa: float
    nu: float
    density_tag: str
    measured_gap_constant: float
    formula_constant: float
    c_kappa_measured: float
    channels_scanned: tuple[int, ...]
    at_cutoff_flag: bool
    measured_upper: float
    upper_bound: float

    @property
    def slack(self) -> float:
        return self.measured_gap_constant - self.formula_constant


def certify_gap(kappa: float, nu: float, rho, grid: RadialGrid, k_scan: int = 3,
                c_kappa: float | None = None, nu0: float = NU0_LOWER_BOUND,
                tol: float = CERTIFICATE_TOLERANCE,
                cache: FreeChannelCache | None = None) -> GapCertificate:
    """Measure the two-sided comparison of |D_{kappa, nu rho}| with |D_0|.

    The lower constant must dominate c_{kappa,nu} computed from the measured
    c_kappa and the proven lower bound on nu0; the upper one must not exceed
    1 + 2(kappa + nu).
    """
    kappa = _check_kappa(kappa)
    nu = float(nu)
    if not (0 <= nu < NU_SAFETY_LIMIT):
        raise DomainError(f"nu must lie in [0, {NU_SAFETY_LIMIT})")
    dens, tag = _unit_density(rho, grid)
    cache = _free_cache(cache, grid)
    if c_kappa is None:
        c_kappa = measure_c_kappa(kappa, grid, k_scan, cache)
    formula = c_kappa_nu(c_kappa, kappa, nu, nu0)
    V = nu * dens.potential
    lo, hi, worst = math.inf, -math.inf, None
    chans = scan_channels(k_scan)
    for ch in chans:
        ev = _abs_pencil(kappa, grid, ch, V, cache)
        if ev[0] < lo:
            lo, worst = float(ev[0]), ch
        hi = max(hi, float(ev[-1]))
    upper = 1.0 + 2.0 * (kappa + nu)
    cert = GapCertificate(kappa, nu, tag, lo, formula, float(c_kappa), tuple(c.k for c in chans),
                          worst.abs_k == int(k_scan), hi, upper)
    if lo < formula - tol:
        raise CertificationError(f"measured gap constant {lo:.6g} below proven {formula:.6g} "
                                 f"for {tag}, kappa={kappa}, nu={nu}")
    if hi > upper + tol:
        raise CertificationError(f"measured upper constant {hi:.6g} above 1+2(kappa+nu)={upper:.6g} "
                                 f"for {tag}, kappa={kappa}, nu={nu}")
    return cert


# Tix inequality

@dataclass(frozen=True)
class TixResult:
    kappa: float
    minimum: float
    bound: float
    channel: ChannelIndex
    per_channel: tuple[tuple[int, float], ...]


def tix_check(kappa: float, grid: RadialGrid, k_scan: int = 3, tol: float = 1e-4) -> TixResult:
    """Lowest eigenvalue of D_kappa compressed to the free positive subspace."""
    kappa = float(kappa)
    if not (0.0 <= kappa <= NU_SAFETY_LIMIT):
        raise DomainError(f"kappa must lie in [0, {NU_SAFETY_LIMIT}]")
    per = []
    for ch in scan_channels(k_scan):
        free = assemble_channel(ch, 0.0, grid)
        Q = solve_channel(free, window=(0.0, np.inf)).eigenvectors
        op = assemble_channel(ch, kappa, grid)
        H = Q.T @ op.matvec(Q)
        per.append((ch.k, float(sla.eigvalsh(0.5 * (H + H.T), subset_by_index=(0, 0))[0])))
    k, m = min(per, key=lambda kv: kv[1])
    res = TixResult(kappa, m, 1.0 - kappa, ChannelIndex(k), tuple(per))
    if m < 1.0 - kappa - tol:
        raise CertificationError(f"compressed minimum {m:.8f} violates the bound {1 - kappa:.8f}")
    return res


# projection differences

@dataclass(frozen=True)
class ProjectionDiffRow:
    scale: float
    grad_l2: float
    grad_l3: float
    v_l6: float
    lhs_s2: float
    lhs_s6: float
    rhs_s2: float
    rhs_s6: float

    @property
    def ratio_s2(self) -> float:
        return self.lhs_s2 / self.rhs_s2 if self.rhs_s2 > 0 else 0.0

    @property
    def ratio_s6(self) -> float:
        return self.lhs_s6 / self.rhs_s6 if self.rhs_s6 > 0 else 0.0


def projection_difference_check(kappa: float, V0: np.ndarray, grid: RadialGrid,
                                scales=(1.0, 0.5, 0.25, 0.125), k_scan: int = 3, eps: float = 0.1,
                                l6_limit: float = 0.1) -> list[ProjectionDiffRow]:
    """Weighted Schatten norms of 1(D_kappa + V <= 0) - 1(D_kappa <= 0).

    S2 uses the weights |D_kappa|^{1/2} on the left and |D_kappa|^{-1/2} on the
    right, S6 the weights |D_kappa|^{1/2} and |D_kappa|^{-eps}. Channel norms
    are degeneracy weighted and combined as an l^p sum; the right-hand sides
    are (1 + ||V'||_3) ||V'||_2 and ||V'||_2.
    """
    kappa = _check_kappa(kappa)
    if eps <= 0:
        raise InputError("eps must be positive")
    V0 = np.asarray(V0, dtype=float)
    if V0.shape != (grid.size,):
        raise InputError("potential does not match the grid")
    rows = []
    bare = {}
    for ch in scan_channels(k_scan):
        op = assemble_channel(ch, kappa, grid)
        spec = full_spectrum(op)
        bare[ch.k] = (op, spec, spectral_projector(spec, "negative"))
    for t in scales:
        V = float(t) * V0
        g2, g3, l6 = grad_potential_norms(V, grid)
        if l6 > l6_limit:
            raise InputError(f"||V||_6 = {l6:.3g} exceeds the smallness threshold {l6_limit}")
        s2 = s6 = 0.0
        for ch in scan_channels(k_scan):
            op, spec, P0 = bare[ch.k]
            pert = full_spectrum(assemble_channel(ch, kappa, grid, V))
            diff = spectral_projector(pert, "negative") - P0
            s2 += operator_function_norms(spec, spec, diff, (0.5, -0.5), 2) ** 2
            s6 += operator_function_norms(spec, spec, diff, (0.5, -eps), 6) ** 6
        rows.append(ProjectionDiffRow(float(t), g2, g3, l6, math.sqrt(s2), s6 ** (1 / 6),
                                      (1.0 + g3) * g2, g2))
    return rows


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise InputError("slope needs at least two positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
