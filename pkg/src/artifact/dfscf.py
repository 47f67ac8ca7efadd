"""Reduced Dirac-Fock mean-field solvers and the positive-subspace retraction.

A state is represented per channel k by vectors Y (columns in the staggered
basis) and occupation fractions f in [0, 1]; the channel block of the
one-body density matrix is Y diag(f) Y^T, repeated 2|k| times. Energies are
in mc^2 units and the mean-field potential always includes the factor alpha.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .core import (ChannelIndex, CouplingParams, InputError, NonConvergenceError, NumericalError,
                   RadialDensity, RadialGrid, _readonly, channel_list, coulomb_energy,
                   coulomb_potential)
from .discretize import (ChannelOperator, ChannelSpectrum, assemble_channel, channel_dimension, full_spectrum,
                         node_probabilities, solve_channel, staggered_potential)

TIE_TOLERANCE = 1e-9


class InternalConsistencyError(NumericalError):
    """Two formulas for the same quantity disagree."""


@dataclass(frozen=True, eq=False)
class Orbital:
    channel: ChannelIndex
    energy: float
    vector: np.ndarray
    occupation: float
    radial_index: int

    @property
    def principal_n(self) -> int:
        n_r = self.radial_index + (1 if self.channel.k > 0 else 0)
        return n_r + self.channel.abs_k

    @property
    def fraction(self) -> float:
        return self.occupation / self.channel.degeneracy


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Spherically symmetric density matrix, one low-rank block per channel."""

    grid: RadialGrid
    blocks: tuple[tuple[ChannelIndex, np.ndarray, np.ndarray], ...]

    @classmethod
    def from_orbitals(cls, grid: RadialGrid, orbitals: Sequence[Orbital]) -> "DensityMatrix":
        by_k: dict[int, list[Orbital]] = {}
        for o in orbitals:
            if o.occupation > 0:
                by_k.setdefault(o.channel.k, []).append(o)
        blocks = []
        for k in sorted(by_k, key=lambda k: (abs(k), k)):
            orbs = by_k[k]
            Y = np.stack([o.vector for o in orbs], axis=1)
            f = np.array([o.fraction for o in orbs])
            blocks.append((ChannelIndex(k), Y, f))
        return cls(grid, tuple(blocks))

    @property
    def channels(self) -> tuple[ChannelIndex, ...]:
        return tuple(b[0] for b in self.blocks)

    def block(self, k: int):
        for ch, Y, f in self.blocks:
            if ch.k == k:
                return Y, f
        return None

    def trace(self) -> float:
        return float(sum(ch.degeneracy * np.sum(f * np.sum(Y * Y, axis=0)) for ch, Y, f in self.blocks))

    def node_weights(self) -> np.ndarray:
        out = np.zeros(self.grid.size)
        for ch, Y, f in self.blocks:
            out += ch.degeneracy * node_probabilities(Y, f)
        return out

    def density(self) -> RadialDensity:
        return density_from_node_weights(self.node_weights(), self.grid)

    def map_blocks(self, func) -> "DensityMatrix":
        return DensityMatrix(self.grid, tuple((ch, func(ch, Y), f) for ch, Y, f in self.blocks))


def density_from_node_weights(n: np.ndarray, grid: RadialGrid) -> RadialDensity:
    """Density whose quadrature reproduces the lumped node probabilities exactly."""
    return RadialDensity(np.clip(n, 0.0, None) / (4 * np.pi * grid.nodes**2 * grid.weights), grid)


class BareChannels:
    """Full spectra of the bare Dirac-Coulomb channels, computed on demand."""

    def __init__(self, kappa: float, grid: RadialGrid):
        self.kappa = float(kappa)
        self.grid = grid
        self._spectra: dict[int, ChannelSpectrum] = {}
        self._roots: dict[int, np.ndarray] = {}

    def spectrum(self, k: ChannelIndex | int) -> ChannelSpectrum:
        k = k.k if isinstance(k, ChannelIndex) else int(k)
        if k not in self._spectra:
            self._spectra[k] = full_spectrum(assemble_channel(k, self.kappa, self.grid))
        return self._spectra[k]

    def abs_sqrt_apply(self, k: int, Y: np.ndarray) -> np.ndarray:
        """|H_k|^{1/2} Y."""
        s = self.spectrum(k)
        U = s.eigenvectors
        return U @ (np.sqrt(np.abs(s.eigenvalues))[:, None] * (U.T @ Y))


def x_norm_blocks(blocks: Iterable[tuple[ChannelIndex, np.ndarray, np.ndarray]], bare: BareChannels) -> float:
    """sum_k 2|k| || |H_k|^{1/2} Y diag(w) Y^T |H_k|^{1/2} ||_1 for signed weights w."""
    total = 0.0
    for ch, Y, w in blocks:
        if Y.shape[1] == 0 or not np.any(w):
            continue
        A = bare.abs_sqrt_apply(ch.k, Y)
        if np.all(w >= 0):
            total += ch.degeneracy * float(np.sum(w * np.sum(A * A, axis=0)))
            continue
        _, R = np.linalg.qr(A, mode="reduced")
        core = (R * w) @ R.T
        total += ch.degeneracy * float(np.sum(np.abs(sla.eigvalsh(0.5 * (core + core.T)))))
    return total


def x_norm(gamma: DensityMatrix, kappa: float, bare: BareChannels | None = None) -> float:
    bare = bare or BareChannels(kappa, gamma.grid)
    return x_norm_blocks(gamma.blocks, bare)


def x_distance(g1: DensityMatrix, g2: DensityMatrix, bare: BareChannels) -> float:
    ks = sorted({ch.k for ch in g1.channels} | {ch.k for ch in g2.channels}, key=lambda k: (abs(k), k))
    blocks = []
    M2 = channel_dimension(g1.grid)
    for k in ks:
        b1 = g1.block(k) or (np.zeros((M2, 0)), np.zeros(0))
        b2 = g2.block(k) or (np.zeros((M2, 0)), np.zeros(0))
        Y = np.concatenate([b1[0], b2[0]], axis=1)
        w = np.concatenate([b1[1], -b2[1]])
        blocks.append((ChannelIndex(k), Y, w))
    return x_norm_blocks(blocks, bare)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    energy: float
    potential_change: float
    energy_change: float
    fermi_level: float


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    params: CouplingParams
    grid: RadialGrid
    kmax: int
    orbitals: tuple[Orbital, ...]
    density: RadialDensity
    mean_field_potential: np.ndarray
    energy: float
    fermi_level: float
    converged: bool
    projected: bool
    history: tuple[IterationRecord, ...] = ()
    warnings: tuple[str, ...] = ()
    lowest_levels: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def total_occupation(self) -> float:
        return float(sum(o.occupation for o in self.orbitals))

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix.from_orbitals(self.grid, self.orbitals)


def aufbau(levels: Sequence[tuple[float, ChannelIndex, int]], n_electrons: float,
           tie: float = TIE_TOLERANCE) -> tuple[list[float], float, bool]:
    """Fill levels (energy, channel, radial index) in increasing order.

    Levels within ``tie`` of each other form one group and are filled
    uniformly. Returns occupations in the input order, the Fermi level
    (midpoint between highest occupied and lowest empty group) and whether
    all N electrons found a level.
    """
    order = sorted(range(len(levels)), key=lambda i: (levels[i][0], abs(levels[i][1].k), levels[i][1].k, levels[i][2]))
    occ = [0.0] * len(levels)
    remaining = float(n_electrons)
    pos = 0
    last_occ_energy, first_empty = None, None
    while pos < len(order):
        group = [order[pos]]
        e0 = levels[order[pos]][0]
        pos += 1
        while pos < len(order) and levels[order[pos]][0] - e0 <= tie:
            group.append(order[pos])
            pos += 1
        if remaining <= 0:
            first_empty = e0
            break
        cap = sum(levels[i][1].degeneracy for i in group)
        frac = min(1.0, remaining / cap)
        for i in group:
            occ[i] = frac * levels[i][1].degeneracy
        remaining -= frac * cap
        last_occ_energy = max(levels[i][0] for i in group)
        if remaining <= 1e-12 * max(1.0, n_electrons):
            remaining = 0.0
            if frac < 1.0:
                first_empty = last_occ_energy
                break
    if last_occ_energy is None:
        fermi = 0.0
    elif first_empty is None:
        fermi = last_occ_energy
    else:
        fermi = 0.5 * (last_occ_energy + first_empty)
    return occ, fermi, remaining <= 0


def _energy_terms(orbitals: Sequence[Orbital], n_nodes: np.ndarray, V_in: np.ndarray,
                  V_out: np.ndarray) -> tuple[float, float]:
    """(eigenvalue sum, direct energy) for orbitals of the operator with potential V_in."""
    band = float(sum(o.occupation * (o.energy - 1.0) for o in orbitals))
    direct = band - float(n_nodes @ V_in) + 0.5 * float(n_nodes @ V_out)
    return band, direct


def _default_kmax(n_electrons: int) -> int:
    n_max, filled = 0, 0
    while filled < n_electrons:
        n_max += 1
        filled += 2 * n_max * n_max
    return max(8, n_max + 2)


class _Mixer:
    def __init__(self, beta: float, scheme: str, depth: int):
        if not (0.0 < beta <= 1.0):
            raise InputError("mixing must lie in (0, 1]")
        if scheme not in ("linear", "anderson"):
            raise InputError(f"unknown mixing scheme {scheme!r}")
        self.beta, self.scheme, self.depth = beta, scheme, depth
        self.xs: list[np.ndarray] = []
        self.rs: list[np.ndarray] = []

    def __call__(self, x: np.ndarray, fx: np.ndarray) -> np.ndarray:
        r = fx - x
        if self.scheme == "linear":
            return x + self.beta * r
        self.xs.append(x.copy())
        self.rs.append(r.copy())
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.rs.pop(0)
        if len(self.xs) == 1:
            return x + self.beta * r
        dX = np.stack([self.xs[i + 1] - self.xs[i] for i in range(len(self.xs) - 1)], axis=1)
        dR = np.stack([self.rs[i + 1] - self.rs[i] for i in range(len(self.rs) - 1)], axis=1)
        coef, *_ = np.linalg.lstsq(dR, r, rcond=1e-12)
        return x + self.beta * r - (dX + self.beta * dR) @ coef


def _channel_levels_unprojected(params, grid, kmax, V_in, need):
    out = {}
    for ch in channel_list(kmax):
        op = assemble_channel(ch, params.kappa, grid, V_in)
        spec = solve_channel(op, window=(0.0, 1.0))
        n = min(spec.count(), need(ch))
        out[ch.k] = (ch, spec.eigenvalues[:n], spec.eigenvectors[:, :n], spec.eigenvalues[:1])
    return out


def _build_state(params, grid, kmax, levels, V_in, projected, history, warnings, converged):
    flat = []
    for k, (ch, w, v, _) in levels.items():
        for i in range(w.size):
            flat.append((float(w[i]), ch, i, v[:, i]))
    occ, fermi, complete = aufbau([(e, ch, i) for e, ch, i, _ in flat], params.n_electrons)
    orbitals = tuple(Orbital(ch, e, _readonly(vec), o, i)
                     for (e, ch, i, vec), o in zip(flat, occ) if o > 0)
    orbitals = tuple(sorted(orbitals, key=lambda o: (o.energy, abs(o.channel.k), o.channel.k)))
    n_nodes = DensityMatrix.from_orbitals(grid, orbitals).node_weights()
    density = density_from_node_weights(n_nodes, grid)
    V_out = params.alpha * coulomb_potential(density, grid)
    band, energy = _energy_terms(orbitals, n_nodes, V_in, V_out)
    lowest = {k: float(lv[3][0]) for k, lv in levels.items() if lv[3].size}
    warn = list(warnings)
    if not complete:
        warn.append("fewer bound positive levels than electrons; occupation saturated")
    state = MeanFieldState(params, grid, kmax, orbitals, density, _readonly(V_in), energy, fermi,
                           converged, projected, tuple(history), tuple(warn), lowest)
    return state, V_out


def _need_per_channel(n_electrons: int):
    def need(ch: ChannelIndex) -> int:
        return int(math.ceil(n_electrons / ch.degeneracy)) + 2
    return need


def _scf_loop(params, grid, kmax, solve_levels, V0, mixing, tol, max_iter, scheme, depth,
              projected, extra_warnings=()):
    mixer = _Mixer(mixing, scheme, depth)
    V_in = np.array(V0, dtype=float)
    history: list[IterationRecord] = []
    warnings = list(extra_warnings)
    e_prev = None
    state = None
    for it in range(1, max_iter + 1):
        levels = solve_levels(V_in)
        state, V_out = _build_state(params, grid, kmax, levels, V_in, projected, history, warnings, False)
        dv = float(np.max(np.abs(V_out - V_in)))
        de = float("inf") if e_prev is None else abs(state.energy - e_prev)
        history.append(IterationRecord(it, state.energy, dv, de, state.fermi_level))
        occupied = [o.energy for o in state.orbitals]
        if occupied and min(occupied) < 10 * tol:
            msg = f"iteration {it}: occupied level {min(occupied):.3e} close to 0 (gap collapse)"
            if msg not in warnings:
                warnings.append(msg)
        if dv < tol and de < tol * max(1.0, abs(state.energy)):
            return replace(state, converged=True, history=tuple(history), warnings=tuple(warnings))
        e_prev = state.energy
        V_in = mixer(V_in, V_out)
    raise NonConvergenceError(
        f"mean-field iteration not converged after {max_iter} steps "
        f"(last potential change {history[-1].potential_change:.3e})",
        partial=replace(state, history=tuple(history), warnings=tuple(warnings)))


def scf_solve(params: CouplingParams, grid: RadialGrid, mixing: float = 0.3, tol: float = 1e-10,
              max_iter: int = 300, kmax: int | None = None, scheme: str = "linear",
              anderson_depth: int = 6, initial_potential: np.ndarray | None = None) -> MeanFieldState:
    """Self-consistent Aufbau over the positive spectrum of the mean-field operator.

    The occupied orbitals are the lowest eigenvectors with positive eigenvalue
    of D_kappa + alpha V_rho, so the state lies in the positive spectral
    subspace of its own mean-field operator by construction. The iteration
    starts from the bare Dirac-Coulomb filling and stops when both the sup-norm
    potential change and the energy change drop below tol.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    kmax = kmax or _default_kmax(params.n_electrons)
    need = _need_per_channel(params.n_electrons)

    def solve_levels(V):
        return _channel_levels_unprojected(params, grid, kmax, V, need)

    V0 = np.zeros(grid.size) if initial_potential is None else initial_potential
    return _scf_loop(params, grid, kmax, solve_levels, V0, mixing, tol, max_iter, scheme,
                     anderson_depth, projected=False)


PROJECTED_ENERGY_CUTOFF = 1e3


class ProjectedChannel:
    """Channel compressed to the positive spectral subspace of the bare operator.

    The basis keeps the bare positive states below ``energy_cutoff``; states
    above it are localized at the nucleus and couple to the smooth mean field
    only negligibly. The compressed matrix is formed with the tridiagonal
    matvec, so its entries do not inherit the absolute eigenvalue error of
    the largest bare states.
    """

    def __init__(self, op: ChannelOperator, energy_cutoff: float = PROJECTED_ENERGY_CUTOFF):
        if np.any(op.external != 0):
            raise InputError("the projector must come from the bare channel operator")
        spec = solve_channel(op, window=(0.0, energy_cutoff))
        self.channel = op.channel
        self.cutoff = float(energy_cutoff)
        self.basis = np.ascontiguousarray(spec.eigenvectors)
        bare = self.basis.T @ op.matvec(self.basis)
        self.bare = 0.5 * (bare + bare.T)

    @property
    def size(self) -> int:
        return self.basis.shape[1]

    def levels(self, V_stag: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
        Q = self.basis
        if np.all(V_stag >= 0):
            B = Q * np.sqrt(V_stag)[:, None]
            H = sla.blas.dsyrk(1.0, B, trans=1, lower=0)
            H = np.triu(H) + np.triu(H, 1).T
        else:
            H = Q.T @ (V_stag[:, None] * Q)
            H = 0.5 * (H + H.T)
        H += self.bare
        n = min(n, H.shape[0])
        w, y = sla.eigh(H, subset_by_index=(0, n - 1), driver="evr")
        keep = (w > 0) & (w < 1)
        return w[keep], Q @ y[:, keep]


def scf_solve_projected(params: CouplingParams, grid: RadialGrid, mixing: float = 0.3,
                        tol: float = 1e-10, max_iter: int = 300, kmax: int | None = None,
                        scheme: str = "linear", anderson_depth: int = 6,
                        warm_start: MeanFieldState | None = None,
                        channel_margin: float = 0.5,
                        energy_cutoff: float = PROJECTED_ENERGY_CUTOFF) -> MeanFieldState:
    """Mean-field solve with the projector frozen at the bare Dirac-Coulomb one.

    Orbitals are eigenvectors of P+ (D_kappa + alpha V_rho) P+ on the range of
    the bare positive projector P+. The potential starts from an unprojected
    solution, and only channels whose unprojected lowest level lies below
    fermi + margin*(1 - fermi) are diagonalized in compressed form.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    kmax = kmax or _default_kmax(params.n_electrons)
    if warm_start is None:
        warm_start = scf_solve(params, grid, mixing, tol, max_iter, kmax, scheme, anderson_depth)
    elif not warm_start.grid.same_as(grid):
        raise InputError("warm start lives on a different grid")
    cutoff = warm_start.fermi_level + channel_margin * (1.0 - warm_start.fermi_level)
    cands = [ch for ch in channel_list(kmax)
             if ch.k in warm_start.lowest_levels and warm_start.lowest_levels[ch.k] <= cutoff]
    top = max(abs(ch.k) for ch in cands)
    warnings = []
    if top == kmax:
        warnings.append("compressed channel set reaches the channel cutoff")
    compressed = {ch.k: ProjectedChannel(assemble_channel(ch, params.kappa, grid), energy_cutoff)
                  for ch in cands}
    need = _need_per_channel(params.n_electrons)

    def solve_levels(V):
        V_stag = staggered_potential(V, grid)
        out = {}
        for ch in cands:
            w, v = compressed[ch.k].levels(V_stag, need(ch))
            out[ch.k] = (ch, w, v, w[:1])
        return out

    return _scf_loop(params, grid, kmax, solve_levels, warm_start.mean_field_potential, mixing, tol,
                     max_iter, scheme, anderson_depth, projected=True, extra_warnings=warnings)


def df_energy(state: MeanFieldState, rtol: float = 1e-8) -> float:
    """Dirac-Fock energy, double-counting form checked against the direct form.

    E = sum_i w_i (mu_i - 1) - (alpha/2) D(rho, rho) must equal
    Tr (D_kappa - 1) gamma + (alpha/2) D(rho, rho), with the kinetic-plus-
    nuclear trace evaluated from the orbitals with the bare channel operator.
    """
    grid, alpha = state.grid, state.params.alpha
    if not state.orbitals:
        return 0.0
    D = coulomb_energy(state.density, state.density, grid)
    band = sum(o.occupation * (o.energy - 1.0) for o in state.orbitals)
    e_dc = band - 0.5 * alpha * D
    trace = 0.0
    ops = {}
    for o in state.orbitals:
        if o.channel.k not in ops:
            ops[o.channel.k] = assemble_channel(o.channel, state.params.kappa, grid)
        x = o.vector
        trace += o.occupation * (float(x @ ops[o.channel.k].matvec(x)) - float(x @ x))
    e_direct = trace + 0.5 * alpha * D
    if abs(e_dc - e_direct) > rtol * max(abs(e_direct), 1e-300) and abs(e_dc - e_direct) > 1e-14:
        raise InternalConsistencyError(
            f"double-counting energy {e_dc!r} differs from direct energy {e_direct!r}")
    return float(e_direct)


def frozen_orbital_energy(orbitals: Sequence[Orbital], params: CouplingParams, grid: RadialGrid) -> float:
    """Tr (D_kappa - 1) gamma + (alpha/2) D(rho, rho) for fixed orbitals."""
    gamma = DensityMatrix.from_orbitals(grid, orbitals)
    rho = gamma.density()
    trace = 0.0
    for ch, Y, f in gamma.blocks:
        op = assemble_channel(ch, params.kappa, grid)
        trace += ch.degeneracy * float(np.sum(f * (np.sum(Y * op.matvec(Y), axis=0) - np.sum(Y * Y, axis=0))))
    return trace + 0.5 * params.alpha * coulomb_energy(rho, rho, grid)


def kinetic_witness(gamma: DensityMatrix) -> float:
    """Tr sqrt(-Delta) gamma from the free channel operators, sqrt(-Delta) = sqrt(D_0^2 - 1)."""
    total = 0.0
    for ch, Y, f in gamma.blocks:
        s = full_spectrum(assemble_channel(ch, 0.0, gamma.grid))
        p = np.sqrt(np.clip(s.eigenvalues**2 - 1.0, 0.0, None))
        c = s.eigenvectors.T @ Y
        total += ch.degeneracy * float(np.sum(f * np.sum(p[:, None] * c * c, axis=0)))
    return total


@dataclass(frozen=True, eq=False)
class RetractionTrace:
    iterates: tuple[float, ...]
    contraction_estimates: tuple[float, ...]
    converged: bool
    limit_state: DensityMatrix
    constraint_residual: float
    initial_x_norm: float
    alpha: float
    noise_floor: float = 0.0

    @property
    def max_ratio(self) -> float:
        return max(self.contraction_estimates) if self.contraction_estimates else 0.0

    def geometric_bound_holds(self, slack: float | None = None) -> bool:
        """||theta - T^p||_X <= k^p/(1-k) ||T(g0) - g0||_X with k the largest ratio.

        Distances below the noise floor carry no ratio information, so each
        step may exceed the bound by that much (default slack).
        """
        d = self.iterates
        if len(d) < 2:
            return True
        if slack is None:
            slack = self.noise_floor * len(d) + 1e-15
        k = self.max_ratio
        if k >= 1:
            return False
        ok = True
        for p in range(len(d)):
            remaining = sum(d[p:])  # upper bound on distance from T^p to the limit
            ok &= remaining <= k**p / (1 - k) * d[0] * (1 + 1e-9) + slack
        return bool(ok)


RETRACTION_NOISE_FLOOR = 1e-9


def _positive_projection(params, grid, gamma: DensityMatrix) -> tuple[DensityMatrix, float]:
    """T(gamma) = P+ gamma P+ for P+ of the mean-field operator of gamma, and ||P- gamma||."""
    V = params.alpha * coulomb_potential(gamma.density(), grid)
    blocks, leak = [], 0.0
    for ch, Y, f in gamma.blocks:
        s = full_spectrum(assemble_channel(ch, params.kappa, grid, V))
        U = s.eigenvectors[:, s.eigenvalues > 0]
        Yp = U @ (U.T @ Y)
        leak = max(leak, float(np.max(np.linalg.norm(Y - Yp, axis=0) * np.sqrt(f))))
        blocks.append((ch, Yp, f))
    return DensityMatrix(grid, tuple(blocks)), leak


def retraction_theta(gamma0: DensityMatrix, params: CouplingParams, grid: RadialGrid,
                     tol: float = 1e-12, max_iter: int = 50,
                     noise_floor: float = RETRACTION_NOISE_FLOOR) -> RetractionTrace:
    """Iterate gamma -> P+_gamma gamma P+_gamma and record X-norm distances.

    A ratio k_p = d_p / d_{p-1} is recorded only when d_p exceeds noise_floor;
    below it the distances are dominated by rounding in the projectors.
    Three consecutive recorded ratios >= 1 abort with a divergence error.
    """
    if not gamma0.grid.same_as(grid):
        raise InputError("density matrix lives on a different grid")
    for ch, Y, f in gamma0.blocks:
        if np.any(f < -1e-14) or np.any(f > 1 + 1e-14):
            raise InputError("occupation fractions must lie in [0, 1]")
    if params.alpha * gamma0.trace() > params.nu * (1 + 1e-12) + 1e-12:
        raise InputError("alpha * Tr(gamma) exceeds nu")
    bare = BareChannels(params.kappa, grid)
    x0 = x_norm(gamma0, params.kappa, bare)
    dists: list[float] = []
    ratios: list[float] = []
    bad = 0
    gamma = gamma0
    for _ in range(max_iter):
        nxt, _ = _positive_projection(params, grid, gamma)
        d = x_distance(nxt, gamma, bare)
        dists.append(d)
        if len(dists) > 1 and d > noise_floor:
            k = d / dists[-2]
            ratios.append(k)
            bad = bad + 1 if k >= 1 else 0
            if bad >= 3:
                raise NonConvergenceError("retraction ratios >= 1 for three consecutive steps",
                                          partial=RetractionTrace(tuple(dists), tuple(ratios), False, nxt,
                                                                  float("nan"), x0, params.alpha,
                                                                  noise_floor))
        gamma = nxt
        if d < tol:
            _, leak = _positive_projection(params, grid, gamma)
            return RetractionTrace(tuple(dists), tuple(ratios), True, gamma, leak, x0, params.alpha, noise_floor)
    raise NonConvergenceError(f"retraction not converged in {max_iter} steps",
                              partial=RetractionTrace(tuple(dists), tuple(ratios), False, gamma,
                                                      float("nan"), x0, params.alpha, noise_floor))


def save_checkpoint(state: MeanFieldState, path) -> None:
    data = {
        "params": {"kappa": state.params.kappa, "alpha": state.params.alpha,
                   "n_electrons": state.params.n_electrons},
        "grid": state.grid.mapping,
        "kmax": state.kmax,
        "projected": state.projected,
        "converged": state.converged,
        "energy": state.energy,
        "fermi_level": state.fermi_level,
        "mean_field_potential": state.mean_field_potential.tolist(),
        "orbitals": [{"k": o.channel.k, "radial_index": o.radial_index, "energy": o.energy,
                      "occupation": o.occupation, "vector": o.vector.tolist()} for o in state.orbitals],
        "history": [vars(h) for h in state.history],
        "warnings": list(state.warnings),
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_checkpoint(path) -> MeanFieldState:
    with open(path) as fh:
        data = json.load(fh)
    p = data["params"]
    params = CouplingParams(p["kappa"], p["alpha"], p["n_electrons"])
    g = data["grid"]
    grid = RadialGrid.exponential(g["r0"], g["r_max"], g["size"])
    orbitals = tuple(Orbital(ChannelIndex(o["k"]), o["energy"], _readonly(o["vector"]), o["occupation"],
                             o["radial_index"]) for o in data["orbitals"])
    gamma = DensityMatrix.from_orbitals(grid, orbitals)
    return MeanFieldState(params, grid, data["kmax"], orbitals, gamma.density(),
                          _readonly(data["mean_field_potential"]), data["energy"], data["fermi_level"],
                          data["converged"], data["projected"],
                          tuple(IterationRecord(**h) for h in data["history"]), tuple(data["warnings"]))
