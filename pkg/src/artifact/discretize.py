"""Staggered finite-difference radial Dirac operators and their spectral calculus.

Each channel k acts on (G, F) = (u/r, v/r) with the radial block

    [[1 + V,        -d/dr + k/r],
     [d/dr + k/r,   -1 + V     ]].

One component lives on the nodes, the other on the midpoints, and the two
are interleaved as (node_1, mid_{3/2}, node_2, ..., node_{M-1}, mid_{M-1/2}),
which makes the matrix symmetric tridiagonal in the variables
x = sqrt(h r'(t)) * u. For k < 0 the node component is the upper one (G); for
k > 0 the roles are swapped, so that channels k and -k are exact charge
conjugates of each other and the free spectrum is symmetric about zero with
no states in the gap.

The midpoint component vanishes at r_{1/2} and the node component at r_max.
Keeping either slot would admit a discrete copy of the non-normalizable
solution r^{-|k|} (at the origin) or r^{|k|} (at r_max) of the kinetic part,
which shows up as a spurious state pinned near -1 or +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.linalg as sla

from .core import ChannelIndex, DomainError, InputError, NumericalError, RadialGrid, _readonly

Window = Literal["negative", "positive", "all"] | tuple[float, float]

# near kappa = 1 the orbitals behave like r^{sqrt(1 - kappa^2) - 1}, which no mapped grid resolves
KAPPA_GRID_LIMIT = 0.99


class DegenerateWindowError(NumericalError):
    """An eigenvalue sits on the boundary of a requested spectral window."""


@dataclass(frozen=True, eq=False)
class ChannelOperator:
    channel: ChannelIndex
    kappa: float
    grid: RadialGrid
    diagonal: np.ndarray
    offdiagonal: np.ndarray
    potential: np.ndarray
    external: np.ndarray

    @property
    def size(self) -> int:
        return self.diagonal.size

    @property
    def node_slots(self) -> slice:
        return NODE_SLOTS

    @property
    def mid_slots(self) -> slice:
        return MID_SLOTS

    def dense(self) -> np.ndarray:
        h = np.diag(self.diagonal)
        idx = np.arange(self.size - 1)
        h[idx, idx + 1] = self.offdiagonal
        h[idx + 1, idx] = self.offdiagonal
        return h

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.diagonal[:, None] * x if x.ndim == 2 else self.diagonal * x
        e = self.offdiagonal[:, None] if x.ndim == 2 else self.offdiagonal
        y[:-1] += e * x[1:]
        y[1:] += e * x[:-1]
        return y

    def norm_bound(self) -> float:
        """Gershgorin bound on the operator norm."""
        a = np.abs(self.offdiagonal)
        row = np.abs(self.diagonal).copy()
        row[:-1] += a
        row[1:] += a
        return float(row.max())


# slots of the node and midpoint unknowns in the interleaved vector
NODE_SLOTS = slice(0, None, 2)
MID_SLOTS = slice(1, None, 2)


def channel_dimension(grid: RadialGrid) -> int:
    return 2 * grid.size - 2


def _full_layout(node_values: np.ndarray, mid_values: np.ndarray) -> np.ndarray:
    """(mid_1/2, node_1, ..., mid_{M-1/2}, node_M) before the boundary slots are dropped."""
    out = np.empty(2 * node_values.size)
    out[1::2] = node_values
    out[0::2] = mid_values
    return out


def staggered_potential(V_nodes: np.ndarray | None, grid: RadialGrid) -> np.ndarray:
    """Diagonal of a multiplication operator in the interleaved ordering."""
    if V_nodes is None:
        return np.zeros(channel_dimension(grid))
    V_nodes = np.asarray(V_nodes, dtype=float)
    if V_nodes.shape != (grid.size,):
        raise InputError(f"potential has shape {V_nodes.shape}, grid has {grid.size} nodes")
    return _full_layout(V_nodes, grid.to_midpoints(V_nodes))[1:-1]


def assemble_channel(k: ChannelIndex | int, kappa: float, grid: RadialGrid,
                     V_ext: np.ndarray | None = None) -> ChannelOperator:
    """Channel operator of D_0 - kappa/r + V_ext on the staggered grid."""
    k = k if isinstance(k, ChannelIndex) else ChannelIndex(k)
    kappa = float(kappa)
    if not (0.0 <= kappa < KAPPA_GRID_LIMIT):
        raise DomainError(f"kappa must lie in [0, {KAPPA_GRID_LIMIT}) for the radial discretization, got {kappa}")
    a = k.abs_k
    h = grid.h
    rn, rm = grid.nodes, grid.midpoints
    sn = 1.0 / np.sqrt(grid.jacobian)
    sm = 1.0 / np.sqrt(grid.jacobian_mid)
    c_plus = sm * sn * (rm / rn) ** a / h
    c_minus = -sm[1:] * sn[:-1] * (rm[1:] / rn[:-1]) ** a / h
    off = np.empty(2 * grid.size - 1)
    off[0::2] = c_plus
    off[1::2] = c_minus
    off = off[1:-1]
    ext = staggered_potential(V_ext, grid)
    pot = ext - _full_layout(kappa / rn, kappa / rm)[1:-1]
    upper_on_nodes = k.k < 0
    mass = 1.0 if upper_on_nodes else -1.0
    diag = pot + _full_layout(np.full(grid.size, mass), np.full(grid.size, -mass))[1:-1]
    if not upper_on_nodes:
        off = -off
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(off))):
        raise NumericalError("non-finite entries in assembled channel operator")
    return ChannelOperator(k, kappa, grid, _readonly(diag), _readonly(off), _readonly(pot), _readonly(ext))


@dataclass(frozen=True, eq=False)
class ChannelSpectrum:
    channel: ChannelIndex
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    complete: bool

    @property
    def degeneracy(self) -> int:
        return self.channel.degeneracy

    def count(self) -> int:
        return self.eigenvalues.size

    def function(self, f) -> np.ndarray:
        """Dense matrix U f(Lambda) U^T (requires the full spectrum)."""
        if not self.complete:
            raise InputError("matrix functions need the full spectrum")
        u = self.eigenvectors
        return (u * f(self.eigenvalues)) @ u.T

    def abs_power(self, s: float) -> np.ndarray:
        return self.function(lambda lam: np.abs(lam) ** s)


# bisection to full precision rather than the default eps*||H|| absolute accuracy
_BISECTION_TOL = 4.0 * np.finfo(float).tiny


def solve_channel(op: ChannelOperator, window: tuple[float, float] | None = (0.0, 1.0),
                  n_lowest: int | None = None, full: bool = False) -> ChannelSpectrum:
    """Eigenpairs in a half-open window (lo, hi], the n lowest, or all of them."""
    try:
        if full:
            try:
                w, v = sla.eigh_tridiagonal(op.diagonal, op.offdiagonal)
            except np.linalg.LinAlgError:
                # MRRR occasionally fails on strongly graded matrices; dense divide and conquer does not
                w, v = sla.eigh(op.dense(), driver="evd")
        elif n_lowest is not None:
            lo, hi = window if window is not None else (-np.inf, np.inf)
            w, v = sla.eigh_tridiagonal(op.diagonal, op.offdiagonal, select="v",
                                        select_range=(lo, hi), tol=_BISECTION_TOL)
            w, v = w[:n_lowest], v[:, :n_lowest]
        else:
            lo, hi = window
            w, v = sla.eigh_tridiagonal(op.diagonal, op.offdiagonal, select="v",
                                        select_range=(lo, hi), tol=_BISECTION_TOL)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"tridiagonal eigensolver failed for channel {op.channel.k}: {exc}") from exc
    order = np.argsort(w, kind="stable")
    return ChannelSpectrum(op.channel, _readonly(w[order]), _readonly(v[:, order]), complete=full)


def full_spectrum(op: ChannelOperator) -> ChannelSpectrum:
    return solve_channel(op, full=True)


def spectrum_defects(op: ChannelOperator, spec: ChannelSpectrum) -> tuple[float, float]:
    """(orthonormality defect, max residual relative to the norm bound)."""
    v = spec.eigenvectors
    if v.shape[1] == 0:
        return 0.0, 0.0
    gram = v.T @ v
    ortho = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    res = op.matvec(v) - v * spec.eigenvalues
    return ortho, float(np.max(np.linalg.norm(res, axis=0)) / op.norm_bound())


def split_components(channel, vectors: np.ndarray, grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Radial functions (r*G, r*F) from interleaved eigenvectors.

    Each component is sampled on its own sublattice: the upper one on the
    nodes when k < 0 and on the midpoints when k > 0.
    """
    k = channel if isinstance(channel, ChannelIndex) else channel.channel
    v = np.asarray(vectors, dtype=float)
    flat = v.ndim == 1
    if flat:
        v = v[:, None]
    node = np.zeros((grid.size, v.shape[1]))
    mid = np.zeros((grid.size, v.shape[1]))
    node[:-1] = v[NODE_SLOTS] / np.sqrt(grid.h * grid.jacobian[:-1])[:, None]
    mid[1:] = v[MID_SLOTS] / np.sqrt(grid.h * grid.jacobian_mid[1:])[:, None]
    if flat:
        node, mid = node[:, 0], mid[:, 0]
    return (node, mid) if k.k < 0 else (mid, node)


def node_probabilities(vectors: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Lump squared amplitudes onto nodes.

    Node j keeps its own amplitude and midpoint j+1/2 is shared equally by
    nodes j and j+1. Summing this against node values V_j reproduces
    <x, V x> for the staggered potential.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    sq = vectors**2
    if weights is not None:
        sq = sq * np.asarray(weights, dtype=float)[None, :]
    node = sq[NODE_SLOTS].sum(axis=1)
    half = 0.5 * sq[MID_SLOTS].sum(axis=1)
    out = np.zeros(node.size + 1)
    out[:-1] += node + half
    out[1:] += half
    return out


def spectral_projector(op_or_spec, window: Window) -> np.ndarray:
    """Orthogonal projector onto eigenvectors with eigenvalues in the window."""
    spec = op_or_spec if isinstance(op_or_spec, ChannelSpectrum) else full_spectrum(op_or_spec)
    if not spec.complete:
        raise InputError("spectral projector needs the full spectrum")
    lam = spec.eigenvalues
    if window == "all":
        mask = np.ones(lam.size, dtype=bool)
        edges: Sequence[float] = ()
    elif window == "negative":
        mask, edges = lam < 0.0, (0.0,)
    elif window == "positive":
        mask, edges = lam > 0.0, (0.0,)
    else:
        lo, hi = window
        mask, edges = (lam >= lo) & (lam <= hi), (lo, hi)
    for e in edges:
        if np.any(np.abs(lam - e) < 1e-10):
            raise DegenerateWindowError(f"eigenvalue within 1e-10 of window edge {e}")
    u = spec.eigenvectors[:, mask]
    return u @ u.T


def _as_full(x) -> ChannelSpectrum:
    if isinstance(x, ChannelSpectrum):
        if not x.complete:
            raise InputError("weighted norms need full spectra")
        return x
    return full_spectrum(x)


def operator_function_norms(opA, opB, F: np.ndarray, exponents: tuple[float, float], p: float) -> float:
    """Degeneracy-weighted Schatten p-norm of |A|^a F |B|^b."""
    if p < 1:
        raise InputError("Schatten index must be >= 1")
    A, B = _as_full(opA), _as_full(opB)
    if A.channel != B.channel:
        raise InputError("operators belong to different channels")
    F = np.asarray(F, dtype=float)
    if not np.any(F):
        return 0.0
    a, b = exponents
    left = A.abs_power(a) if a != 0 else None
    right = B.abs_power(b) if b != 0 else None
    prod = F
    if left is not None:
        prod = left @ prod
    if right is not None:
        prod = prod @ right
    sv = sla.svdvals(prod)
    return float((A.degeneracy * np.sum(sv**p)) ** (1.0 / p))


def pencil_eigenvalues(specA: ChannelSpectrum, specB: ChannelSpectrum) -> np.ndarray:
    """Spectrum of |B|^{-1/2} |A| |B|^{-1/2}."""
    A, B = _as_full(specA), _as_full(specB)
    root = B.abs_power(-0.5)
    m = root @ A.abs_power(1.0) @ root
    return sla.eigvalsh(0.5 * (m + m.T))
