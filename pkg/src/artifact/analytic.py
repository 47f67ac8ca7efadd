"""Closed-form hydrogen spectra and the relativistic Scott series."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import zeta

from .core import ChannelIndex, DomainError, InputError, NonConvergenceError


@dataclass(frozen=True)
class HydrogenLevel:
    model: Literal["dirac", "schroedinger"]
    principal_n: int
    channel_k: int | None
    energy: float
    multiplicity: int


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not (0.0 <= kappa < 1.0):
        raise DomainError(f"kappa must lie in [0, 1), got {kappa}")
    return kappa


def sommerfeld_eigenvalue(kappa: float, n_r: int, k: ChannelIndex | int) -> float:
    """Dirac-Coulomb bound state (1 + kappa^2/(n_r + sqrt(k^2 - kappa^2))^2)^(-1/2)."""
    kappa = _check_kappa(kappa)
    k = k if isinstance(k, ChannelIndex) else ChannelIndex(k)
    if int(n_r) != n_r or n_r < 0:
        raise InputError(f"radial quantum number must be a nonnegative integer, got {n_r}")
    if n_r == 0 and k.k > 0:
        raise InputError(f"n_r = 0 is not admissible for k = {k.k} > 0")
    gamma = np.sqrt(k.k * k.k - kappa * kappa)
    return float(1.0 / np.sqrt(1.0 + (kappa / (n_r + gamma)) ** 2))


def sommerfeld_binding(kappa: float, n_r: int, k: ChannelIndex | int) -> float:
    """E - 1 evaluated without cancellation."""
    kappa = _check_kappa(kappa)
    k = k if isinstance(k, ChannelIndex) else ChannelIndex(k)
    if n_r == 0 and k.k > 0:
        raise InputError(f"n_r = 0 is not admissible for k = {k.k} > 0")
    a = k.abs_k
    g = np.sqrt(a * a - kappa * kappa)
    shifted = n_r + a - kappa * kappa / (a + g)
    return float(np.expm1(-0.5 * np.log1p((kappa / shifted) ** 2)))


def schroedinger_level(kappa: float, n: int) -> float:
    if kappa < 0:
        raise DomainError("kappa must be nonnegative")
    if int(n) != n or n < 1:
        raise InputError(f"principal number must be a positive integer, got {n}")
    return -kappa * kappa / (2.0 * n * n)


def shell_channels(n: int) -> list[int]:
    """Channels present in principal shell n: k = -1..-n and 1..n-1."""
    return [-a for a in range(1, n + 1)] + list(range(1, n))


def shell_levels(kappa: float, n: int) -> list[HydrogenLevel]:
    out = []
    for k in shell_channels(n):
        n_r = n - abs(k)
        out.append(HydrogenLevel("dirac", n, k, sommerfeld_eigenvalue(kappa, n_r, k), 2 * abs(k)))
    return out


def dirac_levels(kappa: float, n_max: int) -> list[HydrogenLevel]:
    """All Dirac-Coulomb levels with principal number <= n_max, sorted by energy."""
    levels = [lv for n in range(1, n_max + 1) for lv in shell_levels(kappa, n)]
    return sorted(levels, key=lambda lv: (lv.energy, lv.channel_k))


def lowest_dirac_sum(kappa: float, n_electrons: float) -> float:
    """Sum of (E - 1) over the n_electrons lowest Dirac-Coulomb states, last level filled fractionally."""
    remaining = float(n_electrons)
    total = 0.0
    n_max = 1
    while 2 * n_max * (n_max + 1) * (2 * n_max + 1) // 6 < n_electrons + 2:
        n_max += 1
    levels = []
    for n in range(1, n_max + 2):
        for k in shell_channels(n):
            levels.append((sommerfeld_binding(kappa, n - abs(k), k), k))
    levels.sort()
    for binding, k in levels:
        if remaining <= 0:
            break
        take = min(remaining, 2 * abs(k))
        total += take * binding
        remaining -= take
    return total


@dataclass(frozen=True)
class ScottResult:
    kappa: float
    value: float
    error_bound: float
    n_summed: int
    tail: float
    tail_coefficients: tuple[float, float, float]
    shell_terms: np.ndarray


def shell_differences(kappa: float, n_max: int) -> np.ndarray:
    """d_n = sum over the shell of 2|k|*((E_nk - 1) + kappa^2/(2n^2)), n = 1..n_max."""
    kappa = _check_kappa(kappa)
    n = np.arange(1, n_max + 1, dtype=float)
    k2 = kappa * kappa
    out = np.zeros(n_max)
    for a in range(1, n_max + 1):
        g = np.sqrt(a * a - k2)
        nn = n[a - 1:]
        shifted = nn - k2 / (a + g)
        term = np.expm1(-0.5 * np.log1p(k2 / shifted**2)) + k2 / (2.0 * nn * nn)
        mult = np.where(nn > a, 2.0, 1.0) * (2 * a)
        out[a - 1:] += mult * term
    return out


def _tail_fit(n: np.ndarray, d: np.ndarray, powers: tuple[int, ...]) -> np.ndarray:
    basis = np.stack([n ** (-float(p)) for p in powers], axis=1)
    scale = np.abs(basis).max(axis=0)
    coef, *_ = np.linalg.lstsq(basis / scale, d, rcond=None)
    return coef / scale


def _tail_sum(coef, powers, n0: int) -> float:
    return float(sum(c * zeta(float(p), n0 + 1.0) for c, p in zip(coef, powers)))


def scott_correction(kappa: float, tol: float = 1e-10, n_start: int = 2000,
                     n_limit: int = 64000) -> ScottResult:
    """c_Scott = kappa^2/2 + sum_n d_n with a fitted power-law tail.

    The shell differences behave like a/n^2 + b/n^3 + c/n^4 for large n. The
    tail beyond the cutoff is summed with Hurwitz zeta values; its error bound
    is the change when the fit drops the last power, plus the fit residual
    propagated to the tail. The cutoff doubles until the bound is below tol.
    """
    kappa = _check_kappa(kappa)
    if tol <= 0:
        raise InputError("tol must be positive")
    if kappa == 0.0:
        return ScottResult(0.0, 0.0, 0.0, 0, 0.0, (0.0, 0.0, 0.0), np.zeros(0))
    n0 = n_start
    last = None
    while n0 <= n_limit:
        d = shell_differences(kappa, n0)
        n = np.arange(1, n0 + 1, dtype=float)
        window = slice(n0 // 4, n0)
        full = (2, 3, 4)
        coef3 = _tail_fit(n[window], d[window], full)
        coef2 = _tail_fit(n[window], d[window], full[:2])
        tail3 = _tail_sum(coef3, full, n0)
        tail2 = _tail_sum(coef2, full[:2], n0)
        model = sum(c * n[window] ** (-float(p)) for c, p in zip(coef3, full))
        resid = float(np.max(np.abs(model - d[window])))
        bound = abs(tail3 - tail2) + resid * n0
        partial = float(np.sum(d))
        value = 0.5 * kappa * kappa + partial + tail3
        last = ScottResult(kappa, value, bound, n0, tail3, tuple(float(c) for c in coef3), d)
        if bound <= tol:
            return last
        n0 *= 2
    raise NonConvergenceError(
        f"Scott series tail bound {last.error_bound:.3e} above tol {tol:.3e} at n = {last.n_summed}",
        partial=last)


def scott_small_kappa_coefficient() -> float:
    """Limit of (c_Scott - kappa^2/2)/kappa^4 as kappa -> 0."""
    return float(-1.25 * zeta(2.0) + zeta(3.0))
