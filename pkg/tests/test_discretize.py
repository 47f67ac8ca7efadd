import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.analytic import sommerfeld_eigenvalue
from artifact.core import ChannelIndex, DomainError, InputError, RadialDensity, RadialGrid
from artifact.discretize import (KAPPA_GRID_LIMIT, DegenerateWindowError, assemble_channel, channel_dimension,
                                 full_spectrum, node_probabilities, operator_function_norms, pencil_eigenvalues,
                                 solve_channel, spectral_projector, spectrum_defects, split_components,
                                 staggered_potential)

SMALL = RadialGrid.exponential(1e-5, 80.0, 300)
COULOMB = [RadialGrid.exponential(3e-6, 200.0, M) for M in (2000, 4000)]


def exact_levels(kappa, k, count):
    start = 0 if k < 0 else 1
    return np.array([sommerfeld_eigenvalue(kappa, n_r, k) for n_r in range(start, start + count)])


def test_operator_shape_and_symmetry():
    op = assemble_channel(-1, 0.3, SMALL)
    assert op.size == channel_dimension(SMALL) == 2 * SMALL.size - 2
    H = op.dense()
    assert np.array_equal(H, H.T)
    x = np.random.default_rng(0).standard_normal(op.size)
    assert np.allclose(op.matvec(x), H @ x, rtol=0, atol=1e-10 * op.norm_bound())
    assert np.max(np.abs(np.linalg.eigvalsh(H))) <= op.norm_bound() * (1 + 1e-12)


@pytest.mark.parametrize("k", [-1, 1, -2, 2])
def test_coulomb_levels_second_order(k):
    errs = []
    for g in COULOMB:
        s = solve_channel(assemble_channel(k, 0.5, g), (0.0, 1.0))
        errs.append(np.max(np.abs(s.eigenvalues[:3] - exact_levels(0.5, k, 3))))
    assert errs[-1] < 2e-7
    assert errs[-1] < 0.3 * errs[0]


def test_free_spectrum_structure():
    lam = full_spectrum(assemble_channel(-1, 0.0, SMALL)).eigenvalues
    scale = np.max(np.abs(lam))
    assert lam.size == 2 * SMALL.size - 2
    assert np.count_nonzero(lam > 0) == SMALL.size - 1
    # symmetric about zero with an empty gap
    assert np.max(np.abs(np.sort(-lam) - lam)) < 1e-12 * scale
    assert np.min(np.abs(lam)) >= 1.0


@pytest.mark.parametrize("a", [1, 2, 3])
def test_charge_conjugate_channels(a):
    neg = full_spectrum(assemble_channel(-a, 0.0, SMALL)).eigenvalues
    pos = full_spectrum(assemble_channel(a, 0.0, SMALL)).eigenvalues
    assert np.allclose(neg, pos, rtol=0, atol=1e-12 * np.max(np.abs(neg)))


def test_no_spurious_gap_states_with_coupling():
    s = solve_channel(assemble_channel(-1, 0.5, SMALL), (-1.0, 1.0))
    assert np.all(s.eigenvalues > 0)


def test_eigenvector_quality():
    op = assemble_channel(2, 0.6, SMALL)
    spec = full_spectrum(op)
    ortho, res = spectrum_defects(op, spec)
    assert ortho < 1e-12 and res < 1e-13
    window = solve_channel(op, (0.0, 1.0))
    assert not window.complete and window.count() > 0
    assert np.allclose(window.eigenvalues, spec.eigenvalues[(spec.eigenvalues > 0) & (spec.eigenvalues <= 1)],
                       rtol=1e-12)


def test_n_lowest_selection():
    op = assemble_channel(-1, 0.5, SMALL)
    s = solve_channel(op, (0.0, 1.0), n_lowest=2)
    assert s.count() == 2
    assert s.eigenvalues[0] == pytest.approx(np.sqrt(0.75), abs=1e-4)


def test_projectors():
    spec = full_spectrum(assemble_channel(-1, 0.4, SMALL))
    P = spectral_projector(spec, "positive")
    Q = spectral_projector(spec, "negative")
    assert np.allclose(P @ P, P, atol=1e-11)
    assert np.allclose(P + Q, np.eye(P.shape[0]), atol=1e-11)
    assert np.trace(P) == pytest.approx(SMALL.size - 1, abs=1e-8)
    assert np.allclose(spectral_projector(spec, "all"), np.eye(P.shape[0]), atol=1e-11)
    lowest = spec.eigenvalues[spec.eigenvalues > 0][0]
    with pytest.raises(DegenerateWindowError):
        spectral_projector(spec, (0.0, lowest))
    with pytest.raises(InputError):
        spectral_projector(solve_channel(assemble_channel(-1, 0.4, SMALL)), "positive")


def test_split_components_normalization():
    g = COULOMB[0]
    for k in (-1, 1):
        s = solve_channel(assemble_channel(k, 0.5, g), (0.0, 1.0), n_lowest=1)
        upper, lower = split_components(s.channel, s.eigenvectors[:, 0], g)
        on_nodes, on_mids = (upper, lower) if k < 0 else (lower, upper)
        # each component on its own sublattice carries the discrete norm exactly
        discrete = np.sum(g.h * g.jacobian * on_nodes**2) + np.sum(g.h * g.jacobian_mid * on_mids**2)
        assert discrete == pytest.approx(1.0, rel=1e-12)
        assert g.integrate(upper**2 + lower**2) == pytest.approx(1.0, rel=1e-2)
        assert g.integrate(upper**2) > 0.9


def test_ground_state_shape():
    """r G of the ground state is r^gamma e^{-kappa r} up to normalization, with F/G fixed."""
    kappa = 0.5
    g = COULOMB[0]
    s = solve_channel(assemble_channel(-1, kappa, g), (0.0, 1.0), n_lowest=1)
    upper, _ = split_components(s.channel, s.eigenvectors[:, 0], g)
    gamma, lam = np.sqrt(1 - kappa**2), kappa
    r = g.nodes
    exact = r**gamma * np.exp(-lam * r)
    norm = np.sqrt(g.integrate(exact**2 * (1 + (1 - gamma) / (1 + gamma))))
    exact /= norm
    upper = upper * np.sign(upper[np.argmax(np.abs(upper))])
    assert np.max(np.abs(upper - exact)[:-1]) < 1e-3 * np.max(exact)


def test_node_probabilities_reproduce_potential_expectation():
    rng = np.random.default_rng(3)
    V = rng.standard_normal(SMALL.size)
    x = rng.standard_normal((channel_dimension(SMALL), 4))
    direct = np.sum(staggered_potential(V, SMALL)[:, None] * x**2, axis=0).sum()
    assert node_probabilities(x) @ V == pytest.approx(direct, rel=1e-12)
    w = np.array([0.5, 1.0, 2.0, 0.0])
    assert node_probabilities(x, w) @ V == pytest.approx(np.sum(staggered_potential(V, SMALL) @ (x**2 * w)),
                                                         rel=1e-12)


def test_potential_shifts_spectrum():
    base = full_spectrum(assemble_channel(-1, 0.0, SMALL)).eigenvalues
    shifted = full_spectrum(assemble_channel(-1, 0.0, SMALL, np.full(SMALL.size, 0.25))).eigenvalues
    assert np.allclose(shifted, base + 0.25, rtol=0, atol=1e-11 * np.max(np.abs(base)))


def test_operator_function_norms():
    g = SMALL
    op = assemble_channel(-2, 0.0, g)
    spec = full_spectrum(op)
    n = op.size
    assert operator_function_norms(spec, spec, np.zeros((n, n)), (0.5, 0.5), 2) == 0.0
    F = np.eye(n)
    # identity with zero exponents: Hilbert-Schmidt norm sqrt(deg * n)
    assert operator_function_norms(spec, spec, F, (0.0, 0.0), 2) == pytest.approx(np.sqrt(4 * n), rel=1e-12)
    lam = np.abs(spec.eigenvalues)
    assert operator_function_norms(spec, spec, F, (0.5, 0.5), 1) == pytest.approx(4 * lam.sum(), rel=1e-10)
    with pytest.raises(InputError):
        operator_function_norms(spec, full_spectrum(assemble_channel(2, 0.0, g)), F, (0, 0), 2)
    with pytest.raises(InputError):
        operator_function_norms(spec, spec, F, (0, 0), 0.5)


def test_pencil_of_identical_operators():
    spec = full_spectrum(assemble_channel(-1, 0.3, SMALL))
    assert np.allclose(pencil_eigenvalues(spec, spec), 1.0, atol=1e-9)


def test_coupling_lowers_pencil_bottom():
    free = full_spectrum(assemble_channel(-1, 0.0, SMALL))
    coupled = full_spectrum(assemble_channel(-1, 0.5, SMALL))
    bottom = pencil_eigenvalues(coupled, free)[0]
    assert 0.0 < bottom < 1.0


@settings(max_examples=15, deadline=None)
@given(kappa=st.floats(0.0, 0.95), k=st.sampled_from([-3, -2, -1, 1, 2, 3]))
def test_bound_states_lie_in_gap(kappa, k):
    s = solve_channel(assemble_channel(k, kappa, SMALL), (-1.0, 1.0))
    assert np.all((s.eigenvalues > 0) & (s.eigenvalues <= 1))
    assert np.all(np.diff(s.eigenvalues) > 0)


def test_rejections():
    with pytest.raises(DomainError):
        assemble_channel(-1, KAPPA_GRID_LIMIT, SMALL)
    with pytest.raises(DomainError):
        assemble_channel(-1, -0.1, SMALL)
    with pytest.raises(InputError):
        staggered_potential(np.zeros(3), SMALL)
    with pytest.raises(InputError):
        solve_channel(assemble_channel(-1, 0.0, SMALL)).abs_power(0.5)
    with pytest.raises(InputError):
        ChannelIndex(0)


def test_density_potential_enters_operator():
    # total screening charge 0.2 leaves the net attraction 0.3 / r at large r
    rho = RadialDensity.from_function(SMALL, lambda r: np.exp(-r), normalize=True).scaled(0.2)
    op = assemble_channel(-1, 0.5, SMALL, rho.potential)
    assert np.array_equal(op.external, staggered_potential(rho.potential, SMALL))
    bare = solve_channel(assemble_channel(-1, 0.5, SMALL), n_lowest=1).eigenvalues[0]
    screened = solve_channel(op, n_lowest=1).eigenvalues[0]
    assert screened > bare
