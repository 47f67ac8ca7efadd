import numpy as np
import pytest

from artifact.core import DomainError, InputError, RadialDensity
from artifact.tf import (KINETIC_CONSTANT, default_tf_grid, tf_functional, tf_minimize, tf_ode_oracle,
                         tf_terms)


@pytest.fixture(scope="module")
def neutral():
    return tf_minimize(1.0)


@pytest.fixture(scope="module")
def oracle():
    return tf_ode_oracle()


def test_neutral_energy_matches_oracle(neutral, oracle):
    assert neutral.energy == pytest.approx(oracle.energy, rel=1e-4)
    assert neutral.energy == pytest.approx(-0.7687, abs=1e-4)


def test_oracle_initial_slope(oracle):
    assert oracle.slope == pytest.approx(-1.58807, abs=1e-5)
    assert oracle.slope_error < 1e-9
    tighter = tf_ode_oracle(tol=1e-12)
    assert abs(tighter.slope - oracle.slope) <= oracle.slope_error + tighter.slope_error


def test_functional_at_minimizer(neutral):
    assert tf_functional(neutral.density, 1.0, neutral.density.grid) == pytest.approx(neutral.energy, abs=1e-10)


def test_energy_history_non_increasing(neutral):
    e = np.array(neutral.energy_history)
    assert np.all(np.diff(e) <= 1e-12 * abs(e[-1]))


def test_unit_charge_through_iterations(neutral):
    assert np.max(np.abs(np.array(neutral.charge_history) - 1.0)) < 1e-10


def test_virial_identity(neutral):
    kin, att, rep = neutral.kinetic, neutral.attraction, neutral.repulsion
    assert neutral.virial_defect < 1e-4
    # 2K + U = 0 for the Coulomb functional
    assert abs(2 * kin + att + rep) < 1e-4 * abs(neutral.energy)


@pytest.mark.parametrize("lam", [1.0, 2.0])
def test_euler_lagrange_residual(lam, neutral):
    sol = neutral if lam == 1.0 else tf_minimize(lam)
    g = sol.density.grid
    r, rho = g.nodes, sol.density.values
    # the multiplier enters the TF equation as -chemical_potential
    rhs = np.clip(lam / r - sol.density.potential + sol.chemical_potential, 0.0, None)
    lhs = 0.5 * (3 * np.pi**2) ** (2 / 3) * rho ** (2 / 3)
    w = 4 * np.pi * r * r * rho
    assert np.sqrt(g.integrate(w * (lhs - rhs) ** 2) / g.integrate(w * rhs**2)) < 1e-6


def test_chemical_potential_sign(neutral):
    assert abs(neutral.chemical_potential) < 1e-5
    assert tf_minimize(2.0).chemical_potential < 0


def test_monotone_and_concave_in_lambda():
    e = [tf_minimize(lam).energy for lam in (1.0, 1.5, 2.0)]
    assert e[2] <= e[1] <= e[0]
    assert e[1] >= 0.5 * (e[0] + e[2]) - 1e-8


def test_competitor_densities_are_worse(neutral):
    g = neutral.density.grid
    for scale in (0.5, 1.0, 3.0):
        trial = RadialDensity.from_function(g, lambda r: np.exp(-r / scale) / np.sqrt(r), normalize=True)
        assert tf_functional(trial, 1.0, g) > neutral.energy


def test_terms_consistency(neutral):
    g = neutral.density.grid
    kin, att, rep = tf_terms(neutral.density, 1.0, g)
    r = g.nodes
    assert kin == pytest.approx(KINETIC_CONSTANT * g.integrate(4 * np.pi * r * r * neutral.density.values ** (5 / 3)))
    assert sum((kin, att, rep)) == pytest.approx(neutral.energy, abs=1e-12)


def test_rejections():
    with pytest.raises(DomainError):
        tf_minimize(0.5)
    with pytest.raises(InputError):
        tf_minimize(1.0, tol=0.0)
    with pytest.raises(DomainError):
        tf_ode_oracle(2.0)


def test_grid_refinement_stable():
    coarse = tf_minimize(1.0, grid=default_tf_grid(1000)).energy
    fine = tf_minimize(1.0, grid=default_tf_grid(4000)).energy
    assert coarse == pytest.approx(fine, rel=1e-5)
