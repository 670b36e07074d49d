import math

import numpy as np
import pytest

from borisamts.core import (
    C_LIGHT,
    M_E,
    Q_E,
    Bunch,
    DegenerateInputError,
    DiagnosticsRow,
    lorentz_gamma,
    mean_kinetic_energy,
    rms_emittance,
    rms_size,
    transverse_emittance,
)
from oracles import emittance_by_hand

example = pytest.mark.example
MC = M_E * C_LIGHT


def bunch_1d(u, pu):
    """Bunch whose x-phase space is (u, pu); units chosen so that m c = 1."""
    n = len(u)
    x = np.zeros((n, 3))
    p = np.zeros((n, 3))
    x[:, 0] = u
    p[:, 0] = pu
    return Bunch(x, p, q=1.0, m=1.0 / C_LIGHT)


class TestBunch:
    def test_shapes_validated(self):
        with pytest.raises(ValueError):
            Bunch(np.zeros((3, 3)), np.zeros((2, 3)), -Q_E, M_E)
        with pytest.raises(ValueError):
            Bunch(np.zeros((0, 3)), np.zeros((0, 3)), -Q_E, M_E)
        with pytest.raises(ValueError):
            Bunch(np.zeros((1, 3)), np.zeros((1, 3)), -Q_E, 0.0)

    def test_single_vector_promoted(self):
        b = Bunch([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], -Q_E, M_E)
        assert b.positions.shape == (1, 3)
        assert b.n == 1

    def test_macro_charge(self):
        b = Bunch(np.zeros((2, 3)), np.zeros((2, 3)), -Q_E, M_E, weight=1e4)
        assert b.macro_charge == pytest.approx(-Q_E * 1e4)

    def test_velocity_below_c(self):
        p = np.array([[100 * MC, 0.0, 0.0]])
        v = Bunch(np.zeros((1, 3)), p, -Q_E, M_E).velocities()
        assert 0 < v[0, 0] < C_LIGHT


class TestLorentzGamma:
    @example
    def test_rest(self):
        assert lorentz_gamma(np.zeros(3), M_E) == 1.0

    @example
    def test_p_equals_mc(self):
        assert lorentz_gamma([MC, 0, 0], M_E) == pytest.approx(math.sqrt(2.0), rel=1e-15)

    @example
    def test_p_equals_3mc(self):
        # hand oracle: sqrt(1 + 9)
        assert lorentz_gamma([0, 3 * MC, 0], M_E) == pytest.approx(3.1622776601683795, rel=1e-15)

    def test_vectorized(self):
        g = lorentz_gamma(np.array([[0, 0, 0], [MC, 0, 0]]), M_E)
        assert g.shape == (2,)


class TestEmittance:
    @example
    def test_cold_beam_is_zero(self):
        rng = np.random.default_rng(0)
        b = bunch_1d(rng.normal(size=50), np.full(50, 0.3))
        assert rms_emittance(b, "x") == pytest.approx(0.0, abs=1e-15)

    @example
    def test_perfect_correlation_is_zero(self):
        u = np.linspace(-1, 1, 21)
        b = bunch_1d(u, 2.5 * u)
        # the determinant cancels to roundoff, and the square root lifts a
        # relative 1e-16 residue to about 1e-8 of sigma_u * sigma_p
        scale = np.std(u) * np.std(2.5 * u)
        assert rms_emittance(b, "x") <= 1e-7 * scale

    @example
    def test_four_point_example(self):
        a, b_ = 0.7, 1.9
        u = [a, -a, 0.0, 0.0]
        pu = [0.0, 0.0, b_, -b_]
        # frozen hand value a*b/2 = 0.665
        assert emittance_by_hand(u, pu) == pytest.approx(0.665, rel=1e-14)
        assert rms_emittance(bunch_1d(u, pu), "x") == pytest.approx(0.665, rel=1e-14)

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            rms_emittance(bunch_1d([1.0], [2.0]), "x")

    def test_matches_hand_oracle_on_random_data(self):
        rng = np.random.default_rng(3)
        u, pu = rng.normal(size=40), rng.normal(size=40) + 0.4 * rng.normal(size=40)
        assert rms_emittance(bunch_1d(u, pu), "x") == pytest.approx(
            emittance_by_hand(list(u), list(pu)), rel=1e-12)

    def test_transverse_is_mean_of_x_and_y(self):
        rng = np.random.default_rng(4)
        b = Bunch(rng.normal(size=(30, 3)), rng.normal(size=(30, 3)), 1.0, 1.0 / C_LIGHT)
        assert transverse_emittance(b) == pytest.approx(
            0.5 * (rms_emittance(b, "x") + rms_emittance(b, "y")))


class TestKineticEnergy:
    @example
    def test_rest(self):
        b = Bunch(np.zeros((3, 3)), np.zeros((3, 3)), -Q_E, M_E)
        assert mean_kinetic_energy(b) == 0.0

    @example
    def test_gamma_two(self):
        p = [[math.sqrt(3.0) * MC, 0, 0]]
        mc2_ev = M_E * C_LIGHT**2 / Q_E
        assert mean_kinetic_energy(Bunch([[0, 0, 0]], p, -Q_E, M_E)) == pytest.approx(mc2_ev, rel=1e-14)

    @example
    def test_average_of_gamma_one_and_three(self):
        p = [[0, 0, 0], [0, 0, math.sqrt(8.0) * MC]]
        mc2_ev = M_E * C_LIGHT**2 / Q_E
        assert mean_kinetic_energy(Bunch(np.zeros((2, 3)), p, -Q_E, M_E)) == pytest.approx(mc2_ev, rel=1e-14)

    def test_low_energy_without_cancellation(self):
        # 1 meV electron: (gamma - 1) ~ 2e-9 would lose digits if formed directly
        ke = 1e-3
        gamma = 1 + ke * Q_E / (M_E * C_LIGHT**2)
        p = [[0, 0, MC * math.sqrt(gamma**2 - 1)]]
        assert mean_kinetic_energy(Bunch([[0, 0, 0]], p, -Q_E, M_E)) == pytest.approx(ke, rel=1e-6)


def test_diagnostics_row_from_bunch():
    rng = np.random.default_rng(1)
    b = Bunch(rng.normal(size=(10, 3)), rng.normal(size=(10, 3)) * MC, -Q_E, M_E, t=2.0)
    row = DiagnosticsRow.from_bunch(b, 1e-12, 3, 7, 5.0)
    assert (row.t, row.h, row.m, row.solves, row.max_accel) == (2.0, 1e-12, 3, 7, 5.0)
    assert row.sigma_y == rms_size(b, "y")
    assert row.emit_z == rms_emittance(b, "z")


def test_diagnostics_single_particle_has_zero_emittance():
    row = DiagnosticsRow.from_bunch(Bunch([[0, 0, 0]], [[0, 0, 0]], -Q_E, M_E), 0.0, 1, 0, 0.0)
    assert row.emit_x == row.emit_y == row.emit_z == 0.0
