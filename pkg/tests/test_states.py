import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from noisyctl.spinalg import double_well_model, su2_generators
from noisyctl.states import (
    AmplitudePhaseState,
    DensityMatrix,
    TransformationSpec,
    aux_operator,
    aux_signs,
    delta_r_norm,
    expectation,
    purity,
    purity_loss_rate,
    random_target,
    spin_coherent_state,
    to_eigenbasis,
    variance,
)

from conftest import random_state


def amp_state(r, basis_id=""):
    r = np.asarray(r, float)
    return AmplitudePhaseState(r, np.zeros(len(r)), basis_id)


@pytest.fixture(scope="module")
def model5():
    return double_well_model(4, 1.0, 0.3, 1.7)


class TestAmplitudePhaseState:
    def test_gauge_fixing(self):
        s = AmplitudePhaseState(np.array([0.0, 0.6, 0.8]), np.array([1.0, 2.0, 3.5]))
        assert s.phi[1] == 0.0
        assert s.phi[2] == pytest.approx(1.5)
        assert np.all((s.phi >= 0) & (s.phi < 2 * np.pi))

    @pytest.mark.parametrize("r", [[0.5, 0.5], [1.0, -0.1]])
    def test_rejects_bad_amplitudes(self, r):
        with pytest.raises(ValueError):
            amp_state(r)


class TestToEigenbasis:
    def test_eigenvector(self, model5):
        s = to_eigenbasis(model5.eigen_basis[:, 0], model5)
        np.testing.assert_allclose(s.r, np.eye(5)[0], atol=1e-12)
        np.testing.assert_allclose(s.phi, 0.0, atol=1e-12)

    def test_two_level_superposition(self, model5):
        v = (model5.eigen_basis[:, 0] + model5.eigen_basis[:, 1]) / np.sqrt(2)
        s = to_eigenbasis(v, model5)
        np.testing.assert_allclose(s.r, [2**-0.5, 2**-0.5, 0, 0, 0], atol=1e-12)

    def test_round_trip_up_to_global_phase(self, model5, rng):
        for _ in range(10):
            psi = random_state(rng, 5)
            back = to_eigenbasis(psi, model5).vector(model5)
            assert abs(abs(np.vdot(back, psi)) - 1) < 1e-12
            ph = np.vdot(back, psi) / abs(np.vdot(back, psi))
            np.testing.assert_allclose(back * ph, psi, atol=1e-10)

    def test_rejects_unnormalized(self, model5):
        with pytest.raises(ValueError):
            to_eigenbasis(np.ones(5), model5)

    def test_basis_mismatch(self, model5):
        other = double_well_model(4, 1.0, -0.3, 0.0)
        s = to_eigenbasis(model5.eigen_basis[:, 0], model5)
        with pytest.raises(ValueError):
            s.vector(other)


class TestPurity:
    def test_examples(self):
        assert purity(DensityMatrix.pure(np.array([0.6, 0.8j]))) == pytest.approx(1.0)
        assert purity(DensityMatrix(np.eye(4) / 4)) == pytest.approx(0.25)
        assert purity(DensityMatrix(np.diag([0.7, 0.3]).astype(complex))) == pytest.approx(0.58)

    def test_unitary_invariance(self, rng):
        w = rng.dirichlet(np.ones(4))
        rho = np.diag(w).astype(complex)
        u = expm(-1j * su2_generators(3)[0].entries * 0.7)
        assert purity(u @ rho @ u.conj().T) == pytest.approx(purity(rho), abs=1e-14)

    def test_density_validation(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([0.6, 0.6]).astype(complex))
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[0.5, 1], [0, 0.5]]))
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([1.2, -0.2]).astype(complex))


class TestVariance:
    def test_eigenstate_zero(self):
        m = double_well_model(6, 0.0, 1.0, 0.0)
        top = np.eye(7)[0]
        assert variance(m.controls[1], top, m) == 0.0

    @pytest.mark.parametrize("N", range(2, 65))
    def test_ghz_and_coherent(self, N):
        m = double_well_model(N, 1.0, 0.3, 1.7)
        jz = m.controls[1]
        ghz = np.zeros(N + 1, complex)
        ghz[0] = ghz[-1] = 2**-0.5
        assert variance(jz, ghz, m) == pytest.approx(N**2 / 4, rel=1e-8)
        assert variance(jz, spin_coherent_state(N, np.pi / 2), m) == pytest.approx(N / 4, rel=1e-8)

    def test_coherent_state_matches_rotation(self):
        # exp(-i pi/2 Jy)|j,j> computed numerically as the oracle
        for N in (3, 10):
            _, jy, _ = su2_generators(N)
            top = np.eye(N + 1)[0]
            ref = expm(-1j * np.pi / 2 * jy.entries) @ top
            np.testing.assert_allclose(spin_coherent_state(N, np.pi / 2), ref, atol=1e-12)

    def test_coherent_state_at_south_pole(self):
        s = spin_coherent_state(5, np.pi)
        assert np.all(np.isfinite(s))
        assert abs(s[-1]) == pytest.approx(1.0)

    def test_dim_mismatch(self, model5):
        with pytest.raises(ValueError):
            variance(su2_generators(2)[0], np.eye(5)[0], model5)


class TestPurityLossRate:
    def test_examples(self):
        m = double_well_model(2, 1.0, 0.0, 0.0)
        top = np.eye(3)[0]  # |j, j> in the Jz basis
        assert purity_loss_rate(m, [1.0, 0.0], top, 0.01) == pytest.approx(0.02, rel=1e-12)
        assert purity_loss_rate(m, [1.0, 0.3], top, 0.0) == 0.0
        # Jz eigenstate with only the Jz control on
        assert purity_loss_rate(m, [0.0, 2.0], top, 0.5) == 0.0

    def test_validation(self, model5):
        with pytest.raises(ValueError):
            purity_loss_rate(model5, [1.0], np.eye(5)[0], 0.1)
        with pytest.raises(ValueError):
            purity_loss_rate(model5, [1.0, 1.0], np.eye(5)[0], -0.1)


class TestDeltaR:
    def test_examples(self):
        a = amp_state([1.0, 0.0])
        assert delta_r_norm(a, a) == 0.0
        assert delta_r_norm(a, amp_state([0.0, 1.0])) == pytest.approx(np.sqrt(2))
        spec = TransformationSpec(amp_state([0.8, 0.6]), amp_state([0.6, 0.8]), 0.2)
        assert delta_r_norm(spec) == pytest.approx(0.28284271247461906, abs=1e-15)

    def test_basis_mismatch(self):
        with pytest.raises(ValueError):
            delta_r_norm(amp_state([1, 0], "aaa"), amp_state([0, 1], "bbb"))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            TransformationSpec(amp_state([0.8, 0.6]), amp_state([0.6, 0.8]), 0.5)
        with pytest.raises(ValueError):
            TransformationSpec(amp_state([1, 0]), amp_state([0, 1]), 0.5)
        TransformationSpec(amp_state([1, 0]), amp_state([0, 1]), 0.5, strict=False)


class TestAuxOperator:
    def test_nonnegative_changes_give_identity(self):
        # sign(0) counts as +1
        assert aux_signs([0.1, 0.0, 0.2]).tolist() == [1.0, 1.0, 1.0]

    def test_diagonal_in_eigenbasis(self):
        m = double_well_model(2, 1.0, 0.3, 1.7)
        bid = m.basis_id
        spec = TransformationSpec(AmplitudePhaseState(np.array([0.6, 0.0, 0.8]), np.zeros(3), bid),
                                  AmplitudePhaseState(np.array([0.6, 0.48, 0.64]), np.zeros(3), bid), 0.1)
        a = aux_operator(spec, m)
        assert a.is_hermitian()
        np.testing.assert_allclose(m.to_eigenbasis(a), np.diag([1.0, 1.0, -1.0]), atol=1e-12)

    def test_worked_example(self):
        m = double_well_model(2, 1.0, 0.3, 1.7)
        bid = m.basis_id
        psi_i = AmplitudePhaseState(np.array([0.8, 0.6, 0.0]), np.zeros(3), bid)
        psi_f = AmplitudePhaseState(np.array([0.6, 0.8, 0.0]), np.zeros(3), bid)
        spec = TransformationSpec(psi_i, psi_f, 0.2)
        assert aux_signs(spec.delta_r).tolist() == [-1.0, 1.0, 1.0]
        a = aux_operator(spec, m)
        change = expectation(a, psi_f, m) - expectation(a, psi_i, m)
        assert change == pytest.approx(0.56, abs=1e-12)
        assert change >= delta_r_norm(spec) ** 2 == pytest.approx(0.08)

    def test_commutes_with_h0(self, model5, rng):
        psi_i = to_eigenbasis(random_state(rng, 5), model5)
        spec = TransformationSpec(psi_i, random_target(psi_i, 0.3, rng), 0.3)
        a = aux_operator(spec, model5).entries
        h = model5.h0.entries
        assert np.max(np.abs(a @ h - h @ a)) < 1e-10
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(a)), np.sort(aux_signs(spec.delta_r)), atol=1e-12)

    def test_amplitude_change_inequality_random(self, rng):
        m = double_well_model(5, 1.0, 0.3, 1.7)
        for _ in range(1000):
            r_i = np.abs(rng.standard_normal(6))
            r_f = np.abs(rng.standard_normal(6))
            r_i /= np.linalg.norm(r_i)
            r_f /= np.linalg.norm(r_f)
            psi_i = AmplitudePhaseState(r_i, rng.uniform(0, 6, 6), m.basis_id)
            psi_f = AmplitudePhaseState(r_f, rng.uniform(0, 6, 6), m.basis_id)
            dr = delta_r_norm(psi_i, psi_f)
            spec = TransformationSpec(psi_i, psi_f, min(dr, 0.999) * 0.5, strict=False)
            a = aux_operator(spec, m)
            change = expectation(a, psi_f, m) - expectation(a, psi_i, m)
            assert change >= dr**2 - 1e-12
            assert dr**2 >= spec.epsilon**2


class TestRandomTarget:
    def test_distance_and_nonnegativity(self, rng):
        psi_i = AmplitudePhaseState(np.array([0.0, 0.6, 0.8, 0.0]), np.zeros(4))
        for d in (0.05, 0.2, 0.6):
            t = random_target(psi_i, d, rng)
            assert delta_r_norm(psi_i, t) == pytest.approx(d, rel=1e-10)
            assert np.all(t.r >= 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=8).filter(lambda v: sum(v) > 0.1),
       st.integers(0, 2**31 - 1))
def test_variance_nonnegative_and_phase_gauge(vals, seed):
    r = np.array(vals) / np.linalg.norm(vals)
    d = len(r)
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0, 2 * np.pi, d)
    m = double_well_model(d - 1, 1.0, 0.3, 1.7)
    s = AmplitudePhaseState(r, phi, m.basis_id)
    for x in m.controls:
        assert variance(x, s, m) >= 0.0
    # a global phase shift leaves the gauge-fixed state unchanged
    s2 = AmplitudePhaseState(r, phi + 1.234, m.basis_id)
    assert abs(abs(np.vdot(s.vector(m), s2.vector(m))) - 1) < 1e-12
    np.testing.assert_allclose(np.exp(1j * s.phi), np.exp(1j * s2.phi), atol=1e-9)
