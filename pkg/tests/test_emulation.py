import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfqwt.emulation import (
    RegisterCapError,
    alpha_beta_exponents,
    build_product_state,
    cost_model,
    diagonal_mask,
    grover_iteration_count,
    grover_select_diagonal,
    grover_step,
    paired_phase_estimation,
    phase_estimation,
    rotation_success,
    sample_scale_register,
    scale_register_distribution,
    write_cost_csv,
)
from mfqwt.numerics import QuantumState, unitary_eig
from mfqwt.states import CascadeParams, IsrmParams, build_isrm, cascade_state
from mfqwt.wavelet import WaveletCoeffs, fwt_forward

from conftest import random_state_vector


class TestProductState:
    def test_basis(self):
        s = build_product_state(QuantumState.basis(2), QuantumState.basis(2))
        assert s.amplitudes[0] == 1 and np.count_nonzero(s.amplitudes) == 1

    def test_uniform(self):
        s = build_product_state(QuantumState.uniform(2), QuantumState.uniform(2))
        np.testing.assert_allclose(s.amplitudes, 0.25)

    def test_cascade_diagonal_weight(self):
        psi = cascade_state(CascadeParams(3, 0.3))
        s = build_product_state(psi, psi.conj())
        assert s.weight(diagonal_mask(3)) == pytest.approx(0.58**3, abs=1e-14)
        assert 0.58**3 == pytest.approx(0.195112)

    def test_cap(self):
        with pytest.raises(RegisterCapError):
            build_product_state(QuantumState.uniform(9), QuantumState.uniform(9))


class TestGroverStep:
    def _check(self, psi):
        s = build_product_state(psi, psi.conj())
        mask = diagonal_mask(psi.n)
        x = s.weight(mask)
        out = grover_step(s, s, mask)
        P = np.where(mask.ravel(), s.amplitudes, 0)
        expected = (4 * x - 3) * P + (4 * x - 1) * (s.amplitudes - P)
        assert np.max(np.abs(out.amplitudes - expected)) < 1e-12

    def test_expansion_cascade(self):
        self._check(cascade_state(CascadeParams(5, 0.3)))

    def test_expansion_random(self, rng):
        self._check(QuantumState(random_state_vector(rng, 16)))

    def test_inside_and_outside(self):
        s = build_product_state(QuantumState.basis(2), QuantumState.basis(2))
        mask = diagonal_mask(2)
        out = grover_step(s, s, mask)  # x = 1
        assert abs(abs(np.vdot(s.amplitudes, out.amplitudes)) - 1) < 1e-14
        off = build_product_state(QuantumState.basis(2, 0), QuantumState.basis(2, 1))
        out = grover_step(off, off, mask)  # x = 0
        assert abs(abs(np.vdot(off.amplitudes, out.amplitudes)) - 1) < 1e-14


class TestGroverSelect:
    def test_iteration_counts(self):
        assert grover_iteration_count(1.0) == 0
        assert grover_iteration_count(0.25) == 1
        assert grover_iteration_count(2.0**-20) == 804
        assert rotation_success(0.25, 1) == pytest.approx(1.0, abs=1e-15)

    def test_basis_state(self):
        sel, run = grover_select_diagonal(QuantumState.basis(3, 2))
        assert run.iterations == 0 and run.peak == pytest.approx(1.0)
        np.testing.assert_allclose(sel.amplitudes, QuantumState.basis(3, 2).amplitudes, atol=1e-15)

    def test_uniform_n4(self):
        _, run = grover_select_diagonal(QuantumState.uniform(4))
        assert run.x == pytest.approx(1 / 16)
        assert run.iterations == 3 == round(math.pi / (4 * math.asin(0.25)) - 0.5)
        assert run.peak >= 0.96

    def test_cascade_post_selection(self):
        psi = cascade_state(CascadeParams(6, 0.3))
        sel, run = grover_select_diagonal(psi)
        target = psi.probabilities / np.sqrt(np.sum(psi.probabilities**2))
        assert np.max(np.abs(sel.amplitudes - target)) < 1e-10
        assert not run.flagged

    def test_complex_state_post_selection(self, rng):
        psi = QuantumState(random_state_vector(rng, 32))
        sel, _ = grover_select_diagonal(psi)
        target = psi.probabilities / np.sqrt(np.sum(psi.probabilities**2))
        assert np.max(np.abs(sel.amplitudes - target)) < 1e-10

    def test_flagged_when_capped(self):
        _, run = grover_select_diagonal(cascade_state(CascadeParams(6, 0.3)), max_iterations=0)
        assert run.flagged

    def test_trace_csv(self, tmp_path):
        _, run = grover_select_diagonal(QuantumState.uniform(3))
        run.to_csv(tmp_path / "g.csv")
        assert len((tmp_path / "g.csv").read_text().splitlines()) == run.iterations + 2

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1e-6, 1.0))
    def test_iteration_count_is_optimal(self, x):
        k = grover_iteration_count(x)
        theta = math.asin(math.sqrt(x))
        assert k == math.floor(math.pi / (4 * theta))
        # best over the first half-turn of the rotation
        first = [j for j in range(k + 3) if (2 * j + 1) * theta <= math.pi]
        best = max(rotation_success(x, j) for j in first)
        assert rotation_success(x, k) >= best - 1e-12


class TestPhaseEstimation:
    @pytest.mark.parametrize("m", [0, 3, 13])
    def test_on_grid(self, m):
        n_t = 4
        U = np.diag(np.exp(1j * np.array([2 * np.pi * m / 2**n_t, 0.3])))
        res = phase_estimation(U, QuantumState.basis(1, 0), n_t)
        assert res.peak_bin == m and res.peak_probability >= 1 - 1e-10

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.0, 2 * np.pi, exclude_max=True), st.integers(3, 7))
    def test_off_grid_bound(self, theta, n_t):
        U = np.diag(np.exp(1j * np.array([theta, 0.0])))
        res = phase_estimation(U, QuantumState.basis(1, 0), n_t)
        Nt = 2**n_t
        nearest = int(round(theta * Nt / (2 * np.pi))) % Nt
        assert res.histogram[nearest] >= 0.4

    def test_isrm_eigenvector(self):
        params = IsrmParams.random(5, 1, 3, seed=4)
        es = unitary_eig(build_isrm(params))
        for k in (0, 7, 20):
            res = phase_estimation(params, es.eigenvectors[k], 5)
            nearest = int(round(es.eigenphases[k] * 32 / (2 * np.pi))) % 32
            assert res.peak_bin == nearest

    def test_fast_and_dense_agree(self):
        params = IsrmParams.random(4, 1, 3, seed=2)
        psi = QuantumState.basis(4, 3)
        a = phase_estimation(params, psi, 4).histogram
        b = phase_estimation(build_isrm(params), psi, 4).histogram
        np.testing.assert_allclose(a, b, atol=1e-12)
        assert a.sum() == pytest.approx(1.0)

    def test_paired_mirrors(self):
        params = IsrmParams.random(4, 1, 3, seed=2)
        es = unitary_eig(build_isrm(params))
        pair = paired_phase_estimation(params, es.eigenvectors[5], 5)
        assert pair.common_peak == pair.first.peak_bin
        assert pair.second.peak_bin == (-pair.first.peak_bin) % 32

    def test_cap(self):
        with pytest.raises(RegisterCapError):
            phase_estimation(np.eye(2**10), QuantumState.basis(10), 7)


class TestSampling:
    def test_single_band(self):
        c = np.zeros(16, dtype=complex)
        c[4:8] = 0.5
        h = sample_scale_register(WaveletCoeffs(c, "daub4"), 2, 500, seed=1)
        assert h.counts[3] == 500 and h.counts.sum() == 500

    def test_deterministic(self):
        c = fwt_forward(cascade_state(CascadeParams(8, 0.3)).amplitudes)
        a = sample_scale_register(c, 4, 1000, seed=3)
        b = sample_scale_register(c, 4, 1000, seed=3)
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_three_sigma(self):
        c = fwt_forward(cascade_state(CascadeParams(10, 0.3)).amplitudes)
        h = sample_scale_register(c, 2, 10**5, seed=0)
        sigma = np.sqrt(h.probabilities * (1 - h.probabilities) / h.shots)
        assert np.all(np.abs(h.frequencies - h.probabilities) <= 3 * sigma + 1e-15)
        assert scale_register_distribution(c, 2).sum() == pytest.approx(1.0)

    def test_bad_moment(self):
        with pytest.raises(ValueError):
            scale_register_distribution(fwt_forward(QuantumState.uniform(3).amplitudes), 3)


class TestExponents:
    def test_uniform_and_basis(self):
        assert alpha_beta_exponents([QuantumState.uniform(n) for n in range(4, 9)]).alpha == pytest.approx(1.0)
        assert alpha_beta_exponents([QuantumState.basis(n) for n in range(4, 9)]).alpha == pytest.approx(0.0, abs=1e-12)

    def test_cascade_alpha(self):
        pair = alpha_beta_exponents([cascade_state(CascadeParams(n, 0.3)) for n in range(6, 11)])
        assert abs(pair.alpha - 0.785876) < 1e-6


class TestCost:
    def test_iterate_density(self):
        r = cost_model(20, t=100, alpha=1.0, task="iterate_density")
        assert r.quantum_count == pytest.approx(100 * 2**10)
        assert r.classical_count == pytest.approx(100 * 2**20)
        assert f"{r.quantum_count:.3g}" == "1.02e+05" and f"{r.classical_count:.3g}" == "1.05e+08"
        assert r.log2_gain == pytest.approx(10)

    def test_eigenvector_density_worst_case(self):
        r = cost_model(12, alpha=1.0, task="eigenvector_density")
        assert r.quantum_count == r.classical_count == 2.0**24

    def test_eigenvector_amplitude(self):
        r = cost_model(12, alpha=0.5, beta=0.5, task="eigenvector_amplitude")
        assert r.quantum_count == pytest.approx(2.0**18) and r.log2_gain == pytest.approx(6)

    def test_missing_inputs(self):
        with pytest.raises(ValueError):
            cost_model(10, alpha=0.5, task="iterate_density")
        with pytest.raises(ValueError):
            cost_model(10, t=10, task="iterate_amplitude")
        with pytest.raises(ValueError):
            cost_model(10, alpha=1.5, task="eigenvector_density")
        with pytest.raises(ValueError):
            cost_model(10, task="bogus")

    def test_csv(self, tmp_path):
        write_cost_csv(tmp_path / "c.csv", [cost_model(10, t=5, alpha=0.5)])
        assert "iterate_density" in (tmp_path / "c.csv").read_text()
