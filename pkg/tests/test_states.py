import numpy as np
import pytest

from mfqwt.numerics import QuantumState
from mfqwt.states import (
    CascadeParams,
    IsrmParams,
    apply_isrm,
    build_isrm,
    cascade_state,
    cascade_tau_analytic,
    isrm_eigenvector_ensemble,
    load_eigensystem,
    load_states,
    read_state_csv,
    save_eigensystem,
    save_states,
    write_state_csv,
)

from conftest import random_state_vector


class TestCascade:
    def test_single_split(self):
        np.testing.assert_allclose(cascade_state(CascadeParams(1, 0.3)).amplitudes, np.sqrt([0.3, 0.7]))

    def test_two_splits(self):
        np.testing.assert_allclose(cascade_state(CascadeParams(2, 0.3)).probabilities, [0.09, 0.21, 0.21, 0.49])

    def test_symmetric_is_uniform(self):
        np.testing.assert_allclose(cascade_state(CascadeParams(10, 0.5)).amplitudes, 2.0**-5, rtol=1e-13)

    def test_analytic_tau(self):
        assert cascade_tau_analytic(2, 0.5) == pytest.approx(1.0, abs=1e-15)
        for p in (0.1, 0.3, 0.45):
            assert cascade_tau_analytic(1, p) == pytest.approx(0.0, abs=1e-15)
        assert cascade_tau_analytic(2, 0.3) == pytest.approx(0.7859, abs=5e-5)

    @pytest.mark.parametrize("p1", [0.0, 1.0, -0.2])
    def test_rejects_degenerate_split(self, p1):
        with pytest.raises(ValueError):
            CascadeParams(4, p1)


def _params(n=3, seed=3, phases=None):
    if phases is not None:
        return IsrmParams(n, 1, 3, phases)
    return IsrmParams.random(n, 1, 3, seed)


class TestIsrm:
    def test_unitary(self):
        U = build_isrm(_params())
        np.testing.assert_allclose(U @ U.conj().T, np.eye(8), atol=1e-10)

    @pytest.mark.parametrize("n", [3, 5, 7])
    def test_modulus_identity(self, n):
        params = IsrmParams.random(n, 1, 3, seed=n)
        U = build_isrm(params)
        N = params.N
        p = np.arange(N)
        d = p[:, None] - p[None, :]
        expected = np.abs(np.sin(np.pi * N / 3)) / (N * np.abs(np.sin(np.pi * (d + N / 3) / N)))
        assert np.max(np.abs(np.abs(U) - expected)) < 1e-12

    def test_toeplitz_modulus(self):
        A = np.abs(build_isrm(_params(phases=np.zeros(8))))
        for p in range(8):
            np.testing.assert_allclose(A[p], np.roll(A[0], p), atol=1e-13)

    def test_rejects_integer_ngamma(self):
        with pytest.raises(ValueError):
            IsrmParams(2, 1, 2, np.zeros(4))
        with pytest.raises(ValueError):
            IsrmParams(3, 2, 4, np.zeros(8))
        with pytest.raises(ValueError):
            IsrmParams(3, 1, 3, np.full(8, 7.0))

    def test_t_zero_identity(self, rng):
        s = QuantumState(random_state_vector(rng, 8))
        np.testing.assert_array_equal(apply_isrm(s, _params(), 0).amplitudes, s.amplitudes)

    def test_fast_matches_dense(self, rng):
        params = IsrmParams.random(6, 1, 3, seed=11)
        U = build_isrm(params)
        s = QuantumState(random_state_vector(rng, 64))
        assert np.max(np.abs(apply_isrm(s, params).amplitudes - U @ s.amplitudes)) < 1e-10

    def test_semigroup(self, rng):
        params = IsrmParams.random(5, 2, 5, seed=1)
        s = QuantumState(random_state_vector(rng, 32))
        step = s
        for _ in range(5):
            step = apply_isrm(step, params)
        assert np.max(np.abs(apply_isrm(s, params, 5).amplitudes - step.amplitudes)) < 1e-10

    def test_quantized_map_phases(self):
        params = IsrmParams.quantized_map(4, 1, 3)
        p = np.arange(16)
        np.testing.assert_allclose(np.exp(1j * params.phases), np.exp(-2j * np.pi * p**2 / 16), atol=1e-13)


class TestEnsemble:
    def test_deterministic(self):
        a = isrm_eigenvector_ensemble(4, 1, 3, 2, seed=5)
        b = isrm_eigenvector_ensemble(4, 1, 3, 2, seed=5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.eigenphases, y.eigenphases)
            np.testing.assert_array_equal(x.vectors, y.vectors)
        np.testing.assert_array_equal(IsrmParams.random(4, 1, 3, 5, 1).phases, IsrmParams.random(4, 1, 3, 5, 1).phases)

    def test_start_offset_reproduces_subset(self):
        full = isrm_eigenvector_ensemble(4, 1, 3, 3, seed=9)
        tail = isrm_eigenvector_ensemble(4, 1, 3, 1, seed=9, start=2)
        np.testing.assert_array_equal(full[2].vectors, tail[0].vectors)

    def test_residuals_n256(self):
        systems = isrm_eigenvector_ensemble(8, 1, 3, 10, seed=0)
        total = 0
        for k, es in enumerate(systems):
            assert len(es) == 256
            U = build_isrm(IsrmParams.random(8, 1, 3, 0, k))
            assert np.all(es.residuals(U) < 1e-8)
            total += len(es)
        assert total == 2560

    def test_dense_limit(self):
        with pytest.raises(ValueError):
            isrm_eigenvector_ensemble(13, 1, 3, 1, seed=0)


class TestSerialization:
    def test_npz_round_trip(self, tmp_path, rng):
        states = [QuantumState(random_state_vector(rng, 16)) for _ in range(3)]
        path = save_states(tmp_path / "s.npz", states, kind="test", n=4)
        back, meta = load_states(path)
        assert meta == {"kind": "test", "n": 4}
        for a, b in zip(states, back):
            np.testing.assert_array_equal(a.amplitudes, b.amplitudes)

    def test_eigensystem_round_trip(self, tmp_path):
        es = isrm_eigenvector_ensemble(3, 1, 3, 1, seed=0)[0]
        back = load_eigensystem(save_eigensystem(tmp_path / "e", es))
        np.testing.assert_array_equal(back.vectors, es.vectors)

    def test_csv_round_trip(self, tmp_path, rng):
        s = QuantumState(random_state_vector(rng, 8))
        write_state_csv(tmp_path / "s.csv", s)
        np.testing.assert_array_equal(read_state_csv(tmp_path / "s.csv").amplitudes, s.amplitudes)
