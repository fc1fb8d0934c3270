import json
import math

import cvxpy as cp
import numpy as np
import pytest

from cohere import matcore as mc
from cohere import measures as ms
from cohere import oneshot as os_
from cohere.channels import classify

from conftest import psi

SWEEP_STATE = (0.6, 0.0, 0.2)  # Bloch vector of the finite-n test qubit
# frozen from an independent cvxpy solve of the same relaxation
SWEEP_PER_COPY = {1: 0.192645, 2: 0.223609, 3: 0.171567}
SWEEP_C_R = 0.2826905


def _tilde_c_h_cvxpy(rho, eps):
    d = rho.shape[0]
    A = cp.Variable((d, d), hermitian=True)
    t = cp.Variable()
    cons = [A >> 0, np.eye(d) - A >> 0, cp.real(cp.trace(rho.T @ A)) >= 1 - eps]
    cons += [cp.real(A[i, i]) == t for i in range(d)]
    cp.Problem(cp.Minimize(t), cons).solve(solver=cp.CLARABEL)
    return -math.log2(t.value)


def test_mio_rate_maximally_coherent():
    for M in (2, 3, 4, 8):
        r = os_.mio_dio_rate(psi(M), 0.0)
        assert r.M_int == M and r.log_M == math.log2(M)
        assert r.ok


def test_sio_rate_maximally_coherent():
    for M in (2, 4):
        r = os_.sio_rate(psi(M), 0.0)
        assert r.M_int == M and r.ok


def test_diagonal_rates():
    rng = np.random.default_rng(3)
    for d in (2, 3, 4):
        delta = np.diag(rng.dirichlet(np.ones(d)))
        for eps in (0.0, 0.3, 0.6):
            assert os_.mio_dio_rate(delta, eps).M_int == math.floor(1 / (1 - eps))


def test_tilde_c_h_matches_cvxpy(rng):
    for _ in range(5):
        rho = mc.random_state(3, rng=rng)
        for eps in (0.05, 0.3):
            assert os_.tilde_c_h(rho, eps)[0] == pytest.approx(_tilde_c_h_cvxpy(rho, eps),
                                                               abs=1e-6)


def test_tilde_c_h_below_c_h(rng):
    for _ in range(5):
        rho = mc.random_state(3, rng=rng)
        assert os_.tilde_c_h(rho, 0.1)[0] <= ms.c_h(rho, 0.1) + 1e-6


def test_sio_below_mio_and_monotone_in_eps(rng):
    for _ in range(4):
        rho = mc.random_state(3, rng=rng)
        prev_mio, prev_sio = 0, 0
        for eps in (0.0, 0.2, 0.4, 0.6):
            mio, sio = os_.mio_dio_rate(rho, eps), os_.sio_rate(rho, eps)
            assert sio.M_int <= mio.M_int
            assert mio.M_int >= prev_mio and sio.M_int >= prev_sio
            assert mio.log_M <= mio.continuous + 1e-6
            prev_mio, prev_sio = mio.M_int, sio.M_int


def test_mio_channel_from_witness(rng):
    rho = mc.random_state(3, rng=rng)
    for M in (2, 3):
        val, A, _ = os_.mio_dio_fidelity(rho, M)
        ch = os_.mio_channel_from_witness(A, M)
        r = classify(ch, tol=1e-7)
        assert r.mio and r.dio
        assert np.trace(ch.apply(rho) @ psi(M)).real == pytest.approx(val, abs=1e-6)


def test_sio_witness_round_trip(rng):
    for rho in (psi(2), psi(4), mc.random_state(3, rng=rng), mc.random_state(4, rng=rng)):
        rep = os_.sio_rate(rho, 0.2)
        ch = os_.sio_channel(rep)
        assert classify(ch).sio
        fid = np.trace(ch.apply(rho) @ psi(rep.M_int)).real
        assert fid == pytest.approx(rep.fidelities[rep.M_int], abs=1e-6)


def test_witness_json_round_trip(rng):
    rho = mc.random_state(3, rng=rng)
    for rep in (os_.mio_dio_rate(rho, 0.3), os_.sio_rate(rho, 0.3)):
        data = json.loads(json.dumps(rep.to_json(with_witness=True)))
        w = os_.witness_from_json(data["witness"])
        if isinstance(w, dict):
            assert set(w) == set(rep.witness)
            for S in w:
                assert np.allclose(w[S], rep.witness[S])
        else:
            assert np.allclose(w, rep.witness)


def test_io_sandwich(rng):
    for _ in range(5):
        rho = mc.random_state(2, rng=rng)
        lo, hi = os_.io_sandwich(rho, 0.2, 0.05)
        assert 0 <= lo <= hi
    lo, hi = os_.io_sandwich(psi(4), 0.2, 0.05)
    assert hi == pytest.approx(ms.c_min_smoothed(psi(4), math.sqrt(0.2 * 1.8)), abs=1e-9)
    with pytest.raises(ValueError):
        os_.io_sandwich(psi(2), 0.2, 0.1)


def test_asymptotic_sweep_regression():
    rho = mc.bloch_qubit(SWEEP_STATE)
    assert ms.c_r(rho) == pytest.approx(SWEEP_C_R, abs=1e-6)
    for n, per_copy in os_.asymptotic_sweep(rho, 0.05, 3):
        assert per_copy == pytest.approx(SWEEP_PER_COPY[n], abs=1e-5)


def test_epsilon_domain():
    with pytest.raises(ValueError):
        os_.mio_dio_rate(psi(2), 1.0)
    with pytest.raises(ValueError):
        os_.asymptotic_sweep(psi(2), 0.1, 0)
