import json
import math

import numpy as np
import pytest
import scipy.linalg

from cohere import config
from cohere import matcore as mc
from cohere.errors import CapExceeded, InvalidState

from conftest import psi


def _fidelity_oracle(r, s):
    sr = scipy.linalg.sqrtm(r)
    return float(np.trace(scipy.linalg.sqrtm(sr @ s @ sr)).real)


def test_density_matrix_validation():
    with pytest.raises(InvalidState):
        mc.DensityMatrix(np.array([[1, 1], [0, 0]]))
    with pytest.raises(InvalidState):
        mc.DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(InvalidState):
        mc.DensityMatrix(np.diag([0.7, 0.7]))
    mc.DensityMatrix(np.diag([0.3, 0.4]), normalized=False)


def test_density_matrix_json_roundtrip(tmp_path, rng):
    r = mc.random_state(3, rng=rng)
    dm = mc.DensityMatrix(r)
    p = tmp_path / "s.json"
    p.write_text(json.dumps(dm.to_json()))
    back = mc.DensityMatrix.load(p)
    assert np.allclose(back.mat, r)
    with pytest.raises(InvalidState):
        mc.DensityMatrix.from_json({"dim": 2, "re": [[1, 0]]})


def test_maximally_coherent():
    v = mc.maximally_coherent(4).vec
    assert np.allclose(v, 0.5)
    assert np.allclose(mc.dephase(psi(4)), np.eye(4) / 4)


def test_fidelity_against_sqrtm(rng):
    for d in (2, 3, 4):
        for _ in range(10):
            r, s = mc.random_state(d, rng=rng), mc.random_state(d, rng=rng)
            assert abs(mc.fidelity(r, s) - _fidelity_oracle(r, s)) < 1e-7


def test_fidelity_pure_and_identity():
    assert mc.fidelity(psi(2), np.eye(2) / 2) == pytest.approx(1 / math.sqrt(2))
    assert mc.fidelity(psi(3), psi(3)) == pytest.approx(1)
    assert mc.purified_distance(psi(2), psi(2)) == pytest.approx(0, abs=1e-7)


def test_trace_distance_and_entropy(rng):
    assert mc.trace_distance(np.diag([1, 0]), np.diag([0, 1])) == pytest.approx(1)
    assert mc.von_neumann_entropy(np.eye(4) / 4) == pytest.approx(2)
    assert mc.von_neumann_entropy(psi(4)) == pytest.approx(0, abs=1e-9)


def test_partial_trace_and_tensor(rng):
    a, b = mc.random_state(2, rng=rng), mc.random_state(3, rng=rng)
    ab = mc.tensor(a, b)
    assert np.allclose(mc.partial_trace(ab, [2, 3], keep=[0]), a)
    assert np.allclose(mc.partial_trace(ab, [2, 3], keep=[1]), b)
    assert np.allclose(mc.n_copies(a, 2), np.kron(a, a))


def test_dimension_cap():
    with config.override(max_dim=8):
        with pytest.raises(CapExceeded):
            mc.n_copies(np.eye(2) / 2, 4)


def test_purify(rng):
    r = mc.random_state(3, rank=2, rng=rng)
    pure, cq = mc.purify(r)
    v = pure.vec.reshape(3, -1)
    assert np.allclose(v @ v.conj().T, r)
    W = cq.weighted_env()
    assert np.allclose(np.sum(np.abs(W) ** 2, axis=1), np.diag(r).real)
    assert cq.env_dim == 2
