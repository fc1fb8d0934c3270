import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from cohere import matcore as mc
from cohere import measures as ms
from cohere import oneshot
from cohere.channels import classify, twirl, twirl_brute_force
from cohere.protocol import build_io_distiller, verify_achievability

seeds = st.integers(0, 2 ** 32 - 1)
dims = st.integers(2, 3)


def _state(seed, d):
    return mc.random_state(d, rng=np.random.default_rng(seed))


@settings(max_examples=25, deadline=None)
@given(seeds, dims)
def test_c_r_invariant_under_incoherent_unitaries(seed, d):
    rho = _state(seed, d)
    rng = np.random.default_rng(seed + 1)
    u = np.diag(np.exp(1j * rng.uniform(0, 2 * math.pi, d)))[rng.permutation(d)]
    assert abs(ms.c_r(u @ rho @ u.conj().T) - ms.c_r(rho)) < 1e-10


@settings(max_examples=15, deadline=None)
@given(seeds, dims, st.sampled_from([0.05, 0.2, 0.4]))
def test_mio_rate_bounded_by_continuous(seed, d, eps):
    rho = _state(seed, d)
    rep = oneshot.mio_dio_rate(rho, eps)
    assert rep.log_M <= rep.continuous + 1e-6
    assert oneshot.sio_rate(rho, eps).M_int <= rep.M_int


@settings(max_examples=15, deadline=None)
@given(seeds, dims)
def test_distiller_classes(seed, d):
    rho = _state(seed, d)
    ch, tr = build_io_distiller(rho, 2)
    r = classify(ch)
    assert (not r.sio or (r.io and r.dio)) and (not r.io or r.mio) and (not r.dio or r.mio)
    assert r.io and r.dio
    assert verify_achievability(rho, 2, ch, tr, theorem=False)["ok"]


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 4))
def test_twirl_closed_form(seed, M):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(2, 2, M, M)) + 1j * rng.normal(size=(2, 2, M, M))
    assert np.allclose(twirl(g, M), twirl_brute_force(g, M), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds, dims)
def test_fidelity_symmetry_and_range(seed, d):
    rng = np.random.default_rng(seed)
    r, s = mc.random_state(d, rng=rng), mc.random_state(d, rng=rng)
    f = mc.fidelity(r, s)
    assert 0 <= f <= 1 + 1e-12
    assert abs(f - mc.fidelity(s, r)) < 1e-9
    # Fuchs-van de Graaf
    t = mc.trace_distance(r, s)
    assert 1 - f <= t + 1e-9 and t <= math.sqrt(1 - f ** 2) + 1e-9
