import math

import numpy as np
import pytest

from cohere import boundcoh as bc
from cohere import config
from cohere import matcore as mc
from cohere import measures as ms
from cohere.channels import classify
from cohere.errors import CapExceeded

from conftest import psi


def test_bound_state_is_rank_two_and_coherent():
    rho = bc.bound_state()
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.linalg.matrix_rank(rho, tol=1e-10) == 2
    assert ms.c_r(rho) == pytest.approx(1.0, abs=1e-12)


def test_ensemble_listing_n1():
    ens = bc.build_ensemble(1)
    assert np.allclose(ens.states[0], np.ones(4) / 2)
    assert np.allclose(ens.states[1], np.array([1, 1j, -1, -1j]) / 2)


def test_ensemble_listing_n2():
    s = bc.build_ensemble(2).states * 4
    shown = {0: [1, 1, 1, 1, 1, 1, 1], 1: [1, 1j, -1, -1j, 1, 1j, -1],
             2: [1, 1, 1, 1, 1j, 1j, 1j], 3: [1, 1j, -1, -1j, 1j, -1, -1j]}
    tails = {0: [1, 1], 1: [-1, -1j], 2: [-1j, -1j], 3: [1j, -1]}  # entries 14 and 15
    for j in range(4):
        assert np.allclose(s[j, :7], shown[j])
        assert np.allclose(s[j, 14:], tails[j])


def test_ensemble_mixture_is_n_copies():
    for n in (1, 2, 3):
        assert np.allclose(bc.build_ensemble(n).mixture(), mc.n_copies(bc.bound_state(), n))


def test_max_phase_count():
    for n, expected in ((1, 1), (2, 2), (3, 4)):
        c = bc.max_phase_count(bc.build_ensemble(n))
        assert c == expected and c <= 2 ** (n - 1)


def test_overlap_formula_vs_direct(rng):
    err = 0.0
    for n in (1, 2, 3):
        ens = bc.build_ensemble(n)
        rho_n = ens.mixture()
        for _ in range(3334):
            m = tuple(rng.integers(0, 4, size=n))
            mp = tuple(rng.integers(0, 4, size=n))
            if m == mp:
                continue
            theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
            err = max(err, abs(bc.overlap_formula(ens, m, mp, theta, phi)
                               - bc.overlap_direct(rho_n, m, mp, theta, phi)))
    assert err < 1e-10


def test_overlap_supremum_below_per_vector_bound():
    for n in (1, 2, 3):
        assert bc.overlap_supremum(n) <= (1 + math.sqrt(2) / 2) / 4 ** n + 1e-12


def test_overlap_supremum_attained_n1():
    assert bc.overlap_supremum(1) == pytest.approx((1 + math.sqrt(2) / 2) / 4, abs=1e-12)


def test_phase_counts_validation():
    ens = bc.build_ensemble(2)
    with pytest.raises(ValueError):
        bc.phase_counts(ens, (0, 1), (0, 1))
    with pytest.raises(ValueError):
        bc.phase_counts(ens, (0, 4), (0, 1))
    with pytest.raises(ValueError):
        bc.phase_counts(ens, (0,), (1,))


@pytest.mark.parametrize("n", [1, 2])
def test_certify_bound(n):
    cert = bc.certify_bound(n)
    assert cert["within_bound"] and cert["trace_ok"] and cert["phase_count_ok"]
    assert cert["status"] == "Optimal"
    assert cert["ceiling"] == pytest.approx(bc.CEILING, abs=1e-6)
    assert cert["c_r"] == pytest.approx(n, abs=1e-9)


def test_certify_cap():
    with pytest.raises(CapExceeded):
        bc.certify_bound(config.CAPS.certify_n + 1)
    with pytest.raises(CapExceeded):
        bc.build_ensemble(config.CAPS.ensemble_n + 1)


def test_io_distiller_exact():
    for n in (1, 2):
        ch = bc.io_distiller(n)
        out = ch.apply(mc.n_copies(bc.bound_state(), n))
        assert np.trace(out @ psi(2 ** n)).real == pytest.approx(1.0, abs=1e-12)
        r = classify(ch)
        assert r.io and r.dio and not r.sio
