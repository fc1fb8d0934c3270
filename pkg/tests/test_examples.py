"""Worked examples with closed-form or independently derived values."""
import json
import math

import numpy as np
import pytest

from cohere import boundcoh as bc
from cohere import cli
from cohere import matcore as mc
from cohere import measures as ms
from cohere import oneshot
from cohere.channels import QuantumChannel, classify, sio_channel_from_witness
from cohere.protocol import build_io_distiller, extractor_from_distiller
from cohere.sdpcore import fidelity_sdp

from conftest import psi

PLUS = np.array([1, 1]) / math.sqrt(2)
MINUS = np.array([1, -1]) / math.sqrt(2)


# --- matcore ---------------------------------------------------------------------------


def test_cosbit_vector():
    assert np.allclose(mc.maximally_coherent(2).vec, [2 ** -0.5, 2 ** -0.5])


def test_phase_unitary():
    assert np.allclose(mc.phase_unitary(2), np.diag([1, -1]))
    assert np.allclose(mc.phase_unitary(4), np.diag([1, 1j, -1, -1j]))


def test_fidelity_cosbit_vs_maximally_mixed():
    assert mc.fidelity(psi(2), np.eye(2) / 2) == pytest.approx(2 ** -0.5, abs=1e-12)
    assert fidelity_sdp(psi(2), np.eye(2) / 2) == pytest.approx(2 ** -0.5, abs=1e-7)


def test_generalized_fidelity_subnormalized():
    half = 0.5 * np.diag([1.0, 0.0])
    assert mc.generalized_fidelity(half, half) == pytest.approx(1.0, abs=1e-12)


def test_fuchs_van_de_graaf(rng):
    for _ in range(20):
        r, s = mc.random_state(3, rng=rng), mc.random_state(3, rng=rng)
        P, T = mc.purified_distance(r, s), mc.trace_distance(r, s)
        assert 1 - math.sqrt(1 - P ** 2) <= T + 1e-12 and T <= P + 1e-12


def test_trace_distance_and_entropy():
    assert mc.trace_distance(np.diag([0.6, 0.4]), np.eye(2) / 2) == pytest.approx(0.1)
    assert mc.von_neumann_entropy(np.diag([0.75, 0.25])) == pytest.approx(0.811278, abs=1e-6)


def test_purify_partial_trace_round_trip(rng):
    rho = mc.random_state(3, rank=2, rng=rng)
    vec = mc.purify(rho)[0].vec
    full = np.outer(vec, vec.conj())
    env = full.shape[0] // 3
    assert np.abs(mc.partial_trace(full, (3, env), keep=[0]) - rho).max() < 1e-9


def test_two_cosbits_are_psi4():
    assert np.allclose(mc.n_copies(psi(2), 2), psi(4))


# --- sdp / measures --------------------------------------------------------------------


def test_mio_sdp_witness_for_cosbit():
    val, A, _ = oneshot.mio_dio_fidelity(psi(2), 2)
    assert val == pytest.approx(1.0, abs=1e-7)
    assert np.allclose(A, psi(2), atol=1e-6)


def test_divergence_closed_forms():
    zero = np.diag([1.0, 0.0])
    assert ms.d_max(zero, np.eye(2) / 2) == pytest.approx(1.0)
    assert ms.d_min(psi(2), np.eye(2) / 2) == pytest.approx(1.0)
    for eps in (0.1, 0.4):
        rho = mc.random_state(3, rng=np.random.default_rng(1))
        assert ms.d_h(rho, rho, eps) == pytest.approx(-math.log2(1 - eps), abs=1e-6)


def test_c_h_of_incoherent_state_is_zero():
    delta = np.diag([0.2, 0.3, 0.5])
    assert ms.c_h(delta, 0.0) == pytest.approx(0.0, abs=1e-7)


def test_c0_psi4_not_two_supported():
    ok, _ = ms.c0_operator_le(psi(4), 2)
    assert not ok


def test_minimax_construction_bounds_c_h(rng):
    # rho' = sqrt(W0) rho sqrt(W0) from the C_H optimizer: C_H <= min_delta D_min(rho' || delta)
    for _ in range(8):
        rho = mc.random_state(2, rng=rng)
        eps = 0.2
        val, W, _ = ms.c_h_witness(rho, eps)
        s = mc.sqrtm_psd(mc.hermitian_part(W))
        rp = s @ rho @ s
        assert mc.purified_distance(rp, rho) <= math.sqrt(eps * (2 - eps)) + 1e-6
        assert val <= ms._c_min(rp)[0] + 1e-6


# --- channels --------------------------------------------------------------------------


def test_plus_minus_measurement_is_io_not_sio():
    K = [np.outer([1, 0], PLUS), np.outer([0, 1], MINUS)]
    ch = QuantumChannel.from_kraus(K)
    r = classify(ch)
    assert r.io and not r.sio
    first = mc.partial_trace(bc.bound_state(), (2, 2), keep=[0])
    assert mc.is_diagonal(ch.apply(first))


def test_singleton_witness_gives_one_over_m(rng):
    d, M = 3, 2
    A = np.eye(d) / M
    dec = [(np.array([1.0]), (x,)) for x in range(d)]
    ch = sio_channel_from_witness(A, M, dec)
    rho = mc.random_state(d, rng=rng)
    assert np.trace(ch.apply(rho) @ psi(M)).real == pytest.approx(1 / M, abs=1e-12)


def test_bound_state_sio_witness_round_trip():
    rho = bc.bound_state()
    rep = oneshot.sio_rate(rho, 0.15)
    assert rep.M_int == 2
    fid = np.trace(oneshot.sio_channel(rep).apply(rho) @ psi(2)).real
    assert fid == pytest.approx(rep.fidelities[2], abs=1e-6)


# --- oneshot ---------------------------------------------------------------------------


def test_psi_m_is_tight():
    for M in (2, 3):
        assert oneshot.mio_dio_fidelity(psi(M), M + 1)[0] < 1 - 1e-3


def test_diagonal_sio_zero():
    for d in (2, 3):
        delta = np.diag(np.linspace(1, 2, d) / np.linspace(1, 2, d).sum())
        assert oneshot.sio_rate(delta, 0.3).M_int == 1


def test_bound_state_single_copy_sio_fidelity():
    val, _, _, _ = oneshot.sio_fidelity(bc.bound_state(), 2)
    assert val == pytest.approx((2 + math.sqrt(2)) / 4, abs=1e-6)


def test_io_sandwich_psi4():
    lo, hi = oneshot.io_sandwich(psi(4), 0.2, 0.05)
    assert lo == 0.0  # log 4 - 2 log 20 < 0 clamps
    # the subnormalized ball adds -log(1 - r^2) with r = sqrt(0.36)
    assert hi == pytest.approx(2 - math.log2(1 - 0.36), abs=1e-6)


def test_io_sandwich_random_qubits(rng):
    for _ in range(100):
        rho = mc.random_state(2, rng=rng)
        for eps in (0.1, 0.3):
            lo, hi = oneshot.io_sandwich(rho, eps, eps / 4)  # raises if the bracket is violated
            assert lo <= hi + 1e-6


def test_sweep_closed_forms():
    for n, v in oneshot.asymptotic_sweep(psi(2), 0.0, 3):
        assert v == pytest.approx(1.0, abs=1e-6)
    delta = np.diag([0.7, 0.3])
    for n, v in oneshot.asymptotic_sweep(delta, 0.01, 3):
        # the continuous value is -log(1 - eps) / n; the integer rate is log floor(1/0.99) = 0
        assert v == pytest.approx(-math.log2(0.99) / n, abs=1e-6)
        assert oneshot.mio_dio_rate(mc.n_copies(delta, n), 0.01).M_int == 1


# --- protocol / boundcoh ---------------------------------------------------------------


def test_extractor_distance_certificate():
    rho = bc.bound_state()
    ch, tr = build_io_distiller(rho, 2)
    _, dist = extractor_from_distiller(rho, ch, tr)
    assert dist <= math.sqrt(2 * max(0.0, 1 - tr.fidelity)) + 1e-8


def test_phase_counts_n1():
    ens = bc.build_ensemble(1)
    assert bc.phase_counts(ens, (0,), (1,)).counts == (1, 1, 0, 0)


def test_bound_state_io_contrast():
    rho2 = mc.n_copies(bc.bound_state(), 2)
    assert oneshot.mio_dio_rate(rho2, 0.1).M_int >= 2


# --- cli -------------------------------------------------------------------------------


def _cli_rows(args, capsys):
    code = cli.main([str(a) for a in args])
    return code, json.loads(capsys.readouterr().out)["rows"]


def test_cli_tables(tmp_path, capsys):
    bound = tmp_path / "bound.json"
    bound.write_text(json.dumps(mc.DensityMatrix(bc.bound_state()).to_json()))
    code, rows = _cli_rows(["distill", "--state", bound, "--eps", "0.1",
                            "--class", "MIO_DIO,SIO"], capsys)
    by = {r["class"]: r for r in rows}
    assert code == 0 and by["SIO"]["log_M"] == 0.0 and by["MIO_DIO"]["log_M"] >= 1.0
    p4 = tmp_path / "p4.json"
    p4.write_text(json.dumps(mc.DensityMatrix(psi(4)).to_json()))
    code, rows = _cli_rows(["distill", "--state", p4, "--eps", "0",
                            "--class", "MIO_DIO,SIO,DIIO"], capsys)
    assert code == 0
    for r in rows:
        assert r.get("log_M", r.get("bits")) == pytest.approx(2.0), r
    code, rows = _cli_rows(["boundcoh", "--n-max", 2], capsys)
    assert code == 0
    assert rows[0]["ceiling"] == pytest.approx(0.853553, abs=1e-6)
    assert rows[1]["ceiling"] <= 0.853553 + 1e-6 + 4e-7
