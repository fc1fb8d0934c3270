import numpy as np
import pytest
import cvxpy as cp

from cohere import config
from cohere import matcore as mc
from cohere.errors import CapExceeded, IllFormed
from cohere.sdpcore import (SdpProblem, Status, bmat, dump_sdpa, feasible, fidelity_sdp, kron,
                            solve, trace)

from conftest import psi


def test_scalar_lp():
    p = SdpProblem()
    x = p.scalar("x")
    p.add(x >= -1, 2 - x >= 0)
    p.minimize(x)
    sol = solve(p)
    assert sol.status == Status.OPTIMAL
    assert sol.objective == pytest.approx(-1, abs=1e-8)


def test_infeasible():
    p = SdpProblem()
    X = p.hermitian(2, "X")
    p.add(X - np.eye(2) >> 0, -X >> 0)
    ok, sol = feasible(p)
    assert not ok
    assert sol.status == Status.INFEASIBLE


def test_fidelity_sdp_qutrits(rng):
    err = 0.0
    for _ in range(50):
        r, s = mc.random_state(3, rng=rng), mc.random_state(3, rng=rng)
        err = max(err, abs(fidelity_sdp(r, s) - mc.fidelity(r, s)))
    assert err < 1e-6


def test_fidelity_sdp_rank_deficient():
    assert fidelity_sdp(psi(2), np.eye(2) / 2) == pytest.approx(2 ** -0.5, abs=1e-7)
    assert fidelity_sdp(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(0, abs=1e-7)


def test_complex_lmi_against_cvxpy(rng):
    d = 3
    C = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    C = C + C.conj().T
    p = SdpProblem()
    X = p.hermitian(d, "X")
    p.add(X >> 0, np.eye(d) - X >> 0, trace(X).real == 1.5)
    p.maximize(trace(C @ X).real)
    sol = solve(p)
    Y = cp.Variable((d, d), hermitian=True)
    ref = cp.Problem(cp.Maximize(cp.real(cp.trace(C @ Y))),
                     [Y >> 0, np.eye(d) - Y >> 0, cp.real(cp.trace(Y)) == 1.5])
    ref.solve(solver=cp.CLARABEL)
    assert sol.objective == pytest.approx(ref.value, abs=1e-6)
    # closed form: top eigenvalue plus half the second
    w = np.linalg.eigvalsh(C)
    assert sol.objective == pytest.approx(w[-1] + 0.5 * w[-2], abs=1e-6)


def test_kron_and_bmat_value(rng):
    p = SdpProblem()
    t = p.scalar("t")
    A = mc.random_state(2, rng=rng)
    p.add(kron(np.eye(2), t) - A >> 0)
    p.minimize(t)
    sol = solve(p)
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(A)[-1], abs=1e-7)


def test_non_hermitian_lmi_rejected():
    p = SdpProblem()
    Z = p.complex_matrix(2, 2)
    with pytest.raises(IllFormed):
        p.add(Z >> 0)


def test_block_cap():
    p = SdpProblem()
    X = p.hermitian(6, "X")
    p.add(X >> 0)
    p.minimize(trace(X).real)
    with config.override(sdp_block_dim=8):
        with pytest.raises(CapExceeded):
            solve(p)


def test_dump_sdpa(tmp_path):
    p = SdpProblem()
    X = p.hermitian(2, "X", real=True)
    t = p.scalar("t")
    p.add(X >> 0, bmat([[X, np.zeros((2, 1))], [np.zeros((1, 2)), t]]) >> 0,
          trace(X).real == 1)
    p.minimize(t)
    path = tmp_path / "p.dat-s"
    dump_sdpa(p, path)
    lines = path.read_text().splitlines()
    header = [ln for ln in lines if not ln.startswith(("*", '"'))]
    m, nblocks = int(header[0].split()[0]), int(header[1].split()[0])
    assert m == p.nx
    assert nblocks == len(header[2].split())


def _read_sdpa(path):
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("*")]
    m = int(lines[0])
    sizes = [int(v) for v in lines[2].split()]
    c = np.array([float(v) for v in lines[3].split()])
    F = [[np.zeros((abs(n), abs(n))) for n in sizes] for _ in range(m + 1)]
    for ln in lines[4:]:
        k, blk, i, j, v = ln.split()
        k, blk, i, j, v = int(k), int(blk) - 1, int(i) - 1, int(j) - 1, float(v)
        F[k][blk][i, j] = v
        F[k][blk][j, i] = v
    return c, F


def test_dump_sdpa_resolves_to_same_optimum(tmp_path, rng):
    # min t over real t and complex X with t I >= A - X, 0 <= X, Tr X = 1/2
    A = mc.random_state(3, rng=rng)
    p = SdpProblem()
    t = p.scalar("t")
    X = p.hermitian(3, "X")
    Y = p.hermitian(2, "Y")
    p.add(kron(np.eye(3), t) - (A - X) >> 0, X >> 0, trace(X).real == 0.5, Y >> 0,
          trace(Y).real - t >= 0, t >= 0)
    p.minimize(t)
    sol = solve(p)
    path = tmp_path / "q.dat-s"
    dump_sdpa(p, path)
    c, F = _read_sdpa(path)
    x = cp.Variable(len(c))
    cons = []
    for blk in range(len(F[0])):
        expr = sum(F[k + 1][blk] * x[k] for k in range(len(c))) - F[0][blk]
        n = F[0][blk].shape[0]
        cons.append(0.5 * (expr + expr.T) >> 0 if n > 1 else expr >= 0)
    ref = cp.Problem(cp.Minimize(c @ x), cons)
    ref.solve(solver=cp.CLARABEL)
    assert ref.value == pytest.approx(sol.objective, abs=1e-6)
