"""One-shot coherence distillation rates.

All rates are in bits. ``mio_dio_rate`` and ``sio_rate`` return the largest
integer ``M`` for which the respective SDP reaches fidelity ``1 - eps`` with
``Psi_M``; ``io_sandwich`` brackets the IO rate by smoothed min-entropies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import config
from . import matcore as mc
from . import measures
from .channels import QuantumChannel, decomposition_from_blocks, sio_channel_from_witness
from .errors import NumericalFailure
from .sdpcore import SdpProblem, Status, solve, trace

FEAS_SLACK = 1e-7  # a fixed-M problem counts as feasible if its optimum >= 1 - eps - FEAS_SLACK
ORDER_TOL = 1e-6


class RateClass(str, enum.Enum):
    MIO_DIO = "MIO_DIO"
    SIO = "SIO"
    IO_LOWER = "IO_lower"
    IO_UPPER = "IO_upper"


@dataclass
class RateReport:
    cls: RateClass
    epsilon: float
    log_M: float
    M_int: int
    witness: object = None
    continuous: float | None = None
    fidelities: dict = field(default_factory=dict)
    status: str = Status.OPTIMAL.value
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL.value

    def to_json(self, with_witness: bool = False) -> dict:
        out = {"class": RateClass(self.cls).value, "epsilon": self.epsilon, "log_M": self.log_M,
               "M_int": self.M_int, "status": self.status,
               "fidelities": {str(k): v for k, v in sorted(self.fidelities.items())},
               "diagnostics": self.diagnostics}
        if self.continuous is not None:
            out["continuous"] = self.continuous
        if with_witness and self.witness is not None:
            out["witness"] = _witness_json(self.witness)
        return out


def _witness_json(w):
    if isinstance(w, dict):  # SIO support blocks
        return [{"support": list(S), "block": mc.op_to_json(B)} for S, B in sorted(w.items())]
    return mc.op_to_json(w)


def witness_from_json(data):
    """Inverse of the witness serialization in :meth:`RateReport.to_json`."""
    if isinstance(data, list):
        return {tuple(item["support"]): mc.op_from_json(item["block"]) for item in data}
    return mc.op_from_json(data)


def _check_eps(eps):
    if not 0 <= eps < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {eps}")


def _worst(statuses) -> str:
    statuses = list(statuses)
    for s in statuses:
        if s != Status.OPTIMAL.value:
            return s
    return Status.OPTIMAL.value


def _m_ceiling(d: int, eps: float) -> int:
    # Tr rho A <= Tr A = d / M, so M <= d / (1 - eps)
    return int(math.floor(d / (1 - eps) + 1e-9))


# --- MIO / DIO -------------------------------------------------------------------------------


def mio_dio_fidelity(rho, M: int):
    """``max Tr rho^T A`` s.t. ``0 <= A <= 1``, ``A_ii = 1/M``. Returns ``(value, A, sol)``."""
    rho = mc.as_operator(rho)
    d = rho.shape[0]
    if M == 1:
        return 1.0, np.eye(d, dtype=complex), None
    prob = SdpProblem()
    A = prob.hermitian(d, "A")
    prob.add(A >> 0, np.eye(d) - A >> 0)
    for i in range(d):
        prob.add(A[i, i].real == 1.0 / M)
    prob.maximize(trace(rho.T @ A).real)
    sol = measures._check(solve(prob), "MIO/DIO fidelity")
    return float(sol.objective), sol.get("A"), sol


def tilde_c_h(rho, eps: float):
    """Continuous relaxation ``-log min{t : A_ii = t, 0 <= A <= 1, Tr rho^T A >= 1 - eps}``.

    Returns ``(value, A, sol)``.
    """
    rho = mc.as_operator(rho)
    _check_eps(eps)
    d = rho.shape[0]
    prob = SdpProblem()
    A = prob.hermitian(d, "A")
    t = prob.scalar("t")
    prob.add(A >> 0, np.eye(d) - A >> 0, trace(rho.T @ A).real >= 1 - eps)
    for i in range(d):
        prob.add(A[i, i].real - t == 0)
    prob.minimize(t)
    sol = measures._check(solve(prob), "continuous C_H")
    return measures._clamp0(measures._neglog2(sol.objective)), sol.get("A"), sol


def mio_dio_rate(rho, eps: float) -> RateReport:
    """Largest integer ``M`` reachable under MIO/DIO, by bisection on fixed-``M`` fidelity."""
    rho = mc.as_operator(rho)
    _check_eps(eps)
    d = rho.shape[0]
    fids, witnesses, statuses = {1: 1.0}, {1: np.eye(d, dtype=complex)}, []

    def feasible(M):
        val, A, sol = mio_dio_fidelity(rho, M)
        fids[M], witnesses[M] = val, A
        if sol is not None:
            statuses.append(sol.status.value)
        return val >= 1 - eps - FEAS_SLACK

    lo, hi = 1, _m_ceiling(d, eps) + 1  # lo feasible, hi infeasible
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    cont, _, csol = tilde_c_h(rho, eps)
    statuses.append(csol.status.value)
    return RateReport(RateClass.MIO_DIO, eps, math.log2(lo), lo, witnesses[lo], cont, fids,
                      _worst(statuses), {"solves": len(statuses), "bracket": [lo, hi],
                                         "continuous_gap": csol.gap})


def mio_channel_from_witness(A, M: int) -> QuantumChannel:
    """Channel ``X -> Tr(X A^T) Psi_M + Tr(X (1 - A^T)) (1 - Psi_M)/(M - 1)``.

    Its Choi operator is ``A (x) Psi_M + (1 - A) (x) (1 - Psi_M)/(M - 1)``, so
    ``0 <= A <= 1`` gives CP, ``A_ii = 1/M`` gives MIO (and DIO), and the
    output fidelity with ``Psi_M`` is ``Tr rho^T A``.
    """
    A = mc.hermitian_part(np.asarray(A, dtype=complex))
    d = A.shape[0]
    A = A - np.diag(np.diag(A)) + np.eye(d) / M  # remove solver noise on A_ii = 1/M
    psi = mc.maximally_coherent(M).projector()
    if M == 1:
        choi = np.kron(np.eye(d), np.ones((1, 1)))
    else:
        choi = np.kron(A, psi) + np.kron(np.eye(d) - A, (np.eye(M) - psi) / (M - 1))
    return QuantumChannel.from_choi(choi, d, tol=1e-7)


# --- SIO -------------------------------------------------------------------------------------


def sio_fidelity(rho, M: int):
    """``max Tr rho A`` over ``A = sum_S B_S``, ``B_S >= 0`` on ``M``-subsets, ``A <= 1``, ``A_ii = 1/M``.

    Indices with ``rho_ii = 0`` only carry the diagonal ``1/M`` and are filled in
    with singleton blocks, so the SDP lives on the support of ``Delta(rho)``.
    Returns ``(value, A, blocks, sol)``.
    """
    rho = mc.as_operator(rho)
    d = rho.shape[0]
    active = [i for i in range(d) if rho[i, i].real > 1e-12]
    rest = [i for i in range(d) if i not in active]
    if M == 1:
        return 1.0, np.eye(d, dtype=complex), {(i,): np.ones((1, 1)) for i in range(d)}, None
    sub = rho[np.ix_(active, active)]
    k = len(active)
    sol = None
    if k == 1:
        A_act, blocks = np.full((1, 1), 1.0 / M, dtype=complex), {(0,): np.full((1, 1), 1.0 / M)}
    else:
        prob = SdpProblem()
        A, bvars = measures.add_support_blocks(prob, k, M)
        prob.add(np.eye(k) - A >> 0)
        for i in range(k):
            prob.add(A[i, i].real == 1.0 / M)
        prob.maximize(trace(sub @ A).real)
        sol = measures._check(solve(prob), "SIO fidelity")
        blocks = {S: mc.hermitian_part(sol.value(B)) for S, B in bvars.items()}
        A_act = sum(_embed(B, S, k) for S, B in blocks.items())
    full = {tuple(active[i] for i in S): B for S, B in blocks.items()}
    for i in rest:
        full[(i,)] = np.full((1, 1), 1.0 / M, dtype=complex)
    A_full = sum(_embed(B, S, d) for S, B in full.items())
    value = float(np.trace(sub @ A_act).real)
    return value, A_full, full, sol


def _embed(B, S, d):
    out = np.zeros((d, d), dtype=complex)
    out[np.ix_(S, S)] = B
    return out


def sio_rate(rho, eps: float) -> RateReport:
    """Largest integer ``M`` reachable under SIO, scanning ``M`` upward to the first failure."""
    rho = mc.as_operator(rho)
    _check_eps(eps)
    d = rho.shape[0]
    fids, statuses = {}, []
    best = (1, None)
    for M in range(1, _m_ceiling(d, eps) + 1):
        val, A, blocks, sol = sio_fidelity(rho, M)
        fids[M] = val
        if sol is not None:
            statuses.append(sol.status.value)
        if val < 1 - eps - FEAS_SLACK:
            break
        best = (M, blocks)
    M, blocks = best
    return RateReport(RateClass.SIO, eps, math.log2(M), M, blocks, None, fids, _worst(statuses),
                      {"solves": len(statuses)})


def sio_channel(report: RateReport) -> QuantumChannel:
    """SIO channel realising the witness of a :func:`sio_rate` report."""
    blocks, M = report.witness, report.M_int
    d = max(max(S) for S in blocks) + 1
    A = sum(_embed(B, S, d) for S, B in blocks.items())
    return sio_channel_from_witness(A, M, decomposition_from_blocks(blocks, M))


# --- IO sandwich -----------------------------------------------------------------------------


def io_sandwich(rho, eps: float, eta: float, check: bool = True):
    """``(lower, upper)`` bracket of the one-shot IO rate.

    ``lower = C_min^{eps/2 - eta} - 2 log(1/eta)`` clamped at 0 and
    ``upper = C_min^{sqrt(eps (2 - eps))}``. With ``check`` the continuous
    MIO/DIO value is computed and must fall inside the bracket (within 1e-6).
    """
    if not 0 < eta < eps / 2 < 0.5:
        raise ValueError(f"need 0 < eta < eps/2 < 1/2, got eps={eps}, eta={eta}")
    rho = mc.as_operator(rho)
    raw = measures.c_min_smoothed(rho, eps / 2 - eta) - 2 * math.log2(1 / eta)
    lower = max(0.0, raw)
    upper = measures.c_min_smoothed(rho, math.sqrt(eps * (2 - eps)))
    if check:
        cont = tilde_c_h(rho, eps)[0]
        if not lower - ORDER_TOL <= cont <= upper + ORDER_TOL:
            raise NumericalFailure(
                f"sandwich violated: lower={lower:.9g}, continuous={cont:.9g}, upper={upper:.9g}")
    return lower, upper


# --- finite-n sweeps -------------------------------------------------------------------------


def asymptotic_sweep(rho, eps: float, n_max: int):
    """``[(n, C~_H^eps(rho^{(x)n}) / n)]`` for ``n = 1..n_max``; compare with :func:`measures.c_r`."""
    rho = mc.as_operator(rho)
    _check_eps(eps)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    mc._check_dim(rho.shape[0] ** n_max)
    out = []
    for n in range(1, n_max + 1):
        out.append((n, tilde_c_h(mc.n_copies(rho, n), eps)[0] / n))
    return out
