"""Coherence quantifiers and the relative entropies behind them.

All values are in bits. Smoothing uses the purified distance; by default the
ball contains subnormalized operators (``Ball.SUBNORMALIZED``), and the
closed ball ``P <= eps`` is used. Quantities that diverge are returned as
``math.inf``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np


from . import config
from . import matcore as mc
from .errors import CapExceeded, NumericalFailure
from .sdpcore import (Expr, SdpProblem, Status, bmat, diagm, embed, esum, fidelity_block, kron,
                      solve, trace)

INF_TOL = 1e-12  # optima below this are reported as an infinite divergence


class Ball(str, enum.Enum):
    NORMALIZED = "normalized"
    SUBNORMALIZED = "subnormalized"


@dataclass(frozen=True)
class SmoothingSpec:
    epsilon: float = 0.0
    ball: Ball = Ball.SUBNORMALIZED

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        object.__setattr__(self, "ball", Ball(self.ball))


def _spec(smoothing) -> SmoothingSpec:
    if smoothing is None:
        return SmoothingSpec()
    if isinstance(smoothing, SmoothingSpec):
        return smoothing
    return SmoothingSpec(float(smoothing))


@dataclass
class MeasureResult:
    measure: str
    epsilon: float
    value_bits: float
    status: str = Status.OPTIMAL.value
    witness: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL.value

    def to_json(self, with_witness: bool = False) -> dict:
        v = self.value_bits
        out = {"measure": self.measure, "epsilon": self.epsilon,
               "value_bits": "inf" if math.isinf(v) else v, "status": self.status}
        if with_witness and self.witness is not None:
            w = np.asarray(self.witness)
            out["witness"] = {"dim": w.shape[0], "re": w.real.tolist(), "im": w.imag.tolist()}
        return out


def _log2(x: float) -> float:
    return math.inf if x <= 0 else math.log2(x)


def _neglog2(x: float) -> float:
    return math.inf if x < INF_TOL else -math.log2(x)


def _check(sol, what):
    if sol.status in (Status.OPTIMAL, Status.INACCURATE):
        return sol
    raise NumericalFailure(f"{what}: solver ended with status {sol.status.value}")


def _clamp0(v: float) -> float:
    return 0.0 if -1e-7 < v < 0 else v


# --- entropic closed forms ----------------------------------------------------------


def c_r(rho) -> float:
    """Relative entropy of coherence ``S(Delta(rho)) - S(rho)``."""
    rho = mc.as_operator(rho)
    return max(0.0, mc.entropy_of_probs(np.diag(rho).real) - mc.von_neumann_entropy(rho))


def _support_proj(a, tol=1e-10):
    w, v = mc.eigh_psd(a)
    keep = w > tol * max(1.0, w.max(initial=0.0))
    return w[keep], v[:, keep]


def d_max(rho, sigma) -> float:
    """``log min{lam : rho <= lam sigma}``; infinite without support inclusion."""
    rho, sigma = mc.as_operator(rho), mc.as_operator(sigma)
    w, v = _support_proj(sigma)
    outside = rho - v @ (v.conj().T @ rho @ v) @ v.conj().T
    if np.abs(outside).max(initial=0.0) > 1e-9:
        return math.inf
    s = (v / np.sqrt(w)).conj().T  # sigma^{-1/2} restricted to the support
    lam = np.linalg.eigvalsh(mc.hermitian_part(s @ rho @ s.conj().T))[-1]
    return _log2(lam)


def d_max_sdp(rho, sigma) -> float:
    rho, sigma = mc.as_operator(rho), mc.as_operator(sigma)
    prob = SdpProblem()
    lam = prob.scalar("lam")
    prob.add(kron(sigma, lam) - rho >> 0)
    prob.minimize(lam)
    sol = solve(prob)
    if sol.status == Status.INFEASIBLE:
        return math.inf
    return _log2(_check(sol, "D_max").objective)


def d_min(rho, sigma) -> float:
    return _neglog2(mc.fidelity(rho, sigma) ** 2)


# --- max-type coherence measures ------------------------------------------------------


def _c_max(rho, spec: SmoothingSpec):
    d = rho.shape[0]
    prob = SdpProblem()
    y = prob.vector(d, "y")  # y = lam * delta
    prob.add(y >= 0)
    D = _diag_expr(y, d)
    if spec.epsilon == 0:
        prob.add(D - rho >> 0)
    else:
        rp = prob.hermitian(d, "rho_s")
        prob.add(rp >> 0, D - rp >> 0)
        _add_ball(prob, rp, rho, spec)
    prob.minimize(esum(y[i, 0] for i in range(d)))
    sol = _check(solve(prob), "C_max")
    return _log2(sol.objective), sol


def _diag_expr(y, d):
    return diagm(y)


def _add_ball(prob, rp, rho, spec: SmoothingSpec):
    """Constrain ``rp`` to the purified-distance ball of radius eps around normalized ``rho``."""
    tr = trace(rp).real
    if spec.ball == Ball.NORMALIZED:
        prob.add(tr == 1)
    else:
        prob.add(tr <= 1)
    # generalized fidelity reduces to F(rp, rho) because Tr rho = 1
    prob.add(fidelity_block(prob, rp, rho) >= math.sqrt(1 - spec.epsilon ** 2))


def c_max(rho, smoothing=None) -> float:
    """``min_delta D_max(rho || delta)``, smoothed over the eps-ball when ``eps > 0``."""
    return _clamp0(_c_max(mc.as_operator(rho), _spec(smoothing))[0])


def c_delta_max(rho, smoothing=None, tol: float = 1e-7) -> float:
    """``log min{lam : rho <= lam Delta(rho)}``, smoothed by bisection over ``lam``."""
    return _c_delta_max(mc.as_operator(rho), _spec(smoothing), tol)[0]


def _c_delta_max(rho, spec: SmoothingSpec, tol: float = 1e-7):
    """``(value, worst solver status)``."""
    p = np.diag(rho).real
    keep = p > 1e-12
    r = rho[np.ix_(keep, keep)]
    s = 1 / np.sqrt(p[keep])
    lam0 = np.linalg.eigvalsh(mc.hermitian_part(s[:, None] * r * s[None, :]))[-1]
    hi = max(lam0, 1.0)
    if spec.epsilon == 0 or hi <= 1 + tol:
        return _clamp0(_log2(hi)), Status.OPTIMAL
    d = rho.shape[0]
    target = math.sqrt(1 - spec.epsilon ** 2)
    worst = [Status.OPTIMAL]

    def feasible(lam):
        # best fidelity with rho among rp <= lam Delta(rp); posed as an optimisation
        # rather than a pure feasibility problem for numerical stability
        prob = SdpProblem()
        rp = prob.hermitian(d)
        tr = trace(rp).real
        prob.add(rp >> 0, lam * _dephase_expr(rp, d) - rp >> 0,
                 tr == 1 if spec.ball == Ball.NORMALIZED else tr <= 1)
        prob.maximize(fidelity_block(prob, rp, rho))
        sol = _check(solve(prob), "C_Delta_max")
        # the bisection resolves log(lam) to ``tol`` only, so inner solves are held to
        # a gap of ``tol`` rather than the global gap tolerance
        if sol.status != Status.OPTIMAL and (sol.gap > tol
                                             or sol.violation > config.TOLERANCES.feas_tol):
            worst[0] = sol.status
        return sol.objective >= target - 1e-9

    if feasible(1.0):
        return 0.0, worst[0]
    # bisection in log(lam); the feasible set grows with lam
    a, b = 0.0, math.log2(hi)
    while b - a > tol:
        mid = 0.5 * (a + b)
        if feasible(2 ** mid):
            b = mid
        else:
            a = mid
    return _clamp0(b), worst[0]


def _dephase_expr(e, d):
    return diagm(e.diag)


def c0_pure(psi, tol: float = 1e-9) -> float:
    """Log incoherent rank of a pure state."""
    v = np.asarray(psi if not isinstance(psi, mc.PureState) else psi.vec).reshape(-1)
    return math.log2(int((np.abs(v) > tol).sum()))


def incoherent_rank(psi, tol: float = 1e-9) -> int:
    v = np.asarray(psi if not isinstance(psi, mc.PureState) else psi.vec).reshape(-1)
    return int((np.abs(v) > tol).sum())


def support_sets(d: int, M: int, active=None):
    """All ``M``-subsets of the active indices (lexicographic), capped by config."""
    idx = list(range(d)) if active is None else [int(i) for i in active]
    M = min(M, len(idx))
    n = math.comb(len(idx), M)
    if n > config.CAPS.c0_blocks:
        raise CapExceeded(f"support blocks C({len(idx)},{M})", n, config.CAPS.c0_blocks,
                          "raise c0_blocks to allow")
    return [tuple(s) for s in itertools.combinations(idx, M)]


def add_support_blocks(prob: SdpProblem, d: int, M: int, active=None):
    """Declare ``B_S >= 0`` on every support ``S`` and return ``(A_expr, {S: B_S})``."""
    sets = support_sets(d, M, active)
    blocks = {}
    parts = []
    for S in sets:
        k = len(S)
        B = prob.hermitian(k)
        prob.add(B >> 0)
        blocks[S] = B
        parts.append(embed(B, S, d))
    return esum(parts), blocks


def c0_operator_le(A, M: int, tol: float = 1e-6):
    """Decide ``C_0(A) <= log M`` for PSD ``A`` through support blocks.

    Solves ``min t`` s.t. ``-t I <= A - sum_S B_S <= t I`` with ``B_S >= 0``
    supported on ``M``-subsets ``S``. Returns ``(ok, blocks)`` where ``ok`` is
    ``t <= tol * max(1, ||A||)`` and ``blocks`` maps each support to its
    ``|S| x |S|`` block.
    """
    A = mc.as_operator(A)
    d = A.shape[0]
    active = [i for i in range(d) if A[i, i].real > 1e-12]
    if len(active) <= M:
        S = tuple(active)
        return True, {S: A[np.ix_(S, S)]}
    prob = SdpProblem()
    t = prob.scalar("t")
    Aexpr, blocks = add_support_blocks(prob, d, M, active)
    tI = kron(np.eye(d), t)
    prob.add(tI - (A - Aexpr) >> 0, tI + (A - Aexpr) >> 0)
    prob.minimize(t)
    sol = _check(solve(prob), "C_0 support blocks")
    scale = max(1.0, float(np.abs(np.linalg.eigvalsh(mc.hermitian_part(A))).max()))
    ok = sol.objective <= tol * scale
    return ok, {S: sol.value(B) for S, B in blocks.items()}


# --- min-type measures ------------------------------------------------------------------


def c_min(rho) -> float:
    """``-log max_delta F(rho, delta)^2`` via a fidelity SDP over diagonal ``delta``."""
    return _clamp0(_c_min(mc.as_operator(rho))[0])


def _c_min(rho):
    d = rho.shape[0]
    prob = SdpProblem()
    p = prob.vector(d, "p")
    prob.add(p >= 0, esum(p[i, 0] for i in range(d)) == 1)
    # F(rho, delta) with the block posed on supp(rho)
    # X = diag(sqrt(w)) Z keeps the corner at the identity
    w, v = _support_proj(rho, tol=1e-12)
    Z = prob.complex_matrix(w.size, d)
    prob.add(bmat([[np.eye(w.size), Z], [Z.H, _diag_expr(p, d)]]) >> 0)
    prob.maximize(trace(Z @ (v * np.sqrt(w)[None, :])).real)
    sol = _check(solve(prob), "C_min")
    return _neglog2(sol.objective ** 2), sol


def hmin_cq(weighted, eps: float = 0.0, ball=Ball.SUBNORMALIZED):
    """Smooth conditional min-entropy ``H_min^eps(X|E)`` of ``sum_x |x><x| (x) w_x w_x^H``.

    ``weighted`` holds the unnormalized conditional vectors ``w_x`` as rows.
    The smoothing is restricted to operators that are block diagonal in
    ``X``; pinching on ``X`` keeps ``w~ <= 1 (x) sigma``, the trace and can
    only raise the fidelity, so this is no loss. Returns ``(value, sol)``.
    """
    W = np.asarray(weighted, dtype=complex)
    d, k = W.shape
    prob = SdpProblem()
    sig = prob.hermitian(k, "sigma")
    if eps == 0:
        for x in range(d):
            prob.add(sig - np.outer(W[x], W[x].conj()) >> 0)
    else:
        ts, trs = [], []
        for x in range(d):
            Wx = prob.hermitian(k)
            prob.add(Wx >> 0, sig - Wx >> 0)
            trs.append(trace(Wx).real)
            if np.vdot(W[x], W[x]).real < 1e-14:
                continue
            u = (W[x].conj()[None, :] @ Wx @ W[x][:, None]).real  # <w_x|Wx|w_x>
            t = prob.scalar()
            prob.add(bmat([[u, t], [t, np.ones((1, 1))]]) >> 0)
            ts.append(t)
        total = esum(trs)
        prob.add(total == 1 if Ball(ball) == Ball.NORMALIZED else total <= 1)
        prob.add(esum(ts) >= math.sqrt(1 - eps ** 2))
    prob.minimize(trace(sig).real)
    sol = _check(solve(prob), "H_min")
    return _neglog2(sol.objective), sol


def hmin_full(joint, dx: int, eps: float = 0.0, ball=Ball.SUBNORMALIZED):
    """Same quantity as :func:`hmin_cq` but smoothing over all operators on ``X (x) E``.

    Much slower; kept as an independent cross-check at small dimension.
    """
    joint = np.asarray(joint, dtype=complex)
    n = joint.shape[0]
    k = n // dx
    prob = SdpProblem()
    sig = prob.hermitian(k, "sigma")
    if eps == 0:
        prob.add(kron(np.eye(dx), sig) - joint >> 0)
    else:
        om = prob.hermitian(n, "omega")
        prob.add(om >> 0, kron(np.eye(dx), sig) - om >> 0)
        _add_ball(prob, om, joint, SmoothingSpec(eps, ball))
    prob.minimize(trace(sig).real)
    sol = _check(solve(prob), "H_min (full)")
    return _neglog2(sol.objective), sol


def c_min_smoothed(rho, eps: float, ball=Ball.SUBNORMALIZED, method: str = "cq") -> float:
    """Smoothed min-entropy of coherence as ``H_min^eps(X|E)`` of the dephased purification."""
    return _c_min_smoothed(rho, eps, ball, method)[0]


def _c_min_smoothed(rho, eps, ball=Ball.SUBNORMALIZED, method="cq"):
    if not 0 <= eps < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {eps}")
    _, cq = mc.purify(mc.as_operator(rho))
    if method == "cq":
        val, sol = hmin_cq(cq.weighted_env(), eps, ball)
    elif method == "full":
        val, sol = hmin_full(cq.joint, cq.num_symbols, eps, ball)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _clamp0(val), sol


# --- hypothesis testing --------------------------------------------------------------------


def d_h(rho, sigma, eps: float) -> float:
    """``-log min{Tr sigma W : 0 <= W <= 1, Tr rho W >= 1 - eps}``."""
    rho, sigma = mc.as_operator(rho), mc.as_operator(sigma)
    if not 0 <= eps < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {eps}")
    if eps == 0:
        # W must accept all of supp(rho); the projector onto it is optimal
        _, v = _support_proj(rho)
        return _neglog2(float(np.trace(v.conj().T @ sigma @ v).real))
    return _d_h(rho, sigma, eps)[0]


def _d_h(rho, sigma, eps):
    d = rho.shape[0]

    def run(scale):
        prob = SdpProblem()
        W = prob.hermitian(d, "W")
        prob.add(W >> 0, np.eye(d) - W >> 0, trace(rho @ W).real >= 1 - eps)
        prob.minimize(trace((scale * sigma) @ W).real)
        return _check(solve(prob), "D_H")

    sol, scale = run(1.0), 1.0
    # the solver's gap test is absolute; re-solve with the optimum near 1 so the
    # error stays small after taking the logarithm
    if 0 < sol.objective < 0.5:
        scale = 1 / sol.objective
        sol = run(scale)
    return _neglog2(sol.objective / scale), sol


def c_h(rho, eps: float) -> float:
    """``min_delta D_H^eps(rho || delta)`` as ``-log min{t : W_ii <= t}``."""
    return _clamp0(c_h_witness(rho, eps)[0])


def c_h_witness(rho, eps: float):
    """``(C_H value, optimal W, solution)``."""
    rho = mc.as_operator(rho)
    if not 0 <= eps < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {eps}")
    d = rho.shape[0]
    prob = SdpProblem()
    W = prob.hermitian(d, "W")
    t = prob.scalar("t")
    prob.add(W >> 0, np.eye(d) - W >> 0, trace(rho @ W).real >= 1 - eps)
    for i in range(d):
        prob.add(t - W[i, i].real >= 0)
    prob.minimize(t)
    sol = _check(solve(prob), "C_H")
    return _neglog2(sol.objective), sol.get("W"), sol


# --- dispatch for reports -------------------------------------------------------------------

MEASURES = ("C_r", "C_max", "C_Delta_max", "C_min", "C_H")


def measure_result(name: str, rho, eps: float = 0.0) -> MeasureResult:
    """Evaluate one named measure, capturing solver failures as a status."""
    rho = mc.as_operator(rho)
    w, status = None, Status.OPTIMAL
    try:
        if name == "C_r":
            v = c_r(rho)
        elif name == "C_max":
            val, sol = _c_max(rho, SmoothingSpec(eps))
            v, status = _clamp0(val), sol.status
        elif name == "C_Delta_max":
            v, status = _c_delta_max(rho, SmoothingSpec(eps))
        elif name == "C_min":
            v, sol = _c_min_smoothed(rho, eps)
            status = sol.status
        elif name == "C_H":
            val, w, sol = c_h_witness(rho, eps)
            v, status = _clamp0(val), sol.status
        else:
            raise KeyError(f"unknown measure {name!r}")
    except NumericalFailure as exc:
        return MeasureResult(name, eps, math.nan, "NumericalFailure", diagnostics={"error": str(exc)})
    return MeasureResult(name, eps, v, Status(status).value, w)
