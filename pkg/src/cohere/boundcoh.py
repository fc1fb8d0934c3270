"""Bound coherence of ``rho = (|++><++| + |-+~><-+~|) / 2`` under SIO.

``rho^{(x)n}`` is an equal mixture of ``2^n`` maximally coherent states whose
phases are powers of ``i``. The SIO fidelity ceiling at ``M = 2`` stays at
``(2 + sqrt 2)/4`` for every ``n`` while ``C_r(rho^{(x)n}) = n``, whereas IO
distils ``n`` cosbits exactly.
"""
from __future__ import annotations

import hashlib
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import config
from . import matcore as mc
from . import measures, oneshot
from .channels import QuantumChannel
from .errors import CapExceeded

CEILING = (2 + math.sqrt(2)) / 4  # 1 - eps with eps = 1/2 - sqrt(2)/4

_PLUS_PLUS = np.full(4, 0.5, dtype=complex)
_MINUS_PLUS_I = np.array([1, 1j, -1, -1j], dtype=complex) / 2


def bound_state() -> np.ndarray:
    """The two-qubit state, basis order ``|q1 q2>`` with index ``2 q1 + q2``."""
    return 0.5 * (np.outer(_PLUS_PLUS, _PLUS_PLUS.conj())
                  + np.outer(_MINUS_PLUS_I, _MINUS_PLUS_I.conj()))


# --- the phase ensemble -------------------------------------------------------------


@dataclass(frozen=True)
class PhaseEnsemble:
    n: int
    states: np.ndarray  # (2^n, 4^n); row j is |b_j>
    labels: np.ndarray  # (2^n, n); labels[j, k] = b_{j,k}

    def mixture(self) -> np.ndarray:
        return self.states.T @ self.states.conj() / len(self.states)


def _check_n(n: int, cap: int, what: str):
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > cap:
        raise CapExceeded(what, n, cap, f"n = {cap} is the largest allowed by default")


def build_ensemble(n: int) -> PhaseEnsemble:
    """States ``4^{-n/2} sum_m i^{b . m} |sum_k 4^k m_k>`` for all ``b`` in ``{0,1}^n``.

    Label ``j`` has bits ``b_{j,k} = (j >> k) & 1``.
    """
    _check_n(n, config.CAPS.ensemble_n, "ensemble copies")
    labels = np.array([[(j >> k) & 1 for k in range(n)] for j in range(2 ** n)], dtype=np.int64)
    digits = _digits(np.arange(4 ** n), n)  # (4^n, n)
    exponent = (labels @ digits.T) % 4  # (2^n, 4^n)
    states = (1j ** exponent) / 2 ** n
    return PhaseEnsemble(n, states.astype(complex), labels)


def _digits(idx, n):
    """Little-endian base-4 digits ``m_k`` of each index."""
    idx = np.asarray(idx, dtype=np.int64)
    return np.stack([(idx // 4 ** k) % 4 for k in range(n)], axis=-1)


def _index(m_vec) -> int:
    return int(sum(int(m) * 4 ** k for k, m in enumerate(m_vec)))


# --- phase statistics -----------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseCounts:
    m_vec: tuple
    m_vec_prime: tuple
    counts: tuple  # (N_0, N_pi/2, N_pi, N_3pi/2)

    @property
    def max_count(self) -> int:
        return max(self.counts)


def _check_pair(n, m_vec, m_vec_prime):
    m, mp = tuple(int(v) for v in m_vec), tuple(int(v) for v in m_vec_prime)
    if len(m) != n or len(mp) != n:
        raise ValueError(f"index vectors must have length {n}")
    if any(not 0 <= v < 4 for v in m + mp):
        raise ValueError("index vector entries must lie in {0, 1, 2, 3}")
    if m == mp:
        raise ValueError("index vectors must be distinct")
    return m, mp


def phase_counts(ensemble: PhaseEnsemble, m_vec, m_vec_prime) -> PhaseCounts:
    """Number of ensemble states with relative phase ``(pi/2) sum_k b_k (m'_k - m_k)`` in each class."""
    m, mp = _check_pair(ensemble.n, m_vec, m_vec_prime)
    rel = (ensemble.labels @ (np.array(mp) - np.array(m))) % 4
    counts = tuple(int(c) for c in np.bincount(rel, minlength=4))
    return PhaseCounts(m, mp, counts)


def all_pairs(n: int):
    """Every unordered pair of distinct index vectors in ``{0,1,2,3}^n``."""
    vecs = list(itertools.product(range(4), repeat=n))
    return itertools.combinations(vecs, 2)


def max_phase_count(ensemble: PhaseEnsemble) -> int:
    """Largest phase-class count over all pairs (exhaustive)."""
    n = ensemble.n
    vecs = np.array(list(itertools.product(range(4), repeat=n)))
    best = 0
    for i in range(len(vecs)):
        diff = (vecs[i + 1:] - vecs[i]) % 4  # (P, n)
        if not len(diff):
            continue
        rel = (ensemble.labels @ diff.T) % 4  # (2^n, P)
        for c in range(4):
            best = max(best, int((rel == c).sum(axis=0).max()))
    return best


def overlap_formula(ensemble: PhaseEnsemble, m_vec, m_vec_prime, theta: float, phi: float) -> float:
    """Closed form of ``<psi| rho^{(x)n} |psi>`` for ``psi = cos t |m> + sin t e^{i phi} |m'>``.

    ``1/4^n + sin(2t)/(2^n 4^n) [(N_0 - N_pi) cos phi + (N_pi/2 - N_3pi/2) sin phi]``.
    """
    c = phase_counts(ensemble, m_vec, m_vec_prime).counts
    n = ensemble.n
    return (1 / 4 ** n + math.sin(2 * theta) / (2 ** n * 4 ** n)
            * ((c[0] - c[2]) * math.cos(phi) + (c[1] - c[3]) * math.sin(phi)))


def overlap_direct(rho_n, m_vec, m_vec_prime, theta: float, phi: float) -> float:
    """``<psi| rho_n |psi>`` evaluated on the matrix."""
    rho_n = np.asarray(rho_n)
    i, j = _index(m_vec), _index(m_vec_prime)
    psi = np.zeros(rho_n.shape[0], dtype=complex)
    psi[i] = math.cos(theta)
    psi[j] += math.sin(theta) * np.exp(1j * phi)
    return float(np.vdot(psi, rho_n @ psi).real)


def overlap_supremum(n: int, grid: int = 65) -> float:
    """Max of the closed form over all pairs and a ``grid x grid`` mesh of ``(theta, phi)``."""
    ens = build_ensemble(n)
    theta = np.linspace(0, math.pi, grid)
    phi = np.linspace(0, 2 * math.pi, grid)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    best = -math.inf
    seen = set()
    for m, mp in all_pairs(n):
        c = phase_counts(ens, m, mp).counts
        if c in seen:
            continue
        seen.add(c)
        val = (1 / 4 ** n + np.sin(2 * T) / (2 ** n * 4 ** n)
               * ((c[0] - c[2]) * np.cos(P) + (c[1] - c[3]) * np.sin(P)))
        best = max(best, float(val.max()))
    return best


# --- certificates ----------------------------------------------------------------------------


def witness_hash(blocks: dict) -> str:
    h = hashlib.sha256()
    for S in sorted(blocks):
        h.update(repr(S).encode())
        h.update(np.round(np.asarray(blocks[S], dtype=complex), 9).tobytes())
    return h.hexdigest()[:16]


def certify_bound(n: int, allow_large: bool = False) -> dict:
    """SIO ceiling at ``M = 2`` for ``rho^{(x)n}`` next to the combinatorial bound.

    ``allow_large`` lifts the copy cap for the SDP (``n >= 3`` needs
    ``binom(4^n, 2)`` support blocks, so ``c0_blocks`` must be raised too).
    """
    if not allow_large:
        _check_n(n, config.CAPS.certify_n, "certified copies")
    rho_n = mc.n_copies(bound_state(), n)
    t0 = time.perf_counter()
    value, A, blocks, sol = oneshot.sio_fidelity(rho_n, 2)
    runtime = time.perf_counter() - t0
    ens = build_ensemble(n)
    max_count = max_phase_count(ens)
    return {
        "n": n,
        "ceiling": value,
        "bound": CEILING,
        "within_bound": value <= CEILING + 1e-6,
        "gap_to_bound": CEILING - value,
        "status": sol.status.value if sol is not None else "Optimal",
        "trace_A": float(np.trace(A).real),
        "trace_ok": abs(np.trace(A).real - 4 ** n / 2) <= 1e-6 * 4 ** n,
        "max_phase_count": max_count,
        "phase_count_ok": max_count <= 2 ** (n - 1),
        "per_vector_bound": (1 + math.sqrt(2) / 2) / 4 ** n,
        "c_r": measures.c_r(rho_n),
        "witness_hash": witness_hash(blocks),
        "runtime_s": runtime,
    }


def io_distiller(n: int = 1) -> QuantumChannel:
    """IO channel sending ``rho^{(x)n}`` to ``Psi_{2^n}`` exactly.

    Per copy: measure the first qubit in the ``|+->`` basis and, on outcome
    ``-``, undo the phase ``diag(1, i)`` on the second qubit.
    """
    _check_n(n, config.CAPS.ensemble_n, "distiller copies")
    eye = np.eye(2)
    fix = np.diag([1, -1j])
    e0 = np.hstack([eye, eye]) / math.sqrt(2)  # <+|_1 (x) 1_2
    e1 = np.hstack([fix, -fix]) / math.sqrt(2)  # <-|_1 (x) diag(1, -i)
    kraus = [np.ones((1, 1), dtype=complex)]
    for _ in range(n):
        kraus = [np.kron(k, e) for k in kraus for e in (e0, e1)]
    return QuantumChannel.from_kraus(kraus)
