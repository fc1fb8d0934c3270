"""Explicit IO distillation protocol and randomness extraction.

The distiller hashes the dephased input with a function ``G : [d] -> [M]``,
rotates the remainder of the input with an Uhlmann isometry ``V`` so that the
key register ``K`` is purified by a copy ``L``, measures ``L`` in the
Fourier basis and undoes the phase on ``K``. Every Kraus operator maps each
basis state to a multiple of the basis state ``|G(x)>``, so the channel is
incoherent and dephasing covariant.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import config
from . import matcore as mc
from . import measures
from .channels import QuantumChannel, classify
from .errors import CapExceeded, NotDeterministic, NumericalFailure

_BATCH = 4096


# --- hash functions and search modes -----------------------------------------------


@dataclass(frozen=True)
class HashFunction:
    domain_size: int
    range_size: int
    table: tuple

    def __post_init__(self):
        table = tuple(int(v) for v in self.table)
        if len(table) != self.domain_size:
            raise ValueError(f"table has {len(table)} entries for a domain of {self.domain_size}")
        if any(not 0 <= v < self.range_size for v in table):
            raise ValueError(f"table values must lie in [0, {self.range_size})")
        object.__setattr__(self, "table", table)

    def __call__(self, x: int) -> int:
        return self.table[x]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "G(x)"])
        w.writerows(enumerate(self.table))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, range_size: int) -> "HashFunction":
        rows = list(csv.reader(io.StringIO(text)))
        body = [r for r in rows[1:] if r]
        pairs = sorted((int(x), int(g)) for x, g in body)
        if [x for x, _ in pairs] != list(range(len(pairs))):
            raise ValueError("hash table must list every x in 0..d-1 exactly once")
        return cls(len(pairs), range_size, tuple(g for _, g in pairs))

    def to_json(self) -> dict:
        return {"domain_size": self.domain_size, "range_size": self.range_size,
                "table": list(self.table)}


@dataclass(frozen=True)
class Exhaustive:
    """Search all ``M**d`` tables in lexicographic order."""


@dataclass(frozen=True)
class RandomSample:
    """Draw ``k`` uniformly random tables from a seeded generator."""
    k: int
    seed: int = 0


def _search_mode(search):
    if search is None or search == "exhaustive":
        return Exhaustive()
    if isinstance(search, (Exhaustive, RandomSample)):
        return search
    raise ValueError(f"unknown search mode {search!r}")


def _tables(d: int, M: int, search):
    """Yield ``(B, d)`` integer arrays of candidate tables."""
    if isinstance(search, Exhaustive):
        total = M ** d
        if total > config.CAPS.hash_enum:
            raise CapExceeded(f"hash tables {M}^{d}", total, config.CAPS.hash_enum,
                              "use RandomSample or raise hash_enum")
        it = itertools.product(range(M), repeat=d)
        while True:
            chunk = list(itertools.islice(it, _BATCH))
            if not chunk:
                return
            yield np.asarray(chunk, dtype=np.int64).reshape(len(chunk), d)
    else:
        rng = np.random.default_rng(search.seed)
        left = search.k
        while left > 0:
            n = min(left, _BATCH)
            yield rng.integers(M, size=(n, d))
            left -= n


def _cond_blocks(weighted, tables, M):
    """``Omega_k = sum_{G(x)=k} w_x w_x^H`` for a batch of tables, shape ``(B, M, r, r)``."""
    P = np.einsum("xi,xj->xij", weighted, weighted.conj())
    onehot = np.eye(M)[tables]  # (B, d, M)
    return np.einsum("bxk,xij->bkij", onehot, P)


def _distance(blocks, sigma, M):
    """``1/2 sum_k ||Omega_k - sigma/M||_1`` for each table in the batch."""
    diff = blocks - sigma[None, None] / M
    return 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum(axis=(-1, -2))


def best_hash(weighted, M: int, search=None):
    """Table minimizing ``1/2 || (G (x) id) omega - tau_K (x) omega^E ||_1``.

    Ties go to the first table in search order. Returns ``(HashFunction, distance)``.
    """
    W = np.asarray(weighted, dtype=complex)
    d = W.shape[0]
    search = _search_mode(search)
    sigma = W.T @ W.conj()  # omega^E = sum_x w_x w_x^H
    best_d, best_t = math.inf, None
    for tables in _tables(d, M, search):
        dist = _distance(_cond_blocks(W, tables, M), sigma, M)
        i = int(np.argmin(dist))
        if dist[i] < best_d - 1e-12:
            best_d, best_t = float(dist[i]), tables[i]
    return HashFunction(d, M, tuple(best_t)), max(0.0, best_d)


# --- the distiller -------------------------------------------------------------------


@dataclass
class ProtocolTrace:
    G: HashFunction
    search: str
    epsilon: float | None
    eta: float
    omega_KE: np.ndarray  # (M, r, r) conditional blocks Omega_k
    sigma_E: np.ndarray
    V: np.ndarray  # isometry A -> L (x) F, row index l * dim_F + f
    dim_F: int
    kraus: list
    cross_gram: np.ndarray
    overlap: float
    trace_distance: float
    fidelity: float  # Tr Lambda(rho) Psi_M
    weighted: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "G": self.G.to_json(), "search": self.search, "epsilon": self.epsilon,
            "eta": self.eta, "omega_KE": [mc.op_to_json(b) for b in self.omega_KE],
            "sigma_E": mc.op_to_json(self.sigma_E), "V": mc.op_to_json(self.V),
            "dim_F": self.dim_F, "kraus": [mc.op_to_json(k) for k in self.kraus],
            "overlap": self.overlap, "trace_distance": self.trace_distance,
            "fidelity": self.fidelity,
        }


def _uhlmann(W, G: HashFunction, sigma, M: int):
    """Cross-Gram matrix, optimal isometry, overlap and ``dim F``."""
    d = W.shape[0]
    s, e = mc.eigh_psd(sigma)
    keep = s > 1e-12 * max(1.0, s.max(initial=0.0))
    s, e = s[keep], e[:, keep]
    dim_F = max(s.size, -(-d // M))
    # Gram[(l, f), x] = (<Phi|^{KL} <zeta|^{EF}) |G(x)>_K |w_x>_E |l>_L |f>_F
    gram = np.zeros((M * dim_F, d), dtype=complex)
    amp = (np.sqrt(s)[:, None] * (e.conj().T @ W.T)) / np.sqrt(M)  # (rank, d)
    for x in range(d):
        l = G(x)
        gram[l * dim_F:l * dim_F + s.size, x] = amp[:, x]
    try:
        u, sv, wh = np.linalg.svd(gram, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD of the cross-Gram matrix failed: {exc}") from exc
    # the overlap is sum_{i,x} gram[i, x] V[i, x], maximized by conj(U W^H)
    V = np.conj(u @ wh)
    return gram, V, float(sv.sum()), dim_F


def _kraus(V, G: HashFunction, M: int, dim_F: int):
    d = V.shape[1]
    Vr = V.reshape(M, dim_F, d)
    phases = np.exp(2j * np.pi * np.outer(np.arange(M), np.arange(M)) / M)  # [alpha, k]
    out = []
    for a in range(M):
        # c_{alpha beta}(x) = <alpha~|_L <beta|_F V |x>
        c = np.einsum("l,lbx->bx", phases[a].conj(), Vr) / np.sqrt(M)
        for b in range(dim_F):
            K = np.zeros((M, d), dtype=complex)
            for x in range(d):
                k = G(x)
                K[k, x] = phases[a, k] * c[b, x]
            if np.abs(K).max() > 1e-14:
                out.append(K)
    return out


def build_io_distiller(rho, M: int, g_search=None, eta: float = 0.05):
    """Distillation channel onto ``Psi_M`` and its :class:`ProtocolTrace`."""
    rho = mc.as_operator(rho)
    d = rho.shape[0]
    if not 1 <= M <= d:
        raise ValueError(f"need 1 <= M <= d = {d}, got {M}")
    search = _search_mode(g_search)
    _, cq = mc.purify(rho)
    W = cq.weighted_env()
    sigma = W.T @ W.conj()
    G, dist = best_hash(W, M, search)
    blocks = _cond_blocks(W, np.asarray([G.table]), M)[0]
    gram, V, overlap, dim_F = _uhlmann(W, G, sigma, M)
    kraus = _kraus(V, G, M, dim_F)
    channel = QuantumChannel.from_kraus(kraus, tol=1e-8)
    psi = mc.maximally_coherent(M).projector()
    fid = float(np.trace(channel.apply(rho) @ psi).real)
    mode = "exhaustive" if isinstance(search, Exhaustive) else f"random_sample(k={search.k})"
    trace = ProtocolTrace(G, mode, None, eta, blocks, sigma, V, dim_F, kraus, gram, overlap,
                          dist, fid, W)
    return channel, trace


def _theorem_epsilon(rho, M: int, eta: float, tol: float = 1e-4):
    """Smallest ``eps`` with ``C_min^{eps/2 - eta}(rho) - 2 log(1/eta) >= log M``, or ``None``."""
    need = math.log2(M) + 2 * math.log2(1 / eta)

    def ok(r):
        return measures.c_min_smoothed(rho, r) >= need - 1e-9

    hi = 1 - 1e-6
    if not ok(hi):
        return None
    lo = 0.0
    if ok(lo):
        return 2 * eta
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return 2 * (hi + eta)


def verify_achievability(rho, M: int, channel: QuantumChannel, trace: ProtocolTrace,
                         theorem: bool = True) -> dict:
    """Check the protocol's fidelity against its certificates; returns a report dict."""
    rho = mc.as_operator(rho)
    psi = mc.maximally_coherent(M).projector()
    fid = float(np.trace(channel.apply(rho) @ psi).real)
    root = math.sqrt(max(fid, 0.0))
    sv_sum = float(np.linalg.svd(trace.cross_gram, compute_uv=False).sum())
    # F(Omega^{KE}, tau_K (x) sigma^E) = sum_k F(Omega_k, sigma / M)
    uhlmann = sum(mc.fidelity(b, trace.sigma_E / M) for b in trace.omega_KE)
    fvdg = max(0.0, 1 - trace.trace_distance)
    cls = classify(channel)
    report = {
        "fidelity": fid,
        "overlap": trace.overlap,
        "trace_distance": trace.trace_distance,
        "cptp_error": channel.tp_error(),
        "polar_optimal": abs(trace.overlap - sv_sum) <= 1e-8,
        "uhlmann": abs(trace.overlap - uhlmann) <= 1e-6,
        "monotonicity": root >= trace.overlap - 1e-8,
        "fuchs_van_de_graaf": root >= fvdg - 1e-8,
        "implied_fidelity": fvdg ** 2,
        "io": cls.io,
        "dio": cls.dio,
        "diio": cls.diio,
    }
    if theorem:
        eps = _theorem_epsilon(rho, M, trace.eta)
        report["theorem_epsilon"] = eps
        report["theorem_vacuous"] = eps is None or eps >= 1
        report["theorem"] = report["theorem_vacuous"] or fid >= 1 - eps - 1e-8
    checks = ["polar_optimal", "uhlmann", "monotonicity", "fuchs_van_de_graaf", "diio"]
    if theorem:
        checks.append("theorem")
    report["cptp"] = report["cptp_error"] <= 1e-8
    report["ok"] = all(report[k] for k in checks) and report["cptp"]
    return report


# --- randomness extraction -------------------------------------------------------------------


def ell_ext(rho, eps: float, search=None):
    """Extractable randomness: largest ``log M`` with some ``G`` at distance ``<= eps``.

    The distance is ``1/2 || (G (x) id) omega^{AE} - tau_K (x) omega^E ||_1``
    with ``omega^E`` the reduced state. Returns ``(bits, HashFunction)``.
    """
    rho = mc.as_operator(rho)
    if not 0 <= eps < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {eps}")
    d = rho.shape[0]
    _, cq = mc.purify(rho)
    W = cq.weighted_env()
    best = (0.0, HashFunction(d, 1, (0,) * d))
    for M in range(2, d + 1):
        G, dist = best_hash(W, M, search)
        if dist <= eps + 1e-12:
            best = (math.log2(M), G)
    return best


def extractor_from_distiller(rho, channel: QuantumChannel, trace: ProtocolTrace):
    """Read ``x -> G(x)`` off ``Delta o Lambda`` and return ``(HashFunction, distance)``.

    The distance is that of ``(Delta o Lambda (x) id)`` applied to the
    purification from ``tau_K (x) omega^E``; it must not exceed
    ``sqrt(2 eps_hat)`` with ``eps_hat = 1 - Tr Lambda(rho) Psi_M``.
    """
    rho = mc.as_operator(rho)
    d, M = channel.dim_in, channel.dim_out
    table = []
    for x in range(d):
        out = np.diag(channel.apply(np.diag(np.eye(d)[x]))).real
        k = int(np.argmax(out))
        if abs(out[k] - 1) > 1e-8 or np.abs(np.delete(out, k)).max(initial=0.0) > 1e-8:
            raise NotDeterministic(f"Delta(Lambda(|{x}><{x}|)) is not a basis projector")
        table.append(k)
    G = HashFunction(d, M, tuple(table))
    psi_vec, cq = mc.purify(rho)
    W = cq.weighted_env()
    r = W.shape[1]
    # (Delta o Lambda (x) id)(psi psi^H) = sum_{x,y} Delta(Lambda(|x><y|)) (x) w_x w_y^H
    joint = np.zeros((M * r, M * r), dtype=complex)
    for x in range(d):
        for y in range(d):
            exy = np.zeros((d, d))
            exy[x, y] = 1
            out = np.diag(np.diag(sum(K @ exy @ K.conj().T for K in channel.kraus)))
            joint += np.kron(out, np.outer(W[x], W[y].conj()))
    target = np.kron(np.eye(M) / M, W.T @ W.conj())
    dist = mc.trace_distance(joint, target)
    psi = mc.maximally_coherent(M).projector()
    eps_hat = max(0.0, 1 - float(np.trace(channel.apply(rho) @ psi).real))
    if dist > math.sqrt(2 * eps_hat) + 1e-8:
        raise NumericalFailure(
            f"extractor distance {dist:.3e} exceeds sqrt(2 eps_hat) = {math.sqrt(2 * eps_hat):.3e}")
    return G, dist
