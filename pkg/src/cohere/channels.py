"""Quantum channels, Choi operators, incoherent-class tests and permutation twirling.

Choi convention: ``Gamma = sum_ij |i><j| (x) Lambda(|i><j|)`` with the
reference system first, so ``Gamma_ij`` is the ``(i, j)`` block of size
``dim_out``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidWitness
from .matcore import as_operator, eigh_psd

NONZERO_TOL = 1e-9


@dataclass(frozen=True)
class QuantumChannel:
    """A CPTP map given by Kraus operators of shape ``(dim_out, dim_in)``."""

    kraus: tuple
    dim_in: int = field(init=False)
    dim_out: int = field(init=False)

    def __post_init__(self):
        ks = tuple(np.array(k, dtype=complex) for k in self.kraus)
        if not ks:
            raise DimensionMismatch("a channel needs at least one Kraus operator")
        shape = ks[0].shape
        if any(k.shape != shape or k.ndim != 2 for k in ks):
            raise DimensionMismatch("Kraus operators must share one 2-d shape")
        for k in ks:
            k.setflags(write=False)
        object.__setattr__(self, "kraus", ks)
        object.__setattr__(self, "dim_out", shape[0])
        object.__setattr__(self, "dim_in", shape[1])

    @classmethod
    def from_kraus(cls, kraus, check: bool = True, tol: float = 1e-9) -> "QuantumChannel":
        ch = cls(tuple(kraus))
        if check:
            err = ch.tp_error()
            if err > tol:
                raise ValueError(f"Kraus operators are not trace preserving (error {err:.2e})")
        return ch

    @classmethod
    def from_choi(cls, choi, dim_in: int, tol: float = 1e-9) -> "QuantumChannel":
        return cls.from_kraus(choi_to_kraus(choi, dim_in), tol=tol)

    @property
    def choi(self) -> np.ndarray:
        return kraus_to_choi(self.kraus)

    def choi_blocks(self) -> np.ndarray:
        """``Gamma_ij`` stacked as an array of shape ``(d_in, d_in, d_out, d_out)``."""
        di, do = self.dim_in, self.dim_out
        return self.choi.reshape(di, do, di, do).transpose(0, 2, 1, 3)

    def tp_error(self) -> float:
        s = sum(k.conj().T @ k for k in self.kraus)
        return float(np.abs(s - np.eye(self.dim_in)).max())

    def apply(self, rho) -> np.ndarray:
        rho = as_operator(rho)
        if rho.shape != (self.dim_in, self.dim_in):
            raise DimensionMismatch(f"channel acts on dim {self.dim_in}, got {rho.shape[0]}")
        return sum(k @ rho @ k.conj().T for k in self.kraus)

    def apply_choi(self, rho) -> np.ndarray:
        """``sum_ij rho_ij Gamma_ij``, the linear-extension form of the action."""
        rho = as_operator(rho)
        if rho.shape != (self.dim_in, self.dim_in):
            raise DimensionMismatch(f"channel acts on dim {self.dim_in}, got {rho.shape[0]}")
        return np.einsum("ij,ijab->ab", rho, self.choi_blocks())

    def tensor(self, other: "QuantumChannel") -> "QuantumChannel":
        return QuantumChannel(tuple(np.kron(a, b) for a in self.kraus for b in other.kraus))

    def compose(self, after: "QuantumChannel") -> "QuantumChannel":
        """``after o self``."""
        if after.dim_in != self.dim_out:
            raise DimensionMismatch("output of the first channel must feed the second")
        return QuantumChannel(tuple(b @ a for a in self.kraus for b in after.kraus))

    def to_json(self) -> dict:
        return {"dim_in": self.dim_in, "dim_out": self.dim_out,
                "kraus": [{"re": k.real.tolist(), "im": k.imag.tolist()} for k in self.kraus]}

    @classmethod
    def from_json(cls, data) -> "QuantumChannel":
        if isinstance(data, str):
            data = json.loads(data)
        ks = [np.asarray(k["re"], float) + 1j * np.asarray(k.get("im", 0.0), float)
              for k in data["kraus"]]
        ch = cls.from_kraus(ks)
        if (ch.dim_in, ch.dim_out) != (data.get("dim_in", ch.dim_in), data.get("dim_out", ch.dim_out)):
            raise DimensionMismatch("declared dimensions disagree with the Kraus operators")
        return ch


def kraus_to_choi(kraus) -> np.ndarray:
    # |K>> = sum_i |i> (x) K|i>, i.e. row index i * d_out + o holds K[o, i]
    vecs = np.stack([np.asarray(k, dtype=complex).T.reshape(-1) for k in kraus], axis=1)
    return vecs @ vecs.conj().T


def choi_to_kraus(choi, dim_in: int, tol: float = 1e-12) -> list:
    """Canonical Kraus set from the eigenvectors of the Choi operator."""
    choi = np.asarray(choi, dtype=complex)
    n = choi.shape[0]
    if n % dim_in:
        raise DimensionMismatch(f"Choi dimension {n} is not a multiple of {dim_in}")
    dim_out = n // dim_in
    w, v = eigh_psd(choi)
    if w.min() < -1e-9:
        raise ValueError(f"Choi operator is not PSD (eigenvalue {w.min():.2e})")
    out = []
    for lam, vec in zip(w[::-1], v.T[::-1]):
        if lam <= tol * max(1.0, w.max()):
            continue
        out.append((np.sqrt(lam) * vec).reshape(dim_in, dim_out).T)
    return out


def identity_channel(d: int) -> QuantumChannel:
    return QuantumChannel((np.eye(d),))


def dephasing_channel(d: int) -> QuantumChannel:
    return QuantumChannel(tuple(np.diag(np.eye(d)[x]) for x in range(d)))


def unitary_channel(u) -> QuantumChannel:
    return QuantumChannel((np.asarray(u, dtype=complex),))


# --- class membership -----------------------------------------------------------


@dataclass
class ClassReport:
    mio: bool
    dio: bool
    io: bool
    sio: bool
    diio: bool
    violations: dict
    io_source: str | None = None  # "kraus", "choi" or None
    sio_source: str | None = None

    def to_json(self) -> dict:
        return {"MIO": self.mio, "DIO": self.dio, "IO": self.io, "SIO": self.sio,
                "DIIO": self.diio, "violations": self.violations,
                "io_source": self.io_source, "sio_source": self.sio_source}


def _second_largest(a: np.ndarray, axis: int) -> float:
    if a.shape[axis] < 2:
        return 0.0
    s = np.sort(np.abs(a), axis=axis)
    return float(np.take(s, -2, axis=axis).max(initial=0.0))


def _incoherent_violation(kraus, rows: bool) -> float:
    """Worst second-largest modulus per column (and per row when ``rows``)."""
    worst = 0.0
    for k in kraus:
        worst = max(worst, _second_largest(k, axis=0))
        if rows:
            worst = max(worst, _second_largest(k, axis=1))
    return worst


def classify(channel: QuantumChannel, tol: float = 1e-8) -> ClassReport:
    """Test MIO and DIO on the Choi operator and IO/SIO on two Kraus sets.

    The IO and SIO tests try the given Kraus list and the canonical Kraus
    set built from Choi eigenvectors; a flag is set if either passes. A
    channel that is IO only in some other decomposition is reported as not
    IO (false negatives are possible, false positives are not).
    """
    blocks = channel.choi_blocks()
    di = channel.dim_in
    mio_v = 0.0
    dio_v = 0.0
    for i in range(di):
        g = blocks[i, i]
        mio_v = max(mio_v, float(np.abs(g - np.diag(np.diag(g))).max(initial=0.0)))
        for j in range(di):
            if i != j:
                dio_v = max(dio_v, float(np.abs(np.diag(blocks[i, j])).max(initial=0.0)))
    dio_v = max(dio_v, mio_v)
    candidates = {"kraus": channel.kraus, "choi": choi_to_kraus(channel.choi, di)}
    io_v = {k: _incoherent_violation(v, rows=False) for k, v in candidates.items()}
    sio_v = {k: _incoherent_violation(v, rows=True) for k, v in candidates.items()}
    io_source = next((k for k in candidates if io_v[k] <= NONZERO_TOL), None)
    sio_source = next((k for k in candidates if sio_v[k] <= NONZERO_TOL), None)
    mio, dio = mio_v <= tol, dio_v <= tol
    io, sio = io_source is not None, sio_source is not None
    violations = {"MIO": mio_v, "DIO": dio_v, "IO": min(io_v.values()),
                  "SIO": min(sio_v.values())}
    return ClassReport(mio=mio, dio=dio, io=io, sio=sio, diio=io and dio,
                       violations=violations, io_source=io_source, sio_source=sio_source)


# --- permutation twirl -------------------------------------------------------------


def _as_blocks(choi_blocks, M):
    g = np.asarray(choi_blocks, dtype=complex)
    if g.ndim == 2:  # full Choi operator with output dimension M
        n = g.shape[0]
        if n % M:
            raise DimensionMismatch(f"Choi dimension {n} is not a multiple of M = {M}")
        di = n // M
        g = g.reshape(di, M, di, M).transpose(0, 2, 1, 3)
    if g.ndim != 4 or g.shape[2:] != (M, M):
        raise DimensionMismatch(f"expected blocks of output dimension {M}, got {g.shape}")
    return g


def twirl(choi_blocks, M: int) -> np.ndarray:
    """Average every block over conjugation by all ``M!`` permutation matrices.

    Uses the closed form of the group average: diagonal entries become the
    mean diagonal entry and off-diagonal entries the mean off-diagonal
    entry. Accepts blocks ``(d, d, M, M)`` or a full Choi operator.
    """
    g = _as_blocks(choi_blocks, M)
    tr = np.einsum("ijaa->ij", g)
    out = np.zeros_like(g)
    eye = np.eye(M)
    if M > 1:
        off = (g.sum(axis=(2, 3)) - tr) / (M * (M - 1))
        out += off[:, :, None, None] * (np.ones((M, M)) - eye)
    out += (tr / M)[:, :, None, None] * eye
    return out


def twirl_parameters(choi_blocks, M: int):
    """Coefficients ``(alpha, beta)`` with ``Gamma_ij = alpha Psi_M + beta (1 - Psi_M)/(M - 1)``."""
    g = twirl(choi_blocks, M)
    psi = np.full((M, M), 1.0 / M)
    alpha = np.einsum("ijab,ba->ij", g, psi)
    beta = np.einsum("ijaa->ij", g) - alpha
    return alpha, beta


def twirl_brute_force(choi_blocks, M: int) -> np.ndarray:
    """Explicit average over all permutations (for cross-checks at small M)."""
    import itertools

    g = _as_blocks(choi_blocks, M)
    out = np.zeros_like(g)
    count = 0
    for perm in itertools.permutations(range(M)):
        P = np.eye(M)[list(perm)]
        out += np.einsum("ab,ijbc,dc->ijad", P, g, P)
        count += 1
    return out / count


# --- SIO channel from an incoherent-rank witness -------------------------------


def decomposition_from_blocks(blocks: dict, M: int, tol: float = 1e-12) -> list:
    """Turn support blocks ``{S: B_S}`` with ``A = sum_S B_S`` into ``[(phi, S)]``.

    Each ``B_S = sum_k lam_k v_k v_k^H`` yields vectors ``phi = sqrt(M lam) v``
    supported on ``S`` so that ``A = (1/M) sum phi phi^H``.
    """
    out = []
    for support, B in blocks.items():
        w, v = eigh_psd(np.asarray(B, dtype=complex))
        for lam, vec in zip(w, v.T):
            if lam > tol:
                out.append((np.sqrt(M * lam) * vec, tuple(support)))
    return out


def sio_channel_from_witness(A, M: int, decomposition, tol: float = 1e-8) -> QuantumChannel:
    """SIO channel ``K_a = sum_{x in S_a} conj(c_{a,x}) |f_a(x)><x|`` realising ``Tr rho A``.

    ``decomposition`` is a list of ``(coeffs, support)`` where ``coeffs`` is a
    vector either of length ``len(support)`` or of full length ``d``, and
    ``A = (1/M) sum phi phi^H``. ``f_a`` maps the support order-preservingly
    onto ``0..|S|-1`` of the ``M``-dimensional output, so every ``K_a`` has at
    most one nonzero per row and column and the output state satisfies
    ``Tr Lambda(rho) Psi_M = Tr rho A``.
    """
    A = np.asarray(A, dtype=complex)
    d = A.shape[0]
    recon = np.zeros((d, d), dtype=complex)
    kraus = []
    for coeffs, support in decomposition:
        support = tuple(int(s) for s in support)
        if len(support) > M:
            raise InvalidWitness(f"support {support} has more than M = {M} elements")
        if len(set(support)) != len(support) or any(not 0 <= s < d for s in support):
            raise InvalidWitness(f"invalid support {support}")
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if coeffs.size == d:
            outside = np.delete(coeffs, list(support))
            if outside.size and np.abs(outside).max() > tol:
                raise InvalidWitness(f"vector has weight outside its support {support}")
            c = coeffs[list(support)]
        elif coeffs.size == len(support):
            c = coeffs
        else:
            raise InvalidWitness("coefficient vector length matches neither d nor |S|")
        phi = np.zeros(d, dtype=complex)
        phi[list(support)] = c
        recon += np.outer(phi, phi.conj()) / M
        K = np.zeros((M, d), dtype=complex)
        for pos, x in enumerate(support):
            K[pos, x] = np.conj(c[pos])
        kraus.append(K)
    err = float(np.abs(recon - A).max())
    if err > tol:
        raise InvalidWitness(f"decomposition reconstructs A only to {err:.2e}")
    # exact trace preservation: the column norms equal M * A_xx = 1 up to solver noise
    norms = np.sqrt(sum(np.abs(K) ** 2 for K in kraus).sum(axis=0))
    if np.any(norms < 1e-12):
        raise InvalidWitness("some input basis state is not covered by any support")
    kraus = [K / norms[None, :] for K in kraus]
    return QuantumChannel.from_kraus(kraus, tol=1e-8)


def count_supports(d: int, M: int) -> int:
    return math.comb(d, M)
