"""Matrix and quantum-state primitives.

The incoherent basis is the computational basis, indexed from 0. Logarithms
are base 2 throughout. States are handled as plain ``numpy`` arrays; the
:class:`DensityMatrix`, :class:`PureState` and :class:`CqState` containers
validate invariants at the boundaries (JSON input, constructors) and convert
to arrays through ``np.asarray``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import CapExceeded, DimensionMismatch, InvalidState

HERM_TOL = 1e-10
PSD_TOL = 1e-10


def as_operator(x) -> np.ndarray:
    """Return ``x`` as a complex square matrix; pure states become projectors."""
    if isinstance(x, PureState):
        return x.projector()
    if isinstance(x, DensityMatrix):
        return x.mat
    a = np.asarray(x, dtype=complex)
    if a.ndim == 1:
        return np.outer(a, a.conj())
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def _same_dim(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def eigh_psd(a: np.ndarray):
    """Eigendecomposition of a Hermitian matrix with round-off negatives clamped.

    Eigenvalues in ``[-PSD_TOL, 0)`` are set to zero; anything more negative is
    kept so callers can detect genuinely indefinite input.
    """
    w, v = np.linalg.eigh(hermitian_part(a))
    w = np.where((w < 0) & (w >= -PSD_TOL), 0.0, w)
    return w, v


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = eigh_psd(a)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def is_diagonal(a, tol: float = 1e-10) -> bool:
    a = as_operator(a)
    return bool(np.abs(a - np.diag(np.diag(a))).max(initial=0.0) <= tol)


# --- containers ---------------------------------------------------------------


def op_to_json(a) -> dict:
    """``{"shape", "re", "im"}`` for a (possibly rectangular) complex matrix; square adds ``dim``."""
    a = np.asarray(a, dtype=complex)
    out = {"shape": list(a.shape), "re": a.real.tolist(), "im": a.imag.tolist()}
    if a.ndim == 2 and a.shape[0] == a.shape[1]:
        out["dim"] = a.shape[0]
    return out


def op_from_json(data) -> np.ndarray:
    re = np.asarray(data["re"], dtype=float)
    im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
    return re + 1j * im


@dataclass(frozen=True)
class DensityMatrix:
    """A Hermitian PSD operator of trace one (or at most one when subnormalized)."""

    mat: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        m = np.array(self.mat, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InvalidState(f"density matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidState("density matrix has non-finite entries")
        if np.abs(m - m.conj().T).max() > HERM_TOL:
            raise InvalidState("density matrix is not Hermitian")
        lam_min = np.linalg.eigvalsh(hermitian_part(m))[0]
        if lam_min < -PSD_TOL:
            raise InvalidState(f"density matrix has negative eigenvalue {lam_min:.3e}")
        tr = np.trace(m).real
        if self.normalized and abs(tr - 1) > HERM_TOL:
            raise InvalidState(f"trace is {tr!r}, expected 1")
        if not self.normalized and not (0 < tr <= 1 + HERM_TOL):
            raise InvalidState(f"subnormalized trace {tr!r} outside (0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.mat if dtype is None else self.mat.astype(dtype)

    def to_json(self) -> dict:
        return op_to_json(self.mat)

    @classmethod
    def from_json(cls, data: dict, normalized: bool = True) -> "DensityMatrix":
        try:
            dim = int(data["dim"])
            re = np.asarray(data["re"], dtype=float)
            im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidState(f"malformed density-matrix JSON: {exc}") from exc
        if re.shape != (dim, dim) or im.shape != (dim, dim):
            raise InvalidState(f"'re'/'im' must both be {dim}x{dim}")
        return cls(re + 1j * im, normalized=normalized)

    @classmethod
    def load(cls, path) -> "DensityMatrix":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class PureState:
    vec: np.ndarray

    def __post_init__(self):
        v = np.array(self.vec, dtype=complex).reshape(-1)
        if abs(np.vdot(v, v).real - 1) > HERM_TOL:
            raise InvalidState("pure state must have unit norm")
        v.setflags(write=False)
        object.__setattr__(self, "vec", v)

    @property
    def dim(self) -> int:
        return self.vec.shape[0]

    def projector(self) -> np.ndarray:
        return np.outer(self.vec, self.vec.conj())

    def __array__(self, dtype=None, copy=None):
        return self.vec if dtype is None else self.vec.astype(dtype)


@dataclass(frozen=True)
class CqState:
    """Dephased purification ``sum_x p_x |x><x| (x) psi_x``.

    ``env_states[x]`` is the normalized environment vector (zero when
    ``probs[x] == 0``); ``joint`` is the operator on X (x) E with X first.
    """

    probs: np.ndarray
    env_states: np.ndarray
    joint: np.ndarray = field(repr=False)

    @property
    def num_symbols(self) -> int:
        return self.probs.shape[0]

    @property
    def env_dim(self) -> int:
        return self.env_states.shape[1]

    def weighted_env(self) -> np.ndarray:
        """Rows ``sqrt(p_x) psi_x``, the unnormalized conditional vectors."""
        return np.sqrt(self.probs)[:, None] * self.env_states

    def env_marginal(self) -> np.ndarray:
        w = self.weighted_env()
        return w.T @ w.conj()

    def blocks(self) -> np.ndarray:
        """Conditional operators ``p_x psi_x`` stacked as ``(d, dE, dE)``."""
        w = self.weighted_env()
        return np.einsum("xi,xj->xij", w, w.conj())


def cq_from_weighted(weighted: np.ndarray) -> CqState:
    weighted = np.asarray(weighted, dtype=complex)
    probs = np.einsum("xe,xe->x", weighted, weighted.conj()).real
    safe = np.where(probs > 0, np.sqrt(np.where(probs > 0, probs, 1)), 1)
    env = np.where(probs[:, None] > 0, weighted / safe[:, None], 0)
    d, de = weighted.shape
    joint = np.zeros((d * de, d * de), dtype=complex)
    for x in range(d):
        joint[x * de:(x + 1) * de, x * de:(x + 1) * de] = np.outer(weighted[x], weighted[x].conj())
    return CqState(probs=probs, env_states=env, joint=joint)


# --- constructors -------------------------------------------------------------


def maximally_coherent(M: int) -> PureState:
    if M < 1:
        raise ValueError("M must be a positive integer")
    return PureState(np.full(M, 1 / np.sqrt(M), dtype=complex))


def phase_unitary(d: int) -> np.ndarray:
    """Diagonal ``Z`` with entries ``exp(2 pi i k / d)``, k = 0..d-1."""
    if d < 1:
        raise ValueError("d must be a positive integer")
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def basis_state(d: int, x: int) -> np.ndarray:
    e = np.zeros((d, d), dtype=complex)
    e[x, x] = 1
    return e


def random_state(d: int, rank: int | None = None, rng=None) -> np.ndarray:
    """Random density matrix from the induced (Hilbert-Schmidt for full rank) measure."""
    rng = np.random.default_rng(rng)
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(d: int, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def bloch_qubit(r) -> np.ndarray:
    x, y, z = r
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]], dtype=complex)


# --- maps and distances -------------------------------------------------------


def dephase(rho) -> np.ndarray:
    rho = as_operator(rho)
    return np.diag(np.diag(rho))


def fidelity(rho, sigma) -> float:
    """Root fidelity ``Tr sqrt(sqrt(rho) sigma sqrt(rho))`` (no square)."""
    rho, sigma = as_operator(rho), as_operator(sigma)
    _same_dim(rho, sigma)
    # ||sqrt(rho) sqrt(sigma)||_1 is symmetric in the arguments by construction
    s = np.linalg.svd(sqrtm_psd(rho) @ sqrtm_psd(sigma), compute_uv=False)
    return float(s.sum())


def generalized_fidelity(rho, sigma) -> float:
    rho, sigma = as_operator(rho), as_operator(sigma)
    _same_dim(rho, sigma)
    slack = max(0.0, 1 - np.trace(rho).real) * max(0.0, 1 - np.trace(sigma).real)
    return min(1.0, fidelity(rho, sigma) + np.sqrt(slack))


def purified_distance(rho, sigma) -> float:
    f = generalized_fidelity(rho, sigma)
    return float(np.sqrt(max(0.0, 1 - f * f)))


def trace_norm(a) -> float:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 2 and a.shape[0] == a.shape[1] and np.allclose(a, a.conj().T, atol=1e-12):
        return float(np.abs(np.linalg.eigvalsh(hermitian_part(a))).sum())
    return float(np.linalg.svd(a, compute_uv=False).sum())


def trace_distance(rho, sigma) -> float:
    rho, sigma = as_operator(rho), as_operator(sigma)
    _same_dim(rho, sigma)
    return 0.5 * trace_norm(rho - sigma)


def entropy_of_probs(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(max(0.0, -(p * np.log2(p)).sum()))


def von_neumann_entropy(rho) -> float:
    w, _ = eigh_psd(as_operator(rho))
    return entropy_of_probs(np.clip(w, 0, None))


# --- composite systems --------------------------------------------------------


def _check_dim(d: int):
    if d > config.CAPS.max_dim:
        raise CapExceeded("dimension", d, config.CAPS.max_dim, "raise max_dim to allow")


def tensor(a, b) -> np.ndarray:
    """Kronecker product of two operators (pure states are promoted to projectors)."""
    a = as_operator(a) if not isinstance(a, np.ndarray) or a.ndim != 2 else a
    b = as_operator(b) if not isinstance(b, np.ndarray) or b.ndim != 2 else b
    _check_dim(a.shape[0] * b.shape[0])
    return np.kron(a, b)


def n_copies(rho, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    rho = as_operator(rho)
    _check_dim(rho.shape[0] ** n)
    out = rho
    for _ in range(n - 1):
        out = np.kron(out, rho)
    return out


def partial_trace(rho, dims, keep) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep`` (subsystem indices)."""
    rho = np.asarray(rho, dtype=complex)
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    t = rho.reshape(dims + dims)
    traced = [k for k in range(n) if k not in keep]
    for count, k in enumerate(traced):
        axis = k - count
        t = np.trace(t, axis1=axis, axis2=axis + t.ndim // 2)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(dk, dk)


def purify(rho, tol: float = 1e-12):
    """Canonical purification ``sum_k sqrt(lambda_k) |e_k>|k>`` and its dephased cq-state.

    Returns ``(psi, cq)`` where ``psi`` is a :class:`PureState` on A (x) E with
    ``dim E = rank(rho)``.
    """
    rho = as_operator(rho)
    w, v = eigh_psd(rho)
    keep = w > tol
    if not keep.any():
        raise InvalidState("cannot purify the zero operator")
    w, v = w[keep][::-1], v[:, keep][:, ::-1]
    weighted = v * np.sqrt(w)  # row x holds sqrt(p_x) psi_x in the E basis
    norm = np.sqrt(w.sum())
    psi = PureState(weighted.reshape(-1) / norm)
    return psi, cq_from_weighted(weighted / norm)
