"""Small dense SDP modelling layer over complex Hermitian matrix variables.

Problems are written with affine matrix expressions (:class:`Expr`) in the
style of cvxpy, then compiled straight into the conic form accepted by the
Clarabel interior-point solver::

    prob = SdpProblem()
    A = prob.hermitian(2, "A")
    prob.add(A >> 0, np.eye(2) - A >> 0, A[0, 0] == 0.5, A[1, 1] == 0.5)
    prob.maximize(trace(rho.T @ A).real)
    sol = solve(prob)

Every variable is a vector of real unknowns. A complex Hermitian ``n x n``
variable uses ``n**2`` of them, a real symmetric one ``n(n+1)/2``. LMIs whose
data are complex are realised through the embedding
``X -> [[Re X, -Im X], [Im X, Re X]]``; real LMIs, 2x2 LMIs (as second-order
cones) and 1x1 LMIs (as nonnegativity) are passed through without doubling.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from . import config
from .errors import CapExceeded, IllFormed, NumericalFailure

_ZERO_TOL = 1e-14


def _spmax(m) -> float:
    """Largest absolute entry of a sparse matrix (0 when empty)."""
    m = sp.csr_matrix(m)
    m.sum_duplicates()
    return float(abs(m).max()) if m.nnz else 0.0




# --- affine expressions -------------------------------------------------------


def _join(rows, cols, vals, ti, tj, tv):
    """Compose a row map ``T`` (triplets ti, tj, tv) with coefficient triplets.

    Returns triplets of ``T @ C`` where ``C[rows, cols] = vals``; duplicates
    are left in place and summed when the matrix is finally assembled.
    """
    if rows.size == 0 or ti.size == 0:
        return _EMPTY_I, _EMPTY_I, _EMPTY_C
    order = np.argsort(rows, kind="stable")
    r_sorted = rows[order]
    lo = np.searchsorted(r_sorted, tj, "left")
    hi = np.searchsorted(r_sorted, tj, "right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return _EMPTY_I, _EMPTY_I, _EMPTY_C
    rep = np.repeat(np.arange(ti.size), counts)
    starts = np.repeat(lo - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    src = order[np.arange(total) + starts]
    return ti[rep], cols[src], tv[rep] * vals[src]


_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_C = np.zeros(0, dtype=complex)


class Expr:
    """Affine map from the real unknowns ``x`` to a complex matrix.

    ``vec(E)[r] = sum vals[k] x[cols[k]] over rows[k] == r, plus const[r]``,
    with row-major vectorisation. Coefficients are kept as unsummed
    triplets; they are assembled into a sparse matrix only when compiling.
    """

    __array_ufunc__ = None  # make ndarray (+, -, @) Expr defer to the reflected method
    __hash__ = None

    def __init__(self, shape, rows, cols, vals, const):
        self.shape = (int(shape[0]), int(shape[1]))
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=complex)
        self.const = np.asarray(const, dtype=complex).reshape(-1)
        if self.const.shape[0] != self.size:
            raise IllFormed("expression data do not match its shape")

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def nx(self) -> int:
        return int(self.cols.max()) + 1 if self.cols.size else 0

    def coef(self, nx: int | None = None) -> sp.csr_matrix:
        nx = self.nx if nx is None else nx
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.size, nx))

    @staticmethod
    def constant(value) -> "Expr":
        a = np.asarray(value, dtype=complex)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        elif a.ndim == 1:
            a = a.reshape(-1, 1)
        return Expr(a.shape, _EMPTY_I, _EMPTY_I, _EMPTY_C, a.reshape(-1))

    def _lift(self, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        if np.ndim(other) == 0:
            return Expr.constant(np.full(self.shape, other, dtype=complex))
        return Expr.constant(other)

    def _map(self, ti, tj, tv, shape) -> "Expr":
        """Apply a linear row map given as triplets, keeping the result affine."""
        r, c, v = _join(self.rows, self.cols, self.vals, ti, tj, tv)
        n = shape[0] * shape[1]
        const = np.zeros(n, dtype=complex)
        np.add.at(const, ti, tv * self.const[tj])
        return Expr(shape, r, c, v, const)

    def _binary(self, other, sign):
        other = self._lift(other)
        if other.shape != self.shape:
            raise IllFormed(f"shape mismatch {self.shape} vs {other.shape}")
        return Expr(self.shape, np.concatenate([self.rows, other.rows]),
                    np.concatenate([self.cols, other.cols]),
                    np.concatenate([self.vals, sign * other.vals]),
                    self.const + sign * other.const)

    def __add__(self, other):
        return self._binary(other, 1)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1)

    def __rsub__(self, other):
        return (-self)._binary(other, 1)

    def __neg__(self):
        return Expr(self.shape, self.rows, self.cols, -self.vals, -self.const)

    def __mul__(self, s):
        if isinstance(s, Expr) or np.ndim(s) != 0:
            raise IllFormed("only scalar multiplication is affine; use @ with a constant")
        return Expr(self.shape, self.rows, self.cols, self.vals * s, self.const * s)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / s)

    def __matmul__(self, right):
        if isinstance(right, Expr):
            raise IllFormed("product of two expressions is not affine")
        R = np.atleast_2d(np.asarray(right, dtype=complex))
        r, c = self.shape
        if R.shape[0] != c:
            raise IllFormed(f"cannot multiply {self.shape} by {R.shape}")
        k = R.shape[1]
        # (E R)[a, j] = sum_b E[a, b] R[b, j]
        b, j = np.nonzero(R)
        a = np.repeat(np.arange(r), b.size)
        bb, jj = np.tile(b, r), np.tile(j, r)
        return self._map(a * k + jj, a * c + bb, R[bb, jj], (r, k))

    def __rmatmul__(self, left):
        L = np.atleast_2d(np.asarray(left, dtype=complex))
        r, c = self.shape
        if L.shape[1] != r:
            raise IllFormed(f"cannot multiply {L.shape} by {self.shape}")
        # (L E)[i, b] = sum_a L[i, a] E[a, b]
        i, a = np.nonzero(L)
        bb = np.tile(np.arange(c), i.size)
        ii, aa = np.repeat(i, c), np.repeat(a, c)
        return self._map(ii * c + bb, aa * c + bb, L[ii, aa], (L.shape[0], c))

    def _select(self, idx, shape):
        """New expression whose vec entry ``k`` is this one's entry ``idx[k]``."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        return self._map(np.arange(idx.size), idx, np.ones(idx.size, dtype=complex), shape)

    @property
    def T(self):
        r, c = self.shape
        return self._select(np.arange(r * c).reshape(r, c).T, (c, r))

    def conj(self):
        return Expr(self.shape, self.rows, self.cols, self.vals.conj(), self.const.conj())

    @property
    def H(self):
        return self.T.conj()

    @property
    def real(self):
        return ((self + self.conj()) * 0.5).compact()

    @property
    def imag(self):
        return ((self - self.conj()) * (-0.5j)).compact()

    def __getitem__(self, key):
        grid = np.arange(self.size).reshape(self.shape)[key]
        grid = np.atleast_2d(grid) if np.ndim(grid) < 2 else grid
        return self._select(grid, grid.shape)

    def trace(self):
        if self.shape[0] != self.shape[1]:
            raise IllFormed("trace of a non-square expression")
        n = self.shape[0]
        return self._map(np.zeros(n, np.int64), np.arange(n) * (n + 1), np.ones(n, complex),
                         (1, 1))

    @property
    def diag(self):
        n = self.shape[0]
        return self._select(np.arange(n) * (n + 1), (n, 1))

    # constraints
    def _psd_rhs(self, other):
        if np.ndim(other) == 0 and not isinstance(other, Expr) and other != 0 and self.size > 1:
            raise IllFormed("a matrix LMI against a nonzero scalar is ambiguous; pass c * I")
        return self._lift(other)

    def __rshift__(self, other):
        return Constraint("psd", self - self._psd_rhs(other))

    def __rrshift__(self, other):
        return Constraint("psd", self._psd_rhs(other) - self)

    def __lshift__(self, other):
        return Constraint("psd", self._psd_rhs(other) - self)

    def __ge__(self, other):
        return Constraint("nonneg", self - other)

    def __le__(self, other):
        return Constraint("nonneg", self._lift(other) - self)

    def __eq__(self, other):
        return Constraint("zero", self - other)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = self.const.copy()
        if self.rows.size:
            np.add.at(v, self.rows, self.vals * x[self.cols])
        return v.reshape(self.shape)

    def compact(self) -> "Expr":
        """Sum duplicate triplets and drop zeros."""
        if self.rows.size == 0:
            return self
        key = self.rows * (self.nx + 1) + self.cols
        uniq, inv = np.unique(key, return_inverse=True)
        vals = np.zeros(uniq.size, dtype=complex)
        np.add.at(vals, inv, self.vals)
        keep = np.abs(vals) > _ZERO_TOL
        rows, cols = np.divmod(uniq[keep], self.nx + 1)
        return Expr(self.shape, rows, cols, vals[keep], self.const)

    def is_real(self) -> bool:
        e = self.compact()
        return (np.abs(e.vals.imag).max(initial=0) <= _ZERO_TOL
                and np.abs(e.const.imag).max(initial=0) <= _ZERO_TOL)

    def is_constant(self) -> bool:
        return self.compact().vals.size == 0

    def __repr__(self):
        return f"Expr(shape={self.shape}, nnz={self.vals.size})"


def as_expr(value) -> Expr:
    return value if isinstance(value, Expr) else Expr.constant(value)


def trace(e) -> Expr:
    return as_expr(e).trace()


def kron(a, b) -> Expr:
    """Kronecker product where exactly one side may be an expression."""
    if isinstance(a, Expr) and isinstance(b, Expr):
        raise IllFormed("kron of two expressions is not affine")
    if not isinstance(a, Expr) and not isinstance(b, Expr):
        return Expr.constant(np.kron(a, b))
    if isinstance(b, Expr):
        K, E, left = np.atleast_2d(np.asarray(a, dtype=complex)), b, True
    else:
        K, E, left = np.atleast_2d(np.asarray(b, dtype=complex)), a, False
    (kr, kc), (er, ec) = K.shape, E.shape
    ki, kj = np.nonzero(K)
    m, n = ki.size, E.size
    ea, eb = np.divmod(np.arange(n), ec)
    ki, kj = np.repeat(ki, n), np.repeat(kj, n)
    ea, eb = np.tile(ea, m), np.tile(eb, m)
    if left:
        out_r, out_c = ki * er + ea, kj * ec + eb
    else:
        out_r, out_c = ea * kr + ki, eb * kc + kj
    ncols = kc * ec
    return E._map(out_r * ncols + out_c, ea * ec + eb, K[ki, kj], (kr * er, ncols))


def diagm(v) -> Expr:
    """Diagonal matrix from an ``(n, 1)`` or ``(1, n)`` expression."""
    v = as_expr(v)
    n = v.size
    return v._map(np.arange(n) * (n + 1), np.arange(n), np.ones(n, complex), (n, n))


def bmat(blocks) -> Expr:
    """Assemble a block matrix; ``None`` entries are zero blocks."""
    nbr, nbc = len(blocks), len(blocks[0])
    heights = [None] * nbr
    widths = [None] * nbc
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            shape = b.shape if isinstance(b, Expr) else np.atleast_2d(b).shape
            if heights[i] not in (None, shape[0]) or widths[j] not in (None, shape[1]):
                raise IllFormed("inconsistent block sizes in bmat")
            heights[i], widths[j] = shape[0], shape[1]
    if None in heights or None in widths:
        raise IllFormed("every block row and column needs at least one block")
    R, C = sum(heights), sum(widths)
    roff = np.concatenate([[0], np.cumsum(heights)])
    coff = np.concatenate([[0], np.cumsum(widths)])
    rows, cols, vals = [], [], []
    const = np.zeros(R * C, dtype=complex)
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            b = as_expr(b)
            h, w = b.shape
            a, c = np.divmod(np.arange(h * w), w)
            dest = (roff[i] + a) * C + coff[j] + c
            const[dest] += b.const
            if b.rows.size:
                rows.append(dest[b.rows])
                cols.append(b.cols)
                vals.append(b.vals)
    if rows:
        return Expr((R, C), np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), const)
    return Expr((R, C), _EMPTY_I, _EMPTY_I, _EMPTY_C, const)


def hstack(items) -> Expr:
    return bmat([list(items)])


def vstack(items) -> Expr:
    return bmat([[it] for it in items])


def esum(items) -> Expr:
    items = [as_expr(it) for it in items]
    shape = items[0].shape
    if any(it.shape != shape for it in items):
        raise IllFormed("esum needs expressions of one shape")
    return Expr(shape, np.concatenate([it.rows for it in items]),
                np.concatenate([it.cols for it in items]),
                np.concatenate([it.vals for it in items]),
                sum(it.const for it in items))


def embed(e: Expr, index, dim: int) -> Expr:
    """Place a ``k x k`` expression on rows/columns ``index`` of a ``dim x dim`` zero matrix."""
    index = np.asarray(index, dtype=np.int64)
    k = index.size
    a, b = np.divmod(np.arange(k * k), k)
    dest = index[a] * dim + index[b]
    const = np.zeros(dim * dim, dtype=complex)
    const[dest] = e.const
    return Expr((dim, dim), dest[e.rows], e.cols, e.vals, const)


# --- problems -----------------------------------------------------------------


@dataclass
class Constraint:
    kind: str  # "psd", "nonneg" or "zero"
    expr: Expr
    name: str = ""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"
    INACCURATE = "Inaccurate"


@dataclass
class _Var:
    name: str
    kind: str
    shape: tuple
    offset: int
    count: int
    expr: Expr


class SdpProblem:
    """Real-linear objective plus PSD, nonnegativity and equality constraints."""

    def __init__(self):
        self.nx = 0
        self.variables: dict[str, _Var] = {}
        self.constraints: list[Constraint] = []
        self.sense = "max"
        self.objective: Expr | None = None

    def _new(self, name, kind, shape, count, rows, cols, vals):
        if name is None:
            name = f"_v{len(self.variables)}"
        if name in self.variables:
            raise IllFormed(f"duplicate variable name {name!r}")
        off = self.nx
        self.nx += count
        size = shape[0] * shape[1]
        e = Expr(shape, rows, np.asarray(cols) + off, vals, np.zeros(size))
        self.variables[name] = _Var(name, kind, shape, off, count, e)
        return e

    def scalar(self, name=None) -> Expr:
        return self._new(name, "scalar", (1, 1), 1, [0], [0], [1.0])

    def vector(self, n: int, name=None) -> Expr:
        """Real column vector variable."""
        return self._new(name, "vector", (n, 1), n, np.arange(n), np.arange(n), np.ones(n))

    def hermitian(self, n: int, name=None, real: bool = False) -> Expr:
        """Hermitian (or real symmetric when ``real``) ``n x n`` matrix variable."""
        rows, cols, vals = [], [], []
        k = 0
        for i in range(n):
            rows.append(i * n + i)
            cols.append(k)
            vals.append(1.0)
            k += 1
        for i in range(n):
            for j in range(i + 1, n):
                rows += [i * n + j, j * n + i]
                cols += [k, k]
                vals += [1.0, 1.0]
                k += 1
                if not real:
                    rows += [i * n + j, j * n + i]
                    cols += [k, k]
                    vals += [1j, -1j]
                    k += 1
        return self._new(name, "symmetric" if real else "hermitian", (n, n), k, rows, cols, vals)

    def complex_matrix(self, r: int, c: int, name=None) -> Expr:
        idx = np.arange(r * c)
        rows = np.concatenate([idx, idx])
        cols = np.concatenate([2 * idx, 2 * idx + 1])
        vals = np.concatenate([np.ones(r * c), 1j * np.ones(r * c)])
        return self._new(name, "complex", (r, c), 2 * r * c, rows, cols, vals)

    def add(self, *constraints: Constraint) -> None:
        for c in constraints:
            if not isinstance(c, Constraint):
                raise IllFormed(f"not a constraint: {c!r}")
            if c.expr.nx > self.nx:
                raise IllFormed("constraint references variables of another problem")
            if c.kind == "psd":
                r, k = c.expr.shape
                if r != k:
                    raise IllFormed(f"LMI block must be square, got {c.expr.shape}")
                diff = c.expr - c.expr.H
                if (_spmax(diff.coef(self.nx)) > 1e-12
                        or np.abs(diff.const).max(initial=0) > 1e-10):
                    raise IllFormed("LMI block is not Hermitian")
            elif c.kind == "nonneg" and not c.expr.is_real():
                raise IllFormed("inequality between non-real expressions")
            self.constraints.append(c)

    def maximize(self, objective) -> None:
        self.sense, self.objective = "max", as_expr(objective)

    def minimize(self, objective) -> None:
        self.sense, self.objective = "min", as_expr(objective)


@dataclass
class SdpSolution:
    status: Status
    x: np.ndarray
    objective: float
    dual_objective: float
    gap: float
    violation: float
    iterations: int = 0
    solve_time: float = 0.0
    values: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL

    def value(self, expr: Expr) -> np.ndarray:
        return expr.value(self.x)

    def get(self, name: str) -> np.ndarray:
        return self.values[name]

    def diagnostics(self) -> dict:
        return {"status": self.status.value, "objective": self.objective,
                "dual_objective": self.dual_objective, "gap": self.gap,
                "violation": self.violation, "iterations": self.iterations}


# --- compilation ---------------------------------------------------------------
#
# Clarabel solves  min q'x  s.t.  s = b - A x in K.  Every constraint is turned
# into a real linear map  s = R x + r  on its cone, so A = -R and b = r.


def _real_triplets(e: Expr, dest, src, part, factor):
    """Triplets of the real map ``s[dest] += factor * part(vec(E)[src])``.

    ``part`` is 0 for the real and 1 for the imaginary part.
    """
    out_r, out_c, out_v = [], [], []
    for p, take in ((0, np.real), (1, np.imag)):
        m = part == p
        if not m.any():
            continue
        r, c, v = _join(e.rows, e.cols, take(e.vals).astype(complex), dest[m], src[m],
                        factor[m].astype(complex))
        out_r.append(r)
        out_c.append(c)
        out_v.append(v.real)
    n = int(dest.max()) + 1 if dest.size else 0
    const = np.zeros(n)
    cvals = np.where(part == 0, e.const.real[src], e.const.imag[src]) * factor
    np.add.at(const, dest, cvals)
    if out_r:
        return np.concatenate(out_r), np.concatenate(out_c), np.concatenate(out_v), const
    return _EMPTY_I, _EMPTY_I, np.zeros(0), const


_PSD_MAPS: dict = {}


def _psd_map(n: int, real: bool):
    """``(dest, src, part, factor)`` mapping an ``n x n`` block to svec of its real form."""
    key = (n, real)
    if key in _PSD_MAPS:
        return _PSD_MAPS[key]
    dest, src, part, factor = [], [], [], []
    N = n if real else 2 * n
    p = 0
    for J in range(N):
        for I in range(J + 1):
            scale = 1.0 if I == J else np.sqrt(2.0)
            bi, a = divmod(I, n)
            bj, b = divmod(J, n)
            if bi == bj:  # Re E on both diagonal blocks
                dest.append(p), src.append(a * n + b), part.append(0), factor.append(scale)
            else:  # upper-right block holds -Im E
                dest.append(p), src.append(a * n + b), part.append(1), factor.append(-scale)
            p += 1
    out = tuple(np.asarray(v) for v in (dest, src, part, factor)) + (N,)
    _PSD_MAPS[key] = out
    return out


_SOC_REAL = (np.array([0, 0, 1, 1, 2]), np.array([0, 3, 0, 3, 1]),
             np.array([0, 0, 0, 0, 0]), np.array([1.0, 1.0, 1.0, -1.0, 2.0]))
_SOC_CPLX = tuple(np.concatenate([a, [b]]) for a, b in zip(_SOC_REAL, (3, 1, 1, 2.0)))


def _compile(prob: SdpProblem):
    nx = prob.nx
    groups = {"zero": [], "nonneg": [], "tail": []}
    lmi_dims = []
    for c in prob.constraints:
        e = c.expr.compact()
        n = e.shape[0]
        if c.kind == "zero":
            size = e.size
            idx = np.arange(size)
            trip = _real_triplets(e, np.concatenate([idx, idx + size]), np.concatenate([idx, idx]),
                                  np.repeat([0, 1], size), np.ones(2 * size))
            r, cc, v, const = trip
            used = np.zeros(2 * size, dtype=bool)
            used[r[np.abs(v) > _ZERO_TOL]] = True
            used |= np.abs(const) > _ZERO_TOL
            keep = np.flatnonzero(used)
            remap = np.full(2 * size, -1)
            remap[keep] = np.arange(keep.size)
            m = remap[r] >= 0
            groups["zero"].append((remap[r[m]], cc[m], v[m], const[keep], None))
        elif c.kind == "nonneg" or n == 1:
            idx = np.arange(e.size)
            trip = _real_triplets(e, idx, idx, np.zeros(e.size, int), np.ones(e.size))
            groups["nonneg"].append(trip + (None,))
        elif n == 2:
            mp = _SOC_REAL if e.is_real() else _SOC_CPLX
            trip = _real_triplets(e, *mp)
            groups["tail"].append(trip + (("soc", trip[3].size),))
        else:
            dest, src, part, factor, N = _psd_map(n, e.is_real())
            lmi_dims.append(N)
            trip = _real_triplets(e, dest, src, part, factor)
            groups["tail"].append(trip + (("psd", N),))
    if lmi_dims and max(lmi_dims) > config.CAPS.sdp_block_dim:
        raise CapExceeded("real-embedded LMI block dimension", max(lmi_dims),
                          config.CAPS.sdp_block_dim, "raise sdp_block_dim to allow")
    rows, cols, vals, bs, cones = [], [], [], [], []
    off = 0
    for key in ("zero", "nonneg", "tail"):
        start = off
        for r, cc, v, const, cone in groups[key]:
            rows.append(r + off)
            cols.append(cc)
            vals.append(-v)
            bs.append(const)
            off += const.size
            if cone is not None:
                cones.append(cone)
        if key != "tail" and off > start:
            cones.append((key, off - start))
    if prob.objective is None:
        q, q0 = np.zeros(nx), 0.0
    else:
        obj = prob.objective.compact()
        if obj.shape != (1, 1):
            raise IllFormed("objective must be a scalar expression")
        if np.abs(obj.vals.imag).max(initial=0) > 1e-12 or abs(obj.const.imag[0]) > 1e-12:
            raise IllFormed("objective must be real; take .real explicitly")
        q = np.bincount(obj.cols, weights=obj.vals.real, minlength=nx)[:nx]
        q0 = float(obj.const.real[0])
    sign = -1.0 if prob.sense == "max" else 1.0
    m = off
    if rows:
        A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(m, nx))
        b = np.concatenate(bs)
    else:
        A, b = sp.csc_matrix((0, nx)), np.zeros(0)
    # the solver expects canonical CSC: sorted, no duplicates, no stored zeros
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return sign * q, q0, sign, A, b, cones


_CONES = {
    "zero": clarabel.ZeroConeT,
    "nonneg": clarabel.NonnegativeConeT,
    "soc": clarabel.SecondOrderConeT,
    "psd": clarabel.PSDTriangleConeT,
}

_STATUS = {
    "Solved": Status.OPTIMAL,
    "AlmostSolved": Status.INACCURATE,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
    "MaxIterations": Status.MAX_ITER,
    "MaxTime": Status.MAX_ITER,
    "InsufficientProgress": Status.INACCURATE,
}


def constraint_violation(prob: SdpProblem, x: np.ndarray) -> float:
    """Largest violation of any constraint at ``x`` (0 when feasible)."""
    worst = 0.0
    for c in prob.constraints:
        v = c.expr.value(x)
        if c.kind == "zero":
            worst = max(worst, float(np.abs(v).max(initial=0)))
        elif c.kind == "nonneg":
            worst = max(worst, float(-v.real.min(initial=0)))
        else:
            lam = np.linalg.eigvalsh(0.5 * (v + v.conj().T))[0]
            worst = max(worst, float(-lam))
    return worst


def solve(prob: SdpProblem, gap_tol: float | None = None, feas_tol: float | None = None,
          max_iter: int | None = None) -> SdpSolution:
    """Solve ``prob`` with Clarabel and verify the reported certificate.

    The returned status is ``OPTIMAL`` when the solver (nearly) converged and
    the recomputed duality gap and constraint violation are within
    tolerance. Otherwise the problem is solved once more without
    equilibration and the better of the two answers is returned, as
    ``INACCURATE`` if neither verifies.
    """
    tol = config.TOLERANCES
    gap_tol = tol.gap_tol if gap_tol is None else gap_tol
    feas_tol = tol.feas_tol if feas_tol is None else feas_tol
    max_iter = tol.max_iter if max_iter is None else max_iter
    q, q0, sign, A, b, cones = _compile(prob)
    if prob.nx == 0 or A.shape[0] == 0:
        return _trivial(prob, q0, sign, A, b, feas_tol)
    best = None
    for equilibrate in (True, False):
        sol = _attempt(prob, q, q0, sign, A, b, cones, gap_tol, feas_tol, max_iter, equilibrate)
        if sol.status != Status.INACCURATE:
            return sol
        if best is None or sol.gap + sol.violation < best.gap + best.violation:
            best = sol
    return best


def _attempt(prob, q, q0, sign, A, b, cones, gap_tol, feas_tol, max_iter, equilibrate):
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(max_iter)
    settings.tol_gap_abs = gap_tol
    settings.tol_gap_rel = gap_tol
    settings.tol_feas = min(1e-8, 0.1 * feas_tol)
    settings.presolve_enable = False
    settings.equilibrate_enable = equilibrate
    settings.max_threads = 1
    nx = prob.nx
    P = sp.csc_matrix((nx, nx))
    try:
        solver = clarabel.DefaultSolver(P, q, A, b, [_CONES[k](n) for k, n in cones], settings)
        res = solver.solve()
    except BaseException as exc:  # the binding raises PanicException on breakdown
        if isinstance(exc, (KeyboardInterrupt, SystemExit, NameError, TypeError, AttributeError)):
            raise
        raise NumericalFailure(f"conic solver failed: {exc}") from exc
    name = str(res.status).split(".")[-1]
    if name == "NumericalError":
        raise NumericalFailure("conic solver reported a numerical error")
    status = _STATUS.get(name, Status.INACCURATE)
    x = np.asarray(res.x, dtype=float)
    primal = sign * res.obj_val + q0
    dual = sign * res.obj_val_dual + q0
    if status == Status.INFEASIBLE or status == Status.UNBOUNDED:
        obj = -np.inf if (status == Status.INFEASIBLE) == (prob.sense == "max") else np.inf
        return SdpSolution(status, x, obj, obj, np.nan, np.nan, res.iterations, res.solve_time)
    gap = abs(primal - dual) / max(1.0, abs(primal))
    viol = constraint_violation(prob, x)
    if status == Status.OPTIMAL or name == "AlmostSolved":
        # trust the certificate only as far as it can be re-verified
        ok = gap <= gap_tol and viol <= feas_tol
        status = Status.OPTIMAL if ok else Status.INACCURATE
    sol = SdpSolution(status, x, float(primal), float(dual), float(gap), float(viol),
                      res.iterations, res.solve_time)
    sol.values = {n: v.expr.value(x) for n, v in prob.variables.items()}
    return sol


def _trivial(prob, q0, sign, A, b, feas_tol):
    x = np.zeros(prob.nx)
    viol = constraint_violation(prob, x)
    if prob.nx == 0:
        status = Status.OPTIMAL if viol <= feas_tol else Status.INFEASIBLE
        obj = q0 if status == Status.OPTIMAL else -sign * np.inf
        return SdpSolution(status, x, obj, obj, 0.0, viol)
    # unconstrained: bounded only if the objective is constant
    if prob.objective is not None and not prob.objective.is_constant():
        return SdpSolution(Status.UNBOUNDED, x, -sign * np.inf, -sign * np.inf, np.nan, 0.0)
    sol = SdpSolution(Status.OPTIMAL, x, q0, q0, 0.0, 0.0)
    sol.values = {n: v.expr.value(x) for n, v in prob.variables.items()}
    return sol


def feasible(prob: SdpProblem, feas_tol: float | None = None):
    """Phase-I check. Returns ``(is_feasible, solution)``; the objective is ignored."""
    saved = prob.sense, prob.objective
    prob.objective = None
    try:
        if not prob.constraints:
            x = np.zeros(prob.nx)
            sol = SdpSolution(Status.OPTIMAL, x, 0.0, 0.0, 0.0, 0.0)
            sol.values = {n: v.expr.value(x) for n, v in prob.variables.items()}
            return True, sol
        sol = solve(prob, feas_tol=feas_tol)
    finally:
        prob.sense, prob.objective = saved
    return sol.status == Status.OPTIMAL, sol


def _support(a, tol=1e-12):
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    keep = w > tol * max(1.0, w.max(initial=0.0))
    return w[keep], v[:, keep]


def fidelity_sdp(rho, sigma, **solve_kw) -> float:
    """Root fidelity as ``max Re Tr X`` s.t. ``[[rho, X], [X^H, sigma]] >= 0``.

    Any feasible ``X`` has range in supp(rho) and co-range in supp(sigma), so
    the program is posed on the two supports. This keeps it strictly feasible
    for rank-deficient inputs, where the interior-point method otherwise
    stalls near a singular optimum.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise IllFormed(f"shapes {rho.shape} and {sigma.shape} differ")
    wr, vr = _support(rho)
    ws, vs = _support(sigma)
    if wr.size == 0 or ws.size == 0:
        return 0.0
    # with X = vr Dr Z Ds vs^H the block is congruent to [[I, Z], [Z^H, I]],
    # which stays well conditioned when the supports carry tiny eigenvalues
    c = np.sqrt(ws)[:, None] * (vs.conj().T @ vr) * np.sqrt(wr)[None, :]
    prob = SdpProblem()
    Z = prob.complex_matrix(wr.size, ws.size, "Z")
    prob.add(bmat([[np.eye(wr.size), Z], [Z.H, np.eye(ws.size)]]) >> 0)
    prob.maximize(trace(c @ Z).real)
    sol = solve(prob, **solve_kw)
    if sol.status not in (Status.OPTIMAL, Status.INACCURATE):
        raise NumericalFailure(f"fidelity SDP ended with status {sol.status.value}")
    return sol.objective


# --- text dump -----------------------------------------------------------------


def dump_sdpa(prob: SdpProblem, path) -> None:
    """Write the compiled problem in SDPA sparse format (minimisation form).

    Every cone becomes one block: equalities as a pair of diagonal blocks,
    nonnegativity as a diagonal block, second-order cones as arrow matrices
    and PSD cones as dense blocks. Variable ``x`` is the same real vector this
    module solves for, so solutions can be compared directly.
    """
    q, q0, sign, A, b, cones = _compile(prob)
    A = sp.csr_matrix(A)
    lines_blocks, entries = [], []
    row = 0
    blk = 0

    def emit(mat, i, j, val):
        if abs(val) > 0:
            entries.append(f"{mat} {blk} {i} {j} {val:.17g}")

    for kind, dim in cones:
        if kind == "zero":
            for sgn in (1, -1):
                blk += 1
                lines_blocks.append(-dim)
                for r in range(dim):
                    emit(0, r + 1, r + 1, -sgn * b[row + r])
                    for k, v in zip(A[row + r].indices, A[row + r].data):
                        emit(k + 1, r + 1, r + 1, -sgn * v)
            row += dim
        elif kind == "nonneg":
            blk += 1
            lines_blocks.append(-dim)
            for r in range(dim):
                emit(0, r + 1, r + 1, -b[row + r])
                for k, v in zip(A[row + r].indices, A[row + r].data):
                    emit(k + 1, r + 1, r + 1, -v)
            row += dim
        elif kind == "soc":
            blk += 1
            lines_blocks.append(dim)
            # arrow matrix [[t, u^T], [u, t I]] >= 0
            for r in range(dim):
                cells = [(1, 1)] + [(k, k) for k in range(2, dim + 1)] if r == 0 else [(1, r + 1)]
                for (i, j) in cells:
                    emit(0, i, j, -b[row + r])
                    for k, v in zip(A[row + r].indices, A[row + r].data):
                        emit(k + 1, i, j, -v)
            row += dim
        else:
            N = dim
            blk += 1
            lines_blocks.append(N)
            r = 0
            for j in range(N):
                for i in range(j + 1):
                    s = 1.0 if i == j else 1 / np.sqrt(2.0)
                    emit(0, i + 1, j + 1, -s * b[row + r])
                    for k, v in zip(A[row + r].indices, A[row + r].data):
                        emit(k + 1, i + 1, j + 1, -s * v)
                    r += 1
            row += r
    with open(path, "w") as fh:
        fh.write(f"* objective constant {q0:.17g}, sense {prob.sense}\n")
        fh.write(f"{prob.nx}\n{len(lines_blocks)}\n")
        fh.write(" ".join(str(x) for x in lines_blocks) + "\n")
        fh.write(" ".join(f"{c:.17g}" for c in q) + "\n")
        fh.write("\n".join(entries) + "\n")


def fidelity_block(prob: SdpProblem, var: Expr, const) -> Expr:
    """Add ``[[var, X], [X^H, const]] >= 0`` and return ``Re Tr X`` (a root-fidelity lower bound).

    ``max Re Tr X`` over the block equals ``F(var, const)``. The block is posed
    on the support of the constant operator, as in :func:`fidelity_sdp`.
    """
    w, v = _support(np.asarray(const, dtype=complex))
    d = var.shape[0]
    if w.size == 0:
        return Expr.constant(0.0)
    # X = Y diag(sqrt(w)) v^H; the corner becomes the identity
    Y = prob.complex_matrix(d, w.size)
    prob.add(bmat([[var, Y], [Y.H, np.eye(w.size)]]) >> 0)
    return trace((np.sqrt(w)[:, None] * v.conj().T) @ Y).real
