"""Matrix container and the few numerical kernels the solver stack needs.

Everything downstream manipulates coupling matrices through one abstraction,
:class:`RealMatrix`, which wraps either a dense 2-d ndarray or a CSR sparse
matrix compiled from coordinate triplets.  On top of it sit

* :func:`spectral_extremes` -- extreme eigenvalues of ``M @ M.T`` (exact dense
  eigensolve for small shapes, power iteration above ``DENSE_EIG_LIMIT``),
* :func:`solve_spd` -- guarded Cholesky solve with iterative refinement, used
  by the exact proximal subproblem steps,
* :func:`stack_rows` -- vertical stacking, used to build graph-augmented
  coupling matrices.

Tolerances are centralized in the module constants below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

__all__ = [
    "SPECTRAL_TOL",
    "SOLVE_TOL",
    "DENSE_EIG_LIMIT",
    "SOLVE_DIM_LIMIT",
    "RealMatrix",
    "SpectralSummary",
    "SpectralConvergenceError",
    "spectral_extremes",
    "solve_spd",
    "stack_rows",
]

#: Relative stall tolerance for the power-iteration Rayleigh quotient.
SPECTRAL_TOL = 1e-8
#: Relative residual required from solve_spd.
SOLVE_TOL = 1e-10
#: Exact dense eigensolve is used when min(rows, cols) is at most this.
DENSE_EIG_LIMIT = 64
#: solve_spd refuses systems larger than this (desk-scale guard).
SOLVE_DIM_LIMIT = 512


class SpectralConvergenceError(RuntimeError):
    """Power iteration stalled before reaching tolerance.

    Carries the best estimate so far in ``best`` so callers can decide
    whether to proceed with a degraded value.
    """

    def __init__(self, message: str, best: "SpectralSummary"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class SpectralSummary:
    """Extreme eigenvalues of M M^T plus the Gram operator norm.

    Attributes
    ----------
    sigma_max : float
        Largest eigenvalue of ``M @ M.T``.
    sigma_min : float
        Smallest eigenvalue of ``M @ M.T`` (0 whenever rows exceed rank).
    op_norm_gram : float
        ``||M.T @ M||_2``.  Coincides with ``sigma_max`` because the nonzero
        spectra of the two Gram matrices are identical; kept as its own field
        because callers ask for it under that meaning.
    iterations : int
        Total matrix-vector sweeps spent (0 on the dense path).
    converged : bool
    """

    sigma_max: float
    sigma_min: float
    op_norm_gram: float
    iterations: int
    converged: bool


class RealMatrix:
    """Real matrix stored dense or sparse behind one mat-vec interface.

    Construct through :meth:`dense`, :meth:`from_triplets`, :meth:`identity`
    or :meth:`scaled_identity`.  Sparse input triplets are coalesced
    (duplicate coordinates summed) and compiled to CSR once, at construction.
    """

    __slots__ = ("_dense", "_csr", "_shape")

    def __init__(self, dense=None, csr=None):
        if (dense is None) == (csr is None):
            raise ValueError("exactly one of dense/csr storage expected")
        if dense is not None:
            arr = np.asarray(dense, dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError(f"dense matrix must be 2-d, got ndim={arr.ndim}")
            self._dense = arr
            self._csr = None
            self._shape = arr.shape
        else:
            self._dense = None
            self._csr = csr.tocsr().astype(np.float64)
            self._shape = self._csr.shape

    # ------------------------------------------------------------------ #
    # constructors
    # ------------------------------------------------------------------ #

    @classmethod
    def dense(cls, array) -> "RealMatrix":
        return cls(dense=array)

    @classmethod
    def from_triplets(cls, rows, cols, values, shape) -> "RealMatrix":
        """Build sparse storage from coordinate triplets.

        Duplicate coordinates are summed.  Indices outside ``shape`` raise.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("triplet arrays must have identical lengths")
        n_rows, n_cols = int(shape[0]), int(shape[1])
        if n_rows < 0 or n_cols < 0:
            raise ValueError(f"invalid shape {shape}")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("column index out of range")
        coo = sp.coo_matrix((values, (rows, cols)), shape=(n_rows, n_cols))
        csr = coo.tocsr()  # sums duplicates
        csr.sum_duplicates()
        return cls(csr=csr)

    @classmethod
    def identity(cls, n: int) -> "RealMatrix":
        return cls(csr=sp.identity(n, dtype=np.float64, format="csr"))

    @classmethod
    def scaled_identity(cls, n: int, value: float) -> "RealMatrix":
        return cls(csr=sp.identity(n, dtype=np.float64, format="csr") * float(value))

    # ------------------------------------------------------------------ #
    # basic interface
    # ------------------------------------------------------------------ #

    @property
    def shape(self) -> tuple[int, int]:
        return self._shape

    @property
    def rows(self) -> int:
        return self._shape[0]

    @property
    def cols(self) -> int:
        return self._shape[1]

    @property
    def is_sparse(self) -> bool:
        return self._csr is not None

    def mat_vec(self, v: np.ndarray) -> np.ndarray:
        """Return ``M @ v``."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.cols,):
            raise ValueError(f"mat_vec expects shape ({self.cols},), got {v.shape}")
        if self._dense is not None:
            return self._dense @ v
        return self._csr @ v

    def rmat_vec(self, v: np.ndarray) -> np.ndarray:
        """Return ``M.T @ v``."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.rows,):
            raise ValueError(f"rmat_vec expects shape ({self.rows},), got {v.shape}")
        if self._dense is not None:
            return self._dense.T @ v
        return self._csr.T @ v

    def to_dense(self) -> np.ndarray:
        if self._dense is not None:
            return np.array(self._dense, copy=True)
        return self._csr.toarray()

    def gram(self) -> np.ndarray:
        """Return ``M.T @ M`` densely (cols x cols). Desk-scale helper."""
        if self._dense is not None:
            return self._dense.T @ self._dense
        return (self._csr.T @ self._csr).toarray()

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"RealMatrix({kind}, shape={self._shape})"


def stack_rows(top: RealMatrix, bottom: RealMatrix) -> RealMatrix:
    """Stack two matrices vertically, preserving sparsity when present."""
    if top.cols != bottom.cols:
        raise ValueError(f"column mismatch: {top.cols} vs {bottom.cols}")
    if top.is_sparse or bottom.is_sparse:
        parts = []
        for m in (top, bottom):
            parts.append(m._csr if m.is_sparse else sp.csr_matrix(m._dense))
        return RealMatrix(csr=sp.vstack(parts, format="csr"))
    return RealMatrix(dense=np.vstack([m.to_dense() for m in (top, bottom)]))


def _dense_extremes(m: RealMatrix) -> SpectralSummary:
    # Eigensolve the smaller of the two Gram matrices; when rows exceed cols,
    # M M^T carries rows - cols extra zero eigenvalues, so its minimum is 0.
    rows, cols = m.shape
    if rows <= cols:
        if m.is_sparse:
            gram = (m._csr @ m._csr.T).toarray()
        else:
            gram = m._dense @ m._dense.T
        eigs = np.linalg.eigvalsh(gram)
        smin = max(float(eigs[0]), 0.0)
    else:
        gram = m.gram()
        eigs = np.linalg.eigvalsh(gram)
        smin = 0.0
    smax = max(float(eigs[-1]), 0.0)
    return SpectralSummary(smax, smin, smax, 0, True)


def _power_rayleigh(apply_op, dim: int, tol: float, max_iters: int):
    """Largest eigenvalue of a symmetric PSD operator by power iteration."""
    rng = np.random.default_rng(0)  # fixed start => deterministic output
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam_prev = np.inf
    lam = 0.0
    for it in range(1, max_iters + 1):
        w = apply_op(v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw < 1e-300:
            return 0.0, it, True
        v = w / nw
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return lam, it, True
        lam_prev = lam
    return lam, max_iters, False


def spectral_extremes(m: RealMatrix, tol: float = SPECTRAL_TOL,
                      max_iters: int = 20000) -> SpectralSummary:
    """Extreme eigenvalues of ``M @ M.T``.

    Small shapes (``min(rows, cols) <= DENSE_EIG_LIMIT``) go through an exact
    dense eigensolve of the smaller Gram matrix.  Larger shapes use power
    iteration for the top eigenvalue followed by power iteration on the
    shifted operator ``sigma_max I - M M^T`` for the bottom one.

    Raises
    ------
    SpectralConvergenceError
        If either power iteration stalls; the best estimate so far rides on
        the exception's ``best`` attribute.
    """
    rows, cols = m.shape
    if rows == 0 or cols == 0:
        return SpectralSummary(0.0, 0.0, 0.0, 0, True)
    if min(rows, cols) <= DENSE_EIG_LIMIT:
        return _dense_extremes(m)

    def gram_op(v):
        return m.mat_vec(m.rmat_vec(v))

    smax, it_max, ok_max = _power_rayleigh(gram_op, rows, tol, max_iters)
    smax = max(smax, 0.0)

    def shifted_op(v):
        return smax * v - gram_op(v)

    mu, it_min, ok_min = _power_rayleigh(shifted_op, rows, tol, max_iters)
    smin = max(smax - max(mu, 0.0), 0.0)
    summary = SpectralSummary(smax, smin, smax, it_max + it_min, ok_max and ok_min)
    if not summary.converged:
        raise SpectralConvergenceError(
            f"power iteration did not reach tol={tol} within {max_iters} sweeps",
            summary,
        )
    return summary


def solve_spd(mat, b: np.ndarray) -> np.ndarray:
    """Solve ``M x = b`` for symmetric positive definite M via Cholesky.

    Parameters
    ----------
    mat : RealMatrix or 2-d ndarray
        Symmetric positive definite, dimension at most ``SOLVE_DIM_LIMIT``.
    b : 1-d ndarray

    Returns
    -------
    x with ``||M x - b|| <= SOLVE_TOL * ||b||``; iterative refinement runs
    until that holds and a LinAlgError is raised if it cannot be met.
    """
    M = mat.to_dense() if isinstance(mat, RealMatrix) else np.asarray(mat, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"square matrix expected, got shape {M.shape}")
    n = M.shape[0]
    if n > SOLVE_DIM_LIMIT:
        raise ValueError(f"dimension {n} exceeds SOLVE_DIM_LIMIT={SOLVE_DIM_LIMIT}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"rhs shape {b.shape} does not match matrix dimension {n}")
    scale = np.abs(M).max()
    if scale > 0 and np.abs(M - M.T).max() > 1e-8 * scale:
        raise np.linalg.LinAlgError("matrix is not symmetric")
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"matrix is not positive definite: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, b, check_finite=False)
    norm_b = np.linalg.norm(b)
    # A couple of refinement steps keep the residual at the contract level
    # even for moderately ill-conditioned systems.
    for _ in range(3):
        r = b - M @ x
        if np.linalg.norm(r) <= SOLVE_TOL * norm_b:
            return x
        x = x + scipy.linalg.cho_solve(factor, r, check_finite=False)
    if np.linalg.norm(b - M @ x) > SOLVE_TOL * norm_b:
        raise np.linalg.LinAlgError(
            "residual exceeds SOLVE_TOL after refinement; system too ill-conditioned"
        )
    return x
