"""Finite-sum objectives coupled to a second block by linear constraints.

The problem family is

    minimize    (1/n) sum_i f_i(x)  +  g(y)
    subject to  A x + B y = c

with smooth (possibly nonconvex) components ``f_i`` and a simple regularizer
``g``.  Component losses come in three kinds:

* :class:`SigmoidLoss`   -- ``f_i(x) = 1 / (1 + exp(b_i * a_i @ x))``
* :class:`LogisticLoss`  -- ``f_i(x) = log(1 + exp(-b_i * a_i @ x))``
* :class:`QuadraticLoss` -- ``f_i(x) = x @ S_i @ x / 2`` with symmetric S_i

:class:`ConstrainedProblem` validates the shapes once and exposes vectorized
gradient/value paths for homogeneous loss lists (a per-component fallback
covers mixed lists).  Module-level operations mirror the solver-facing
surface: :func:`full_objective`, :func:`augmented_lagrangian`,
:func:`lipschitz_estimate`, :func:`validate_feasibility`,
:func:`prox_regularizer`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .linalg import RealMatrix, SpectralSummary, spectral_extremes

__all__ = [
    "SigmoidLoss",
    "LogisticLoss",
    "QuadraticLoss",
    "L1Regularizer",
    "ZeroRegularizer",
    "LipschitzEstimate",
    "ConstrainedProblem",
    "full_objective",
    "augmented_lagrangian",
    "lipschitz_estimate",
    "validate_feasibility",
    "prox_regularizer",
    "soft_threshold",
    "sigmoid_curvature_bound",
]


def soft_threshold(v: np.ndarray, thr: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


@lru_cache(maxsize=1)
def sigmoid_curvature_bound() -> float:
    """Max |d^2/du^2  1/(1+e^u)| found numerically (grid + golden refine).

    The curvature is s(1-s)|1-2s| with s = 1/(1+e^u); the grid covers
    u in [-20, 20] at step 1e-4 and a golden-section pass refines the
    bracketing interval.
    """
    u = np.arange(-20.0, 20.0 + 1e-4, 1e-4)
    s = _expit(-u)
    curv = np.abs(s * (1.0 - s) * (1.0 - 2.0 * s))
    k = int(np.argmax(curv))

    def neg_curv(t):
        st = _expit(-t)
        return -abs(st * (1.0 - st) * (1.0 - 2.0 * st))

    lo = u[max(k - 1, 0)]
    hi = u[min(k + 1, len(u) - 1)]
    res = scipy.optimize.minimize_scalar(
        neg_curv, bracket=(lo, u[k], hi), method="golden",
        options={"xtol": 1e-12},
    )
    return max(float(curv[k]), float(-res.fun))


def _expit(u):
    # scipy.special.expit without importing the whole namespace at call sites
    from scipy.special import expit

    return expit(u)


# ---------------------------------------------------------------------- #
# component losses
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class SigmoidLoss:
    """f(x) = 1 / (1 + exp(b * a @ x)); nonconvex, bounded in (0, 1).

    ``b`` is expected in {-1, +1}; the smoothness constant below relies on
    |b| = 1.
    """

    a: np.ndarray
    b: float

    def value(self, x: np.ndarray) -> float:
        u = self.b * float(self.a @ x)
        return float(_expit(-u))

    def grad(self, x: np.ndarray) -> np.ndarray:
        u = self.b * float(self.a @ x)
        coef = -float(_expit(u) * _expit(-u)) * self.b
        return coef * self.a

    def smoothness(self) -> float:
        return sigmoid_curvature_bound() * float(self.a @ self.a)


@dataclass(frozen=True)
class LogisticLoss:
    """f(x) = log(1 + exp(-b * a @ x)); convex. ``b`` expected in {-1, +1}."""

    a: np.ndarray
    b: float

    def value(self, x: np.ndarray) -> float:
        u = self.b * float(self.a @ x)
        return float(np.logaddexp(0.0, -u))

    def grad(self, x: np.ndarray) -> np.ndarray:
        u = self.b * float(self.a @ x)
        coef = -float(_expit(-u)) * self.b
        return coef * self.a

    def smoothness(self) -> float:
        # curvature of log(1+e^{-u}) is at most 1/4
        return 0.25 * float(self.a @ self.a)


@dataclass(frozen=True)
class QuadraticLoss:
    """f(x) = x @ S @ x / 2 with S symmetric (indefinite S => nonconvex)."""

    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"square matrix expected, got {m.shape}")
        if m.size and np.abs(m - m.T).max() > 1e-8 * max(np.abs(m).max(), 1.0):
            raise ValueError("quadratic loss matrix must be symmetric")
        object.__setattr__(self, "mat", m)

    def value(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ (self.mat @ x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.mat @ x

    def smoothness(self) -> float:
        if self.mat.size == 0:
            return 0.0
        eigs = np.linalg.eigvalsh(self.mat)
        return float(np.abs(eigs).max())


# ---------------------------------------------------------------------- #
# regularizers
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class L1Regularizer:
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("l1 weight must be nonnegative")

    def value(self, y: np.ndarray) -> float:
        return self.weight * float(np.abs(y).sum())

    def prox(self, v: np.ndarray, scale: float) -> np.ndarray:
        return soft_threshold(v, self.weight * scale)


@dataclass(frozen=True)
class ZeroRegularizer:
    def value(self, y: np.ndarray) -> float:
        return 0.0

    def prox(self, v: np.ndarray, scale: float) -> np.ndarray:
        return np.array(v, dtype=np.float64, copy=True)


def prox_regularizer(reg, v: np.ndarray, scale: float) -> np.ndarray:
    """argmin_y  scale_weighted reg(y) + (1/2)||y - v||^2 (closed form)."""
    if scale < 0:
        raise ValueError("prox scale must be nonnegative")
    return reg.prox(np.asarray(v, dtype=np.float64), float(scale))


# ---------------------------------------------------------------------- #
# lipschitz estimate
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class LipschitzEstimate:
    """Smoothness constant for the component family.

    ``value`` is the max over components; ``method`` names how the binding
    component's constant was obtained ("exact_quadratic",
    "grid_bound_sigmoid", "power_bound_logistic", or "none" when there are
    no components).
    """

    value: float
    per_component: np.ndarray
    method: str


_METHOD_BY_KIND = {
    QuadraticLoss: "exact_quadratic",
    SigmoidLoss: "grid_bound_sigmoid",
    LogisticLoss: "power_bound_logistic",
}


# ---------------------------------------------------------------------- #
# the constrained problem
# ---------------------------------------------------------------------- #


class ConstrainedProblem:
    """Finite sum + regularizer coupled by ``A x + B y = c``.

    Parameters
    ----------
    losses : sequence of component losses (may be empty)
    regularizer : L1Regularizer or ZeroRegularizer
    A : RealMatrix, d x d1
    B : RealMatrix, d x d2
    c : ndarray, (d,)
    """

    def __init__(self, losses, regularizer, A: RealMatrix, B: RealMatrix, c):
        self.losses = tuple(losses)
        self.reg = regularizer
        if not isinstance(A, RealMatrix) or not isinstance(B, RealMatrix):
            raise TypeError("A and B must be RealMatrix instances")
        self.A = A
        self.B = B
        self.c = np.asarray(c, dtype=np.float64)
        if self.c.shape != (A.rows,):
            raise ValueError(f"c has shape {self.c.shape}, expected ({A.rows},)")
        if B.rows != A.rows:
            raise ValueError(f"B has {B.rows} rows, expected {A.rows}")
        self.d = A.rows
        self.d1 = A.cols
        self.d2 = B.cols
        self.n = len(self.losses)
        for i, loss in enumerate(self.losses):
            dim = loss.mat.shape[0] if isinstance(loss, QuadraticLoss) else loss.a.shape[0]
            if dim != self.d1:
                raise ValueError(f"loss {i} has dimension {dim}, expected {self.d1}")
        kinds = {type(loss) for loss in self.losses}
        if not self.losses:
            self._kind = "empty"
        elif kinds == {QuadraticLoss}:
            self._kind = "quadratic"
        elif kinds == {SigmoidLoss}:
            self._kind = "sigmoid"
        elif kinds == {LogisticLoss}:
            self._kind = "logistic"
        else:
            self._kind = "mixed"
        # lazy caches
        self._stack = None        # (n, d1, d1) for quadratic families
        self._feat = None         # (n, d1) for margin families
        self._lab = None          # (n,)
        self._lip = None
        self._a_spec = None
        self._btb_scale = "unset"  # float when B^T B = nu*I, else None

    # ------------------------------------------------------------------ #
    # vectorization caches
    # ------------------------------------------------------------------ #

    def _margin_arrays(self):
        if self._feat is None:
            self._feat = np.stack([loss.a for loss in self.losses])
            self._lab = np.array([loss.b for loss in self.losses])
        return self._feat, self._lab

    def _quad_stack(self):
        if self._stack is None:
            self._stack = np.stack([loss.mat for loss in self.losses])
        return self._stack

    # ------------------------------------------------------------------ #
    # values and gradients
    # ------------------------------------------------------------------ #

    def loss_value(self, x: np.ndarray) -> float:
        """(1/n) sum_i f_i(x); 0 for an empty component list."""
        if self.n == 0:
            return 0.0
        if self._kind == "sigmoid":
            feat, lab = self._margin_arrays()
            return float(np.mean(_expit(-lab * (feat @ x))))
        if self._kind == "logistic":
            feat, lab = self._margin_arrays()
            return float(np.mean(np.logaddexp(0.0, -lab * (feat @ x))))
        if self._kind == "quadratic":
            stack = self._quad_stack()
            return 0.5 * float(np.mean(np.einsum("nij,i,j->n", stack, x, x)))
        return float(np.fromiter((l.value(x) for l in self.losses), dtype=np.float64).mean())

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        """(1/n) sum_i grad f_i(x); zeros for an empty component list."""
        if self.n == 0:
            return np.zeros(self.d1)
        if self._kind in ("sigmoid", "logistic"):
            feat, lab = self._margin_arrays()
            u = lab * (feat @ x)
            if self._kind == "sigmoid":
                coef = -_expit(u) * _expit(-u) * lab
            else:
                coef = -_expit(-u) * lab
            return (feat.T @ coef) / self.n
        if self._kind == "quadratic":
            return np.einsum("nij,j->i", self._quad_stack(), x) / self.n
        out = np.zeros(self.d1)
        for loss in self.losses:
            out += loss.grad(x)
        return out / self.n

    def component_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.losses[i].grad(x)

    def component_grads_all(self, x: np.ndarray) -> np.ndarray:
        """All component gradients stacked, shape (n, d1)."""
        if self.n == 0:
            return np.zeros((0, self.d1))
        if self._kind in ("sigmoid", "logistic"):
            feat, lab = self._margin_arrays()
            u = lab * (feat @ x)
            if self._kind == "sigmoid":
                coef = -_expit(u) * _expit(-u) * lab
            else:
                coef = -_expit(-u) * lab
            return feat * coef[:, None]
        if self._kind == "quadratic":
            return np.einsum("nij,j->ni", self._quad_stack(), x)
        return np.stack([loss.grad(x) for loss in self.losses])

    def residual(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """A x + B y - c."""
        return self.A.mat_vec(x) + self.B.mat_vec(y) - self.c

    # ------------------------------------------------------------------ #
    # cached structure
    # ------------------------------------------------------------------ #

    def lipschitz(self) -> LipschitzEstimate:
        if self._lip is None:
            self._lip = lipschitz_estimate(self)
        return self._lip

    def coupling_spectrum(self) -> SpectralSummary:
        """spectral_extremes(A), computed once."""
        if self._a_spec is None:
            self._a_spec = spectral_extremes(self.A)
        return self._a_spec

    def bt_b_scale(self):
        """nu such that B^T B = nu * I, or None when B has no such structure."""
        if self._btb_scale == "unset":
            if self.B.is_sparse:
                btb = (self.B._csr.T @ self.B._csr).tocsr()
                diag = btb.diagonal()
                off = abs(btb - sp.diags(diag)).max() if btb.nnz else 0.0
            else:
                bd = self.B.to_dense()
                btb = bd.T @ bd
                diag = np.diag(btb).copy()
                off = np.abs(btb - np.diag(diag)).max() if btb.size else 0.0
            nu = float(diag[0]) if diag.size else 1.0
            scale = max(abs(nu), 1.0)
            if diag.size and np.abs(diag - nu).max() <= 1e-12 * scale and off <= 1e-12 * scale and nu > 0:
                self._btb_scale = nu
            else:
                self._btb_scale = None
        return self._btb_scale


# ---------------------------------------------------------------------- #
# module-level operations
# ---------------------------------------------------------------------- #


def full_objective(p: ConstrainedProblem, x: np.ndarray, y: np.ndarray) -> float:
    """(1/n) sum_i f_i(x) + g(y)."""
    return p.loss_value(x) + p.reg.value(np.asarray(y, dtype=np.float64))


def augmented_lagrangian(p: ConstrainedProblem, x, y, lam, rho: float) -> float:
    """f(x) + g(y) - lam @ (Ax + By - c) + (rho/2) ||Ax + By - c||^2."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    r = p.residual(np.asarray(x, float), np.asarray(y, float))
    lam = np.asarray(lam, dtype=np.float64)
    return full_objective(p, x, y) - float(lam @ r) + 0.5 * rho * float(r @ r)


def lipschitz_estimate(p: ConstrainedProblem) -> LipschitzEstimate:
    """Per-component smoothness constants and their max.

    Quadratic components get the exact spectral norm; sigmoid components use
    the grid-refined curvature bound times ||a||^2; logistic components use
    the analytic 1/4 curvature cap times ||a||^2.
    """
    if p.n == 0:
        return LipschitzEstimate(0.0, np.zeros(0), "none")
    per = np.array([loss.smoothness() for loss in p.losses])
    k = int(np.argmax(per))
    return LipschitzEstimate(float(per[k]), per, _METHOD_BY_KIND[type(p.losses[k])])


def validate_feasibility(p: ConstrainedProblem, tol: float = 1e-8):
    """Advisory image check: every column of B, and c, must lie in Im(A).

    For each target vector v (the columns of B, then c) this solves
    ``min_x ||A x - v||`` and records the residual; a target passes when its
    residual is at most ``tol * (1 + ||v||)``.  Returns ``(ok, worst)`` where
    ``worst`` is the largest residual seen.  Never raises on failure; the
    condition is an analysis prerequisite, not a runtime requirement.
    """
    a_dense = p.A.to_dense()
    b_dense = p.B.to_dense()
    ok = True
    worst = 0.0
    targets = [b_dense[:, j] for j in range(p.d2)]
    targets.append(p.c)
    for v in targets:
        sol = np.linalg.lstsq(a_dense, v, rcond=None)[0]
        resid = float(np.linalg.norm(a_dense @ sol - v))
        worst = max(worst, resid)
        if resid > tol * (1.0 + float(np.linalg.norm(v))):
            ok = False
    return ok, worst
