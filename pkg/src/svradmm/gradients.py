"""Stochastic first-order oracles: full, single-sample, variance-reduced.

The variance-reduced estimator keeps a snapshot point together with the full
gradient there and corrects single-sample gradients with it:

    ghat(x) = grad f_i(x) - grad f_i(x_snapshot) + full_grad(x_snapshot)

Index sampling goes through a counter-based generator keyed by
``(seed, epoch)`` with the draw position inside the epoch acting as the
counter offset, so the index at (seed, epoch, t) is a pure function of those
three values.  Two solvers handed the same seed therefore see the same
component sequence, which is what the momentum-degeneracy checks rely on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .problems import ConstrainedProblem

__all__ = [
    "SnapshotGradient",
    "VarianceProbe",
    "full_gradient",
    "take_snapshot",
    "sgd_gradient",
    "svrg_gradient",
    "variance_probe",
    "index_stream",
    "derive_run_seed",
]


@dataclass(frozen=True)
class SnapshotGradient:
    """Snapshot point and the full gradient evaluated there."""

    x_tilde: np.ndarray
    grad: np.ndarray


@dataclass(frozen=True)
class VarianceProbe:
    """Measured estimator variance against its theoretical envelope.

    ``mean_sq_deviation`` is E_i ||ghat_i(x) - full_grad(x)||^2, exact when
    ``exhaustive`` (sum over every component) and Monte Carlo otherwise.
    ``bound`` is L^2 ||x - x_tilde||^2.
    """

    mean_sq_deviation: float
    bound: float
    exhaustive: bool
    sample_count: int


def full_gradient(p: ConstrainedProblem, x: np.ndarray) -> np.ndarray:
    """(1/n) sum_i grad f_i(x)."""
    return p.full_grad(np.asarray(x, dtype=np.float64))


def take_snapshot(p: ConstrainedProblem, x_tilde: np.ndarray) -> SnapshotGradient:
    x_tilde = np.array(x_tilde, dtype=np.float64, copy=True)
    return SnapshotGradient(x_tilde=x_tilde, grad=full_gradient(p, x_tilde))


def sgd_gradient(p: ConstrainedProblem, x: np.ndarray, i) -> np.ndarray:
    """grad f_i(x), the plain single-sample estimator.

    ``i`` may also be a sequence of indices (a mini-batch), in which case the
    batch mean is returned; the solvers always pass a single index.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.ndim(i) == 0:
        return p.component_grad(int(i), x)
    grads = [p.component_grad(int(j), x) for j in np.asarray(i).ravel()]
    return np.mean(grads, axis=0)


def svrg_gradient(p: ConstrainedProblem, x: np.ndarray, i,
                  snap: SnapshotGradient) -> np.ndarray:
    """grad f_i(x) - grad f_i(x_tilde) + full_grad(x_tilde).

    Accepts a mini-batch of indices like :func:`sgd_gradient`; batch size 1
    is the production path.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.ndim(i) == 0:
        i = int(i)
        return p.component_grad(i, x) - p.component_grad(i, snap.x_tilde) + snap.grad
    return sgd_gradient(p, x, i) - sgd_gradient(p, snap.x_tilde, i) + snap.grad


def variance_probe(p: ConstrainedProblem, x: np.ndarray, snap: SnapshotGradient,
                   exhaustive: bool = True, sample_count: int = 512,
                   seed: int = 0) -> VarianceProbe:
    """Measure the variance of the corrected estimator at ``x``.

    Exhaustive mode averages the squared deviation over every component;
    sampled mode draws ``sample_count`` indices uniformly.  The reported
    bound is L^2 ||x - x_tilde||^2 with L from the problem's Lipschitz
    estimate.
    """
    x = np.asarray(x, dtype=np.float64)
    L = p.lipschitz().value
    dx = x - snap.x_tilde
    bound = (L * L) * float(dx @ dx)
    if p.n == 0:
        return VarianceProbe(0.0, bound, exhaustive, 0)
    gbar_x = full_gradient(p, x)
    shift = snap.grad - gbar_x
    if exhaustive:
        dev = p.component_grads_all(x) - p.component_grads_all(snap.x_tilde) + shift
        msd = float(np.mean(np.einsum("ij,ij->i", dev, dev)))
        return VarianceProbe(msd, bound, True, p.n)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, p.n, size=sample_count)
    acc = 0.0
    for i in idx:
        d = p.component_grad(int(i), x) - p.component_grad(int(i), snap.x_tilde) + shift
        acc += float(d @ d)
    return VarianceProbe(acc / sample_count, bound, False, sample_count)


def index_stream(seed: int, epoch: int, n: int, count: int) -> np.ndarray:
    """Component indices for one epoch, reproducible per (seed, epoch, t).

    Backed by the Philox counter-based generator: the key carries the seed,
    the high counter word carries the epoch, and the in-epoch position is the
    block offset.  The value at position t never depends on how many draws
    preceded it in other epochs.
    """
    if n <= 0:
        raise ValueError("need at least one component to sample")
    if count < 0:
        raise ValueError("count must be nonnegative")
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(0)])
    counter = np.array([0, 0, 0, np.uint64(epoch)], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
    return gen.integers(0, n, size=count, dtype=np.int64)


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """Stable 63-bit per-run seed from (master seed, run index)."""
    payload = f"run:{master_seed}:{run_index}".encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFFFFFFFFFFFFFF
