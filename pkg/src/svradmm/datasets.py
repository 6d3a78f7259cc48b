"""Dataset ingestion, synthetic instances, and the fused-lasso graph matrix.

LIBSVM text in and out, a seeded generator for the synthetic quadratic
family, correlation-thresholded graph construction, and train/test
splitting.  Everything here is a pure function of its inputs and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import RealMatrix, stack_rows
from .problems import ConstrainedProblem, L1Regularizer, QuadraticLoss

__all__ = [
    "Dataset",
    "GraphMatrix",
    "ParseError",
    "parse_libsvm",
    "serialize_libsvm",
    "gen_quadratic_instance",
    "save_quadratic_instance",
    "load_quadratic_instance",
    "build_graph_matrix",
    "split_train_test",
]


class ParseError(ValueError):
    """Malformed LIBSVM text; the message carries the 1-based line number."""


@dataclass(frozen=True)
class Dataset:
    """Sparse sample matrix plus binary labels.

    ``samples`` rows are feature vectors over dimension ``d1``; labels are
    strictly -1 or +1.
    """

    samples: sp.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.float64)
        object.__setattr__(self, "labels", labels)
        if self.samples.shape[0] != labels.shape[0]:
            raise ValueError(
                f"{self.samples.shape[0]} samples but {labels.shape[0]} labels")
        if labels.size and not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d1(self) -> int:
        return self.samples.shape[1]

    def row(self, i: int) -> np.ndarray:
        """Dense feature vector of sample ``i``."""
        return np.asarray(self.samples.getrow(i).todense()).ravel()

    def dense(self) -> np.ndarray:
        return np.asarray(self.samples.todense())

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.samples[idx], self.labels[idx])


def parse_libsvm(text, d1: int | None = None) -> Dataset:
    """Parse LIBSVM-format text: one "label idx:val idx:val ..." per line.

    ``text`` may be a string or any iterable of lines.  Labels at or below
    zero map to -1, the rest to +1.  Feature indices are 1-based and must
    be strictly increasing within a line; they are stored 0-based.  ``d1``
    defaults to the largest index seen but can be passed so that files
    sharing a feature space (train/test) agree on the width.

    Malformed input raises :class:`ParseError` naming the offending line.
    """
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in text]
    if not lines:
        raise ParseError("line 1: empty input")
    labels: list[float] = []
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    max_index = 0
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            raise ParseError(f"line {lineno}: blank line")
        try:
            raw_label = float(tokens[0])
        except ValueError:
            raise ParseError(
                f"line {lineno}: label {tokens[0]!r} is not numeric") from None
        labels.append(-1.0 if raw_label <= 0.0 else 1.0)
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"line {lineno}: token {tok!r} has no colon")
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError(
                    f"line {lineno}: index {idx_s!r} is not an integer") from None
            try:
                val = float(val_s)
            except ValueError:
                raise ParseError(
                    f"line {lineno}: value {val_s!r} is not numeric") from None
            if idx < 1:
                raise ParseError(f"line {lineno}: index {idx} is below 1")
            if idx <= prev:
                raise ParseError(
                    f"line {lineno}: index {idx} does not increase past {prev}")
            prev = idx
            max_index = max(max_index, idx)
            rows.append(len(labels) - 1)
            cols.append(idx - 1)
            vals.append(val)
    if d1 is None:
        d1 = max_index
    elif d1 < max_index:
        raise ParseError(
            f"d1={d1} is smaller than the largest feature index {max_index}")
    mat = sp.csr_matrix(
        (np.asarray(vals, dtype=np.float64),
         (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(labels), d1))
    return Dataset(mat, np.asarray(labels))


def serialize_libsvm(ds: Dataset) -> str:
    """Render a dataset back to LIBSVM text.

    Values use ``repr`` (shortest round-trip decimal), labels print as
    +1/-1, indices ascend 1-based.  ``parse_libsvm`` of the output
    reproduces the dataset exactly.
    """
    out = []
    csr = ds.samples
    for i in range(ds.n):
        parts = ["+1" if ds.labels[i] > 0 else "-1"]
        start, stop = csr.indptr[i], csr.indptr[i + 1]
        order = np.argsort(csr.indices[start:stop], kind="stable")
        for k in order:
            parts.append(f"{csr.indices[start + k] + 1}:{float(csr.data[start + k])!r}")
        out.append(" ".join(parts))
    return "\n".join(out) + ("\n" if out else "")


@dataclass(frozen=True)
class GraphMatrix:
    """Edge-incidence matrix built from feature correlations.

    Each row of ``G`` is e_j - e_k for one selected pair j < k; ``edges``
    lists the pairs in the same order and ``excluded`` names zero-variance
    features left out of the pairing.
    """

    G: RealMatrix
    edges: tuple = field(default_factory=tuple)
    excluded: tuple = field(default_factory=tuple)


def build_graph_matrix(ds: Dataset, corr_threshold: float = 0.5) -> GraphMatrix:
    """Connect feature pairs whose absolute Pearson correlation exceeds the
    threshold; one +1/-1 row per edge, ordered lexicographically by (j, k).

    Constant features carry no correlation signal and are excluded (and
    reported).  An empty edge set yields a 0 x d1 matrix.
    """
    if not (0.0 < corr_threshold < 1.0):
        raise ValueError("corr_threshold must lie in (0, 1)")
    if ds.n < 2:
        raise ValueError("need at least two samples to estimate correlations")
    X = ds.dense()
    stds = X.std(axis=0)
    keep = np.flatnonzero(stds > 0.0)
    excluded = tuple(int(j) for j in np.flatnonzero(stds == 0.0))
    edges: list[tuple[int, int]] = []
    if keep.size >= 2:
        corr = np.corrcoef(X[:, keep], rowvar=False)
        for a in range(keep.size):
            for b in range(a + 1, keep.size):
                if abs(corr[a, b]) > corr_threshold:
                    edges.append((int(keep[a]), int(keep[b])))
    edges.sort()
    if edges:
        rows = np.repeat(np.arange(len(edges)), 2)
        cols = np.array(edges).ravel()
        vals = np.tile([1.0, -1.0], len(edges))
        G = RealMatrix.from_triplets(rows, cols, vals, (len(edges), ds.d1))
    else:
        G = RealMatrix(csr=sp.csr_matrix((0, ds.d1), dtype=np.float64))
    return GraphMatrix(G, tuple(edges), excluded)


def _chain_graph(d1: int) -> RealMatrix:
    """First-difference rows e_j - e_{j+1}: the fixed graph used when a
    synthetic instance wants a nontrivial coupling block."""
    rows = np.repeat(np.arange(d1 - 1), 2)
    cols = np.empty(2 * (d1 - 1), dtype=np.int64)
    cols[0::2] = np.arange(d1 - 1)
    cols[1::2] = np.arange(1, d1)
    vals = np.tile([1.0, -1.0], d1 - 1)
    return RealMatrix.from_triplets(rows, cols, vals, (d1 - 1, d1))


def gen_quadratic_instance(n: int, d1: int, seed: int, a_mode: str = "identity",
                           lambda1: float = 1e-4, scale: float = 1.0,
                           ) -> ConstrainedProblem:
    """Synthetic nonconvex quadratic family.

    Each component is x^T S_i x / 2 with S_i = (M + M^T)/2 and M drawn
    i.i.d. standard normal, so the S_i are symmetric and generically
    indefinite.  The constraint is y = A x with A the identity or, for
    a_mode="graph_stacked", the chain-difference graph stacked on the
    identity.  ``scale`` multiplies every S_i, shrinking the smoothness
    constant for configurations that need a small L.
    """
    if n < 1 or d1 < 1:
        raise ValueError("n and d1 must be at least 1")
    if a_mode not in ("identity", "graph_stacked"):
        raise ValueError(f"unknown a_mode {a_mode!r}")
    rng = np.random.default_rng(seed)
    losses = []
    for _ in range(n):
        M = rng.standard_normal((d1, d1))
        losses.append(QuadraticLoss(scale * 0.5 * (M + M.T)))
    if a_mode == "identity":
        A = RealMatrix.identity(d1)
    else:
        A = stack_rows(_chain_graph(d1), RealMatrix.identity(d1))
    d2 = A.rows
    return ConstrainedProblem(
        losses,
        L1Regularizer(lambda1),
        A,
        RealMatrix.scaled_identity(d2, -1.0),
        np.zeros(d2),
    )


def save_quadratic_instance(path, p: ConstrainedProblem) -> None:
    """Persist a quadratic instance (component matrices, penalty weight,
    coupling matrix) as an npz archive."""
    mats = np.stack([loss.mat for loss in p.losses])
    np.savez(path, mats=mats, lambda1=np.float64(p.reg.weight),
             a_dense=p.A.to_dense())


def load_quadratic_instance(path) -> ConstrainedProblem:
    """Rebuild an instance written by :func:`save_quadratic_instance`."""
    with np.load(path) as data:
        mats = data["mats"]
        lambda1 = float(data["lambda1"])
        a_dense = data["a_dense"]
    losses = tuple(QuadraticLoss(m) for m in mats)
    A = RealMatrix.dense(a_dense)
    d2 = A.rows
    return ConstrainedProblem(
        losses, L1Regularizer(lambda1), A,
        RealMatrix.scaled_identity(d2, -1.0), np.zeros(d2))


def split_train_test(ds: Dataset, train_fraction: float, seed: int,
                     ) -> tuple[Dataset, Dataset]:
    """Seeded permutation split into floor(f*n) train and the rest test."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must lie in (0, 1)")
    if ds.n < 2:
        raise ValueError("need at least two samples to split")
    perm = np.random.default_rng(seed).permutation(ds.n)
    cut = int(np.floor(train_fraction * ds.n))
    return ds.subset(perm[:cut]), ds.subset(perm[cut:])
