"""Multi-class Neyman-Pearson and fairness-constrained hinge-loss problems."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import _kernels
from ..io import DatasetMatrix
from ..soec import Ball, Component, Product, SoecProblem, batch_mean


class _Rows:
    """0-based CSR view of a dataset used by the kernels."""

    def __init__(self, dm: DatasetMatrix):
        if dm.row_count == 0:
            raise ValueError("dataset has no rows")
        self.data, self.indices, self.indptr = (np.ascontiguousarray(a) for a in dm.csr())
        self.n = dm.row_count
        self.dim = dm.feature_dim

    def matmul(self, rows, mat):
        return _kernels.csr_rows_matmul(self.data, self.indices, self.indptr,
                                        np.ascontiguousarray(rows, dtype=np.int64),
                                        np.ascontiguousarray(mat, dtype=np.float64))

    def tmatmul(self, rows, weights):
        return _kernels.csr_rows_tmatmul(self.data, self.indices, self.indptr,
                                         np.ascontiguousarray(rows, dtype=np.int64),
                                         np.ascontiguousarray(weights, dtype=np.float64), self.dim)


class _FiniteSum(Component):
    def __init__(self, size):
        self.support_size = size

    def draw(self, rng, n):
        return rng.integers(0, self.support_size, size=n)

    def support(self):
        return np.arange(self.support_size)


class PairwiseHinge(_FiniteSum):
    """``sum_{l != k} mean_psi (1 - (x_k - x_l)^T psi)_+`` over the rows of class ``k``.

    ``x`` stacks one weight vector per class, ``x = (x_1, ..., x_K)``.
    """

    def __init__(self, rows: _Rows, k, num_classes):
        super().__init__(rows.n)
        self.rows = rows
        self.k = k
        self.num_classes = num_classes

    def evaluate(self, x, scenarios):
        K, p = self.num_classes, self.rows.dim
        W = np.asarray(x).reshape(K, p).T
        scores = self.rows.matmul(scenarios, W)
        margin = 1.0 - (scores[:, [self.k]] - scores)
        margin[:, self.k] = 0.0
        loss = np.maximum(margin, 0.0).sum(axis=1)
        active = (margin > 0).astype(np.float64)
        coef = active
        coef[:, self.k] = -active.sum(axis=1)
        grad = self.rows.tmatmul(scenarios, coef) / len(scenarios)
        return float(batch_mean(loss)), grad.T.ravel()


@dataclass(frozen=True)
class MulticlassNpSpec:
    """Per-class datasets; class 0 plays the role of the protected class in the objective."""

    classes: tuple
    radius: float = 5.0

    @property
    def num_classes(self):
        return len(self.classes)


def build_np_multiclass(spec: MulticlassNpSpec) -> SoecProblem:
    """Objective: pairwise hinge of class 0; constraint ``k``: the same for class ``k`` with threshold ``K - 1``."""
    K = spec.num_classes
    if K < 2:
        raise ValueError("need at least two classes")
    dims = {dm.feature_dim for dm in spec.classes}
    if len(dims) != 1:
        raise ValueError("classes disagree on feature dimension")
    for k, dm in enumerate(spec.classes):
        if dm.row_count == 0:
            raise ValueError(f"class {k} has no points")
    p = dims.pop()
    comps = [PairwiseHinge(_Rows(dm), k, K) for k, dm in enumerate(spec.classes)]
    domain = Product([Ball(spec.radius, dimension=p) for _ in range(K)])
    total = sum(dm.row_count for dm in spec.classes)
    return SoecProblem(comps, np.full(K - 1, K - 1.0), domain, name="np", dataset_size=total,
                       initial_point=np.zeros(K * p), metadata={"num_classes": K, "feature_dim": p})


def split_classes(dm: DatasetMatrix):
    return tuple(dm.subset(dm.class_rows(k)) for k in range(dm.num_classes))


class LabeledHinge(_FiniteSum):
    """``mean (1 - b a^T x)_+`` with labels ``b`` in {-1, +1}."""

    def __init__(self, rows: _Rows, signs):
        super().__init__(rows.n)
        self.rows = rows
        self.signs = np.asarray(signs, dtype=np.float64)

    def evaluate(self, x, scenarios):
        z = self.rows.matmul(scenarios, np.asarray(x)[:, None])[:, 0] * self.signs[scenarios]
        margin = 1.0 - z
        active = margin > 0
        w = np.where(active, -self.signs[scenarios], 0.0)
        grad = self.rows.tmatmul(scenarios, w[:, None])[:, 0] / len(scenarios)
        return float(batch_mean(np.maximum(margin, 0.0))), grad


class GroupBalance(Component):
    """``mean_{D_a} (a^T x + 0.5)_+ + (1/kappa) mean_{D_b} (-a^T x + 0.5)_+``.

    A scenario is a pair of row indices, one from each group.
    """

    rows_per_draw = 2

    def __init__(self, first: _Rows, second: _Rows, kappa):
        self.first = first
        self.second = second
        self.kappa = kappa
        self.support_size = first.n * second.n

    def draw(self, rng, n):
        return rng.integers(0, self.first.n, size=n), rng.integers(0, self.second.n, size=n)

    def support(self):
        return np.arange(self.first.n), np.arange(self.second.n)

    def _part(self, rows_obj, rows, x, sign):
        z = sign * rows_obj.matmul(rows, np.asarray(x)[:, None])[:, 0] + 0.5
        w = np.where(z > 0, sign, 0.0)
        grad = rows_obj.tmatmul(rows, w[:, None])[:, 0] / len(rows)
        return float(batch_mean(np.maximum(z, 0.0))), grad

    def evaluate(self, x, scenarios):
        ra, rb = scenarios
        va, ga = self._part(self.first, ra, x, 1.0)
        vb, gb = self._part(self.second, rb, x, -1.0)
        return va + vb / self.kappa, ga + gb / self.kappa


@dataclass(frozen=True)
class FairnessSpec:
    labeled: DatasetMatrix
    group_m: DatasetMatrix
    group_f: DatasetMatrix
    signs: Optional[np.ndarray] = None
    kappa: float = 0.95
    radius: float = 5.0


def build_fairness(spec: FairnessSpec) -> SoecProblem:
    """Hinge objective with two group-balance constraints, both with threshold ``1/kappa``.

    ``signs`` gives the +-1 labels of ``labeled``; by default relabeled class 0
    maps to +1 and every other class to -1.
    """
    if not 0 < spec.kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    for name in ("labeled", "group_m", "group_f"):
        if getattr(spec, name).row_count == 0:
            raise ValueError(f"{name} dataset is empty")
    dims = {spec.labeled.feature_dim, spec.group_m.feature_dim, spec.group_f.feature_dim}
    if len(dims) != 1:
        raise ValueError("datasets disagree on feature dimension")
    p = dims.pop()
    signs = spec.signs
    if signs is None:
        signs = np.where(spec.labeled.labels == 0, 1.0, -1.0)
    rm, rf = _Rows(spec.group_m), _Rows(spec.group_f)
    comps = [LabeledHinge(_Rows(spec.labeled), signs),
             GroupBalance(rm, rf, spec.kappa),
             GroupBalance(rf, rm, spec.kappa)]
    size = spec.labeled.row_count + spec.group_m.row_count + spec.group_f.row_count
    return SoecProblem(comps, np.full(2, 1.0 / spec.kappa), Ball(spec.radius, dimension=p),
                       name="fairness", dataset_size=size, initial_point=np.zeros(p),
                       metadata={"kappa": spec.kappa})


# ---------------------------------------------------------------------------
# Synthetic data


def gaussian_classes(num_points=3000, num_classes=3, dim=2, seed=0, spread=1.0, separation=2.0):
    """Isotropic Gaussian blobs with means on a circle; returns a DatasetMatrix."""
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(num_classes) / num_classes
    means = np.zeros((num_classes, dim))
    means[:, 0] = separation * np.cos(angles)
    if dim > 1:
        means[:, 1] = separation * np.sin(angles)
    labels = np.arange(num_points) % num_classes
    feats = means[labels] + spread * rng.standard_normal((num_points, dim))
    return DatasetMatrix.from_dense(feats, labels.tolist())


def fairness_data(num_points=600, dim=5, seed=0, group_shift=1.0):
    """Labeled set plus two unlabeled groups whose means differ along one direction."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    feats = rng.standard_normal((num_points, dim))
    labels = np.where(feats @ w + 0.3 * rng.standard_normal(num_points) > 0, 0, 1)
    labeled = DatasetMatrix.from_dense(feats, labels.tolist())
    shift = np.zeros(dim)
    shift[0] = group_shift
    gm = DatasetMatrix.from_dense(rng.standard_normal((num_points // 2, dim)) + shift, [0] * (num_points // 2))
    gf = DatasetMatrix.from_dense(rng.standard_normal((num_points // 2, dim)) - shift, [0] * (num_points // 2))
    return labeled, gm, gf
