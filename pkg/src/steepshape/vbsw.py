"""Sample weights from the local variance of labels among nearest neighbours.

Points whose k-neighbourhood (self included) shows high label variance sit
near steep or noisy regions of the target; they get proportionally larger
training weights.  The raw variances are mapped affinely to [1, m] and then
normalised to sum to 1, so m caps the weight ratio between the steepest and
flattest points and the affine step makes the weights invariant to affine
relabelling y -> a*y + c.

The same machinery applied to a trained network's penultimate activations
(instead of raw inputs) yields weights for refitting just the final affine
layer, which is useful when input-space distances are meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dataset import LabeledDataset, WeightedDataset
from .models import MlpModel, TrainConfig, feature_extract, fit_linear_head

_BRUTE_FORCE_MAX = 8192


@dataclass(frozen=True)
class VbswConfig:
    """k neighbours per point, weight-ratio cap m, feature z-scoring toggle."""

    k: int = 20
    m: float = 100.0
    standardize_features: bool = True

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2 (unbiased variance needs it)")
        if self.m < 1:
            raise ValueError("m must be at least 1")


class KnnIndex:
    """Exact k nearest neighbours; ties broken by ascending point index.

    Brute force for small point sets, kd-tree with a tie-repair pass above
    _BRUTE_FORCE_MAX points.  Queries return (distances, indices), each
    (n_queries, k), distances non-decreasing along each row.
    """

    def __init__(self, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("need at least one point")
        self.points = pts
        self._tree = cKDTree(pts) if pts.shape[0] > _BRUTE_FORCE_MAX else None

    def __len__(self) -> int:
        return self.points.shape[0]

    def query(self, queries: np.ndarray, k: int):
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if q.shape[1] != self.points.shape[1]:
            raise ValueError("query dimension does not match the index")
        if not 1 <= k <= len(self):
            raise ValueError(f"k must lie in [1, {len(self)}]")
        if self._tree is None:
            return self._brute(q, k)
        return self._tree_query(q, k)

    def _brute(self, q, k):
        # difference-form distances in query blocks: the same arithmetic as
        # the kd-tree repair pass, so both paths rank near-ties identically
        out_d = np.empty((q.shape[0], k))
        out_i = np.empty((q.shape[0], k), dtype=int)
        for start in range(0, q.shape[0], 256):
            block = q[start : start + 256]
            dist = np.linalg.norm(block[:, None, :] - self.points, axis=2)
            # stable sort keeps ascending index among exact distance ties
            order = np.argsort(dist, axis=1, kind="stable")[:, :k]
            out_d[start : start + 256] = np.take_along_axis(dist, order, axis=1)
            out_i[start : start + 256] = order
        return out_d, out_i

    def _tree_query(self, q, k):
        dist, idx = self._tree.query(q, k=k)
        # k = 1 comes back squeezed to (n,); restore the (n, k) layout
        dist = np.asarray(dist).reshape(q.shape[0], k)
        idx = np.asarray(idx).reshape(q.shape[0], k)
        # the tree is exact on distances; repair tie ordering at the k-th shell
        out_d = np.empty((q.shape[0], k))
        out_i = np.empty((q.shape[0], k), dtype=int)
        for row in range(q.shape[0]):
            r = dist[row, -1]
            cand = np.asarray(self._tree.query_ball_point(q[row], r * (1 + 1e-12)))
            if cand.size < k:  # fp shortfall; fall back to the tree's own answer
                cand = idx[row]
            d = np.linalg.norm(self.points[cand] - q[row], axis=1)
            order = np.lexsort((cand, d))[:k]
            out_d[row] = d[order]
            out_i[row] = cand[order]
        return out_d, out_i


def _local_variance_arrays(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > points.shape[0]:
        raise ValueError(f"k = {k} exceeds the dataset size {points.shape[0]}")
    index = KnnIndex(points)
    _, idx = index.query(points, k)
    neighbours = labels[idx]  # (N, k, n_o)
    return neighbours.var(axis=1, ddof=1).sum(axis=1)


def local_variance(ds: LabeledDataset, k: int) -> np.ndarray:
    """Unbiased variance of labels over each point's k-neighbourhood.

    The neighbourhood includes the point itself; variances are summed over
    output components.  Returns a non-negative (N,) vector.
    """
    return _local_variance_arrays(ds.points, ds.labels, k)


def rescale_normalize(raw: np.ndarray, m: float) -> np.ndarray:
    """Affine map of raw scores onto [1, m], then normalise to sum 1.

    Keeps max/min = m whenever the raw scores spread; an all-equal vector
    degenerates to uniform weights.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    x = np.asarray(raw, dtype=float).ravel()
    if x.size < 1:
        raise ValueError("raw scores must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("raw scores must be finite")
    spread = x.max() - x.min()
    if spread <= 0:
        return np.full(x.size, 1.0 / x.size)
    scaled = 1.0 + (m - 1.0) * ((x - x.min()) / spread)
    return scaled / scaled.sum()


def vbsw_weights(ds: LabeledDataset, cfg: VbswConfig) -> WeightedDataset:
    """Attach local-variance weights to a dataset."""
    w = rescale_normalize(local_variance(ds, cfg.k), cfg.m)
    return WeightedDataset(ds.points, ds.labels, ds.domain, w)


def feature_space_vbsw(
    base_model: MlpModel,
    ds: LabeledDataset,
    cfg: VbswConfig,
    head_cfg: TrainConfig | None = None,
) -> MlpModel:
    """Reweight in the base model's feature space and refit its final layer.

    Distances for the k-NN variance run over the penultimate activations
    (z-scored per dimension when cfg.standardize_features).  Only the last
    affine layer is retrained, on the raw features, with the derived
    weights; every other parameter is returned unchanged.
    """
    feats = feature_extract(base_model, ds.points)
    knn_space = feats
    if cfg.standardize_features:
        sd = feats.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        knn_space = (feats - feats.mean(axis=0)) / sd
    w = rescale_normalize(_local_variance_arrays(knn_space, ds.labels, cfg.k), cfg.m)

    activation = base_model.spec.output_activation
    loss = {"identity": "weighted_mse", "sigmoid": "weighted_bce", "softmax": "weighted_cce"}[
        activation
    ]
    if head_cfg is not None:
        loss = head_cfg.loss
    head_w, head_b = fit_linear_head(feats, ds.labels, w, loss, activation, head_cfg)
    out = base_model.copy()
    out.weights[-1] = head_w
    out.biases[-1] = head_b
    return out
