"""Gaussian mixtures fitted by per-point-weighted EM, plus box-truncated sampling.

Ordinary EM treats every observation equally; here each point carries a
non-negative weight and every sufficient statistic in the M-step is
weight-scaled, so the mixture concentrates where the weights do.  Uniform
weights reduce to standard EM.  A resampling variant (draw points with
probability proportional to weight, then run plain EM) is available behind
EmConfig.weight_mode for comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.special import logsumexp

from .dataset import DomainBox

_LOG_2PI = np.log(2.0 * np.pi)


class LowAcceptanceError(RuntimeError):
    """Truncated sampling exhausted its draw budget."""


@dataclass(frozen=True)
class GmmModel:
    """Mixture weights (K,), means (K, D), covariances (K, D, D)."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        k, d = mu.shape
        if w.shape != (k,) or cov.shape != (k, d, d):
            raise ValueError("weights, means and covariances disagree on K or D")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        for j in range(k):
            if not np.allclose(cov[j], cov[j].T, atol=1e-12):
                raise ValueError(f"covariance of component {j} is not symmetric")
        # fails loudly here rather than mid-sampling
        self._cholesky()

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _cholesky(self) -> np.ndarray:
        chols = np.empty_like(self.covariances)
        for j in range(self.n_components):
            try:
                chols[j] = cholesky(self.covariances[j], lower=True)
            except LinAlgError:
                raise ValueError(
                    f"covariance of component {j} is not positive definite"
                ) from None
        return chols

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GmmModel":
        return cls(
            np.asarray(d["weights"], dtype=float),
            np.asarray(d["means"], dtype=float),
            np.asarray(d["covariances"], dtype=float),
        )


def save_json(model: GmmModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)


def load_json(path) -> GmmModel:
    with open(path, "r", encoding="utf-8") as fh:
        return GmmModel.from_dict(json.load(fh))


@dataclass(frozen=True)
class EmConfig:
    n_components: int = 1
    max_iter: int = 200
    tol: float = 1e-8  # relative log-likelihood improvement
    reg_floor: float = 1e-6  # added to covariance diagonals every M-step
    seed: int = 0
    weight_mode: str = "weighted"  # or "resample"

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.reg_floor < 0 or self.tol < 0:
            raise ValueError("reg_floor and tol must be non-negative")
        if self.weight_mode not in ("weighted", "resample"):
            raise ValueError("weight_mode must be 'weighted' or 'resample'")


def _log_densities(points, means, chols) -> np.ndarray:
    """log N(x_i; mu_k, Sigma_k), shape (N, K)."""
    n, d = points.shape
    out = np.empty((n, means.shape[0]))
    for k in range(means.shape[0]):
        dev = (points - means[k]).T
        sol = solve_triangular(chols[k], dev, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(chols[k])))
        out[:, k] = -0.5 * (d * _LOG_2PI + logdet + np.sum(sol * sol, axis=0))
    return out


def _kmeanspp_centers(points, w, k, rng) -> np.ndarray:
    """Weighted k-means++ seeding: spread-out centers in high-weight regions."""
    n = points.shape[0]
    prob = w / w.sum()
    centers = [points[rng.choice(n, p=prob)]]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((points - c) ** 2, axis=1) for c in centers], axis=0
        )
        score = w * d2
        total = score.sum()
        if total <= 0:  # all remaining mass sits on existing centers
            centers.append(points[rng.choice(n, p=prob)])
        else:
            centers.append(points[rng.choice(n, p=score / total)])
    return np.asarray(centers)


def _m_step(points, resp_weighted, reg_floor):
    """Weighted sufficient statistics to mixture parameters."""
    d = points.shape[1]
    nk = resp_weighted.sum(axis=0)
    if np.any(nk <= 0) or not np.all(np.isfinite(nk)):
        bad = int(np.flatnonzero(~(nk > 0) | ~np.isfinite(nk))[0])
        raise ValueError(f"component {bad} lost all weighted responsibility")
    pi = nk / nk.sum()
    means = (resp_weighted.T @ points) / nk[:, None]
    covs = np.empty((nk.size, d, d))
    for k in range(nk.size):
        dev = points - means[k]
        c = (resp_weighted[:, k][:, None] * dev).T @ dev / nk[k]
        c = (c + c.T) / 2.0 + reg_floor * np.eye(d)
        covs[k] = c
    return pi, means, covs


def fit_weighted_em(points: np.ndarray, point_weights: np.ndarray, cfg: EmConfig):
    """Fit a mixture to weighted points.  Returns (GmmModel, ll_history).

    ll_history[i] is the weighted log-likelihood sum_i w_i log p(x_i)
    (weights normalised to sum 1) under the parameters entering iteration i;
    EM guarantees it is non-decreasing.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(point_weights, dtype=float).ravel()
    if w.shape[0] != pts.shape[0]:
        raise ValueError("need one weight per point")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if w.sum() <= 0:
        raise ValueError("weights sum to zero; nothing to fit")
    if pts.shape[0] < cfg.n_components:
        raise ValueError("need at least as many points as components")
    w = w / w.sum()
    rng = np.random.default_rng(cfg.seed)

    if cfg.weight_mode == "resample":
        idx = rng.choice(pts.shape[0], size=pts.shape[0], replace=True, p=w)
        pts = pts[idx]
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])

    centers = _kmeanspp_centers(pts, w, cfg.n_components, rng)
    d2 = np.stack([np.sum((pts - c) ** 2, axis=1) for c in centers], axis=1)
    hard = np.zeros_like(d2)
    hard[np.arange(pts.shape[0]), d2.argmin(axis=1)] = 1.0
    # empty initial clusters keep their seeding center and the global spread
    rw = w[:, None] * hard
    empty = rw.sum(axis=0) <= 0
    if np.any(empty):
        global_mean = w @ pts
        dev = pts - global_mean
        global_cov = (w[:, None] * dev).T @ dev + cfg.reg_floor * np.eye(pts.shape[1])
        pi, means, covs = _m_step_with_fallback(pts, rw, cfg.reg_floor, centers, global_cov)
    else:
        pi, means, covs = _m_step(pts, rw, cfg.reg_floor)

    ll_history = []
    prev_ll = -np.inf
    prev_params = None
    for _ in range(cfg.max_iter):
        model = GmmModel(pi, means, covs)
        log_dens = _log_densities(pts, means, model._cholesky())
        log_joint = log_dens + np.log(pi)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(w @ log_norm)
        if not np.isfinite(ll):
            raise ValueError("log-likelihood became non-finite")
        if ll < prev_ll:
            # the covariance floor can push the update slightly off the
            # maximiser near convergence; keep the better previous fit
            pi, means, covs = prev_params
            break
        ll_history.append(ll)
        if ll - prev_ll <= cfg.tol * max(1.0, abs(prev_ll)) and np.isfinite(prev_ll):
            break
        prev_ll = ll
        prev_params = (pi, means, covs)
        resp = np.exp(log_joint - log_norm[:, None])
        pi, means, covs = _m_step(pts, w[:, None] * resp, cfg.reg_floor)
    return GmmModel(pi, means, covs), np.asarray(ll_history)


def _m_step_with_fallback(points, resp_weighted, reg_floor, centers, global_cov):
    """M-step that reseats empty components on their seeding centers."""
    d = points.shape[1]
    nk = resp_weighted.sum(axis=0)
    pi = np.maximum(nk, 1e-12)
    pi = pi / pi.sum()
    means = np.empty((nk.size, d))
    covs = np.empty((nk.size, d, d))
    for k in range(nk.size):
        if nk[k] <= 0:
            means[k] = centers[k]
            covs[k] = global_cov
            continue
        means[k] = (resp_weighted[:, k] @ points) / nk[k]
        dev = points - means[k]
        c = (resp_weighted[:, k][:, None] * dev).T @ dev / nk[k]
        covs[k] = (c + c.T) / 2.0 + reg_floor * np.eye(d)
    return pi, means, covs


def gmm_pdf(model: GmmModel, points: np.ndarray) -> np.ndarray:
    """Mixture density at each point, shape (N,)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    log_dens = _log_densities(pts, model.means, model._cholesky())
    return np.exp(logsumexp(log_dens + np.log(model.weights), axis=1))


def sample_truncated(
    model: GmmModel, n: int, box: DomainBox, seed: int, max_draw_factor: int = 1000
) -> np.ndarray:
    """n mixture draws conditioned on the box, by rejection.

    Raises LowAcceptanceError once max_draw_factor * n proposals have been
    spent, reporting the observed acceptance rate.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if box.dim != model.dim:
        raise ValueError("box dimension does not match the mixture")
    rng = np.random.default_rng(seed)
    chols = model._cholesky()
    budget = max_draw_factor * n
    drawn = 0
    kept = []
    n_kept = 0
    while n_kept < n:
        batch = min(max(n, 1024), budget - drawn)
        if batch <= 0:
            raise LowAcceptanceError(
                f"accepted {n_kept}/{n} after {drawn} proposals "
                f"(rate {n_kept / max(drawn, 1):.2e}); widen the box or the budget"
            )
        comp = rng.choice(model.n_components, size=batch, p=model.weights)
        z = rng.standard_normal((batch, model.dim))
        draws = model.means[comp] + np.einsum("nij,nj->ni", chols[comp], z)
        drawn += batch
        inside = draws[box.contains(draws)]
        kept.append(inside)
        n_kept += inside.shape[0]
    return np.vstack(kept)[:n]
