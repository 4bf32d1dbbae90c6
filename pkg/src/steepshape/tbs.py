"""Derivative-driven dataset augmentation.

The pipeline: spread an initial design over the box, score each point by
its derivative sensitivity, fit a mixture to the points with those scores
as EM weights, then draw extra points from the mixture truncated to the
box.  The mixture mass tracks the sensitivity, so the extra points land
where the labelling function moves fastest.  A matched-budget baseline
draws the extra points uniformly instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import DomainBox, LabeledDataset, grid_sample, uniform_sample
from .derivatives import OracleFn, SensitivityConfig, taylor_sensitivity
from .gmm import EmConfig, fit_weighted_em, sample_truncated


class FlatFunctionError(ValueError):
    """Sensitivity carries no signal, so EM weighting is meaningless."""


@dataclass(frozen=True)
class TbsConfig:
    """Knobs for one augmentation run.

    n_initial points form the design used for scoring; n_added points are
    drawn from the fitted mixture.  initial_design "grid" is 1-D only.
    reg_floor None means 1e-6 times the squared widest domain extent.
    """

    n: int = 2
    epsilon: float = 1e-3
    n_gmm: int = 3
    n_initial: int = 8
    n_added: int = 8
    seed: int = 0
    initial_design: str = "uniform"
    fd_step: float | None = None
    reg_floor: float | None = None
    lenient: bool = False
    max_draw_factor: int = 1000
    em_max_iter: int = 200
    em_tol: float = 1e-8

    def __post_init__(self):
        if self.n_initial < 1 or self.n_added < 0:
            raise ValueError("need n_initial >= 1 and n_added >= 0")
        if self.initial_design not in ("uniform", "grid"):
            raise ValueError("initial_design must be 'uniform' or 'grid'")


def _child_seeds(seed: int, n: int) -> list:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _initial_points(domain: DomainBox, cfg: TbsConfig, design_seed: int) -> np.ndarray:
    if cfg.initial_design == "grid":
        return grid_sample(domain, cfg.n_initial)
    return uniform_sample(domain, cfg.n_initial, design_seed)


def _finish(f: OracleFn, domain: DomainBox, initial: np.ndarray, extra: np.ndarray):
    points = np.vstack([initial, extra]) if extra.size else initial
    return LabeledDataset(points, f.evaluate(points), domain)


def tbs_augment(f: OracleFn, domain: DomainBox, cfg: TbsConfig) -> LabeledDataset:
    """Initial design plus sensitivity-guided extra points, initial rows first."""
    design_seed, em_seed, sample_seed = _child_seeds(cfg.seed, 3)
    initial = _initial_points(domain, cfg, design_seed)
    if cfg.n_added == 0:
        return _finish(f, domain, initial, np.empty((0, domain.dim)))

    sens_cfg = SensitivityConfig(n=cfg.n, epsilon=cfg.epsilon, fd_step=cfg.fd_step)
    sens = taylor_sensitivity(f, initial, sens_cfg, domain)
    shifted = sens - sens.min()  # guards against negative round-off
    if not np.all(np.isfinite(shifted)):
        raise ValueError("sensitivity produced non-finite values")
    if shifted.max() <= 1e-12 * max(float(np.abs(sens).max()), 1e-300):
        if not cfg.lenient:
            raise FlatFunctionError(
                "sensitivity is flat over the design, so the mixture fit is "
                "unconstrained; use lenient=True for a uniform fallback"
            )
        warnings.warn(
            "flat sensitivity: falling back to uniform extra points",
            RuntimeWarning,
            stacklevel=2,
        )
        extra = uniform_sample(domain, cfg.n_added, sample_seed)
        return _finish(f, domain, initial, extra)

    reg = cfg.reg_floor
    if reg is None:
        reg = 1e-6 * float(domain.width.max()) ** 2
    em_cfg = EmConfig(
        n_components=cfg.n_gmm,
        max_iter=cfg.em_max_iter,
        tol=cfg.em_tol,
        reg_floor=reg,
        seed=em_seed,
    )
    mixture, _ = fit_weighted_em(initial, shifted, em_cfg)
    extra = sample_truncated(
        mixture, cfg.n_added, domain, sample_seed, cfg.max_draw_factor
    )
    return _finish(f, domain, initial, extra)


def baseline_augment(f: OracleFn, domain: DomainBox, cfg: TbsConfig) -> LabeledDataset:
    """Matched-budget control: the same initial design plus uniform extras."""
    design_seed, _, sample_seed = _child_seeds(cfg.seed, 3)
    initial = _initial_points(domain, cfg, design_seed)
    if cfg.n_added == 0:
        return _finish(f, domain, initial, np.empty((0, domain.dim)))
    extra = uniform_sample(domain, cfg.n_added, sample_seed)
    return _finish(f, domain, initial, extra)
