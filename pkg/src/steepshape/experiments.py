"""End-to-end experiment protocols with per-seed pairing and CSV/JSON output.

Every experiment runs a list of seeds; for each seed the compared arms
share the same data draw and the same parameter initialisation, so the
per-seed difference isolates the sampling or weighting scheme.  Summaries
report mean, standard error and a 1.96 * se half-width per metric.  All
output files are written with repr() floats in a fixed order, so a rerun
with an identical config is byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bateman import BatemanParams, aeg_ael, analytic_solve, bateman_oracle
from .dataset import (
    DomainBox,
    LabeledDataset,
    grid_sample,
    inject_label_noise,
    load_csv,
    two_moons,
    uniform_sample,
    with_uniform_weights,
)
from .derivatives import OracleFn, cubic_oracle, runge_oracle, tanh_oracle
from .models import MlpSpec, TrainConfig, evaluate, train
from .tbs import TbsConfig, baseline_augment, tbs_augment
from .vbsw import VbswConfig, feature_space_vbsw, vbsw_weights


# ---------------------------------------------------------------------------
# Summaries and file output.


@dataclass
class RunSummary:
    """One arm's per-seed metric rows plus their aggregate statistics."""

    name: str
    rows: list

    def metric_names(self) -> list:
        return [k for k in self.rows[0] if k != "seed"]

    def values(self, metric: str) -> np.ndarray:
        return np.asarray([r[metric] for r in self.rows], dtype=float)

    def aggregate(self) -> dict:
        out = {}
        for metric in self.metric_names():
            v = self.values(metric)
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            out[metric] = {"mean": float(v.mean()), "se": se, "ci95": 1.96 * se}
        return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and float(value).is_integer() and abs(value) < 1e15:
        return repr(float(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns: list, rows: list) -> None:
    """Deterministic CSV: fixed column order, repr floats, newline rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary_payload(name: str, cfg, arms: dict, extra: dict | None = None) -> dict:
    payload = {
        "experiment": name,
        "config": asdict(cfg),
        "arms": {arm: rs.aggregate() for arm, rs in arms.items()},
    }
    if extra:
        payload.update(extra)
    return payload


def _coerce(cls, data: dict):
    """Dict -> dataclass with unknown-key and tuple-field handling."""
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys for {cls.__name__}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        if key == "base" and isinstance(value, dict):
            value = _coerce(VbswToyConfig, value)
        kwargs[key] = value
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# 1-D toy study: uniform versus sensitivity-guided extra points.


@dataclass(frozen=True)
class Toy1dConfig:
    oracle: str = "runge"  # runge | tanh | cubic
    tanh_a: float = 10.0
    lower: float = -1.0
    upper: float = 1.0
    n_initial: int = 8
    n_added: int = 8
    n_gmm: int = 3
    taylor_n: int = 2
    epsilon: float = 1e-3
    initial_design: str = "grid"
    hidden: int = 8
    epochs: int = 20000
    learning_rate: float = 1e-2
    optimizer: str = "adam"
    n_test: int = 1000
    seeds: tuple = tuple(range(40))

    def __post_init__(self):
        if self.oracle not in ("runge", "tanh", "cubic"):
            raise ValueError("oracle must be runge, tanh or cubic")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")


def _toy_oracle(cfg: Toy1dConfig) -> OracleFn:
    if cfg.oracle == "runge":
        return runge_oracle()
    if cfg.oracle == "tanh":
        return tanh_oracle(cfg.tanh_a)
    return cubic_oracle()


def run_toy_1d(cfg: Toy1dConfig, arms=("bs", "tbs")) -> dict:
    oracle = _toy_oracle(cfg)
    domain = DomainBox([cfg.lower], [cfg.upper])
    test_x = grid_sample(domain, cfg.n_test)
    test_y = oracle.evaluate(test_x)
    spec = MlpSpec((1, cfg.hidden, 1))
    budget = cfg.n_initial + cfg.n_added
    results = {arm: [] for arm in arms}
    for seed in cfg.seeds:
        tbs_cfg = TbsConfig(
            n=cfg.taylor_n,
            epsilon=cfg.epsilon,
            n_gmm=cfg.n_gmm,
            n_initial=cfg.n_initial,
            n_added=cfg.n_added,
            seed=seed,
            initial_design=cfg.initial_design,
        )
        train_cfg = TrainConfig(
            loss="weighted_mse",
            optimizer=cfg.optimizer,
            learning_rate=cfg.learning_rate,
            batch_size=budget,
            epochs=cfg.epochs,
            seed=seed,
        )
        for arm in arms:
            augment = tbs_augment if arm == "tbs" else baseline_augment
            ds = augment(oracle, domain, tbs_cfg)
            model = train(with_uniform_weights(ds), spec, train_cfg)
            ev = evaluate(model, test_x, test_y)
            results[arm].append({"seed": seed, "l2": ev.l2, "linf": ev.linf})
    return {arm: RunSummary(arm, rows) for arm, rows in results.items()}


def emit_toy_1d(outdir, cfg: Toy1dConfig, result: dict) -> None:
    os.makedirs(outdir, exist_ok=True)
    rows = []
    for arm in sorted(result):
        for r in result[arm].rows:
            rows.append({"seed": r["seed"], "arm": arm, "l2": r["l2"], "linf": r["linf"]})
    rows.sort(key=lambda r: (r["seed"], r["arm"]))
    write_csv(os.path.join(outdir, "per_seed.csv"), ["seed", "arm", "l2", "linf"], rows)
    write_json(os.path.join(outdir, "summary.json"), _summary_payload("toy1d", cfg, result))


# ---------------------------------------------------------------------------
# ODE benchmark: same comparison on a 3-D input domain, plus error maps.


@dataclass(frozen=True)
class BatemanConfig:
    sigma: float = -0.45
    v: float = 1.0
    n_initial: int = 2000
    n_added: int = 2000
    n_gmm: int = 10
    epsilon: float = 5e-4
    taylor_n: int = 2
    hidden: tuple = (32, 32)
    epochs: int = 2000
    # at this budget the full-batch setting is undertrained; minibatches of
    # 500 with a matched learning rate give both arms a converged fit
    learning_rate: float = 3e-3
    batch_size: int = 500
    n_test: int = 50000
    test_seed: int = 990001
    n_grid: int = 30
    n_t: int = 50
    seeds: tuple = tuple(range(10))
    solver: str = "analytic"
    dt: float = 1e-3

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")


def max_sq_error_map(model, params: BatemanParams, n_grid: int, n_t: int) -> np.ndarray:
    """Worst squared prediction error over time, per (u0, eta0) grid cell.

    Returns an (n_grid, n_grid) map: cell (i, j) holds the maximum over the
    time grid of the squared error norm of the model's (u, eta) prediction
    at (u0_i, eta0_j, t).
    """
    lo, hi = params.domain.lower, params.domain.upper
    u0s = np.linspace(lo[0], hi[0], n_grid)
    eta0s = np.linspace(lo[1], hi[1], n_grid)
    ts = np.linspace(lo[2], hi[2], n_t)
    uu, ee, tt = np.meshgrid(u0s, eta0s, ts, indexing="ij")
    pts = np.column_stack([uu.ravel(), ee.ravel(), tt.ravel()])
    u_true, eta_true = analytic_solve(params, pts[:, 0], pts[:, 1], pts[:, 2])
    truth = np.column_stack([u_true, eta_true])
    err = np.sum((model.predict(pts) - truth) ** 2, axis=1)
    return err.reshape(n_grid, n_grid, n_t).max(axis=2)


def run_bateman(cfg: BatemanConfig, arms=("bs", "tbs")) -> dict:
    params = BatemanParams(cfg.sigma, cfg.v)
    oracle = bateman_oracle(params, cfg.solver, cfg.dt)
    test_x = uniform_sample(params.domain, cfg.n_test, cfg.test_seed)
    test_y = oracle.evaluate(test_x)
    spec = MlpSpec((3, *cfg.hidden, 2))
    results = {arm: [] for arm in arms}
    pair_rows = []
    for seed in cfg.seeds:
        tbs_cfg = TbsConfig(
            n=cfg.taylor_n,
            epsilon=cfg.epsilon,
            n_gmm=cfg.n_gmm,
            n_initial=cfg.n_initial,
            n_added=cfg.n_added,
            seed=seed,
        )
        train_cfg = TrainConfig(
            loss="weighted_mse",
            optimizer="adam",
            learning_rate=cfg.learning_rate,
            batch_size=cfg.batch_size,
            epochs=cfg.epochs,
            seed=seed,
        )
        maps = {}
        for arm in arms:
            augment = tbs_augment if arm == "tbs" else baseline_augment
            ds = augment(oracle, params.domain, tbs_cfg)
            model = train(with_uniform_weights(ds), spec, train_cfg)
            ev = evaluate(model, test_x, test_y)
            results[arm].append({"seed": seed, "l2": ev.l2, "linf": ev.linf})
            maps[arm] = max_sq_error_map(model, params, cfg.n_grid, cfg.n_t)
        if "bs" in maps and "tbs" in maps:
            gain, loss = aeg_ael(maps["bs"], maps["tbs"])
            pair_rows.append({"seed": seed, "aeg": gain, "ael": loss})
    out = {arm: RunSummary(arm, rows) for arm, rows in results.items()}
    if pair_rows:
        out["pair"] = RunSummary("pair", pair_rows)
    return out


def emit_bateman(outdir, cfg: BatemanConfig, result: dict) -> None:
    os.makedirs(outdir, exist_ok=True)
    pair = {r["seed"]: r for r in result.get("pair", RunSummary("pair", [])).rows or []}
    rows = []
    for arm in sorted(k for k in result if k != "pair"):
        for r in result[arm].rows:
            row = {"seed": r["seed"], "arm": arm, "l2": r["l2"], "linf": r["linf"]}
            if arm == "tbs" and r["seed"] in pair:
                row["aeg"] = pair[r["seed"]]["aeg"]
                row["ael"] = pair[r["seed"]]["ael"]
            rows.append(row)
    rows.sort(key=lambda r: (r["seed"], r["arm"]))
    write_csv(
        os.path.join(outdir, "per_seed.csv"),
        ["seed", "arm", "l2", "linf", "aeg", "ael"],
        rows,
    )
    write_json(
        os.path.join(outdir, "summary.json"), _summary_payload("bateman", cfg, result)
    )


# ---------------------------------------------------------------------------
# Weighting study on small tasks.


@dataclass(frozen=True)
class VbswToyConfig:
    task: str = "two_moons"  # two_moons | csv_regression | csv_classification
    n_train: int = 300
    n_test: int = 1000
    noise_sd: float = 0.1
    k: int = 20
    m: float = 100.0
    hidden: tuple = (4,)
    epochs: int = 10000
    batch_size: int = 100
    learning_rate: float = 3e-2
    optimizer: str = "sgd"
    seeds: tuple = tuple(range(50))
    test_seed: int = 990002
    csv_path: str | None = None
    csv_inputs: int = 0
    csv_outputs: int = 1
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.task not in ("two_moons", "csv_regression", "csv_classification"):
            raise ValueError("task must be two_moons, csv_regression or csv_classification")
        if self.task != "two_moons" and not self.csv_path:
            raise ValueError(f"task {self.task} needs csv_path")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")


def _vbsw_task_data(cfg: VbswToyConfig, seed: int):
    """(train_ds, test_points, test_labels) for one seed."""
    if cfg.task == "two_moons":
        train_ds = two_moons(cfg.n_train, cfg.noise_sd, seed)
        test_ds = two_moons(cfg.n_test, cfg.noise_sd, cfg.test_seed)
        return train_ds, test_ds.points, test_ds.labels
    full = load_csv(cfg.csv_path, cfg.csv_inputs, cfg.csv_outputs)
    n_hold = max(1, int(round(cfg.test_fraction * len(full))))
    perm = np.random.default_rng(seed).permutation(len(full))
    test_idx, train_idx = perm[:n_hold], perm[n_hold:]
    train_ds = LabeledDataset(full.points[train_idx], full.labels[train_idx], full.domain)
    return train_ds, full.points[test_idx], full.labels[test_idx]


def _vbsw_model(cfg: VbswToyConfig, n_inputs: int, n_outputs: int):
    classification = cfg.task in ("two_moons", "csv_classification")
    spec = MlpSpec(
        (n_inputs, *cfg.hidden, n_outputs),
        output_activation="sigmoid" if classification else "identity",
    )
    loss = "weighted_bce" if classification else "weighted_mse"
    return spec, loss, classification


def run_vbsw_toy(cfg: VbswToyConfig, arms=("baseline", "vbsw")) -> dict:
    results = {arm: [] for arm in arms}
    for seed in cfg.seeds:
        train_ds, test_x, test_y = _vbsw_task_data(cfg, seed)
        spec, loss, classification = _vbsw_model(
            cfg, train_ds.n_inputs, train_ds.n_outputs
        )
        if classification and not np.all(np.isin(train_ds.labels, (0.0, 1.0))):
            raise ValueError("classification tasks need {0, 1} labels")
        train_cfg = TrainConfig(
            loss=loss,
            optimizer=cfg.optimizer,
            learning_rate=cfg.learning_rate,
            batch_size=cfg.batch_size,
            epochs=cfg.epochs,
            seed=seed,
        )
        for arm in arms:
            if arm == "vbsw":
                wds = vbsw_weights(train_ds, VbswConfig(cfg.k, cfg.m))
            else:
                wds = with_uniform_weights(train_ds)
            model = train(wds, spec, train_cfg)
            ev = evaluate(model, test_x, test_y)
            row = {"seed": seed, "l2": ev.l2, "linf": ev.linf}
            if classification:
                row["accuracy"] = ev.accuracy
            results[arm].append(row)
    return {arm: RunSummary(arm, rows) for arm, rows in results.items()}


def emit_vbsw_toy(outdir, cfg: VbswToyConfig, result: dict) -> None:
    os.makedirs(outdir, exist_ok=True)
    metrics = result[next(iter(result))].metric_names()
    rows = []
    for arm in sorted(result):
        for r in result[arm].rows:
            rows.append({"seed": r["seed"], "arm": arm, **{m: r[m] for m in metrics}})
    rows.sort(key=lambda r: (r["seed"], r["arm"]))
    write_csv(os.path.join(outdir, "per_seed.csv"), ["seed", "arm", *metrics], rows)
    write_json(os.path.join(outdir, "summary.json"), _summary_payload("vbsw", cfg, result))


# ---------------------------------------------------------------------------
# Weight-cap / neighbourhood-size sweep.


def _default_grid_base() -> VbswToyConfig:
    return VbswToyConfig(seeds=tuple(range(10)))


@dataclass(frozen=True)
class HyperGridConfig:
    base: VbswToyConfig = field(default_factory=_default_grid_base)
    m_min: float = 2.0
    m_max: float = 100.0
    m_steps: int = 20
    k_min: int = 10
    k_max: int = 50
    k_steps: int = 20

    def __post_init__(self):
        if self.m_min < 1 or self.m_max < self.m_min:
            raise ValueError("need 1 <= m_min <= m_max")
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ValueError("need 2 <= k_min <= k_max")
        if self.m_steps < 1 or self.k_steps < 1:
            raise ValueError("need at least one step per axis")

    def m_values(self) -> np.ndarray:
        return np.linspace(self.m_min, self.m_max, self.m_steps)

    def k_values(self) -> np.ndarray:
        ks = np.unique(np.round(np.linspace(self.k_min, self.k_max, self.k_steps)))
        return ks.astype(int)


def run_hyper_grid(cfg: HyperGridConfig) -> dict:
    """Mean metric per (m, k) cell, with data and init shared across cells."""
    base = cfg.base
    _, _, classification = _vbsw_model(base, 2, 1)
    metric = "accuracy" if classification else "l2"
    per_seed = {}
    for seed in base.seeds:
        per_seed[seed] = _vbsw_task_data(base, seed)
    cells = []
    baseline_vals = []
    for seed in base.seeds:
        train_ds, test_x, test_y = per_seed[seed]
        spec, loss, classification = _vbsw_model(base, train_ds.n_inputs, train_ds.n_outputs)
        train_cfg = TrainConfig(
            loss=loss,
            optimizer=base.optimizer,
            learning_rate=base.learning_rate,
            batch_size=base.batch_size,
            epochs=base.epochs,
            seed=seed,
        )
        model = train(with_uniform_weights(train_ds), spec, train_cfg)
        ev = evaluate(model, test_x, test_y)
        baseline_vals.append(ev.accuracy if classification else ev.l2)
    for m in cfg.m_values():
        for k in cfg.k_values():
            vals = []
            for seed in base.seeds:
                train_ds, test_x, test_y = per_seed[seed]
                spec, loss, classification = _vbsw_model(
                    base, train_ds.n_inputs, train_ds.n_outputs
                )
                train_cfg = TrainConfig(
                    loss=loss,
                    optimizer=base.optimizer,
                    learning_rate=base.learning_rate,
                    batch_size=base.batch_size,
                    epochs=base.epochs,
                    seed=seed,
                )
                wds = vbsw_weights(train_ds, VbswConfig(int(k), float(m)))
                model = train(wds, spec, train_cfg)
                ev = evaluate(model, test_x, test_y)
                vals.append(ev.accuracy if classification else ev.l2)
            v = np.asarray(vals)
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            cells.append(
                {"m": float(m), "k": int(k), "mean": float(v.mean()), "se": se}
            )
    b = np.asarray(baseline_vals)
    base_se = float(b.std(ddof=1) / np.sqrt(b.size)) if b.size > 1 else 0.0
    return {
        "metric": metric,
        "cells": cells,
        "baseline": {"mean": float(b.mean()), "se": base_se},
    }


def emit_hyper_grid(outdir, cfg: HyperGridConfig, result: dict) -> None:
    os.makedirs(outdir, exist_ok=True)
    write_csv(os.path.join(outdir, "grid.csv"), ["m", "k", "mean", "se"], result["cells"])
    write_json(
        os.path.join(outdir, "summary.json"),
        {
            "experiment": "hypergrid",
            "config": asdict(cfg),
            "metric": result["metric"],
            "baseline": result["baseline"],
        },
    )


# ---------------------------------------------------------------------------
# Label-noise robustness of feature-space weighting.


@dataclass(frozen=True)
class LabelNoiseConfig:
    noise_levels: tuple = (0.1, 0.2, 0.3, 0.4)
    n_train: int = 300
    n_test: int = 1000
    noise_sd: float = 0.1
    k: int = 20
    m: float = 100.0
    hidden: tuple = (4,)
    epochs: int = 10000
    batch_size: int = 100
    learning_rate: float = 3e-2
    optimizer: str = "sgd"
    seeds: tuple = tuple(range(10))
    test_seed: int = 990003
    standardize_features: bool = True
    head_epochs: int = 2000
    head_lr: float = 1e-2

    def __post_init__(self):
        if any(not 0 <= p <= 1 for p in self.noise_levels):
            raise ValueError("noise levels must lie in [0, 1]")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")


def run_label_noise(cfg: LabelNoiseConfig) -> dict:
    """Baseline versus feature-space reweighted head under label flips."""
    test_ds = two_moons(cfg.n_test, cfg.noise_sd, cfg.test_seed)
    spec = MlpSpec((2, *cfg.hidden, 1), output_activation="sigmoid")
    rows = {"baseline": [], "vbsw": []}
    for p_idx, p in enumerate(cfg.noise_levels):
        for seed in cfg.seeds:
            clean = two_moons(cfg.n_train, cfg.noise_sd, seed)
            flip_seed = int(
                np.random.SeedSequence(entropy=[seed, p_idx]).generate_state(1)[0]
            )
            noisy = inject_label_noise(clean, p, 2, flip_seed)
            train_cfg = TrainConfig(
                loss="weighted_bce",
                optimizer=cfg.optimizer,
                learning_rate=cfg.learning_rate,
                batch_size=cfg.batch_size,
                epochs=cfg.epochs,
                seed=seed,
            )
            base = train(with_uniform_weights(noisy), spec, train_cfg)
            head_cfg = TrainConfig(
                loss="weighted_bce",
                optimizer="adam",
                learning_rate=cfg.head_lr,
                batch_size=len(noisy),
                epochs=cfg.head_epochs,
                seed=seed,
            )
            composed = feature_space_vbsw(
                base,
                noisy,
                VbswConfig(cfg.k, cfg.m, cfg.standardize_features),
                head_cfg,
            )
            for arm, model in (("baseline", base), ("vbsw", composed)):
                ev = evaluate(model, test_ds.points, test_ds.labels)
                rows[arm].append({"seed": seed, "p": p, "accuracy": ev.accuracy})
    return {arm: RunSummary(arm, r) for arm, r in rows.items()}


def emit_label_noise(outdir, cfg: LabelNoiseConfig, result: dict) -> None:
    os.makedirs(outdir, exist_ok=True)
    rows = []
    for arm in sorted(result):
        for r in result[arm].rows:
            rows.append(
                {"seed": r["seed"], "p": r["p"], "arm": arm, "accuracy": r["accuracy"]}
            )
    rows.sort(key=lambda r: (r["p"], r["seed"], r["arm"]))
    write_csv(
        os.path.join(outdir, "per_seed.csv"), ["seed", "p", "arm", "accuracy"], rows
    )
    by_level = {}
    for arm in sorted(result):
        arm_levels = {}
        for p in sorted({r["p"] for r in result[arm].rows}):
            v = np.asarray([r["accuracy"] for r in result[arm].rows if r["p"] == p])
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            arm_levels[repr(float(p))] = {
                "mean": float(v.mean()),
                "se": se,
                "ci95": 1.96 * se,
            }
        by_level[arm] = arm_levels
    write_json(
        os.path.join(outdir, "summary.json"),
        {
            "experiment": "noise",
            "config": asdict(cfg),
            "arms": {arm: rs.aggregate() for arm, rs in result.items()},
            "by_level": by_level,
        },
    )
