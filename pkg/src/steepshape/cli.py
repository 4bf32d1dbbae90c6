"""Command line entry points.

Each subcommand loads an optional JSON or TOML config, runs one experiment
or utility, and writes its outputs under --out.  Exit codes: 0 on success,
2 for config problems (unreadable file, unknown keys, invalid values) and
3 for numerical failures during a run (divergence, rejection-sampling
starvation, flat sensitivity, singular trajectories).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .bateman import BatemanParams, bateman_oracle
from .dataset import DomainBox, load_csv, save_csv
from .derivatives import cubic_oracle, runge_oracle, tanh_oracle
from .experiments import (
    BatemanConfig,
    HyperGridConfig,
    LabelNoiseConfig,
    Toy1dConfig,
    VbswToyConfig,
    _coerce,
    emit_bateman,
    emit_hyper_grid,
    emit_label_noise,
    emit_toy_1d,
    emit_vbsw_toy,
    run_bateman,
    run_hyper_grid,
    run_label_noise,
    run_toy_1d,
    run_vbsw_toy,
    write_csv,
    write_json,
)
from .tbs import TbsConfig, tbs_augment
from .vbsw import VbswConfig, vbsw_weights


class ConfigError(Exception):
    pass


_NUMERICAL_ERRORS = (RuntimeError, ArithmeticError, ValueError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class TbsSampleConfig:
    """Inputs for the stand-alone dataset augmentation command."""

    oracle: str = "runge"  # runge | tanh | cubic | bateman
    tanh_a: float = 10.0
    lower: tuple = (-1.0,)
    upper: tuple = (1.0,)
    n: int = 2
    epsilon: float = 1e-3
    n_gmm: int = 3
    n_initial: int = 8
    n_added: int = 8
    seed: int = 0
    initial_design: str = "uniform"
    sigma: float = -0.45
    v: float = 1.0

    def __post_init__(self):
        if self.oracle not in ("runge", "tanh", "cubic", "bateman"):
            raise ValueError("oracle must be runge, tanh, cubic or bateman")


@dataclass(frozen=True)
class VbswWeightsConfig:
    """Inputs for the stand-alone weight computation command."""

    csv_path: str = ""
    n_inputs: int = 0
    n_outputs: int = 1
    k: int = 20
    m: float = 100.0
    header: bool = False

    def __post_init__(self):
        if not self.csv_path:
            raise ValueError("csv_path is required")
        if self.n_inputs < 1:
            raise ValueError("n_inputs must be at least 1")


def _read_config_file(path: str) -> dict:
    if path.endswith(".toml"):
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _parse_seeds(spec: str) -> tuple:
    """"0:40" is a half-open range, "1,5,9" a list, "7" a single seed."""
    spec = spec.strip()
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        lo, hi = int(lo), int(hi)
        if hi <= lo:
            raise ValueError(f"empty seed range {spec!r}")
        return tuple(range(lo, hi))
    return tuple(int(part) for part in spec.split(","))


def _build_config(cls, args):
    data = {}
    if getattr(args, "config", None):
        data = _read_config_file(args.config)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a table of keys")
    if getattr(args, "seeds", None):
        if cls is HyperGridConfig:
            base = dict(data.get("base", {}))
            base["seeds"] = list(_parse_seeds(args.seeds))
            data["base"] = base
        else:
            data["seeds"] = list(_parse_seeds(args.seeds))
    return _coerce(cls, data)


def _tbs_sample_oracle(cfg: TbsSampleConfig):
    if cfg.oracle == "bateman":
        if len(cfg.lower) == 3:
            domain = DomainBox(cfg.lower, cfg.upper)
        else:
            domain = BatemanParams().domain
        params = BatemanParams(cfg.sigma, cfg.v, domain)
        return bateman_oracle(params), params.domain
    oracle = {
        "runge": runge_oracle,
        "cubic": cubic_oracle,
        "tanh": lambda: tanh_oracle(cfg.tanh_a),
    }[cfg.oracle]()
    return oracle, DomainBox(cfg.lower, cfg.upper)


def _run_tbs_sample(cfg: TbsSampleConfig, outdir: str) -> None:
    oracle, domain = _tbs_sample_oracle(cfg)
    tbs_cfg = TbsConfig(
        n=cfg.n,
        epsilon=cfg.epsilon,
        n_gmm=cfg.n_gmm,
        n_initial=cfg.n_initial,
        n_added=cfg.n_added,
        seed=cfg.seed,
        initial_design=cfg.initial_design,
    )
    ds = tbs_augment(oracle, domain, tbs_cfg)
    os.makedirs(outdir, exist_ok=True)
    save_csv(ds, os.path.join(outdir, "augmented.csv"))
    write_json(
        os.path.join(outdir, "provenance.json"),
        {
            "config": asdict(cfg),
            "n_initial": cfg.n_initial,
            "n_added": cfg.n_added,
            "origin": ["initial"] * cfg.n_initial + ["added"] * cfg.n_added,
        },
    )


def _run_vbsw_weights(cfg: VbswWeightsConfig, outdir: str) -> None:
    ds = load_csv(cfg.csv_path, cfg.n_inputs, cfg.n_outputs, header=cfg.header)
    wds = vbsw_weights(ds, VbswConfig(cfg.k, cfg.m))
    os.makedirs(outdir, exist_ok=True)
    columns = (
        [f"x{i}" for i in range(ds.n_inputs)]
        + [f"y{j}" for j in range(ds.n_outputs)]
        + ["weight"]
    )
    rows = []
    for i in range(len(ds)):
        row = {f"x{j}": wds.points[i, j] for j in range(ds.n_inputs)}
        row.update({f"y{j}": wds.labels[i, j] for j in range(ds.n_outputs)})
        row["weight"] = wds.weights[i]
        rows.append(row)
    write_csv(os.path.join(outdir, "weights.csv"), columns, rows)


_EXPERIMENTS = {
    "toy1d": (Toy1dConfig, run_toy_1d, emit_toy_1d, ("bs", "tbs")),
    "bateman": (BatemanConfig, run_bateman, emit_bateman, ("bs", "tbs")),
    "vbsw": (VbswToyConfig, run_vbsw_toy, emit_vbsw_toy, ("baseline", "vbsw")),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steepshape",
        description="Sampling and weighting experiments for steep target functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, _, _, arms) in _EXPERIMENTS.items():
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--seeds", help="seed spec: 0:40, 1,2,3 or 7")
        p.add_argument("--out", default=os.path.join("results", name))
        p.add_argument("--arm", choices=arms, help="run a single arm only")
    for name in ("hypergrid", "noise"):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--seeds", help="seed spec: 0:40, 1,2,3 or 7")
        p.add_argument("--out", default=os.path.join("results", name))
    p = sub.add_parser("tbs-sample", help="augment a dataset around steep regions")
    p.add_argument("--config", help="JSON or TOML config file")
    p.add_argument("--out", default=os.path.join("results", "tbs_sample"))
    p = sub.add_parser("vbsw-weights", help="compute per-point weights for a CSV dataset")
    p.add_argument("--config", required=True, help="JSON or TOML config file")
    p.add_argument("--out", default=os.path.join("results", "vbsw_weights"))
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    command = args.command
    try:
        if command in _EXPERIMENTS:
            cfg_cls, _, _, _ = _EXPERIMENTS[command]
            cfg = _build_config(cfg_cls, args)
        elif command == "hypergrid":
            cfg = _build_config(HyperGridConfig, args)
        elif command == "noise":
            cfg = _build_config(LabelNoiseConfig, args)
        elif command == "tbs-sample":
            cfg = _build_config(TbsSampleConfig, args)
        else:
            cfg = _build_config(VbswWeightsConfig, args)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if command in _EXPERIMENTS:
            _, runner, emitter, arms = _EXPERIMENTS[command]
            if getattr(args, "arm", None):
                arms = (args.arm,)
            result = runner(cfg, arms=arms)
            emitter(args.out, cfg, result)
        elif command == "hypergrid":
            emit_hyper_grid(args.out, cfg, run_hyper_grid(cfg))
        elif command == "noise":
            emit_label_noise(args.out, cfg, run_label_noise(cfg))
        elif command == "tbs-sample":
            _run_tbs_sample(cfg, args.out)
        else:
            _run_vbsw_weights(cfg, args.out)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {args.out}")
    return 0
