"""Command-line entry points.

Subcommands: discover, prior, train, evaluate, bench, synth.  Exit codes:
0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .discovery import CausalTensor, pcmci, preprocess_stationary
from .exceptions import CausalcastError, ConfigError, IngestionError
from .forecaster import ModelState
from .pipeline import (
    PRIOR_CHOICES,
    RunConfig,
    bench,
    build_run_prior,
    evaluate,
    fit,
    load_panel_csv,
    synthesize_coupled_panel,
    write_aggregate_csv,
    write_metrics_csv,
    write_panel_csv,
)
from .prior import PriorMatrix, build_prior, identity_prior, pearson_prior

BACKBONE_CHOICES = ("dlinear", "rnf", "full_attention")


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; argparse's default of 2 is reserved for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from None


def _write_text(path, text) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IngestionError(f"cannot write {path}: {exc}") from None


def _load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return RunConfig.from_json(_read_text(path))
    except (json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> _Parser:
    parser = _Parser(prog="causalcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("discover", parents=[], help="mobility CSV -> link tensor JSON")
    p.add_argument("mobility", help="mobility panel CSV")
    p.add_argument("-o", "--out", required=True, help="output tensor JSON path")
    p.add_argument("--tau-max", type=int, default=7)
    p.add_argument("--alpha-pc", type=float, default=0.2)
    p.add_argument("--max-conds", type=int, default=3)
    p.add_argument(
        "--train-end",
        type=int,
        default=None,
        help="use only the first N rows (leakage cutoff)",
    )

    p = sub.add_parser("prior", help="link tensor JSON -> prior matrix JSON")
    p.add_argument(
        "source",
        nargs="?",
        help="tensor JSON (kind=pcmci) or mobility CSV (kind=pearson)",
    )
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--kind", choices=("pcmci", "pearson", "identity"), default="pcmci")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--sign", type=float, default=1.0)
    p.add_argument("--use-abs", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--regions", type=int, default=None, help="region count (identity)")
    p.add_argument("--train-end", type=int, default=None)

    p = sub.add_parser("train", help="cases CSV (+ prior) -> checkpoint + metrics")
    p.add_argument("cases", help="case panel CSV")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--config", default=None, help="run config JSON")
    p.add_argument("--prior-file", default=None, help="prebuilt prior JSON")
    p.add_argument("--mobility", default=None, help="mobility CSV for prior building")
    p.add_argument("--backbone", choices=BACKBONE_CHOICES, default=None)
    p.add_argument("--prior-kind", choices=PRIOR_CHOICES, default=None)
    p.add_argument("--lookback", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--raw", action="store_true", help="report raw-scale metrics")

    p = sub.add_parser("evaluate", help="checkpoint + cases CSV -> metrics CSV")
    p.add_argument("checkpoint", help="checkpoint JSON")
    p.add_argument("cases", help="case panel CSV")
    p.add_argument("-o", "--out", required=True, help="metrics CSV path")
    p.add_argument("--config", default=None)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--raw", action="store_true")

    p = sub.add_parser("bench", help="ablation grid on synthetic or supplied panels")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--cases", default=None, help="case CSV (default: synthesize)")
    p.add_argument("--mobility", default=None, help="mobility CSV")
    p.add_argument("--config", default=None)
    p.add_argument("--regions", type=int, default=10)
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--synth-seed", type=int, default=7)
    p.add_argument("--horizons", type=_int_list, default=[7, 14])
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    p.add_argument(
        "--backbones",
        type=lambda s: [v for v in s.split(",") if v],
        default=["dlinear", "rnf"],
    )
    p.add_argument(
        "--priors",
        type=lambda s: [v for v in s.split(",") if v],
        default=list(PRIOR_CHOICES),
    )
    p.add_argument("--max-epochs", type=int, default=None)

    p = sub.add_parser("synth", help="emit synthetic panels + ground-truth graph")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--regions", type=int, default=10)
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--ar", type=float, default=0.5)
    p.add_argument("--offset", type=float, default=5.0)
    return parser


def _cmd_discover(args) -> int:
    panel = load_panel_csv(args.mobility)
    values = panel.values if args.train_end is None else panel.values[: args.train_end]
    stationary = preprocess_stationary(values, panel.region_ids)
    tensor, _ = pcmci(
        stationary.values,
        tau_max=args.tau_max,
        alpha_pc=args.alpha_pc,
        max_conds=args.max_conds,
        var_names=stationary.var_names,
    )
    _write_text(args.out, tensor.to_json())
    return 0


def _cmd_prior(args) -> int:
    if args.kind == "identity":
        if args.regions is not None:
            prior = identity_prior(args.regions)
        elif args.source:
            tensor = CausalTensor.from_json(_read_text(args.source))
            prior = identity_prior(tensor.n_vars)
        else:
            raise ConfigError("kind=identity needs --regions or a tensor source")
    elif args.kind == "pearson":
        if not args.source:
            raise ConfigError("kind=pearson needs a mobility CSV source")
        panel = load_panel_csv(args.source)
        values = (
            panel.values if args.train_end is None else panel.values[: args.train_end]
        )
        prior = pearson_prior(values)
    else:
        if not args.source:
            raise ConfigError("kind=pcmci needs a tensor JSON source")
        try:
            tensor = CausalTensor.from_json(_read_text(args.source))
        except (json.JSONDecodeError, KeyError) as exc:
            raise IngestionError(f"bad tensor JSON {args.source}: {exc}") from None
        prior = build_prior(
            tensor,
            alpha=args.alpha,
            kappa=args.kappa,
            sign=args.sign,
            use_abs=args.use_abs,
        )
    _write_text(args.out, prior.to_json())
    return 0


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    fields = {}
    for src, dst in (
        ("backbone", "backbone"),
        ("prior_kind", "prior_kind"),
        ("lookback", "lookback"),
        ("horizon", "horizon"),
        ("seed", "seed"),
        ("max_epochs", "max_epochs"),
    ):
        value = getattr(args, src, None)
        if value is not None:
            fields[dst] = value
    if getattr(args, "raw", False):
        fields["normalized_metrics"] = False
    return replace(config, **fields) if fields else config


def _cmd_train(args) -> int:
    config = _apply_overrides(_load_config(args.config), args)
    cases = load_panel_csv(args.cases)
    mobility = load_panel_csv(args.mobility) if args.mobility else None
    prior = None
    if args.prior_file:
        prior = PriorMatrix.from_json(_read_text(args.prior_file))
        if config.prior_kind == "none":
            config = replace(config, prior_kind=prior.kind)
    t0 = time.perf_counter()
    state, _, info = fit(config, cases, mobility, prior=prior)
    report = evaluate(state, cases, config, split="test")
    runtime = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "checkpoint.json", state.to_json())
    _write_text(out / "config.json", config.to_json())
    write_metrics_csv(
        out / "metrics.csv",
        [
            {
                "backbone": config.backbone,
                "prior": config.prior_kind,
                "horizon": config.horizon,
                "seed": config.seed,
                "rmse": report.rmse,
                "mae": report.mae,
                "runtime_s": runtime,
                "params": report.n_params,
            }
        ],
    )
    print(
        f"trained {config.backbone}/{config.prior_kind} h={config.horizon} "
        f"epochs={info['epochs']} test rmse={report.rmse:.6f} mae={report.mae:.6f}"
    )
    return 0


def _state_run_config(state: ModelState, base: RunConfig) -> RunConfig:
    cfg = state.config
    return replace(
        base,
        backbone=cfg.backbone,
        lookback=cfg.lookback,
        horizon=cfg.horizon,
        d_model=cfg.d_model,
        n_heads=cfg.n_heads,
        n_blocks=cfg.n_blocks,
        d_ff=cfg.d_ff,
        patch_len=cfg.patch_len,
        stride=cfg.stride,
        dropout=cfg.dropout,
        kernel_size=cfg.kernel_size,
        ablation=cfg.ablation,
        prior_kind="pcmci" if cfg.adapter else "none",
    )


def _cmd_evaluate(args) -> int:
    try:
        state = ModelState.from_json(_read_text(args.checkpoint))
    except (json.JSONDecodeError, KeyError) as exc:
        raise IngestionError(f"bad checkpoint {args.checkpoint}: {exc}") from None
    config = _state_run_config(state, _load_config(args.config))
    if args.raw:
        config = replace(config, normalized_metrics=False)
    cases = load_panel_csv(args.cases)
    report = evaluate(state, cases, config, split=args.split)
    write_metrics_csv(
        args.out,
        [
            {
                "backbone": config.backbone,
                "prior": config.prior_kind,
                "horizon": config.horizon,
                "seed": state.seed,
                "rmse": report.rmse,
                "mae": report.mae,
                "runtime_s": report.runtime_s,
                "params": report.n_params,
            }
        ],
    )
    print(f"{args.split} rmse={report.rmse:.6f} mae={report.mae:.6f}")
    return 0


def _cmd_bench(args) -> int:
    config = _load_config(args.config)
    if args.max_epochs is not None:
        config = replace(config, max_epochs=args.max_epochs)
    if args.cases:
        cases = load_panel_csv(args.cases)
        if not args.mobility:
            raise ConfigError("bench with --cases also needs --mobility")
        mobility = load_panel_csv(args.mobility)
    else:
        cases, mobility = synthesize_coupled_panel(
            args.regions, args.steps, noise=args.noise, seed=args.synth_seed
        )
    for backbone in args.backbones:
        if backbone not in ("dlinear", "rnf", "full_attention"):
            raise ConfigError(f"unknown backbone {backbone!r}")
    for kind in args.priors:
        if kind not in PRIOR_CHOICES:
            raise ConfigError(f"unknown prior {kind!r}")
    rows, aggregates = bench(
        config,
        cases,
        mobility,
        backbones=tuple(args.backbones),
        priors=tuple(args.priors),
        horizons=tuple(args.horizons),
        seeds=tuple(args.seeds),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "bench_runs.csv", rows)
    write_aggregate_csv(out / "bench_aggregate.csv", aggregates)
    print(f"wrote {len(rows)} runs and {len(aggregates)} aggregate rows to {out}")
    return 0


def _cmd_synth(args) -> int:
    cases, mobility = synthesize_coupled_panel(
        args.regions,
        args.steps,
        lag=args.lag,
        ar=args.ar,
        noise=args.noise,
        seed=args.seed,
        offset=args.offset,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_panel_csv(cases, out / "cases.csv")
    write_panel_csv(mobility, out / "mobility.csv")
    from .pipeline import default_benchmark_graph

    graph = default_benchmark_graph(args.regions)
    _write_text(
        out / "graph.json",
        json.dumps(
            {
                "matrix": graph.tolist(),
                "lag": args.lag,
                "ar": args.ar,
                "noise": args.noise,
                "seed": args.seed,
            },
            sort_keys=True,
            separators=(",", ":"),
        ),
    )
    print(f"wrote cases.csv, mobility.csv, graph.json to {out}")
    return 0


_COMMANDS = {
    "discover": _cmd_discover,
    "prior": _cmd_prior,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "bench": _cmd_bench,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except CausalcastError as exc:
        print(f"causalcast: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"causalcast: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
