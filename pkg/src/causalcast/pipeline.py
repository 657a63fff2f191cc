"""Data plumbing and the training/evaluation/benchmark harness.

Covers CSV panel ingestion, leakage-safe chronological splitting, sliding
window batching with train-fitted normalization, the full training loop with
early stopping, metric reports, a coupled synthetic benchmark, and the
ablation grid runner.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta

import numpy as np
from sklearn.base import BaseEstimator

from .autodiff import Tape, seeded_rng
from .discovery import pcmci, preprocess_stationary
from .exceptions import (
    ConfigError,
    IngestionError,
    InsufficientDataError,
)
from .forecaster import (
    Adam,
    ForecastBatch,
    ForecastModel,
    ModelConfig,
    ModelState,
    check_finite_loss,
)
from .prior import PriorMatrix, build_prior, identity_prior, pearson_prior
from .validation import check_panel_array

PRIOR_CHOICES = ("none", "identity", "pearson", "pcmci")


# -- panels ---------------------------------------------------------------


@dataclass
class PanelSeries:
    """Evenly spaced multivariate series, one column per region."""

    timestamps: list[str]
    region_ids: list[str]
    values: np.ndarray
    frequency: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.timestamps), len(self.region_ids)):
            raise IngestionError(
                f"values shape {self.values.shape} != "
                f"({len(self.timestamps)}, {len(self.region_ids)})"
            )

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_regions(self) -> int:
        return self.values.shape[1]


def load_panel_csv(path) -> PanelSeries:
    """Parse a "date,<region...>" CSV into a panel, rejecting malformed rows
    with their line numbers."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].strip() != "date":
            raise IngestionError(
                f"{path}: header must be 'date,<region...>', got {header!r}"
            )
        region_ids = [h.strip() for h in header[1:]]
        timestamps: list[str] = []
        dates: list[date] = []
        rows: list[list[float]] = []
        for ln, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise IngestionError(
                    f"{path} line {ln}: expected {len(header)} fields, got {len(cells)}"
                )
            raw = cells[0].strip()
            try:
                d = date.fromisoformat(raw)
            except ValueError:
                raise IngestionError(
                    f"{path} line {ln}: bad date {raw!r} (expected YYYY-MM-DD)"
                ) from None
            if dates and d <= dates[-1]:
                kind = "duplicate" if d == dates[-1] else "unsorted"
                raise IngestionError(f"{path} line {ln}: {kind} date {raw}")
            vals = []
            for colname, cell in zip(region_ids, cells[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path} line {ln}: non-numeric cell {cell!r} "
                        f"in column {colname}"
                    ) from None
                if not np.isfinite(v):
                    raise IngestionError(
                        f"{path} line {ln}: non-finite cell in column {colname}"
                    )
                vals.append(v)
            dates.append(d)
            timestamps.append(raw)
            rows.append(vals)
    if len(rows) < 2:
        raise IngestionError(f"{path}: need at least 2 data rows, got {len(rows)}")
    deltas = {(b - a).days for a, b in zip(dates, dates[1:])}
    if len(deltas) != 1:
        raise IngestionError(
            f"{path}: uneven timestamp spacing, saw day gaps {sorted(deltas)}"
        )
    gap = deltas.pop()
    if gap == 1:
        frequency = "daily"
    elif gap == 7:
        frequency = "weekly"
    else:
        raise IngestionError(f"{path}: unsupported spacing of {gap} days")
    return PanelSeries(
        timestamps=timestamps,
        region_ids=region_ids,
        values=np.array(rows, dtype=np.float64),
        frequency=frequency,
    )


def write_panel_csv(panel: PanelSeries, path) -> None:
    """Inverse of load_panel_csv; float cells use repr so values round-trip."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(panel.region_ids))
        for ts, row in zip(panel.timestamps, panel.values):
            writer.writerow([ts] + [repr(float(v)) for v in row])


# -- splitting and windowing ----------------------------------------------


@dataclass
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2

    def __post_init__(self):
        for name in ("train_frac", "val_frac", "test_frac"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be > 0")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split fractions sum to {total}, expected 1")


def chronological_split(n: int, spec: SplitSpec, min_window: int):
    """Contiguous [0,a), [a,b), [b,n) ranges; each must fit one window."""
    a = int(np.floor(spec.train_frac * n))
    b = int(np.floor((spec.train_frac + spec.val_frac) * n))
    ranges = (range(0, a), range(a, b), range(b, n))
    for name, rg in zip(("train", "val", "test"), ranges):
        if len(rg) < min_window:
            raise InsufficientDataError(
                f"{name} range has {len(rg)} rows, needs >= {min_window}; "
                f"panel must have at least "
                f"{int(np.ceil(min_window / min(spec.train_frac, spec.val_frac, spec.test_frac)))} rows"
            )
    return ranges


@dataclass
class Normalizer:
    """Per-region z-score with train-only statistics."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values) -> "Normalizer":
        values = check_panel_array(values, "train values", min_rows=1)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean=mean, std=std)

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def window_starts(rg: range, lookback: int, horizon: int) -> list[int]:
    return list(range(rg.start, rg.stop - (lookback + horizon) + 1))


def make_batch(values, starts, lookback: int, horizon: int) -> ForecastBatch:
    """Stack windows region-major: row b*C + c is region c of window b."""
    n_regions = values.shape[1]
    inputs = np.empty((len(starts) * n_regions, lookback))
    targets = np.empty((len(starts) * n_regions, horizon))
    for b, t in enumerate(starts):
        inputs[b * n_regions : (b + 1) * n_regions] = values[t : t + lookback].T
        targets[b * n_regions : (b + 1) * n_regions] = values[
            t + lookback : t + lookback + horizon
        ].T
    return ForecastBatch(inputs=inputs, targets=targets, n_regions=n_regions)


def window_batches(values, rg: range, lookback: int, horizon: int, batch_size: int):
    """Ordered stride-1 batches over a split range."""
    starts = window_starts(rg, lookback, horizon)
    for i in range(0, len(starts), batch_size):
        yield make_batch(values, starts[i : i + batch_size], lookback, horizon)


# -- run configuration ----------------------------------------------------


@dataclass
class RunConfig:
    """Full experiment description; serialized alongside every artifact."""

    backbone: str = "dlinear"
    lookback: int = 7
    horizon: int = 7
    d_model: int = 16
    n_heads: int = 4
    n_blocks: int = 2
    d_ff: int = 32
    patch_len: int = 4
    stride: int = 2
    dropout: float = 0.1
    kernel_size: int = 3
    prior_kind: str = "none"
    ablation: str = "full"
    theta_init: float = -2.0
    beta: float = 1e-3
    eta: float = 1e-4
    composition: str = "unified"
    depth: int = 1
    per_region_decoder: bool = False
    rnf_keep_first_norm: bool = True
    alpha: float = 0.05
    kappa: float = 1.0
    sign: float = 1.0
    use_abs: bool = True
    tau_max: int = 7
    alpha_pc: float = 0.2
    max_conds: int = 3
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    normalized_metrics: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.prior_kind not in PRIOR_CHOICES:
            raise ConfigError(
                f"prior_kind must be one of {PRIOR_CHOICES}, got {self.prior_kind!r}"
            )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_frac, self.val_frac, self.test_frac)

    def to_model_config(self, n_regions: int) -> ModelConfig:
        return ModelConfig(
            backbone=self.backbone,
            n_regions=n_regions,
            lookback=self.lookback,
            horizon=self.horizon,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_blocks=self.n_blocks,
            d_ff=self.d_ff,
            patch_len=self.patch_len,
            stride=self.stride,
            dropout=self.dropout,
            kernel_size=self.kernel_size,
            adapter=self.prior_kind != "none",
            ablation=self.ablation,
            theta_init=self.theta_init,
            beta=self.beta,
            eta=self.eta,
            composition=self.composition,
            depth=self.depth,
            per_region_decoder=self.per_region_decoder,
            rnf_keep_first_norm=self.rnf_keep_first_norm,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


@dataclass
class MetricsReport:
    """Point metrics for one trained model on one split."""

    rmse: float
    mae: float
    per_horizon_rmse: list = field(default_factory=list)
    per_horizon_mae: list = field(default_factory=list)
    runtime_s: float = 0.0
    n_params: int = 0

    def __post_init__(self):
        for name in ("rmse", "mae"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")


# -- priors from run config ----------------------------------------------


def _check_regions_match(cases: PanelSeries, mobility: PanelSeries) -> None:
    if cases.region_ids != mobility.region_ids:
        only_cases = sorted(set(cases.region_ids) - set(mobility.region_ids))
        only_mob = sorted(set(mobility.region_ids) - set(cases.region_ids))
        detail = (
            f"only in cases: {only_cases}; only in mobility: {only_mob}"
            if only_cases or only_mob
            else "same regions, different order"
        )
        raise ConfigError(f"cases and mobility region sets differ ({detail})")


def build_run_prior(
    config: RunConfig,
    cases: PanelSeries,
    mobility: PanelSeries | None,
    train_end: int,
):
    """Construct the configured prior from mobility rows before train_end."""
    kind = config.prior_kind
    if kind == "none":
        return None
    if kind == "identity":
        return identity_prior(cases.n_regions)
    if mobility is None:
        raise ConfigError(f"prior_kind={kind!r} requires a mobility panel")
    _check_regions_match(cases, mobility)
    window = mobility.values[:train_end]
    if kind == "pearson":
        return pearson_prior(window)
    stationary = preprocess_stationary(window, mobility.region_ids)
    tensor, _ = pcmci(
        stationary.values,
        tau_max=config.tau_max,
        alpha_pc=config.alpha_pc,
        max_conds=config.max_conds,
        var_names=stationary.var_names,
    )
    return build_prior(
        tensor,
        alpha=config.alpha,
        kappa=config.kappa,
        sign=config.sign,
        use_abs=config.use_abs,
    )


# -- training and evaluation ----------------------------------------------


def _range_pred_loss(model, values, rg, lookback, horizon, batch_size=256) -> float:
    """Mean squared prediction error over every window in a range."""
    sse, count = 0.0, 0
    for batch in window_batches(values, rg, lookback, horizon, batch_size):
        pred, _ = model.forward(Tape(), batch.inputs, train=False)
        diff = pred.value - batch.targets
        sse += float((diff * diff).sum())
        count += diff.size
    if count == 0:
        raise InsufficientDataError(
            f"range {rg} admits no window of length {lookback + horizon}"
        )
    return sse / count


def _forecast_range(model, values, rg, lookback, horizon, batch_size=256):
    preds, targets = [], []
    for batch in window_batches(values, rg, lookback, horizon, batch_size):
        pred, _ = model.forward(Tape(), batch.inputs, train=False)
        preds.append(pred.value)
        targets.append(batch.targets)
    if not preds:
        raise InsufficientDataError(
            f"range {rg} admits no window of length {lookback + horizon}"
        )
    return np.vstack(preds), np.vstack(targets)


def _train_loop(model: ForecastModel, values, train_rg, val_rg, config: RunConfig):
    lookback, horizon = config.lookback, config.horizon
    starts = window_starts(train_rg, lookback, horizon)
    if not starts:
        raise InsufficientDataError("train range admits no windows")
    shuffle_rng = seeded_rng(config.seed, "shuffle")
    dropout_rng = seeded_rng(config.seed, "dropout")
    optimizer = Adam(model.params, lr=config.lr)
    best_state = None
    best_val = np.inf
    stale = 0
    step = 0
    epochs_run = 0
    for _ in range(config.max_epochs):
        epochs_run += 1
        order = shuffle_rng.permutation(len(starts))
        for i in range(0, len(order), config.batch_size):
            chosen = [starts[k] for k in order[i : i + config.batch_size]]
            batch = make_batch(values, chosen, lookback, horizon)
            optimizer.zero_grad()
            tape = Tape()
            _, total, _ = model.loss(tape, batch, train=True, rng=dropout_rng)
            check_finite_loss(total, step)
            tape.backward(total)
            optimizer.step()
            step += 1
        val_loss = _range_pred_loss(model, values, val_rg, lookback, horizon)
        if val_loss < best_val:
            best_val = val_loss
            best_state = ModelState.capture(model, step)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_state is None:
        best_state = ModelState.capture(model, step)
    info = {"epochs": epochs_run, "steps": step, "best_val_loss": best_val}
    return best_state, info


def fit(
    config: RunConfig,
    cases: PanelSeries,
    mobility: PanelSeries | None = None,
    prior: PriorMatrix | None = None,
):
    """Train on the chronological split; returns the best-validation
    checkpoint and its validation metrics.

    The prior, when not supplied ready-made, is built strictly from mobility
    rows before the training cutoff.
    """
    n = cases.n_steps
    spec = config.split_spec()
    train_rg, val_rg, _ = chronological_split(
        n, spec, config.lookback + config.horizon
    )
    if prior is None:
        prior = build_run_prior(config, cases, mobility, train_end=train_rg.stop)
    normalizer = Normalizer.fit(cases.values[train_rg.start : train_rg.stop])
    values = normalizer.transform(cases.values)
    model = ForecastModel(
        config.to_model_config(cases.n_regions), prior=prior, seed=config.seed
    )
    state, info = _train_loop(model, values, train_rg, val_rg, config)
    report = evaluate(state, cases, config, split="val")
    return state, report, info


def evaluate(
    state: ModelState,
    panel: PanelSeries,
    config: RunConfig,
    split: str = "test",
    raw: bool | None = None,
) -> MetricsReport:
    """RMSE/MAE of a checkpoint over every window of a split, plus the
    per-horizon breakdown."""
    t0 = time.perf_counter()
    if raw is None:
        raw = not config.normalized_metrics
    spec = config.split_spec()
    ranges = dict(
        zip(
            ("train", "val", "test"),
            chronological_split(
                panel.n_steps, spec, config.lookback + config.horizon
            ),
        )
    )
    if split not in ranges:
        raise ConfigError(f"split must be train/val/test, got {split!r}")
    model = state.build()
    normalizer = Normalizer.fit(panel.values[ranges["train"].start : ranges["train"].stop])
    values = normalizer.transform(panel.values)
    preds, targets = _forecast_range(
        model, values, ranges[split], config.lookback, config.horizon
    )
    if raw:
        n_regions = panel.n_regions
        reps = preds.shape[0] // n_regions
        std = np.tile(normalizer.std, reps)[:, None]
        mean = np.tile(normalizer.mean, reps)[:, None]
        preds = preds * std + mean
        targets = targets * std + mean
    err = preds - targets
    rmse = float(np.sqrt((err**2).mean()))
    mae = float(np.abs(err).mean())
    return MetricsReport(
        rmse=rmse,
        mae=mae,
        per_horizon_rmse=[float(v) for v in np.sqrt((err**2).mean(axis=0))],
        per_horizon_mae=[float(v) for v in np.abs(err).mean(axis=0)],
        runtime_s=time.perf_counter() - t0,
        n_params=model.n_params(),
    )


# -- synthetic benchmark --------------------------------------------------


def _companion_radius(coeffs: np.ndarray) -> float:
    tau, c, _ = coeffs.shape
    comp = np.zeros((c * tau, c * tau))
    comp[:c] = np.concatenate(list(coeffs), axis=1)
    if tau > 1:
        comp[c:, : c * (tau - 1)] = np.eye(c * (tau - 1))
    return float(np.abs(np.linalg.eigvals(comp)).max())


def _var_simulate(coeffs, n_steps, noise, rng, burn_in=200) -> np.ndarray:
    tau, c, _ = coeffs.shape
    total = n_steps + burn_in
    x = np.zeros((total + tau, c))
    eps = rng.normal(scale=noise, size=(total + tau, c))
    for t in range(tau, total + tau):
        acc = eps[t].copy()
        for k in range(tau):
            acc += coeffs[k] @ x[t - 1 - k]
        x[t] = acc
    return x[tau + burn_in :]


def default_benchmark_graph(n_regions: int, weight: float = 0.35) -> np.ndarray:
    """Ring of lag-1 influences: region i is driven by region i-1."""
    g = np.zeros((n_regions, n_regions))
    for i in range(n_regions):
        g[i, (i - 1) % n_regions] = weight
    return g


def synthesize_coupled_panel(
    n_regions: int,
    n_steps: int,
    graph=None,
    lag: int = 1,
    ar: float = 0.5,
    noise: float = 1.0,
    seed: int = 0,
    offset: float = 5.0,
    start: str = "2020-01-01",
):
    """Two panels sharing one directed coupling structure.

    Mobility is a stable vector autoregression whose cross-region terms come
    from ``graph`` (entry (i, j) drives region i from region j at ``lag``)
    on top of per-region autoregression.  Cases are an independent draw of
    the same dynamics, shifted and clipped nonnegative.  Raises on unstable
    dynamics, reporting the companion spectral radius.
    """
    if graph is None:
        graph = default_benchmark_graph(n_regions)
    graph = np.asarray(graph, dtype=np.float64)
    if graph.shape != (n_regions, n_regions):
        raise ConfigError(f"graph shape {graph.shape} != ({n_regions}, {n_regions})")
    if lag < 1:
        raise ConfigError(f"lag must be >= 1, got {lag}")
    coeffs = np.zeros((lag, n_regions, n_regions))
    coeffs[0] += np.eye(n_regions) * ar
    coeffs[lag - 1] += graph
    radius = _companion_radius(coeffs)
    if radius >= 1.0:
        raise ConfigError(f"unstable dynamics: companion spectral radius {radius:.4f}")
    root = np.random.SeedSequence([seed, 20200101])
    mob_rng, case_rng = (
        np.random.Generator(np.random.PCG64(s)) for s in root.spawn(2)
    )
    mobility_values = _var_simulate(coeffs, n_steps, noise, mob_rng)
    cases_values = np.maximum(
        _var_simulate(coeffs, n_steps, noise, case_rng) + offset, 0.0
    )
    day0 = date.fromisoformat(start)
    timestamps = [(day0 + timedelta(days=i)).isoformat() for i in range(n_steps)]
    region_ids = [f"r{i}" for i in range(n_regions)]
    cases = PanelSeries(
        timestamps=timestamps,
        region_ids=region_ids,
        values=cases_values,
        frequency="daily",
    )
    mobility = PanelSeries(
        timestamps=timestamps,
        region_ids=region_ids,
        values=mobility_values,
        frequency="daily",
    )
    return cases, mobility


# -- benchmark grid -------------------------------------------------------

METRICS_HEADER = ["backbone", "prior", "horizon", "seed", "rmse", "mae", "runtime_s", "params"]
AGGREGATE_HEADER = ["backbone", "prior", "horizon", "metric", "mean", "std"]


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in METRICS_HEADER])


def write_aggregate_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_HEADER)
        for row in rows:
            writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in AGGREGATE_HEADER])


def _bench_cell(args):
    config, cases, mobility, prior = args
    t0 = time.perf_counter()
    state, _, _ = fit(config, cases, mobility, prior=prior)
    report = evaluate(state, cases, config, split="test")
    runtime = time.perf_counter() - t0
    return {
        "backbone": config.backbone,
        "prior": config.prior_kind,
        "horizon": config.horizon,
        "seed": config.seed,
        "rmse": report.rmse,
        "mae": report.mae,
        "runtime_s": runtime,
        "params": report.n_params,
    }


def bench(
    base: RunConfig,
    cases: PanelSeries,
    mobility: PanelSeries,
    backbones=("dlinear", "rnf"),
    priors=PRIOR_CHOICES,
    horizons=(7, 14),
    seeds=(0, 1, 2),
):
    """Run the ablation grid; returns (per-run rows, aggregate rows).

    Priors are built once per kind from the shared training cutoff, so every
    cell of a kind sees the identical matrix.  MICA_THREADS > 1 runs cells in
    worker processes; results are assembled in grid order either way.
    """
    min_window = base.lookback + max(horizons)
    train_rg, _, _ = chronological_split(
        cases.n_steps, base.split_spec(), min_window
    )
    built = {}
    for kind in priors:
        cfg = replace(base, prior_kind=kind)
        built[kind] = build_run_prior(cfg, cases, mobility, train_end=train_rg.stop)
    tasks = []
    for backbone in backbones:
        for kind in priors:
            for horizon in horizons:
                for seed in seeds:
                    cfg = replace(
                        base,
                        backbone=backbone,
                        prior_kind=kind,
                        horizon=horizon,
                        seed=seed,
                    )
                    tasks.append((cfg, cases, mobility, built[kind]))
    workers = int(os.environ.get("MICA_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_cell, tasks))
    else:
        rows = [_bench_cell(t) for t in tasks]
    aggregates = []
    for backbone in backbones:
        for kind in priors:
            for horizon in horizons:
                cell = [
                    r
                    for r in rows
                    if r["backbone"] == backbone
                    and r["prior"] == kind
                    and r["horizon"] == horizon
                ]
                for metric in ("rmse", "mae"):
                    vals = np.array([r[metric] for r in cell])
                    aggregates.append(
                        {
                            "backbone": backbone,
                            "prior": kind,
                            "horizon": horizon,
                            "metric": metric,
                            "mean": float(vals.mean()),
                            "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                        }
                    )
    return rows, aggregates


# -- estimator facade -----------------------------------------------------


class PanelForecaster(BaseEstimator):
    """Train-and-forecast wrapper over a raw (time x regions) array.

    fit() splits the provided rows chronologically into train/validation,
    normalizes with train statistics, and trains to the best validation
    checkpoint; predict() forecasts the horizon following the last lookback
    window, on the raw scale.
    """

    def __init__(
        self,
        backbone="dlinear",
        lookback=7,
        horizon=7,
        prior=None,
        d_model=16,
        n_heads=4,
        n_blocks=2,
        d_ff=32,
        patch_len=4,
        stride=2,
        dropout=0.1,
        kernel_size=3,
        ablation="full",
        theta_init=-2.0,
        beta=1e-3,
        eta=1e-4,
        lr=1e-3,
        batch_size=32,
        max_epochs=200,
        patience=10,
        train_frac=0.8,
        seed=0,
    ):
        self.backbone = backbone
        self.lookback = lookback
        self.horizon = horizon
        self.prior = prior
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_blocks = n_blocks
        self.d_ff = d_ff
        self.patch_len = patch_len
        self.stride = stride
        self.dropout = dropout
        self.kernel_size = kernel_size
        self.ablation = ablation
        self.theta_init = theta_init
        self.beta = beta
        self.eta = eta
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.train_frac = train_frac
        self.seed = seed

    def _run_config(self) -> RunConfig:
        return RunConfig(
            backbone=self.backbone,
            lookback=self.lookback,
            horizon=self.horizon,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_blocks=self.n_blocks,
            d_ff=self.d_ff,
            patch_len=self.patch_len,
            stride=self.stride,
            dropout=self.dropout,
            kernel_size=self.kernel_size,
            prior_kind="none" if self.prior is None else "pcmci",
            ablation=self.ablation,
            theta_init=self.theta_init,
            beta=self.beta,
            eta=self.eta,
            lr=self.lr,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        X = check_panel_array(X, "X", min_rows=2)
        config = self._run_config()
        n = X.shape[0]
        a = int(np.floor(self.train_frac * n))
        min_window = self.lookback + self.horizon
        train_rg, val_rg = range(0, a), range(a, n)
        for name, rg in (("train", train_rg), ("val", val_rg)):
            if len(rg) < min_window:
                raise InsufficientDataError(
                    f"{name} range has {len(rg)} rows, needs >= {min_window}"
                )
        self.normalizer_ = Normalizer.fit(X[train_rg.start : train_rg.stop])
        values = self.normalizer_.transform(X)
        prior = self.prior
        if prior is not None and hasattr(prior, "matrix"):
            prior = prior.matrix
        model = ForecastModel(
            config.to_model_config(X.shape[1]), prior=prior, seed=self.seed
        )
        self.state_, self.train_info_ = _train_loop(
            model, values, train_rg, val_rg, config
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "state_"):
            raise ConfigError("predict called before fit")
        X = check_panel_array(X, "X", min_rows=self.lookback)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(
                f"X has {X.shape[1]} regions, fitted on {self.n_features_in_}"
            )
        values = self.normalizer_.transform(X[-self.lookback :])
        model = self.state_.build()
        pred, _ = model.forward(Tape(), values.T, train=False)
        return self.normalizer_.inverse(pred.value.T)
