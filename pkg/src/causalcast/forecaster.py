"""Model assembly: backbone encoding, spatial branch, fusion, and loss.

A :class:`ForecastModel` owns every trainable parameter plus the frozen prior
and exposes a tape-recorded forward/loss.  Batches travel as stacked matrices
whose rows are (item, region) pairs in region-major order per item, so region
r of item b sits at row b * C + r.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .adapter import (
    AdapterState,
    adapter_forward,
    adapter_regularizers,
    init_adapter_state,
    spatial_embed,
)
from .autodiff import Param, Tape, Var, glorot_uniform, seeded_rng, value_of
from .backbone import (
    PatchConfig,
    count_params,
    dlinear_forward,
    init_dlinear_params,
    init_patch_params,
    moving_average_matrix,
    patch_encode,
)
from .exceptions import ConfigError, NonFiniteLossError, ShapeError

BACKBONE_KINDS = ("dlinear", "rnf", "full_attention")


@dataclass
class ModelConfig:
    """Everything needed to rebuild a model deterministically from a seed."""

    backbone: str = "dlinear"
    n_regions: int = 1
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
    adapter: bool = False
    ablation: str = "full"
    theta_init: float = -2.0
    beta: float = 1e-3
    eta: float = 1e-4
    composition: str = "unified"
    depth: int = 1
    per_region_decoder: bool = False
    rnf_keep_first_norm: bool = True
    eps: float = 1e-5

    def __post_init__(self):
        if self.backbone not in BACKBONE_KINDS:
            raise ConfigError(
                f"backbone must be one of {BACKBONE_KINDS}, got {self.backbone!r}"
            )
        for name in ("n_regions", "lookback", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def patch_config(self) -> PatchConfig:
        return PatchConfig(
            patch_len=self.patch_len,
            stride=self.stride,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_blocks=self.n_blocks,
            d_ff=self.d_ff,
            dropout=self.dropout,
            mode="rnf" if self.backbone == "rnf" else "full",
            rnf_keep_first_norm=self.rnf_keep_first_norm,
            eps=self.eps,
        )


@dataclass
class ForecastBatch:
    """Stacked normalized windows and targets, rows = (item, region) pairs."""

    inputs: np.ndarray
    targets: np.ndarray
    n_regions: int

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ShapeError(
                f"inputs {self.inputs.shape} and targets {self.targets.shape} "
                "disagree on row count"
            )
        if self.inputs.shape[0] % self.n_regions != 0:
            raise ShapeError(
                f"{self.inputs.shape[0]} rows not divisible by {self.n_regions} regions"
            )

    @property
    def n_items(self) -> int:
        return self.inputs.shape[0] // self.n_regions


@dataclass
class FusionState:
    """Per-region flatten projections plus the horizon decoder."""

    backbone_kind: str
    n_regions: int
    horizon: int
    d_model: int
    n_patches: int
    per_region_decoder: bool = False
    params: dict = field(default_factory=dict)


def init_fusion_state(
    kind: str,
    n_regions: int,
    horizon: int,
    d_model: int,
    n_patches: int,
    seed: int,
    per_region_decoder: bool = False,
    with_projections: bool = True,
    with_decoder: bool = True,
    prefix: str = "fusion",
) -> FusionState:
    params = {}

    def add(name, shape, zero=False):
        full = f"{prefix}.{name}"
        value = (
            np.zeros(shape) if zero else glorot_uniform(shape, seeded_rng(seed, full))
        )
        params[full] = Param(value, full)

    if with_projections:
        for c in range(n_regions):
            add(f"wc{c}", (d_model, n_patches * d_model))
    if with_decoder:
        if per_region_decoder:
            for c in range(n_regions):
                add(f"dec{c}.w", (horizon, d_model))
            add("dec.b", (n_regions, horizon), zero=True)
        else:
            add("dec.w", (horizon, d_model))
            add("dec.b", (1, horizon), zero=True)
    return FusionState(
        backbone_kind=kind,
        n_regions=n_regions,
        horizon=horizon,
        d_model=d_model,
        n_patches=n_patches,
        per_region_decoder=per_region_decoder,
        params=params,
    )


def fuse(tape: Tape, encoded, z_n, state: FusionState) -> Var:
    """Flatten each region's patch states, project per region, add the
    spatial branch when present."""
    ev = value_of(encoded)
    n, d = state.n_patches, state.d_model
    if ev.shape[0] % n != 0 or ev.shape[1] != d:
        raise ShapeError(f"encoded {ev.shape} inconsistent with {n} patches x {d}")
    rows = ev.shape[0] // n
    flat = tape.reshape(encoded, rows, n * d)
    weights = [state.params[f"fusion.wc{c}"] for c in range(state.n_regions)]
    projected = tape.per_region_affine(flat, weights, state.n_regions)
    if z_n is None:
        return projected
    return tape.add(projected, z_n)


def decode(tape: Tape, fused, state: FusionState, n_items: int) -> Var:
    """Map each region state to its length-T forecast."""
    if state.per_region_decoder:
        weights = [state.params[f"fusion.dec{c}.w"] for c in range(state.n_regions)]
        out = tape.per_region_affine(fused, weights, state.n_regions)
        return tape.add(out, tape.tile_rows(state.params["fusion.dec.b"], n_items))
    return tape.affine(fused, state.params["fusion.dec.w"], state.params["fusion.dec.b"])


class ForecastModel:
    """Backbone plus optional causal-prior spatial branch, one parameter dict.

    Parameter names are seeded independently, so toggling the adapter or
    swapping priors never changes how the shared parameters initialize.
    """

    def __init__(self, config: ModelConfig, prior=None, seed: int = 0):
        self.config = config
        self.seed = int(seed)
        c = config.n_regions
        if config.adapter:
            if prior is None:
                raise ConfigError("adapter enabled but no prior supplied")
            prior = np.asarray(
                prior.matrix if hasattr(prior, "matrix") else prior, dtype=np.float64
            )
            if prior.shape != (c, c):
                raise ConfigError(f"prior shape {prior.shape} != ({c}, {c})")
            self.prior = prior
        else:
            self.prior = None

        self.params: dict[str, Param] = {}
        if config.backbone == "dlinear":
            self.ma_matrix = moving_average_matrix(config.lookback, config.kernel_size)
            self.params.update(
                init_dlinear_params(config.lookback, config.horizon, seed)
            )
            n_patches = 1
        else:
            self.patch_cfg = config.patch_config()
            n_patches = self.patch_cfg.n_patches(config.lookback)
            self.params.update(init_patch_params(self.patch_cfg, config.lookback, seed))

        self.adapter_state: AdapterState | None = None
        if config.adapter:
            self.adapter_state = init_adapter_state(
                c,
                config.lookback,
                config.d_model,
                seed,
                theta_init=config.theta_init,
                eps=config.eps,
                composition=config.composition,
                depth=config.depth,
            )
            self.params.update(self.adapter_state.params)

        needs_projections = config.backbone != "dlinear"
        needs_decoder = needs_projections or config.adapter
        self.fusion_state = init_fusion_state(
            config.backbone,
            c,
            config.horizon,
            config.d_model,
            n_patches,
            seed,
            per_region_decoder=config.per_region_decoder,
            with_projections=needs_projections,
            with_decoder=needs_decoder,
        )
        self.params.update(self.fusion_state.params)

    def n_params(self) -> int:
        return count_params(self.params)

    def forward(self, tape: Tape, inputs, train: bool = False, rng=None):
        """Predict stacked horizons; returns (predictions, gate or None)."""
        cfg = self.config
        xv = value_of(inputs)
        if xv.shape[1] != cfg.lookback:
            raise ShapeError(f"window length {xv.shape[1]} != {cfg.lookback}")
        if xv.shape[0] % cfg.n_regions != 0:
            raise ShapeError(
                f"{xv.shape[0]} rows not divisible by {cfg.n_regions} regions"
            )
        n_items = xv.shape[0] // cfg.n_regions
        if train and rng is None:
            raise ConfigError("training forward needs an rng for dropout")

        z_n, gate = None, None
        if cfg.adapter:
            z0 = spatial_embed(tape, inputs, self.adapter_state)
            z_n, gate = adapter_forward(
                tape, z0, self.prior, self.adapter_state, cfg.ablation
            )

        if cfg.backbone == "dlinear":
            base = dlinear_forward(tape, inputs, self.params, self.ma_matrix)
            if z_n is None:
                return base, None
            spatial = decode(tape, z_n, self.fusion_state, n_items)
            return tape.add(base, spatial), gate
        encoded = patch_encode(
            tape, inputs, self.params, self.patch_cfg, cfg.lookback, rng, train
        )
        fused = fuse(tape, encoded, z_n, self.fusion_state)
        return decode(tape, fused, self.fusion_state, n_items), gate

    def loss(self, tape: Tape, batch: ForecastBatch, train: bool = False, rng=None):
        """Composite objective; returns (predictions, total, components dict)."""
        cfg = self.config
        if batch.n_regions != cfg.n_regions:
            raise ConfigError(
                f"batch has {batch.n_regions} regions, model {cfg.n_regions}"
            )
        pred, gate = self.forward(tape, batch.inputs, train=train, rng=rng)
        diff = tape.sub(pred, batch.targets)
        l_pred = tape.mean_all(tape.mul(diff, diff))
        components = {"pred": float(l_pred.value[0, 0])}
        if cfg.adapter:
            l_lambda, l_sparse = adapter_regularizers(
                tape, self.adapter_state, gate, cfg.beta, cfg.eta
            )
            total = tape.add(tape.add(l_pred, l_lambda), l_sparse)
            components["lambda"] = float(l_lambda.value[0, 0])
            components["sparse"] = float(l_sparse.value[0, 0])
        else:
            total = l_pred
            components["lambda"] = 0.0
            components["sparse"] = 0.0
        components["total"] = float(total.value[0, 0])
        return pred, total, components


class Adam:
    """Adaptive moment optimizer; parameters stepped in sorted-name order."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.names = sorted(params)
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(params[n].value) for n in self.names}
        self.v = {n: np.zeros_like(params[n].value) for n in self.names}

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for n in self.names:
            p = self.params[n]
            self.m[n] = self.beta1 * self.m[n] + (1.0 - self.beta1) * p.grad
            self.v[n] = self.beta2 * self.v[n] + (1.0 - self.beta2) * p.grad**2
            mhat = self.m[n] / b1c
            vhat = self.v[n] / b2c
            p.value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for n in self.names:
            self.params[n].zero_grad()


@dataclass
class ModelState:
    """Serializable checkpoint: config echo, parameter values, prior, step."""

    config: ModelConfig
    params: dict
    prior: np.ndarray | None
    step: int
    seed: int

    def to_json(self) -> str:
        payload = {
            "config": asdict(self.config),
            "params": {n: v.tolist() for n, v in sorted(self.params.items())},
            "prior": None if self.prior is None else self.prior.tolist(),
            "step": self.step,
            "seed": self.seed,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ModelState":
        d = json.loads(text)
        return cls(
            config=ModelConfig(**d["config"]),
            params={n: np.array(v, dtype=np.float64) for n, v in d["params"].items()},
            prior=None if d["prior"] is None else np.array(d["prior"], dtype=np.float64),
            step=int(d["step"]),
            seed=int(d["seed"]),
        )

    @classmethod
    def capture(cls, model: ForecastModel, step: int) -> "ModelState":
        return cls(
            config=model.config,
            params={n: p.value.copy() for n, p in model.params.items()},
            prior=None if model.prior is None else model.prior.copy(),
            step=step,
            seed=model.seed,
        )

    def build(self) -> ForecastModel:
        model = ForecastModel(self.config, prior=self.prior, seed=self.seed)
        for name, value in self.params.items():
            if name not in model.params:
                raise ConfigError(f"checkpoint parameter {name!r} not in model")
            if model.params[name].value.shape != value.shape:
                raise ConfigError(
                    f"checkpoint parameter {name!r} has shape {value.shape}, "
                    f"model expects {model.params[name].value.shape}"
                )
            model.params[name].value[...] = value
        return model


def check_finite_loss(total: Var, step: int) -> None:
    if not np.isfinite(total.value[0, 0]):
        raise NonFiniteLossError(f"non-finite loss at step {step}")
