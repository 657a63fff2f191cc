"""Forecasting backbones over stacked window rows.

Two families share one calling convention: input is a tall matrix whose rows
are length-L windows, one row per (batch item, region) pair in region-major
order within each item.

* DLinear splits each window into a moving-average trend and a seasonal
  remainder and maps both to the horizon with shared linear heads.
* The patch transformer embeds overlapping sub-windows and runs standard
  post-norm encoder blocks; its residual-free variant (rnf) removes the
  attention term from every block, keeping the feed-forward path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Param, Tape, Var, glorot_uniform, seeded_rng
from .exceptions import ConfigError, ShapeError

BACKBONES = ("dlinear", "patch")
PATCH_MODES = ("full", "rnf")


@dataclass
class PatchConfig:
    """Shape and regularization settings for the patch transformer."""

    patch_len: int = 4
    stride: int = 2
    d_model: int = 16
    n_heads: int = 4
    n_blocks: int = 2
    d_ff: int = 32
    dropout: float = 0.1
    mode: str = "full"
    rnf_keep_first_norm: bool = True
    eps: float = 1e-5

    def __post_init__(self):
        if self.mode not in PATCH_MODES:
            raise ConfigError(f"mode must be one of {PATCH_MODES}, got {self.mode!r}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.patch_len < 1 or self.stride < 1:
            raise ConfigError(
                f"patch_len and stride must be >= 1, got {self.patch_len}, {self.stride}"
            )

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def n_patches(self, seq_len: int) -> int:
        if seq_len < self.patch_len:
            raise ConfigError(
                f"seq_len={seq_len} shorter than patch_len={self.patch_len}"
            )
        return (seq_len - self.patch_len) // self.stride + 1


# -- DLinear -------------------------------------------------------------


def moving_average_matrix(seq_len: int, kernel_size: int) -> np.ndarray:
    """Linear operator for a centered moving average with edge replication.

    Row t averages the kernel_size positions centered at t, clipping indices
    into [0, seq_len), so boundary windows re-count the edge value.
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ConfigError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    half = kernel_size // 2
    m = np.zeros((seq_len, seq_len))
    for t in range(seq_len):
        for u in range(t - half, t + half + 1):
            m[t, min(max(u, 0), seq_len - 1)] += 1.0 / kernel_size
    return m


def init_dlinear_params(
    seq_len: int, horizon: int, seed: int, prefix: str = "backbone"
) -> dict:
    params = {}
    for head in ("seasonal", "trend"):
        name = f"{prefix}.{head}.w"
        params[name] = Param(
            glorot_uniform((horizon, seq_len), seeded_rng(seed, name)), name
        )
        bname = f"{prefix}.{head}.b"
        params[bname] = Param(np.zeros((1, horizon)), bname)
    return params


def dlinear_forward(
    tape: Tape, x, params: dict, ma_matrix: np.ndarray, prefix: str = "backbone"
) -> Var:
    """Trend/seasonal decomposition with shared horizon heads."""
    trend = tape.matmul(x, ma_matrix.T)
    seasonal = tape.sub(x, trend)
    out_s = tape.affine(
        seasonal, params[f"{prefix}.seasonal.w"], params[f"{prefix}.seasonal.b"]
    )
    out_t = tape.affine(trend, params[f"{prefix}.trend.w"], params[f"{prefix}.trend.b"])
    return tape.add(out_s, out_t)


# -- patch transformer ---------------------------------------------------


def patch_matrix(seq_len: int, cfg: PatchConfig) -> np.ndarray:
    """Constant gather operator mapping a window row to its stacked patches."""
    n = cfg.n_patches(seq_len)
    g = np.zeros((n * cfg.patch_len, seq_len))
    for i in range(n):
        for p in range(cfg.patch_len):
            g[i * cfg.patch_len + p, i * cfg.stride + p] = 1.0
    return g


def init_patch_params(
    cfg: PatchConfig, seq_len: int, seed: int, prefix: str = "backbone"
) -> dict:
    n = cfg.n_patches(seq_len)
    d, dh = cfg.d_model, cfg.d_head
    params = {}

    def add(name, shape, init="glorot"):
        full = f"{prefix}.{name}"
        rng = seeded_rng(seed, full)
        if init == "glorot":
            value = glorot_uniform(shape, rng)
        elif init == "pos":
            value = rng.uniform(-0.02, 0.02, size=shape)
        elif init == "ones":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        params[full] = Param(value, full)

    add("embed.w", (d, cfg.patch_len))
    add("pos", (n, d), init="pos")
    for b in range(cfg.n_blocks):
        if cfg.mode == "full":
            for h in range(cfg.n_heads):
                for proj in ("wq", "wk", "wv"):
                    add(f"block{b}.attn.head{h}.{proj}", (dh, dh))
            add(f"block{b}.attn.wo", (d, d))
        if cfg.mode == "full" or cfg.rnf_keep_first_norm:
            add(f"block{b}.ln1.g", (1, d), init="ones")
            add(f"block{b}.ln1.b", (1, d), init="zeros")
        add(f"block{b}.ffn.w1", (cfg.d_ff, d))
        add(f"block{b}.ffn.w2", (d, cfg.d_ff))
        add(f"block{b}.ln2.g", (1, d), init="ones")
        add(f"block{b}.ln2.b", (1, d), init="zeros")
    return params


def multi_head_attention(
    tape: Tape,
    e,
    params: dict,
    block: int,
    cfg: PatchConfig,
    n_patches: int,
    prefix: str = "backbone",
) -> Var:
    dh = cfg.d_head
    scale = 1.0 / np.sqrt(dh)
    heads = []
    for h in range(cfg.n_heads):
        eh = tape.cols(e, h * dh, (h + 1) * dh)
        base = f"{prefix}.block{block}.attn.head{h}"
        q = tape.affine(eh, params[f"{base}.wq"])
        k = tape.affine(eh, params[f"{base}.wk"])
        v = tape.affine(eh, params[f"{base}.wv"])
        scores = tape.grouped_matmul_nt(q, k, n_patches, scale=scale)
        probs = tape.softmax_rows(scores)
        heads.append(tape.grouped_matmul(probs, v, n_patches))
    mixed = heads[0] if len(heads) == 1 else tape.concat_cols(heads)
    return tape.affine(mixed, params[f"{prefix}.block{block}.attn.wo"])


def transformer_block(
    tape: Tape,
    e,
    params: dict,
    block: int,
    cfg: PatchConfig,
    n_patches: int,
    rng,
    train: bool,
    prefix: str = "backbone",
) -> Var:
    """One post-norm encoder block; rnf mode drops the attention term."""
    base = f"{prefix}.block{block}"
    if cfg.mode == "full":
        a = multi_head_attention(tape, e, params, block, cfg, n_patches, prefix)
        r = tape.layer_norm(
            tape.add(tape.dropout(a, cfg.dropout, rng, train), e),
            params[f"{base}.ln1.g"],
            params[f"{base}.ln1.b"],
            eps=cfg.eps,
        )
    elif cfg.rnf_keep_first_norm:
        r = tape.layer_norm(
            tape.add(tape.dropout(e, cfg.dropout, rng, train), e),
            params[f"{base}.ln1.g"],
            params[f"{base}.ln1.b"],
            eps=cfg.eps,
        )
    else:
        r = e
    f = tape.affine(
        tape.pointwise(tape.affine(r, params[f"{base}.ffn.w1"]), "gelu"),
        params[f"{base}.ffn.w2"],
    )
    return tape.layer_norm(
        tape.add(tape.dropout(f, cfg.dropout, rng, train), r),
        params[f"{base}.ln2.g"],
        params[f"{base}.ln2.b"],
        eps=cfg.eps,
    )


def patch_encode(
    tape: Tape,
    x,
    params: dict,
    cfg: PatchConfig,
    seq_len: int,
    rng,
    train: bool,
    prefix: str = "backbone",
) -> Var:
    """Embed window rows into per-patch states, shape (rows * n_patches, d_model)."""
    xv = x.value if isinstance(x, Var) else np.asarray(x)
    if xv.shape[1] != seq_len:
        raise ShapeError(f"expected window length {seq_len}, got {xv.shape[1]}")
    n = cfg.n_patches(seq_len)
    gather = patch_matrix(seq_len, cfg)
    flat = tape.matmul(x, gather.T)
    patches = tape.reshape(flat, xv.shape[0] * n, cfg.patch_len)
    e = tape.affine(patches, params[f"{prefix}.embed.w"])
    e = tape.add(e, tape.tile_rows(params[f"{prefix}.pos"], xv.shape[0]))
    for b in range(cfg.n_blocks):
        e = transformer_block(tape, e, params, b, cfg, n, rng, train, prefix)
    return e


# -- parameter accounting ------------------------------------------------


def count_params(params: dict) -> int:
    return int(sum(p.value.size for p in params.values()))


def attention_param_count(cfg: PatchConfig) -> int:
    """Per-block attention parameters: per-head projections plus the output mix."""
    return 3 * cfg.n_heads * cfg.d_head**2 + cfg.d_model**2
