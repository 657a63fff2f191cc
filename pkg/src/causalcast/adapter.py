"""Gated spatial adapter injecting a frozen causal prior into the forecaster.

The adapter embeds each region's lookback window, mixes region embeddings
through the prior (entrywise-gated by a learned confidence matrix), and folds
the mixed signal back through a softplus-bounded residual connection.  The
prior matrix itself is frozen; only the gate, the output mix, and the scalar
residual weight train.

Stacked convention: Z rows are (batch item, region) pairs, region-major per
item, so every item's C-row block mixes independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Param,
    Tape,
    Var,
    glorot_uniform,
    seeded_rng,
    softplus,
    value_of,
)
from .exceptions import ConfigError, ShapeError
from .prior import spectral_norm

ABLATIONS = ("full", "no_pgp", "no_crm")
COMPOSITIONS = ("unified", "sequential")


@dataclass
class AdapterState:
    """Adapter parameters plus the shape/config they were built for."""

    n_regions: int
    seq_len: int
    d_model: int
    theta_init: float = -2.0
    eps: float = 1e-5
    composition: str = "unified"
    depth: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.composition not in COMPOSITIONS:
            raise ConfigError(
                f"composition must be one of {COMPOSITIONS}, got {self.composition!r}"
            )
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")

    def lam(self) -> float:
        """Current residual weight softplus(theta)."""
        return float(softplus(self.params["adapter.theta"].value)[0, 0])


def init_adapter_state(
    n_regions: int,
    seq_len: int,
    d_model: int,
    seed: int,
    theta_init: float = -2.0,
    eps: float = 1e-5,
    composition: str = "unified",
    depth: int = 1,
    prefix: str = "adapter",
) -> AdapterState:
    params = {}

    def add(name, value):
        full = f"{prefix}.{name}"
        params[full] = Param(value, full)

    add("spatial.w", glorot_uniform((seq_len, d_model), seeded_rng(seed, f"{prefix}.spatial.w")))
    add("wo", glorot_uniform((d_model, d_model), seeded_rng(seed, f"{prefix}.wo")))
    add("theta", np.array([[theta_init]]))
    add("gate.w1", glorot_uniform((n_regions, n_regions), seeded_rng(seed, f"{prefix}.gate.w1")))
    add("gate.b1", np.zeros((1, n_regions)))
    add("gate.w2", glorot_uniform((n_regions, n_regions), seeded_rng(seed, f"{prefix}.gate.w2")))
    add("gate.b2", np.zeros((1, n_regions)))
    add("ln.g", np.ones((1, d_model)))
    add("ln.b", np.zeros((1, d_model)))
    return AdapterState(
        n_regions=n_regions,
        seq_len=seq_len,
        d_model=d_model,
        theta_init=theta_init,
        eps=eps,
        composition=composition,
        depth=depth,
        params=params,
    )


def spatial_embed(tape: Tape, x, state: AdapterState) -> Var:
    """Project each region's length-L history to d_model."""
    xv = value_of(x)
    if xv.shape[1] != state.seq_len:
        raise ConfigError(
            f"window length {xv.shape[1]} != adapter seq_len {state.seq_len}"
        )
    return tape.matmul(x, state.params["adapter.spatial.w"])


def compute_gate(tape: Tape, s_p, state: AdapterState) -> Var:
    """Edge confidences: a shared row-wise two-layer map of the prior, squashed
    through a sigmoid so every entry lands strictly in (0, 1)."""
    sv = value_of(s_p)
    c = state.n_regions
    if sv.shape != (c, c):
        raise ShapeError(f"prior is {sv.shape}, adapter built for ({c}, {c})")
    p = state.params
    hidden = tape.pointwise(
        tape.affine(s_p, p["adapter.gate.w1"], p["adapter.gate.b1"]), "gelu"
    )
    return tape.pointwise(
        tape.affine(hidden, p["adapter.gate.w2"], p["adapter.gate.b2"]), "sigmoid"
    )


def mica_layer(
    tape: Tape,
    z,
    s_p,
    state: AdapterState,
    ablation: str = "full",
    gate=None,
) -> Var:
    """One adapter layer over a stacked (rows = items x regions) embedding.

    full:   out = LN(Z + (lambda * (G o S_p) Z) W_o^T)
    no_pgp: gate forced to 1, otherwise as full
    no_crm: out = LN(((G o S_p) Z) W_o^T), residual and lambda removed
    """
    if ablation not in ABLATIONS:
        raise ConfigError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")
    p = state.params
    c = state.n_regions
    if ablation == "no_pgp":
        mix = s_p
    else:
        if gate is None:
            gate = compute_gate(tape, s_p, state)
        mix = tape.mul(gate, s_p)
    propagated = tape.block_mix(mix, z, c)
    if ablation == "no_crm":
        pre = tape.affine(propagated, p["adapter.wo"])
    else:
        lam = tape.pointwise(p["adapter.theta"], "softplus")
        pre = tape.add(z, tape.affine(tape.mul(propagated, lam), p["adapter.wo"]))
    return tape.layer_norm(pre, p["adapter.ln.g"], p["adapter.ln.b"], eps=state.eps)


def adapter_forward(
    tape: Tape,
    z,
    s_p,
    state: AdapterState,
    ablation: str = "full",
):
    """Apply the configured depth and composition; returns (output, gate).

    The gate is computed once per forward pass and reused across layers; it is
    None for the ungated ablation.  The sequential composition runs an ungated
    residual pass before each gated one, sharing weights.
    """
    gate = None
    if ablation != "no_pgp":
        gate = compute_gate(tape, s_p, state)
    out = z
    for _ in range(state.depth):
        if state.composition == "sequential" and ablation == "full":
            out = mica_layer(tape, out, s_p, state, "no_pgp")
        out = mica_layer(tape, out, s_p, state, ablation, gate=gate)
    return out, gate


def adapter_regularizers(tape: Tape, state: AdapterState, gate, beta: float, eta: float):
    """Residual-weight decay beta * lambda^2 and gate sparsity eta * |G|_1.

    Both come back tape-recorded so the penalties train theta and the gate
    MLP.  With no gate in play the sparsity term is a constant zero.
    """
    if beta < 0.0 or eta < 0.0:
        raise ConfigError(f"beta/eta must be >= 0, got {beta}, {eta}")
    lam = tape.pointwise(state.params["adapter.theta"], "softplus")
    l_lambda = tape.scale(tape.mul(lam, lam), beta)
    if gate is None:
        l_sparse = tape.scale(np.zeros((1, 1)), 0.0)
    else:
        l_sparse = tape.scale(tape.abs_sum(gate), eta)
    return l_lambda, l_sparse


def influence_bound_check(
    z,
    s_p,
    gate,
    state: AdapterState,
    lipschitz_L: float = 1.0,
    downstream=None,
):
    """Compare the realized shift against its operator-norm budget.

    lhs = |F(Z + (lambda * S_bar Z) W_o^T) - F(Z)|_F for S_bar = G o S_p,
    using the pre-normalization update; rhs = L * lambda * |W_o|_2 * |S_bar|_2
    * |Z|_F.  The caller guarantees lipschitz_L really bounds F.
    """
    zv = value_of(z)
    sbar = value_of(s_p) if gate is None else value_of(gate) * value_of(s_p)
    wo = state.params["adapter.wo"].value
    lam = state.lam()
    shifted = zv + lam * (sbar @ zv) @ wo.T
    if downstream is None:
        fa, fb = shifted, zv
    else:
        fa, fb = downstream(shifted), downstream(zv)
    lhs = float(np.linalg.norm(fa - fb))
    rhs = float(
        lipschitz_L * lam * spectral_norm(wo) * spectral_norm(sbar) * np.linalg.norm(zv)
    )
    return lhs, rhs
