"""Dense-matrix numerics with reverse-mode differentiation.

Everything downstream (backbones, the causal adapter, the fusion head) is
expressed through the primitive operations on :class:`Tape`.  Values are plain
2-D float64 numpy arrays; trainable leaves are :class:`Param`; intermediate
results are :class:`Var` handles owned by the tape that produced them.

A tape is confined to a single thread.  Batches are handled by stacking
windows into tall matrices and using the grouped operations, so one tape
record covers the whole batch.
"""

from __future__ import annotations

import zlib
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .exceptions import ConfigError, ShapeError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Param:
    """Trainable matrix with paired gradient storage."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name: str):
        value = np.array(value, dtype=np.float64)
        if value.ndim == 1:
            value = value[None, :]
        if value.ndim != 2:
            raise ShapeError(f"Param {name!r} must be rank-2, got shape {value.shape}")
        self.value = value
        self.grad = np.zeros_like(value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


class Var:
    """Intermediate value recorded on a tape."""

    __slots__ = ("value",)

    def __init__(self, value: np.ndarray):
        self.value = value

    @property
    def shape(self):
        return self.value.shape


def value_of(x) -> np.ndarray:
    """Raw ndarray behind a Var, Param, ndarray, or scalar."""
    if isinstance(x, Var):
        return x.value
    if isinstance(x, Param):
        return x.value
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[None, :]
    return arr


def _is_leaf(x) -> bool:
    return isinstance(x, (Var, Param))


def _bias_like(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce ``grad`` onto a broadcast operand of the given shape."""
    if shape == grad.shape:
        return grad
    if shape == (1, 1):
        return grad.sum().reshape(1, 1)
    if shape[0] == 1 and shape[1] == grad.shape[1]:
        return grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and shape[0] == grad.shape[0]:
        return grad.sum(axis=1, keepdims=True)
    raise ShapeError(f"cannot reduce gradient {grad.shape} onto {shape}")


class Tape:
    """Ordered record of executed primitives, replayed in reverse by backward.

    Operations accept Var/Param operands (differentiated) as well as plain
    arrays or scalars (treated as constants).
    """

    def __init__(self):
        # (out, inputs, vjp) where vjp(d_out) aligns with inputs
        self._nodes: list[tuple[Var, tuple, Callable]] = []

    def __len__(self):
        return len(self._nodes)

    def _emit(self, out_value, inputs, vjp) -> Var:
        out = Var(out_value)
        self._nodes.append((out, tuple(inputs), vjp))
        return out

    # -- core algebra -----------------------------------------------------

    def matmul(self, a, b) -> Var:
        av, bv = value_of(a), value_of(b)
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape} do not conform")

        def vjp(g):
            return g @ bv.T, av.T @ g

        return self._emit(av @ bv, (a, b), vjp)

    def affine(self, x, w, b=None) -> Var:
        """x @ w.T (+ b), with b broadcast over rows."""
        xv, wv = value_of(x), value_of(w)
        if xv.shape[1] != wv.shape[1]:
            raise ShapeError(
                f"affine: input {xv.shape} incompatible with weight {wv.shape}"
            )
        out = xv @ wv.T
        if b is None:

            def vjp(g):
                return g @ wv, g.T @ xv

            return self._emit(out, (x, w), vjp)

        bv = value_of(b)
        if bv.shape != (1, wv.shape[0]):
            raise ShapeError(
                f"affine: bias {bv.shape} not broadcastable to (1, {wv.shape[0]})"
            )

        def vjp(g):
            return g @ wv, g.T @ xv, g.sum(axis=0, keepdims=True)

        return self._emit(out + bv, (x, w, b), vjp)

    def add(self, a, b) -> Var:
        av, bv = value_of(a), value_of(b)
        out = av + bv

        def vjp(g):
            return _bias_like(g, av.shape), _bias_like(g, bv.shape)

        return self._emit(out, (a, b), vjp)

    def sub(self, a, b) -> Var:
        av, bv = value_of(a), value_of(b)
        out = av - bv

        def vjp(g):
            return _bias_like(g, av.shape), _bias_like(-g, bv.shape)

        return self._emit(out, (a, b), vjp)

    def mul(self, a, b) -> Var:
        av, bv = value_of(a), value_of(b)
        out = av * bv

        def vjp(g):
            return _bias_like(g * bv, av.shape), _bias_like(g * av, bv.shape)

        return self._emit(out, (a, b), vjp)

    def scale(self, a, c: float) -> Var:
        av = value_of(a)
        c = float(c)

        def vjp(g):
            return (g * c,)

        return self._emit(av * c, (a,), vjp)

    def sum_all(self, a) -> Var:
        av = value_of(a)

        def vjp(g):
            return (np.full_like(av, g[0, 0]),)

        return self._emit(np.array([[av.sum()]]), (a,), vjp)

    def mean_all(self, a) -> Var:
        av = value_of(a)
        n = av.size

        def vjp(g):
            return (np.full_like(av, g[0, 0] / n),)

        return self._emit(np.array([[av.mean()]]), (a,), vjp)

    def abs_sum(self, a) -> Var:
        av = value_of(a)

        def vjp(g):
            return (g[0, 0] * np.sign(av),)

        return self._emit(np.array([[np.abs(av).sum()]]), (a,), vjp)

    # -- pointwise nonlinearities -----------------------------------------

    def pointwise(self, x, kind: str) -> Var:
        xv = value_of(x)
        if kind == "relu":
            out = np.maximum(xv, 0.0)

            def deriv():
                return (xv > 0.0).astype(np.float64)

        elif kind == "sigmoid":
            out = _sigmoid(xv)

            def deriv():
                return out * (1.0 - out)

        elif kind == "softplus":
            # overflow-safe ln(1 + e^x)
            out = np.logaddexp(0.0, xv)

            def deriv():
                return _sigmoid(xv)

        elif kind == "gelu":
            cdf = 0.5 * (1.0 + erf(xv * _INV_SQRT2))
            out = xv * cdf

            def deriv():
                pdf = _INV_SQRT_2PI * np.exp(-0.5 * xv * xv)
                return cdf + xv * pdf

        else:
            raise ConfigError(f"unknown pointwise kind {kind!r}")

        def vjp(g):
            return (g * deriv(),)

        return self._emit(out, (x,), vjp)

    def layer_norm(self, x, gain, bias, eps: float = 1e-5) -> Var:
        """Normalize each row to zero mean / unit variance, then gain * x + bias."""
        if eps <= 0.0:
            raise ConfigError(f"layer_norm eps must be > 0, got {eps}")
        xv, gv, bv = value_of(x), value_of(gain), value_of(bias)
        d = xv.shape[1]
        if gv.shape != (1, d) or bv.shape != (1, d):
            raise ShapeError(
                f"layer_norm: gain {gv.shape} / bias {bv.shape} must be (1, {d})"
            )
        mu = xv.mean(axis=1, keepdims=True)
        var = xv.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xv - mu) * inv
        out = xhat * gv + bv

        def vjp(g):
            dxhat = g * gv
            dx = inv * (
                dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
            )
            dgain = (g * xhat).sum(axis=0, keepdims=True)
            dbias = g.sum(axis=0, keepdims=True)
            return dx, dgain, dbias

        return self._emit(out, (x, gain, bias), vjp)

    def softmax_rows(self, x) -> Var:
        xv = value_of(x)
        shifted = xv - xv.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=1, keepdims=True)

        def vjp(g):
            dot = (g * out).sum(axis=1, keepdims=True)
            return (out * (g - dot),)

        return self._emit(out, (x,), vjp)

    def dropout(self, x, rate: float, rng: np.random.Generator, train: bool):
        """Inverted dropout: scaling by 1/keep at train time, identity in eval."""
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        if not train or rate == 0.0:
            return x
        xv = value_of(x)
        keep = 1.0 - rate
        mask = (rng.random(xv.shape) < keep) / keep

        def vjp(g):
            return (g * mask,)

        return self._emit(xv * mask, (x,), vjp)

    # -- structural ops ----------------------------------------------------

    def reshape(self, x, rows: int, cols: int) -> Var:
        xv = value_of(x)
        if xv.size != rows * cols:
            raise ShapeError(f"reshape: {xv.shape} has no {rows}x{cols} view")

        def vjp(g):
            return (g.reshape(xv.shape),)

        return self._emit(xv.reshape(rows, cols), (x,), vjp)

    def transpose(self, x) -> Var:
        xv = value_of(x)

        def vjp(g):
            return (g.T,)

        return self._emit(xv.T.copy(), (x,), vjp)

    def cols(self, x, j0: int, j1: int) -> Var:
        xv = value_of(x)
        if not 0 <= j0 < j1 <= xv.shape[1]:
            raise ShapeError(f"cols: [{j0}, {j1}) outside width {xv.shape[1]}")

        def vjp(g):
            dx = np.zeros_like(xv)
            dx[:, j0:j1] = g
            return (dx,)

        return self._emit(xv[:, j0:j1].copy(), (x,), vjp)

    def concat_cols(self, parts: Sequence) -> Var:
        vals = [value_of(p) for p in parts]
        widths = [v.shape[1] for v in vals]
        out = np.concatenate(vals, axis=1)

        def vjp(g):
            grads, j = [], 0
            for w in widths:
                grads.append(g[:, j : j + w])
                j += w
            return tuple(grads)

        return self._emit(out, tuple(parts), vjp)

    def tile_rows(self, x, reps: int) -> Var:
        """Stack ``reps`` vertical copies of x; backward sums the copies."""
        xv = value_of(x)
        n, d = xv.shape

        def vjp(g):
            return (g.reshape(reps, n, d).sum(axis=0),)

        return self._emit(np.tile(xv, (reps, 1)), (x,), vjp)

    # -- grouped ops (tall matrices viewed as stacks of blocks) ------------

    def block_mix(self, m, z, block_rows: int) -> Var:
        """Apply the (block_rows x block_rows) matrix m to every vertical block of z."""
        mv, zv = value_of(m), value_of(z)
        c = block_rows
        if mv.shape != (c, c) or zv.shape[0] % c != 0:
            raise ShapeError(
                f"block_mix: mixer {mv.shape} incompatible with stack {zv.shape}"
            )
        z3 = zv.reshape(-1, c, zv.shape[1])
        out = np.einsum("ij,bjd->bid", mv, z3).reshape(zv.shape)

        def vjp(g):
            g3 = g.reshape(z3.shape)
            dm = np.einsum("bid,bjd->ij", g3, z3)
            dz = np.einsum("ij,bid->bjd", mv, g3).reshape(zv.shape)
            return dm, dz

        return self._emit(out, (m, z), vjp)

    def grouped_matmul_nt(self, a, b, rows_per_group: int, scale: float = 1.0) -> Var:
        """Per group g: scale * A_g @ B_g^T for stacked (G*N, d) operands."""
        av, bv = value_of(a), value_of(b)
        n = rows_per_group
        if av.shape != bv.shape or av.shape[0] % n != 0:
            raise ShapeError(
                f"grouped_matmul_nt: operands {av.shape} / {bv.shape}, group {n}"
            )
        a3 = av.reshape(-1, n, av.shape[1])
        b3 = bv.reshape(a3.shape)
        out = scale * np.einsum("gnd,gmd->gnm", a3, b3)

        def vjp(g):
            g3 = g.reshape(out.shape)
            da = scale * np.einsum("gnm,gmd->gnd", g3, b3)
            db = scale * np.einsum("gnm,gnd->gmd", g3, a3)
            return da.reshape(av.shape), db.reshape(bv.shape)

        return self._emit(out.reshape(av.shape[0], n), (a, b), vjp)

    def grouped_matmul(self, s, v, rows_per_group: int) -> Var:
        """Per group g: S_g @ V_g, with S stacked (G*N, N) and V stacked (G*N, d)."""
        sv, vv = value_of(s), value_of(v)
        n = rows_per_group
        if sv.shape[1] != n or sv.shape[0] % n != 0 or vv.shape[0] != sv.shape[0]:
            raise ShapeError(
                f"grouped_matmul: scores {sv.shape} / values {vv.shape}, group {n}"
            )
        s3 = sv.reshape(-1, n, n)
        v3 = vv.reshape(-1, n, vv.shape[1])
        out = np.einsum("gnm,gmd->gnd", s3, v3)

        def vjp(g):
            g3 = g.reshape(v3.shape)
            ds = np.einsum("gnd,gmd->gnm", g3, v3).reshape(sv.shape)
            dv = np.einsum("gnm,gnd->gmd", s3, g3).reshape(vv.shape)
            return ds, dv

        return self._emit(out.reshape(vv.shape), (s, v), vjp)

    def per_region_affine(self, x, weights: Sequence[Param], n_regions: int) -> Var:
        """Row r uses weight r % n_regions: out[r] = x[r] @ W_{r%C}^T."""
        xv = value_of(x)
        c = n_regions
        if len(weights) != c or xv.shape[0] % c != 0:
            raise ShapeError(
                f"per_region_affine: {len(weights)} weights for {c} regions, "
                f"stack {xv.shape}"
            )
        d_out = weights[0].value.shape[0]
        out = np.empty((xv.shape[0], d_out))
        for ci, w in enumerate(weights):
            out[ci::c] = xv[ci::c] @ w.value.T

        def vjp(g):
            dx = np.empty_like(xv)
            dws = []
            for ci, w in enumerate(weights):
                dx[ci::c] = g[ci::c] @ w.value
                dws.append(g[ci::c].T @ xv[ci::c])
            return (dx, *dws)

        return self._emit(out, (x, *weights), vjp)

    # -- reverse sweep -----------------------------------------------------

    def backward(self, loss: Var) -> None:
        """Accumulate dL/dparam into each participating Param's .grad.

        ``loss`` must be a 1x1 Var produced by this tape.  Gradients add onto
        whatever is already stored; call zero_grad on the params first for a
        fresh pass.
        """
        if not isinstance(loss, Var) or loss.value.shape != (1, 1):
            raise ShapeError("backward expects a 1x1 Var loss")
        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        for out, inputs, vjp in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, d in zip(inputs, vjp(g)):
                if d is None or not _is_leaf(inp):
                    continue
                if isinstance(inp, Param):
                    inp.grad += d
                else:
                    key = id(inp)
                    if key in grads:
                        grads[key] = grads[key] + d
                    else:
                        grads[key] = d


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable elementwise logistic function."""
    return _sigmoid(np.asarray(x, dtype=np.float64))


def softplus(x) -> np.ndarray:
    """Overflow-safe ln(1 + e^x)."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


# -- initialization ------------------------------------------------------


def seeded_rng(seed: int, name: str) -> np.random.Generator:
    """Independent deterministic stream per (seed, name).

    Streams are keyed by a stable hash of the name so that adding or removing
    one parameter group never shifts the draws of another.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, key])))


def glorot_uniform(shape, rng: np.random.Generator) -> np.ndarray:
    """uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-a, a, size=shape)


# -- gradient verification ----------------------------------------------


def grad_check(
    loss_fn: Callable[[Tape], Var],
    params: Sequence[Param],
    h: float = 1e-6,
    rng: np.random.Generator | None = None,
    coords_per_param: int = 6,
) -> float:
    """Compare analytic gradients with central finite differences.

    ``loss_fn`` builds the scalar loss on a fresh tape from the params'
    current values and must be deterministic (dropout disabled).  Returns the
    max over sampled coordinates of |analytic - fd| / max(1, |fd|).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    tape = Tape()
    loss = loss_fn(tape)
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    def eval_loss() -> float:
        return float(loss_fn(Tape()).value[0, 0])

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.value.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= coords_per_param else rng.choice(
            n, size=coords_per_param, replace=False
        )
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            up = eval_loss()
            flat[k] = orig - h
            down = eval_loss()
            flat[k] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(ga.reshape(-1)[k] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst
