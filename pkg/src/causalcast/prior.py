"""Directed spatial priors distilled from lagged link statistics.

The discovery tensor is collapsed over lags into a single region-by-region
matrix: each link's absolute statistic is gated by significance and weighted
by a softmax over its lags, so stronger lags dominate.  Pearson and identity
variants provide ablation baselines with the same serialized form.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .discovery import CausalTensor
from .exceptions import ConfigError, DegenerateSeriesError
from .validation import (
    check_in_unit_interval,
    check_panel_array,
    check_positive,
    check_square,
)

PRIOR_KINDS = ("pcmci", "pearson", "identity")


def lag_weights(stats, kappa: float = 1.0, sign: float = 1.0, use_abs: bool = True):
    """Softmax weights over the trailing (lag) axis of ``stats``.

    Scores are sign * |stat| / kappa by default, so larger-magnitude lags get
    more weight; sign=-1 with use_abs=False reproduces a plain exp(-stat/kappa)
    weighting.  Max-subtraction keeps the exponentials bounded.
    """
    check_positive(kappa, "kappa")
    a = np.asarray(stats, dtype=np.float64)
    scores = (np.abs(a) if use_abs else a) * (sign / kappa)
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


def _provenance(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class PriorMatrix:
    """Region-by-region influence prior with its construction fingerprint."""

    matrix: np.ndarray
    kind: str
    provenance: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = check_square(self.matrix, "prior matrix")
        if self.kind not in PRIOR_KINDS:
            raise ConfigError(f"unknown prior kind {self.kind!r}")

    @property
    def n_regions(self) -> int:
        return self.matrix.shape[0]

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "matrix": self.matrix.tolist(),
            "params": self.params,
            "provenance": self.provenance,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "PriorMatrix":
        d = json.loads(text)
        return cls(
            matrix=np.array(d["matrix"], dtype=np.float64),
            kind=str(d["kind"]),
            provenance=str(d["provenance"]),
            params=dict(d.get("params", {})),
        )


def build_prior(
    tensor: CausalTensor,
    alpha: float = 0.05,
    kappa: float = 1.0,
    sign: float = 1.0,
    use_abs: bool = True,
) -> PriorMatrix:
    """Collapse a link tensor into a directed prior.

    Entry (i, j) sums, over lags, the lag weight times the absolute statistic
    of significant links from source j to target i; insignificant lags
    contribute nothing.
    """
    check_in_unit_interval(alpha, "alpha")
    w = lag_weights(tensor.val, kappa=kappa, sign=sign, use_abs=use_abs)
    mask = (tensor.pval < alpha).astype(np.float64)
    matrix = (w * mask * np.abs(tensor.val)).sum(axis=-1)
    params = {"alpha": alpha, "kappa": kappa, "sign": sign, "use_abs": use_abs}
    return PriorMatrix(
        matrix=matrix,
        kind="pcmci",
        provenance=_provenance(
            {"tensor": json.loads(tensor.to_json()), "params": params}
        ),
        params=params,
    )


def pearson_prior(values) -> PriorMatrix:
    """Absolute pairwise correlation of the raw series, unit diagonal."""
    values = check_panel_array(values, "values", min_rows=3)
    sd = values.std(axis=0)
    bad = np.flatnonzero(sd < 1e-12)
    if bad.size:
        raise DegenerateSeriesError(
            f"series {bad[0]} is constant, correlation undefined"
        )
    matrix = np.abs(np.corrcoef(values, rowvar=False))
    np.fill_diagonal(matrix, 1.0)
    return PriorMatrix(
        matrix=matrix,
        kind="pearson",
        provenance=_provenance({"kind": "pearson", "values": values.tolist()}),
        params={},
    )


def identity_prior(n_regions: int) -> PriorMatrix:
    """Self-links only; the gated injection then sees each region alone."""
    if n_regions < 1:
        raise ConfigError(f"n_regions must be >= 1, got {n_regions}")
    return PriorMatrix(
        matrix=np.eye(n_regions),
        kind="identity",
        provenance=_provenance({"kind": "identity", "n_regions": n_regions}),
        params={},
    )


def spectral_norm(m) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(np.asarray(m, dtype=np.float64), 2))
