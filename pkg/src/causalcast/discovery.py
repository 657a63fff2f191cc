"""Lagged causal structure discovery on multivariate panels.

Implements the two-stage PCMCI procedure with a partial-correlation
conditional independence test: a condition-selection sweep (PC1) prunes the
candidate parents of each series, then the momentary-conditional-independence
stage re-tests every retained link while conditioning on the parents of both
endpoints.  Links removed during selection keep value 0 and p-value 1 in the
output tensor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc
from sklearn.base import BaseEstimator

from .exceptions import (
    ConfigError,
    DegenerateSeriesError,
    InsufficientSamplesError,
    ShapeError,
)
from .validation import (
    check_in_unit_interval,
    check_panel_array,
    check_positive_int,
)

_RIDGE = 1e-10
_STAT_CLAMP = 1.0 - 1e-12


@dataclass
class StationaryPanel:
    """Differenced and standardized panel ready for discovery."""

    values: np.ndarray
    var_names: list[str]

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]


def preprocess_stationary(x, var_names=None) -> StationaryPanel:
    """First-difference each series, then z-score with sample std (ddof=1).

    Requires at least 3 rows so the differenced series has a defined sample
    standard deviation.  A series whose differences have std below 1e-12 is
    reported as degenerate rather than silently producing non-finite values.
    """
    x = check_panel_array(x, "panel", min_rows=3)
    if var_names is None:
        var_names = [f"x{j}" for j in range(x.shape[1])]
    else:
        var_names = [str(v) for v in var_names]
        if len(var_names) != x.shape[1]:
            raise ConfigError(f"{len(var_names)} names for {x.shape[1]} series")
    d = np.diff(x, axis=0)
    sd = d.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd < 1e-12)
    if bad.size:
        raise DegenerateSeriesError(
            f"series {var_names[bad[0]]!r} is constant after differencing"
        )
    z = (d - d.mean(axis=0)) / sd
    return StationaryPanel(values=z, var_names=var_names)


def parcorr_test(x, y, z=None, ridge: float = _RIDGE):
    """Partial correlation of x and y given the columns of z.

    Both variables are residualized against [1, z] by ridge-stabilized least
    squares, and the Pearson correlation of the residuals is returned together
    with its two-sided p-value from the exact t distribution with
    n - |z| - 2 degrees of freedom.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ShapeError(f"parcorr operands differ in length: {x.size} vs {y.size}")
    n = x.size
    if z is not None:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        if z.shape[0] != n:
            raise ShapeError(f"conditions have {z.shape[0]} rows, expected {n}")
    k = 0 if z is None else z.shape[1]
    dof = n - k - 2
    if dof < 1:
        raise InsufficientSamplesError(
            f"parcorr needs n > |z| + 2, got n={n} with {k} conditions"
        )
    design = np.ones((n, k + 1))
    if k:
        design[:, 1:] = z
    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += ridge
    coef = np.linalg.solve(gram, design.T @ np.column_stack([x, y]))
    resid = np.column_stack([x, y]) - design @ coef
    rx, ry = resid[:, 0], resid[:, 1]
    den = np.sqrt((rx @ rx) * (ry @ ry))
    stat = 0.0 if den < 1e-300 else float((rx @ ry) / den)
    stat = float(np.clip(stat, -_STAT_CLAMP, _STAT_CLAMP))
    t = stat * np.sqrt(dof / (1.0 - stat * stat))
    pval = float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return stat, pval


@dataclass
class ParentSet:
    """Selected lagged parents per target, ranked strongest first.

    ``parents[i]`` lists (source, lag) pairs; ``strength[i][(j, tau)]`` is the
    smallest absolute test statistic the link survived with.
    """

    parents: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    strength: dict[int, dict[tuple[int, int], float]] = field(default_factory=dict)

    def ranked(self, i: int) -> list[tuple[int, int]]:
        s = self.strength.get(i, {})
        return sorted(self.parents.get(i, []), key=lambda p: (-s.get(p, 0.0), p))


def _lag_col(values: np.ndarray, j: int, tau: int, t0: int) -> np.ndarray:
    n = values.shape[0]
    return values[t0 - tau : n - tau, j]


def pc_stage(
    values: np.ndarray,
    tau_max: int,
    alpha_pc: float = 0.2,
    max_conds: int = 3,
    ridge: float = _RIDGE,
) -> ParentSet:
    """Iterative condition-selection sweep over candidate lagged parents.

    For condition cardinality q = 0..max_conds, every surviving candidate of a
    target is tested conditioned on its q currently strongest co-parents;
    candidates with p-value above alpha_pc are dropped at the end of the pass.
    The sweep stops early once no target keeps more than q parents.
    """
    n, n_vars = values.shape
    t0 = tau_max
    if n - t0 - max_conds - 2 < 1:
        raise InsufficientSamplesError(
            f"{n} rows leave too few lagged samples for tau_max={tau_max}"
        )
    result = ParentSet()
    for i in range(n_vars):
        cands = [(j, tau) for j in range(n_vars) for tau in range(1, tau_max + 1)]
        result.parents[i] = cands
        result.strength[i] = {c: np.inf for c in cands}

    target_cols = {i: values[t0:, i] for i in range(n_vars)}
    for q in range(max_conds + 1):
        if all(len(result.parents[i]) <= q for i in range(n_vars)):
            break
        for i in range(n_vars):
            current = result.parents[i]
            if len(current) - 1 < q:
                continue
            ranking = result.ranked(i)
            strengths = result.strength[i]
            removed = set()
            seen: dict[tuple[int, int], float] = {}
            for cand in sorted(current):
                conds = [p for p in ranking if p != cand][:q]
                zcols = (
                    np.column_stack([_lag_col(values, j, tau, t0) for j, tau in conds])
                    if conds
                    else None
                )
                stat, pval = parcorr_test(
                    _lag_col(values, cand[0], cand[1], t0),
                    target_cols[i],
                    zcols,
                    ridge=ridge,
                )
                seen[cand] = abs(stat)
                if pval > alpha_pc:
                    removed.add(cand)
            result.parents[i] = [p for p in current if p not in removed]
            for cand, a in seen.items():
                if cand not in removed:
                    strengths[cand] = min(strengths[cand], a)
            for cand in removed:
                strengths.pop(cand, None)
    for i in range(n_vars):
        result.parents[i] = result.ranked(i)
    return result


def mci_stage(
    values: np.ndarray,
    selected: ParentSet,
    tau_max: int,
    max_conds: int = 3,
    ridge: float = _RIDGE,
):
    """Re-test every retained link with two-sided conditioning.

    The condition set joins the target's other parents with the source's
    parents shifted by the link lag, each side truncated to its max_conds
    strongest members.  Shifted conditions whose total lag exceeds tau_max are
    dropped so all tests share the same sample rows.
    """
    n, n_vars = values.shape
    t0 = tau_max
    val = np.zeros((n_vars, n_vars, tau_max))
    pval = np.ones((n_vars, n_vars, tau_max))
    for i in range(n_vars):
        target = values[t0:, i]
        ranked_i = selected.ranked(i)
        for (j, tau) in selected.parents[i]:
            conds_i = [p for p in ranked_i if p != (j, tau)][:max_conds]
            shifted = [
                (k, lag + tau)
                for k, lag in selected.ranked(j)
                if lag + tau <= tau_max
            ][:max_conds]
            conds = list(conds_i)
            for p in shifted:
                if p not in conds:
                    conds.append(p)
            zcols = (
                np.column_stack([_lag_col(values, a, b, t0) for a, b in conds])
                if conds
                else None
            )
            stat, p = parcorr_test(
                _lag_col(values, j, tau, t0), target, zcols, ridge=ridge
            )
            val[i, j, tau - 1] = stat
            pval[i, j, tau - 1] = p
    return val, pval


@dataclass
class CausalTensor:
    """Lagged link statistics: ``val[i, j, tau-1]`` scores source j acting on
    target i at lag tau, with the matching p-value in ``pval``."""

    val: np.ndarray
    pval: np.ndarray
    var_names: list[str]
    tau_max: int

    def __post_init__(self):
        self.val = np.asarray(self.val, dtype=np.float64)
        self.pval = np.asarray(self.pval, dtype=np.float64)
        c = len(self.var_names)
        want = (c, c, self.tau_max)
        if self.val.shape != want or self.pval.shape != want:
            raise ShapeError(
                f"tensor shapes {self.val.shape} / {self.pval.shape} != {want}"
            )

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def to_json(self) -> str:
        payload = {
            "var_names": self.var_names,
            "tau_max": self.tau_max,
            "val": self.val.tolist(),
            "pval": self.pval.tolist(),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "CausalTensor":
        d = json.loads(text)
        return cls(
            val=np.array(d["val"], dtype=np.float64),
            pval=np.array(d["pval"], dtype=np.float64),
            var_names=list(d["var_names"]),
            tau_max=int(d["tau_max"]),
        )


def pcmci(
    values: np.ndarray,
    tau_max: int,
    alpha_pc: float = 0.2,
    max_conds: int = 3,
    var_names=None,
    ridge: float = _RIDGE,
):
    """Full two-stage discovery on an already-stationary panel.

    Returns the link tensor and the selected parent sets.
    """
    values = check_panel_array(values, "panel")
    check_positive_int(tau_max, "tau_max")
    check_in_unit_interval(alpha_pc, "alpha_pc")
    check_positive_int(max_conds + 1, "max_conds + 1")
    if var_names is None:
        var_names = [f"x{j}" for j in range(values.shape[1])]
    elif len(var_names) != values.shape[1]:
        raise ConfigError(
            f"var_names has {len(var_names)} entries for {values.shape[1]} columns"
        )
    selected = pc_stage(values, tau_max, alpha_pc, max_conds, ridge)
    val, pval = mci_stage(values, selected, tau_max, max_conds, ridge)
    tensor = CausalTensor(
        val=val, pval=pval, var_names=list(var_names), tau_max=tau_max
    )
    return tensor, selected


class PCMCIDiscovery(BaseEstimator):
    """Estimator wrapper around the two-stage discovery pipeline.

    Parameters
    ----------
    tau_max : largest lag tested, in steps of the input's sampling interval.
    alpha_pc : removal threshold for the condition-selection sweep.
    max_conds : cap on condition-set size in both stages.
    preprocess : difference and standardize the raw panel before testing.
    """

    def __init__(self, tau_max=7, alpha_pc=0.2, max_conds=3, preprocess=True):
        self.tau_max = tau_max
        self.alpha_pc = alpha_pc
        self.max_conds = max_conds
        self.preprocess = preprocess

    def fit(self, X, y=None):
        X = check_panel_array(X, "X", min_rows=3)
        if self.preprocess:
            panel = preprocess_stationary(X)
        else:
            panel = StationaryPanel(
                values=X, var_names=[f"x{j}" for j in range(X.shape[1])]
            )
        tensor, selected = pcmci(
            panel.values,
            tau_max=self.tau_max,
            alpha_pc=self.alpha_pc,
            max_conds=self.max_conds,
            var_names=panel.var_names,
        )
        self.tensor_ = tensor
        self.val_ = tensor.val
        self.pval_ = tensor.pval
        self.parents_ = {i: list(v) for i, v in selected.parents.items()}
        self.n_features_in_ = X.shape[1]
        return self
