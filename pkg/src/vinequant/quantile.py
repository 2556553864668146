"""Target functions, the bootstrap extreme-quantile estimator, and MARE.

The end-to-end estimator runs: rank-transform the data, fit a D-vine under
the chosen policy, draw a large bootstrap sample of copula-scale rows, map
them to the required scale, evaluate the target function, and read off the
k-th largest value with k = max(1, floor(m * alpha)).

Target functions declare the scale they consume.  Functions defined through
marginal CDF transforms (minimum and mean of upper-tail transforms) are
evaluated directly on copula-scale rows: composing the empirical CDF with
its inverse is the identity on the bootstrap support, so the inverse
transform would only add work.  A ``retransform`` flag forces the roundtrip
for sensitivity checks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import dvine, sampler
from .dvine import CopulaPolicy, DVineFit, DVineModel
from .errors import InvalidInputError, VinequantError
from .marginals import PseudoSample, inverse_empirical, pseudo_observations
from .rng import RngStream


@dataclass(frozen=True)
class TargetFunction:
    """A scalar function of one p-vector, tagged with the scale it consumes."""

    tag: str
    scale: str  # "data" or "uniform"
    fn: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.scale not in ("data", "uniform"):
            raise InvalidInputError(f"scale must be 'data' or 'uniform', got {self.scale!r}")


def _top3_sum(rows: np.ndarray) -> np.ndarray:
    if rows.shape[1] < 3:
        raise InvalidInputError("sum of top-3 order statistics needs p >= 3")
    part = np.partition(rows, rows.shape[1] - 3, axis=1)
    return part[:, -3:].sum(axis=1)


H1 = TargetFunction("h1", "data", _top3_sum)
H2 = TargetFunction("h2", "uniform", lambda rows: rows.min(axis=1))
H3 = TargetFunction("h3", "data", lambda rows: rows.mean(axis=1))
H4 = TargetFunction("h4", "uniform", lambda rows: (1.0 - rows).mean(axis=1))

BUILTIN_TARGETS = {"h1": H1, "h2": H2, "h3": H3, "h4": H4}


def target_by_name(name: str) -> TargetFunction:
    try:
        return BUILTIN_TARGETS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown target function {name!r}; expected one of {sorted(BUILTIN_TARGETS)}"
        ) from None


def custom_target(fn, scale: str = "data", tag: str = "custom") -> TargetFunction:
    """Wrap a user-supplied row evaluator as a target function."""
    return TargetFunction(tag, scale, fn)


def evaluate(fn: TargetFunction, rows):
    """Evaluate the target on one row (returns float) or a row matrix."""
    arr = np.asarray(rows, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if fn.scale == "uniform" and np.any((arr <= 0.0) | (arr >= 1.0)):
        raise InvalidInputError("uniform-scale rows must lie inside (0, 1)")
    out = np.asarray(fn.fn(arr), dtype=float)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class QuantileEstimate:
    """An estimated upper quantile with its provenance."""

    alpha: float
    q_hat: float
    m: int
    index_used: int
    model_summary: Optional[dict] = None


def sample_quantile(values, alpha: float) -> QuantileEstimate:
    """k-th largest of the values with k = max(1, floor(m * alpha)).

    Uses partial selection, not a full sort.  Warns when m * alpha < 20,
    where the estimate rests on too few tail points to be reliable.
    """
    vals = np.asarray(values, dtype=float).ravel()
    m = vals.size
    if m == 0:
        raise InvalidInputError("cannot take a quantile of an empty sample")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    if m * alpha < 20:
        warnings.warn(
            f"m * alpha = {m * alpha:.3g} < 20; the tail quantile rests on "
            "very few bootstrap points",
            stacklevel=2,
        )
    k = max(1, int(np.floor(m * alpha)))
    q = float(np.partition(vals, m - k)[m - k])
    return QuantileEstimate(alpha=alpha, q_hat=q, m=m, index_used=k)


def _retransform_uniform(u: np.ndarray, ps: PseudoSample) -> np.ndarray:
    """u -> F_hat(F_hat^{-1}(u)) columnwise (sensitivity-check path)."""
    out = np.empty_like(u)
    for j in range(ps.p):
        col = ps.column(j)
        x = inverse_empirical(col, u[:, j])
        out[:, j] = np.searchsorted(col, x, side="right") / (ps.n + 1.0)
    return out


def _summary(fit: Optional[DVineFit], model: DVineModel, policy_name: str) -> dict:
    out = {"policy": policy_name, "p": model.p, "m_trunc": model.m_trunc}
    if fit is not None:
        out.update(
            loglik=fit.loglik,
            aic=fit.aic,
            n_params=fit.n_params,
            families=sorted({c.family for tree in model.pairs for c in tree}),
        )
    return out


def estimate_extreme_quantile(
    data,
    fn: TargetFunction,
    alpha: float,
    m: int,
    policy: CopulaPolicy,
    rng: RngStream,
    model: Optional[DVineModel] = None,
    max_level: Optional[int] = None,
    retransform: bool = False,
) -> QuantileEstimate:
    """Full pipeline: rank transform, fit (or inject), sample, evaluate, select.

    ``model`` injects a known copula and skips fitting; ``data`` may then be
    omitted when the target consumes the uniform scale.  Errors from the
    stages propagate with a stage label prefixed to the message.
    """
    if not 0.0 < alpha < 0.5:
        raise InvalidInputError(f"alpha must lie in (0, 0.5), got {alpha}")

    def stage(name, thunk):
        try:
            return thunk()
        except VinequantError as exc:
            raise type(exc)(f"{name}: {exc}") from exc

    ps = None
    if data is not None:
        ps = data if isinstance(data, PseudoSample) else stage(
            "marginals", lambda: pseudo_observations(data)
        )
    elif fn.scale == "data" or retransform or model is None:
        raise InvalidInputError("data is required unless a model is injected "
                                "and the target consumes the uniform scale")

    if model is None:
        fit = stage("fit", lambda: dvine.fit_with_policy(ps, policy, max_level=max_level))
        the_model, summary = fit.model, _summary(fit, fit.model, policy.name)
    else:
        if ps is not None and ps.p != model.p:
            raise InvalidInputError(
                f"injected model has p={model.p} but the data has p={ps.p}"
            )
        the_model, summary = model, _summary(None, model, "injected")

    u = stage("sample", lambda: sampler.sample_uniform_vine(the_model, m, rng))

    def to_values():
        if fn.scale == "uniform":
            rows = _retransform_uniform(u, ps) if retransform else u
            return evaluate(fn, rows)
        x = np.empty_like(u)
        for j in range(ps.p):
            x[:, j] = inverse_empirical(ps.column(j), u[:, j])
        return evaluate(fn, x)

    values = stage("evaluate", to_values)
    est = stage("quantile", lambda: sample_quantile(values, alpha))
    return QuantileEstimate(
        alpha=est.alpha,
        q_hat=est.q_hat,
        m=est.m,
        index_used=est.index_used,
        model_summary=summary,
    )


def mare(estimates, truth: float) -> float:
    """Mean absolute relative error of the estimates against the truth."""
    est = np.asarray(estimates, dtype=float).ravel()
    if est.size == 0:
        raise InvalidInputError("mare needs at least one estimate")
    if truth == 0.0:
        raise InvalidInputError("mare is undefined for truth = 0")
    return float(np.mean(np.abs((est - truth) / truth)))
