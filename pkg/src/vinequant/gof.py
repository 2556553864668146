"""Empirical copula, Cramer-von Mises / Kolmogorov-Smirnov statistics, and
parametric-bootstrap p-values.

Both statistics compare the fitted parametric copula CDF against the
empirical copula.  The integral form of the CvM statistic is evaluated
under the empirical measure (averaging the squared discrepancy over the n
pseudo-observation points), the standard practice when the unit cube is
too high-dimensional for quadrature; the sup statistic is maximized over
the same points.  The model CDF has no closed form for vines and is
estimated by Monte Carlo with one sample shared across evaluation points.

P-values come from the parametric bootstrap: simulate from the fitted
model, re-rank, refit under the same policy, recompute the statistics,
and report (1 + #{bootstrap >= observed}) / (b + 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dvine, sampler
from .dvine import CopulaPolicy, DVineModel
from .errors import InvalidInputError, NumericError, VinequantError
from .marginals import PseudoSample, pseudo_observations
from .rng import RngStream

_BLOCK_ELEMS = 1 << 24


def _dominated_fraction(rows: np.ndarray, points: np.ndarray) -> np.ndarray:
    """For each point, the fraction of rows componentwise <= the point."""
    n, p = rows.shape
    k = points.shape[0]
    out = np.empty(k)
    block = max(1, _BLOCK_ELEMS // max(1, n * p))
    for s in range(0, k, block):
        chunk = points[s : s + block]
        out[s : s + block] = (
            (rows[None, :, :] <= chunk[:, None, :]).all(axis=2).mean(axis=1)
        )
    return out


def empirical_copula(sample: PseudoSample, u) -> float:
    """Fraction of pseudo-observation rows dominated by u."""
    point = np.asarray(u, dtype=float)
    if point.shape != (sample.p,):
        raise InvalidInputError(f"expected a vector of length {sample.p}")
    if np.any((point < 0.0) | (point > 1.0)):
        raise InvalidInputError("u must lie in the closed unit cube")
    return float(_dominated_fraction(sample.u, point[None, :])[0])


def model_copula_cdf(
    model: DVineModel, u, n_mc: int, rng: RngStream
) -> float:
    """Monte Carlo estimate of P(U <= u) under the model.

    Standard error is at most 1/(2*sqrt(n_mc)).  The all-ones corner is 1
    exactly.
    """
    point = np.asarray(u, dtype=float)
    if point.shape != (model.p,):
        raise InvalidInputError(f"expected a vector of length {model.p}")
    if np.all(point >= 1.0):
        return 1.0
    draws = sampler.sample_uniform_vine(model, n_mc, rng)
    return float(_dominated_fraction(draws, point[None, :])[0])


def _model_cdf_at_points(model, points, n_mc, rng) -> np.ndarray:
    # one shared sample across all evaluation points (common random numbers)
    draws = sampler.sample_uniform_vine(model, n_mc, rng)
    return _dominated_fraction(draws, points)


def _statistics(emp: np.ndarray, mod: np.ndarray, n: int):
    diff = mod - emp
    tn = float(n * np.mean(diff**2))
    sn = float(np.sqrt(n) * np.max(np.abs(diff)))
    return tn, sn


def gof_statistics(sample: PseudoSample, model: DVineModel, n_mc: int, rng: RngStream):
    """(tn, sn): CvM and KS discrepancies between model and empirical copula."""
    points = sample.u
    emp = _dominated_fraction(points, points)
    mod = _model_cdf_at_points(model, points, n_mc, rng)
    return _statistics(emp, mod, sample.n)


@dataclass(frozen=True)
class GofResult:
    tn: float
    sn: float
    p_value_tn: float
    p_value_sn: float
    b: int
    n_failed: int = 0


def parametric_bootstrap_pvalue(
    sample: PseudoSample,
    policy: CopulaPolicy,
    b: int,
    n_mc: int,
    rng: RngStream,
) -> GofResult:
    """Bootstrap p-values for the fit of ``policy`` on this sample.

    Each replicate simulates n rows from the fitted model, re-ranks them to
    pseudo-observations, refits under the same policy and recomputes both
    statistics.  Replicate fit failures are tolerated up to 5 percent of b,
    then the procedure aborts.
    """
    if b < 1:
        raise InvalidInputError(f"bootstrap count must be >= 1, got {b}")
    fit = dvine.fit_with_policy(sample, policy)
    tn_obs, sn_obs = gof_statistics(sample, fit.model, n_mc, rng.child(0))

    max_failures = max(1, int(0.05 * b))
    tn_boot, sn_boot = [], []
    failures = 0
    for r in range(1, b + 1):
        child = rng.child(r)
        u_rep = sampler.sample_uniform_vine(fit.model, sample.n, child)
        try:
            ps_rep = pseudo_observations(u_rep)
            refit = dvine.fit_with_policy(ps_rep, policy)
        except VinequantError:
            failures += 1
            if failures > max_failures:
                raise NumericError(
                    f"more than {max_failures} bootstrap replicates failed to refit"
                ) from None
            continue
        tn_r, sn_r = gof_statistics(ps_rep, refit.model, n_mc, child.child(1))
        tn_boot.append(tn_r)
        sn_boot.append(sn_r)

    completed = len(tn_boot)
    p_tn = (1.0 + sum(t >= tn_obs for t in tn_boot)) / (completed + 1.0)
    p_sn = (1.0 + sum(s >= sn_obs for s in sn_boot)) / (completed + 1.0)
    return GofResult(
        tn=tn_obs,
        sn=sn_obs,
        p_value_tn=p_tn,
        p_value_sn=p_sn,
        b=completed,
        n_failed=failures,
    )
