"""Data generators, ground-truth quantiles, and the experiment runner.

The harness reproduces two experiments at configurable scale:

* the truncated exceedance probability of the mean of i.i.d. variables,
  restricted to the marginal range a sample of size n can cover, and
* MARE tables for the bootstrap extreme-quantile estimator on windows of
  an AR(2) process, comparing copula policies against the raw sample
  quantile.

Ground truth comes from large fresh Monte Carlo draws and is cached in a
JSON file keyed by the hash of everything the truth depends on, since a
multi-million-draw truth run dominates the runtime otherwise.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter
from scipy.stats import norm, t as student_t

from . import dvine, quantile as qmod, sampler
from .bicop import PairCopula, sample_pair
from .dvine import policy_from_name
from .errors import InvalidInputError, NumericError, VinequantError
from .marginals import inverse_empirical, pseudo_observations
from .quantile import TargetFunction, sample_quantile, target_by_name
from .rng import RngStream

AR_PHI1 = 1.2
AR_PHI2 = -0.6
AR_BURN_IN = 500
# stationary variance of the AR(2) per unit innovation variance
AR_VAR_FACTOR = (1.0 - AR_PHI2) / ((1.0 + AR_PHI2) * ((1.0 - AR_PHI2) ** 2 - AR_PHI1**2))

GENERATORS = ("ar2", "iid-uniform", "iid-normal", "iid-t4", "gumbel-pair", "clayton-pair")
INNOVATIONS = ("normal", "t4")

_T4_POOL_SIZE = 1_000_000
_CHUNK_ROWS = 1 << 18


def gen_ar2(n_rows: int, p: int, innovation: str, rng: np.random.Generator) -> np.ndarray:
    """Independent rows of p consecutive AR(2) values after a 500-step burn-in.

    The recursion is X_t = 1.2 X_{t-1} - 0.6 X_{t-2} + eps_t from zero
    initial conditions; the burn-in leaves the stationarity error below
    floating-point noise (the characteristic roots have modulus ~0.775).
    """
    if p < 3:
        raise InvalidInputError(f"AR(2) windows need p >= 3, got p={p}")
    if innovation == "normal":
        eps = rng.standard_normal((n_rows, AR_BURN_IN + p))
    elif innovation == "t4":
        eps = rng.standard_t(4, size=(n_rows, AR_BURN_IN + p))
    else:
        raise InvalidInputError(f"unknown innovation {innovation!r}")
    x = lfilter([1.0], [1.0, -AR_PHI1, -AR_PHI2], eps, axis=1)
    return np.ascontiguousarray(x[:, AR_BURN_IN:])


def draw_rows(
    generator: str,
    n_rows: int,
    p: int,
    innovation: str,
    gen_theta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw n_rows rows from the named generator."""
    if generator == "ar2":
        return gen_ar2(n_rows, p, innovation, rng)
    if generator == "iid-uniform":
        return rng.uniform(size=(n_rows, p))
    if generator == "iid-normal":
        return rng.standard_normal((n_rows, p))
    if generator == "iid-t4":
        return rng.standard_t(4, size=(n_rows, p))
    if generator in ("gumbel-pair", "clayton-pair"):
        if p != 2:
            raise InvalidInputError(f"{generator} generates pairs; got p={p}")
        fam = "gumbel" if generator == "gumbel-pair" else "clayton"
        return sample_pair(PairCopula(fam, (gen_theta,)), n_rows, rng)
    raise InvalidInputError(f"unknown generator {generator!r}")


class MarginalTransform:
    """Columnwise marginal CDF of a generator, for CDF-based targets.

    Exact for uniform, normal and t4 marginals (including the AR(2) with
    normal innovations, whose stationary law is centred normal with known
    variance).  For the AR(2) with t4 innovations no closed form exists and
    a large-pool empirical CDF stands in; this is the only non-exact
    ingredient and is flagged by ``exact = False``.
    """

    def __init__(self, generator: str, innovation: str, rng: Optional[np.random.Generator] = None):
        self.generator = generator
        self.innovation = innovation
        self.exact = True
        self._pool = None
        if generator == "ar2" and innovation == "t4":
            if rng is None:
                raise InvalidInputError("the ar2/t4 marginal CDF needs an rng for its pool")
            rows = _T4_POOL_SIZE // 20
            self._pool = np.sort(gen_ar2(rows, 20, "t4", rng).ravel())
            self.exact = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.generator == "iid-uniform" or self.generator.endswith("-pair"):
            return np.clip(x, 1e-12, 1.0 - 1e-12)
        if self.generator == "iid-normal":
            return norm.cdf(x)
        if self.generator == "iid-t4":
            return student_t.cdf(x, 4)
        if self.innovation == "normal":
            return norm.cdf(x / math.sqrt(AR_VAR_FACTOR))
        n = self._pool.size
        r = np.searchsorted(self._pool, x, side="right")
        return np.clip(r / (n + 1.0), 1.0 / (n + 1.0), n / (n + 1.0))


def _target_values(fn: TargetFunction, rows: np.ndarray, transform) -> np.ndarray:
    if fn.scale == "uniform":
        return qmod.evaluate(fn, transform(rows))
    return qmod.evaluate(fn, rows)


def true_quantile_mc(
    generator: str,
    fn: TargetFunction,
    alpha: float,
    truth_mc_size: int,
    rng: RngStream,
    *,
    p: int,
    innovation: str = "normal",
    gen_theta: float = 2.0,
    transform: Optional[MarginalTransform] = None,
) -> float:
    """Sample quantile of the target over fresh generator draws.

    Rejects configurations with truth_mc_size * alpha < 50, where the
    Monte Carlo truth would be too noisy to serve as a reference.
    """
    if truth_mc_size * alpha < 50:
        raise InvalidInputError(
            f"truth_mc_size * alpha = {truth_mc_size * alpha:.3g} < 50; "
            "increase the truth sample"
        )
    gen = rng.generator()
    if transform is None and fn.scale == "uniform":
        transform = MarginalTransform(generator, innovation, rng.child_generator(7))
    values = np.empty(truth_mc_size)
    done = 0
    while done < truth_mc_size:
        c = min(_CHUNK_ROWS, truth_mc_size - done)
        rows = draw_rows(generator, c, p, innovation, gen_theta, gen)
        values[done : done + c] = _target_values(fn, rows, transform)
        done += c
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return sample_quantile(values, alpha).q_hat


_IID_PPF = {
    "iid-uniform": lambda q: q,
    "iid-normal": norm.ppf,
    "iid-t4": lambda q: student_t.ppf(q, 4),
}


def truncated_alpha(
    generator: str,
    p: int,
    n: int,
    alpha: float,
    mc_reps: int,
    rng: RngStream,
    *,
    q_truth: Optional[float] = None,
    truth_mc_size: Optional[int] = None,
) -> float:
    """Exceedance probability of the mean above its (1-alpha) quantile,
    truncated to the marginal range covered by a sample of size n.

    The event requires every component to lie between the 1/n and 1 - 1/n
    marginal quantiles, the range resampling from n observations can reach.
    """
    if generator not in _IID_PPF:
        raise InvalidInputError(f"truncated_alpha needs an iid generator, got {generator!r}")
    ppf = _IID_PPF[generator]
    lo, hi = ppf(1.0 / n), ppf(1.0 - 1.0 / n)
    fn = qmod.H3
    if q_truth is None:
        if truth_mc_size is None:
            truth_mc_size = max(500_000, int(np.ceil(100.0 / alpha)))
        q_truth = true_quantile_mc(
            generator, fn, alpha, truth_mc_size, rng.child(0), p=p
        )
    gen = rng.child_generator(1)
    hits = 0
    done = 0
    while done < mc_reps:
        c = min(_CHUNK_ROWS, mc_reps - done)
        rows = draw_rows(generator, c, p, "normal", 2.0, gen)
        xi = rows.mean(axis=1)
        in_range = (rows.min(axis=1) >= lo) & (rows.max(axis=1) <= hi)
        hits += int(np.count_nonzero((xi > q_truth) & in_range))
        done += c
    return hits / mc_reps


# ---------------------------------------------------------------------------
# truth cache
# ---------------------------------------------------------------------------


def _truth_key(generator, innovation, gen_theta, p, fn_tag, alpha, size, seed, stream):
    payload = json.dumps(
        [generator, innovation, gen_theta, p, fn_tag, alpha, size, seed, stream],
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


class TruthCache:
    """JSON-backed cache of true quantiles keyed by a config hash."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self._data = {}
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                self._data = json.load(fh)

    def get(self, key: str):
        entry = self._data.get(key)
        return None if entry is None else entry["q"]

    def put(self, key: str, q: float, meta: dict):
        self._data[key] = {"q": q, "meta": meta}
        if self.path:
            with open(self.path, "w", encoding="utf-8") as fh:
                json.dump(self._data, fh, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# MARE experiment
# ---------------------------------------------------------------------------

SAMPLE_QUANTILE_POLICY = "sample-quantile"
_POLICY_NAMES = ("gauss2", "aic2", "aicfull", "indep", SAMPLE_QUANTILE_POLICY)


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation cell: generator, estimator policies, grid, sizes, seed."""

    n: int = 500
    p: int = 20
    innovation: str = "normal"
    generator: str = "ar2"
    policies: tuple = ("gauss2", SAMPLE_QUANTILE_POLICY)
    functions: tuple = ("h1", "h2", "h3", "h4")
    alphas: tuple = (0.05, 0.01)
    m: int = 10_000
    replications: int = 50
    truth_mc_size: int = 500_000
    seed: int = 0
    gen_theta: float = 2.0
    max_level: int = 5

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise InvalidInputError(f"unknown generator {self.generator!r}")
        if self.innovation not in INNOVATIONS:
            raise InvalidInputError(f"unknown innovation {self.innovation!r}")
        for a in self.alphas:
            if not 0.0 < a < 0.5:
                raise InvalidInputError(f"alpha must lie in (0, 0.5), got {a}")
        if self.replications < 1:
            raise InvalidInputError("replications must be >= 1")
        if self.m < 1 or self.n < 2:
            raise InvalidInputError("m must be >= 1 and n >= 2")
        if self.truth_mc_size * min(self.alphas) < 10:
            raise InvalidInputError("truth_mc_size too small for the alpha grid")
        for pol in self.policies:
            if pol not in _POLICY_NAMES:
                raise InvalidInputError(
                    f"unknown policy {pol!r}; expected one of {_POLICY_NAMES}"
                )
        for f in self.functions:
            target_by_name(f)

    def truth_size_for(self, alpha: float) -> int:
        # rarer events need a larger truth sample to pin the reference
        if alpha < 0.001:
            return max(self.truth_mc_size, 2_000_000)
        return self.truth_mc_size


@dataclass(frozen=True)
class MareRow:
    function: str
    policy: str
    alpha: float
    mare: Optional[float]
    n_used: int
    n_fail: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    truths: dict
    n_failed: int = 0

    def lookup(self, function: str, policy: str, alpha: float) -> Optional[float]:
        for r in self.rows:
            if (
                r.function == function
                and r.policy == policy
                and math.isclose(r.alpha, alpha)
            ):
                return r.mare
        raise KeyError((function, policy, alpha))

    def to_csv_text(self) -> str:
        lines = ["function,policy,alpha,mare,n_fail,n_used"]
        for r in self.rows:
            mare = "n/a" if r.mare is None else f"{r.mare:.6f}"
            lines.append(f"{r.function},{r.policy},{r.alpha:g},{mare},{r.n_fail},{r.n_used}")
        return "\n".join(lines) + "\n"

    def to_table_text(self) -> str:
        cfg = self.config
        head = (
            f"MARE  generator={cfg.generator} innovation={cfg.innovation} "
            f"n={cfg.n} p={cfg.p} m={cfg.m} replications={cfg.replications}"
        )
        width = max(len(p) for p in cfg.policies) + 2
        cols = "".join(f"{'a=' + format(a, 'g'):>12}" for a in cfg.alphas)
        lines = [head, "", f"{'function':<10}{'policy':<{width}}{cols}"]
        for fn in cfg.functions:
            for k, pol in enumerate(cfg.policies):
                cells = ""
                for a in cfg.alphas:
                    mare = self.lookup(fn, pol, a)
                    cells += f"{'n/a':>12}" if mare is None else f"{mare:>12.4f}"
                lines.append(f"{fn if k == 0 else '':<10}{pol:<{width}}{cells}")
        return "\n".join(lines) + "\n"


def _replication_estimates(config: ExperimentConfig, data, transform, rep_rng: RngStream):
    """All per-replication quantile estimates, keyed (function, policy, alpha)."""
    out = {}
    targets = {f: target_by_name(f) for f in config.functions}
    ps = None
    copula_policies = [p for p in config.policies if p != SAMPLE_QUANTILE_POLICY]
    if copula_policies:
        ps = pseudo_observations(data)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # small m*alpha cells are intentional here
        for jp, pol_name in enumerate(copula_policies):
            policy = policy_from_name(pol_name)
            fit = dvine.fit_with_policy(ps, policy, max_level=config.max_level)
            u = sampler.sample_uniform_vine(fit.model, config.m, rep_rng.child(jp))
            x = None
            for f, target in targets.items():
                if target.scale == "uniform":
                    values = qmod.evaluate(target, u)
                else:
                    if x is None:
                        x = np.empty_like(u)
                        for j in range(ps.p):
                            x[:, j] = inverse_empirical(ps.column(j), u[:, j])
                    values = qmod.evaluate(target, x)
                for a in config.alphas:
                    out[(f, pol_name, a)] = sample_quantile(values, a).q_hat
        if SAMPLE_QUANTILE_POLICY in config.policies:
            for f, target in targets.items():
                values = _target_values(target, data, transform)
                for a in config.alphas:
                    if math.floor(config.n * a) >= 1:
                        out[(f, SAMPLE_QUANTILE_POLICY, a)] = sample_quantile(
                            values, a
                        ).q_hat
                    else:
                        out[(f, SAMPLE_QUANTILE_POLICY, a)] = None
    return out


def _compute_truths(config: ExperimentConfig, rng: RngStream, cache: TruthCache, transform):
    """Truths per (function, alpha), sharing one draw per truth-sample size.

    The generator draw dominates the cost, so all functions are evaluated
    in the same pass over it; alphas that need the same sample size share
    the draw as well.  Cache entries stay keyed per (function, alpha, size).
    """
    truths = {}
    by_size = {}
    for f in config.functions:
        for a in config.alphas:
            size = config.truth_size_for(a)
            if size * a < 50:
                raise InvalidInputError(
                    f"truth_mc_size * alpha = {size * a:.3g} < 50 for alpha={a}"
                )
            key = _truth_key(
                config.generator,
                config.innovation,
                config.gen_theta,
                config.p,
                f,
                a,
                size,
                rng.seed,
                rng.stream,
            )
            q = cache.get(key)
            if q is None:
                by_size.setdefault(size, []).append((f, a, key))
            else:
                truths[(f, a)] = q

    for size_idx, (size, items) in enumerate(sorted(by_size.items())):
        fns = sorted({f for f, _, _ in items})
        values = {f: np.empty(size) for f in fns}
        gen = rng.child_generator(size_idx)
        done = 0
        while done < size:
            c = min(_CHUNK_ROWS, size - done)
            rows = draw_rows(
                config.generator, c, config.p, config.innovation, config.gen_theta, gen
            )
            for f in fns:
                values[f][done : done + c] = _target_values(
                    target_by_name(f), rows, transform
                )
            done += c
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for f, a, key in items:
                q = sample_quantile(values[f], a).q_hat
                cache.put(key, q, {"function": f, "alpha": a, "size": size})
                truths[(f, a)] = q
    return truths


def run_experiment(
    config: ExperimentConfig,
    truth_cache_path: Optional[str] = None,
    threads: int = 1,
) -> ExperimentResult:
    """Run the replication experiment and aggregate MARE per cell.

    Replication r uses its own independent random stream, so the result is
    reproducible for a given config and seed regardless of scheduling.
    Replications whose estimation fails are excluded and counted; more than
    5 percent failures abort the run.
    """
    root = RngStream(config.seed)
    transform = None
    if any(target_by_name(f).scale == "uniform" for f in config.functions):
        transform = MarginalTransform(
            config.generator, config.innovation, root.child_generator(2)
        )
    cache = TruthCache(truth_cache_path)
    truths = _compute_truths(config, root.child(0), cache, transform)

    estimates = {}
    n_failed = 0
    max_failures = max(1, int(0.05 * config.replications))
    results = _map_replications(config, transform, threads)
    for rep, item in enumerate(results):
        if isinstance(item, Exception):
            n_failed += 1
            if n_failed > max_failures:
                raise NumericError(
                    f"{n_failed} of {rep + 1} replications failed; aborting"
                ) from item
            continue
        for key, q in item.items():
            estimates.setdefault(key, []).append(q)

    rows = []
    for f in config.functions:
        for pol in config.policies:
            for a in config.alphas:
                qs = [q for q in estimates.get((f, pol, a), []) if q is not None]
                if not qs:
                    rows.append(MareRow(f, pol, a, None, 0, n_failed))
                    continue
                rows.append(
                    MareRow(f, pol, a, qmod.mare(qs, truths[(f, a)]), len(qs), n_failed)
                )
    return ExperimentResult(config=config, rows=rows, truths=truths, n_failed=n_failed)


def _one_replication(config: ExperimentConfig, transform, rep: int):
    root = RngStream(config.seed)
    rep_rng = root.child(1, rep)
    try:
        data = draw_rows(
            config.generator,
            config.n,
            config.p,
            config.innovation,
            config.gen_theta,
            rep_rng.child_generator(0),
        )
        return _replication_estimates(config, data, transform, rep_rng.child(1))
    except VinequantError as exc:
        return exc


def _worker(args):
    config, rep = args
    transform = _worker_transform(config)
    return _one_replication(config, transform, rep)


_TRANSFORM_MEMO = {}


def _worker_transform(config: ExperimentConfig):
    key = (config.generator, config.innovation, config.seed)
    if key not in _TRANSFORM_MEMO:
        root = RngStream(config.seed)
        _TRANSFORM_MEMO[key] = MarginalTransform(
            config.generator, config.innovation, root.child_generator(2)
        )
    return _TRANSFORM_MEMO[key]


def _map_replications(config: ExperimentConfig, transform, threads: int):
    reps = range(config.replications)
    if threads <= 1:
        return [_one_replication(config, transform, r) for r in reps]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_worker, [(config, r) for r in reps]))


# ---------------------------------------------------------------------------
# truncated-probability experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaHatConfig:
    """Configuration of the truncated exceedance-probability table."""

    distributions: tuple = ("iid-uniform", "iid-normal")
    ns: tuple = (500, 1000)
    p: int = 20
    alphas: tuple = (0.05, 0.01, 0.005, 0.001, 0.0005)
    mc_reps: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        for d in self.distributions:
            if d not in _IID_PPF:
                raise InvalidInputError(f"unknown iid distribution {d!r}")
        for a in self.alphas:
            if not 0.0 < a < 0.5:
                raise InvalidInputError(f"alpha must lie in (0, 0.5), got {a}")

    def truth_size_for(self, alpha: float) -> int:
        # the truth quantile must be pinned well below the target tolerance,
        # so the truth sample grows inversely with alpha
        return max(4_000_000, int(np.ceil(20_000.0 / alpha)))


@dataclass(frozen=True)
class AlphaHatRow:
    distribution: str
    n: int
    alpha: float
    alpha_hat: float


def run_truncated_alpha(
    config: AlphaHatConfig, truth_cache_path: Optional[str] = None
) -> list:
    """Estimate the truncated exceedance probability over the config grid.

    Draws are shared across the n values and the alpha grid within one
    distribution; truths are computed (or loaded) per (distribution, alpha).
    """
    root = RngStream(config.seed)
    cache = TruthCache(truth_cache_path)
    rows = []
    for d_idx, dist in enumerate(config.distributions):
        # one truth draw per distribution, sized for the rarest alpha
        size = max(config.truth_size_for(a) for a in config.alphas)
        truths = {}
        missing = []
        for a in config.alphas:
            key = _truth_key(dist, "none", 0.0, config.p, "h3", a, size, root.seed, root.stream)
            q = cache.get(key)
            if q is None:
                missing.append((a, key))
            else:
                truths[a] = q
        if missing:
            gen = root.child_generator(0, d_idx)
            values = np.empty(size)
            done = 0
            while done < size:
                c = min(_CHUNK_ROWS, size - done)
                values[done : done + c] = draw_rows(
                    dist, c, config.p, "normal", 2.0, gen
                ).mean(axis=1)
                done += c
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                for a, key in missing:
                    q = sample_quantile(values, a).q_hat
                    cache.put(key, q, {"distribution": dist, "alpha": a, "size": size})
                    truths[a] = q

        ppf = _IID_PPF[dist]
        gen = root.child_generator(1, d_idx)
        bounds = {n: (ppf(1.0 / n), ppf(1.0 - 1.0 / n)) for n in config.ns}
        hits = {(n, a): 0 for n in config.ns for a in config.alphas}
        done = 0
        while done < config.mc_reps:
            c = min(_CHUNK_ROWS, config.mc_reps - done)
            draws = draw_rows(dist, c, config.p, "normal", 2.0, gen)
            xi = draws.mean(axis=1)
            col_min = draws.min(axis=1)
            col_max = draws.max(axis=1)
            for n in config.ns:
                lo, hi = bounds[n]
                in_range = (col_min >= lo) & (col_max <= hi)
                for a in config.alphas:
                    hits[(n, a)] += int(np.count_nonzero(in_range & (xi > truths[a])))
            done += c
        for n in config.ns:
            for a in config.alphas:
                rows.append(AlphaHatRow(dist, n, a, hits[(n, a)] / config.mc_reps))
    return rows


def alpha_hat_table_text(rows) -> str:
    dists = []
    for r in rows:
        if (r.distribution, r.n) not in dists:
            dists.append((r.distribution, r.n))
    alphas = sorted({r.alpha for r in rows}, reverse=True)
    head = f"{'distribution':<14}{'n':>6}" + "".join(
        f"{'a=' + format(a, 'g'):>12}" for a in alphas
    )
    lines = [head]
    for dist, n in dists:
        cells = ""
        for a in alphas:
            val = next(
                r.alpha_hat
                for r in rows
                if r.distribution == dist and r.n == n and math.isclose(r.alpha, a)
            )
            cells += f"{val:>12.5f}"
        lines.append(f"{dist:<14}{n:>6}{cells}")
    return "\n".join(lines) + "\n"


def alpha_hat_csv_text(rows) -> str:
    lines = ["distribution,n,alpha,alpha_hat"]
    for r in rows:
        lines.append(f"{r.distribution},{r.n},{r.alpha:g},{r.alpha_hat:.6f}")
    return "\n".join(lines) + "\n"
