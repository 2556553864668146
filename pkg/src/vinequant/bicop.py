"""Bivariate copula families: density, CDF, h-functions, inversion, fitting.

Families are one-parameter: Gaussian, Clayton, Gumbel, Frank, plus the
parameter-free Independence copula.  Clayton and Gumbel also come in 90, 180
and 270 degree rotations so that negative and upper-tail dependence can be
captured.  A rotation acts on the underlying uniform pair:

* 90:  (U, V) -> (1-U, V)
* 180: (U, V) -> (1-U, 1-V)   (survival copula)
* 270: (U, V) -> (U, 1-V)

Two conditional CDFs are exposed because rotated copulas are not
exchangeable:

* ``h_function(c, u, v)``   = P(U <= u | V = v) = dC(u,v)/dv
* ``h_given_u(c, v, u)``    = P(V <= v | U = u) = dC(u,v)/du

Inputs to density/h evaluations are clamped to [1e-10, 1 - 1e-10]; fitted
parameters live on caps chosen so that no evaluation can overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats
from scipy.integrate import quad
from scipy.stats import kendalltau, norm

from .errors import DegenerateDataError, InvalidInputError, NumericError

EPS = 1e-10
# conditional CDFs legitimately come within ~1e-12 of the endpoints under
# strong dependence; outputs are clamped just inside the representable range
OUT_EPS = 1e-15

BASE_FAMILIES = ("independence", "gaussian", "clayton", "gumbel", "frank")
FAMILIES = BASE_FAMILIES + (
    "clayton90",
    "clayton180",
    "clayton270",
    "gumbel90",
    "gumbel180",
    "gumbel270",
)
# default AIC candidate set: all supported families
DEFAULT_CANDIDATES = FAMILIES

# fitting caps (never reached by data with moderate dependence)
RHO_MAX = 0.999
CLAYTON_MIN, CLAYTON_MAX = 1e-4, 28.0
GUMBEL_MIN, GUMBEL_MAX = 1.0 + 1e-4, 17.0
FRANK_MIN, FRANK_MAX = 1e-4, 35.0


def split_family(family: str):
    """Split a family tag into (base, rotation degrees)."""
    for suffix, rot in (("270", 270), ("180", 180), ("90", 90)):
        if family.endswith(suffix):
            base = family[: -len(suffix)]
            if base in ("clayton", "gumbel"):
                return base, rot
    if family in BASE_FAMILIES:
        return family, 0
    raise InvalidInputError(f"unknown copula family {family!r}")


@dataclass(frozen=True)
class PairCopula:
    """A bivariate copula family tag with its parameter vector."""

    family: str
    theta: tuple = ()

    def __post_init__(self):
        base, _ = split_family(self.family)
        object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))
        t = self.theta
        if base == "independence":
            if t:
                raise InvalidInputError("independence copula takes no parameter")
            return
        if len(t) != 1:
            raise InvalidInputError(f"{self.family} takes exactly one parameter")
        th = t[0]
        if base == "gaussian" and not -1.0 < th < 1.0:
            raise InvalidInputError(f"gaussian rho must lie in (-1, 1), got {th}")
        if base == "clayton" and th <= 0.0:
            raise InvalidInputError(f"clayton theta must be > 0, got {th}")
        if base == "gumbel" and th < 1.0:
            raise InvalidInputError(f"gumbel theta must be >= 1, got {th}")
        if base == "frank" and th == 0.0:
            raise InvalidInputError("frank theta must be non-zero")

    @property
    def n_params(self) -> int:
        return len(self.theta)


INDEPENDENCE = PairCopula("independence", ())


@dataclass(frozen=True)
class PairFit:
    """Result of fitting one pair copula: the member plus fit diagnostics."""

    copula: PairCopula
    loglik: float
    n_params: int
    aic: float
    boundary: bool = False


def _prepare(u, v, closed=False):
    """Validate domain, broadcast, clamp; returns (u, v, scalar_output)."""
    uu = np.asarray(u, dtype=float)
    vv = np.asarray(v, dtype=float)
    scalar = uu.ndim == 0 and vv.ndim == 0
    uu, vv = np.broadcast_arrays(uu, vv)
    lo, hi = (0.0, 1.0)
    if closed:
        ok = (uu >= lo) & (uu <= hi) & (vv >= lo) & (vv <= hi)
    else:
        ok = (uu > lo) & (uu < hi) & (vv > lo) & (vv < hi)
    if not np.all(ok):
        raise InvalidInputError("copula arguments must lie inside the unit square")
    uu = np.clip(uu, EPS, 1.0 - EPS)
    vv = np.clip(vv, EPS, 1.0 - EPS)
    return uu, vv, scalar


def _ret(x, scalar):
    return float(x) if scalar else x


# ---------------------------------------------------------------------------
# base family implementations (exchangeable; vectorized over arrays)
# ---------------------------------------------------------------------------


def _gauss_logpdf(rho, u, v):
    x = norm.ppf(u)
    y = norm.ppf(v)
    r2 = 1.0 - rho * rho
    return -0.5 * np.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (
        2.0 * r2
    )


def _gauss_cdf(rho, u, v):
    x = norm.ppf(u)
    y = norm.ppf(v)
    pts = np.stack([np.ravel(x), np.ravel(y)], axis=-1)
    mvn = stats.multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]])
    out = np.asarray(mvn.cdf(pts), dtype=float)
    return out.reshape(np.shape(x))


def _gauss_h(rho, u, v):
    x = norm.ppf(u)
    y = norm.ppf(v)
    return norm.cdf((x - rho * y) / math.sqrt(1.0 - rho * rho))


def _gauss_inv_h(rho, w, v):
    y = norm.ppf(v)
    return norm.cdf(norm.ppf(w) * math.sqrt(1.0 - rho * rho) + rho * y)


def _clayton_logT(theta, u, v):
    # log(u^-t + v^-t - 1) without overflow
    a = -theta * np.log(u)
    b = -theta * np.log(v)
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _clayton_logpdf(theta, u, v):
    lu = np.log(u)
    lv = np.log(v)
    return (
        math.log1p(theta)
        - (1.0 + theta) * (lu + lv)
        - (2.0 + 1.0 / theta) * _clayton_logT(theta, u, v)
    )


def _clayton_cdf(theta, u, v):
    return np.exp(-_clayton_logT(theta, u, v) / theta)


def _clayton_h(theta, u, v):
    b = -theta * np.log(v)
    return np.exp((1.0 + 1.0 / theta) * (b - _clayton_logT(theta, u, v)))


def _clayton_inv_h(theta, w, v):
    # from w = v^(-t-1) (u^-t + v^-t - 1)^(-1-1/t)
    b = -theta * np.log(v)
    with np.errstate(divide="ignore"):
        logt = np.log(np.expm1(-theta / (1.0 + theta) * np.log(w)))
    log_inner = np.logaddexp(logt + b, 0.0)
    return np.exp(-log_inner / theta)


def _gumbel_parts(theta, u, v):
    x = -np.log(u)
    y = -np.log(v)
    lx = np.log(x)
    ly = np.log(y)
    a = theta * lx
    b = theta * ly
    m = np.maximum(a, b)
    logS = m + np.log(np.exp(a - m) + np.exp(b - m))
    return x, y, lx, ly, logS


def _gumbel_logpdf(theta, u, v):
    x, y, lx, ly, logS = _gumbel_parts(theta, u, v)
    root = np.exp(logS / theta)  # S^(1/theta)
    return (
        -root
        + (theta - 1.0) * (lx + ly)
        + (x + y)
        + (2.0 / theta - 2.0) * logS
        + np.log1p((theta - 1.0) / root)
    )


def _gumbel_cdf(theta, u, v):
    _, _, _, _, logS = _gumbel_parts(theta, u, v)
    return np.exp(-np.exp(logS / theta))


def _gumbel_h(theta, u, v):
    # dC/dv = C * S^(1/theta - 1) * y^(theta-1) / v
    x, y, lx, ly, logS = _gumbel_parts(theta, u, v)
    return np.exp(
        -np.exp(logS / theta) + (1.0 / theta - 1.0) * logS + (theta - 1.0) * ly + y
    )


def _frank_logpdf(theta, u, v):
    g1 = math.expm1(-theta)
    gu = np.expm1(-theta * u)
    gv = np.expm1(-theta * v)
    denom = g1 + gu * gv
    return math.log(-theta * g1) - theta * (u + v) - 2.0 * np.log(np.abs(denom))


def _frank_cdf(theta, u, v):
    g1 = math.expm1(-theta)
    return -np.log1p(np.expm1(-theta * u) * np.expm1(-theta * v) / g1) / theta


def _frank_h(theta, u, v):
    g1 = math.expm1(-theta)
    gu = np.expm1(-theta * u)
    gv = np.expm1(-theta * v)
    return gu * np.exp(-theta * v) / (g1 + gu * gv)


def _frank_inv_h(theta, w, v):
    g1 = math.expm1(-theta)
    den = np.exp(-theta * v) * (1.0 - w) + w
    gu = w * g1 / den
    return -np.log1p(gu) / theta


def _bisect_h(theta, h_impl, w, v):
    """Solve h_impl(theta, u, v) = w for u by vectorized bisection."""
    w = np.asarray(w, dtype=float)
    lo = np.full(np.shape(w), EPS)
    hi = np.full(np.shape(w), 1.0 - EPS)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = h_impl(theta, mid, v) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < 1e-14:
            break
    else:
        raise NumericError("h-function inversion did not converge in 200 steps")
    return 0.5 * (lo + hi)


def _gumbel_inv_h(theta, w, v):
    return _bisect_h(theta, _gumbel_h, w, v)


_IMPL = {
    "gaussian": (_gauss_logpdf, _gauss_cdf, _gauss_h, _gauss_inv_h),
    "clayton": (_clayton_logpdf, _clayton_cdf, _clayton_h, _clayton_inv_h),
    "gumbel": (_gumbel_logpdf, _gumbel_cdf, _gumbel_h, _gumbel_inv_h),
    "frank": (_frank_logpdf, _frank_cdf, _frank_h, _frank_inv_h),
}


# ---------------------------------------------------------------------------
# public evaluation API with rotation dispatch
# ---------------------------------------------------------------------------


def log_density(cop: PairCopula, u, v):
    """log c(u, v); vectorized over broadcastable u, v in (0, 1)."""
    uu, vv, scalar = _prepare(u, v)
    base, rot = split_family(cop.family)
    if base == "independence":
        return _ret(np.zeros(np.shape(uu)), scalar)
    th = cop.theta[0]
    fn = _IMPL[base][0]
    if rot == 90:
        out = fn(th, 1.0 - uu, vv)
    elif rot == 180:
        out = fn(th, 1.0 - uu, 1.0 - vv)
    elif rot == 270:
        out = fn(th, uu, 1.0 - vv)
    else:
        out = fn(th, uu, vv)
    return _ret(out, scalar)


def density(cop: PairCopula, u, v):
    """Copula density c(u, v) > 0."""
    out = log_density(cop, u, v)
    return float(np.exp(out)) if np.ndim(out) == 0 else np.exp(out)


def cdf(cop: PairCopula, u, v):
    """Copula CDF C(u, v) on the closed unit square."""
    uu = np.asarray(u, dtype=float)
    vv = np.asarray(v, dtype=float)
    scalar = uu.ndim == 0 and vv.ndim == 0
    uu, vv = np.broadcast_arrays(uu, vv)
    if np.any((uu < 0) | (uu > 1) | (vv < 0) | (vv > 1)):
        raise InvalidInputError("cdf arguments must lie in [0, 1]")
    base, rot = split_family(cop.family)
    if base == "independence":
        return _ret(uu * vv, scalar)
    th = cop.theta[0]
    fn = _IMPL[base][1]
    uc = np.clip(uu, EPS, 1.0 - EPS)
    vc = np.clip(vv, EPS, 1.0 - EPS)
    if rot == 90:
        out = vv - fn(th, 1.0 - uc, vc)
    elif rot == 180:
        out = uu + vv - 1.0 + fn(th, 1.0 - uc, 1.0 - vc)
    elif rot == 270:
        out = uu - fn(th, uc, 1.0 - vc)
    else:
        out = fn(th, uc, vc)
    # uniform margins exactly on the boundary
    out = np.where(uu <= 0, 0.0, np.where(uu >= 1, vv, out))
    out = np.where(vv <= 0, 0.0, np.where(vv >= 1, np.minimum(uu, 1.0), out))
    out = np.clip(out, 0.0, 1.0)
    return _ret(out, scalar)


def h_function(cop: PairCopula, u, v):
    """Conditional CDF P(U <= u | V = v) = dC(u, v)/dv."""
    uu, vv, scalar = _prepare(u, v)
    base, rot = split_family(cop.family)
    if base == "independence":
        return _ret(uu + 0.0, scalar)
    th = cop.theta[0]
    fn = _IMPL[base][2]
    if rot == 90:
        out = 1.0 - fn(th, 1.0 - uu, vv)
    elif rot == 180:
        out = 1.0 - fn(th, 1.0 - uu, 1.0 - vv)
    elif rot == 270:
        out = fn(th, uu, 1.0 - vv)
    else:
        out = fn(th, uu, vv)
    return _ret(np.clip(out, OUT_EPS, 1.0 - OUT_EPS), scalar)


def h_given_u(cop: PairCopula, v, u):
    """Conditional CDF P(V <= v | U = u) = dC(u, v)/du."""
    vv, uu, scalar = _prepare(v, u)
    base, rot = split_family(cop.family)
    if base == "independence":
        return _ret(vv + 0.0, scalar)
    th = cop.theta[0]
    fn = _IMPL[base][2]  # base families are exchangeable: dC/du = h with swap
    if rot == 90:
        out = fn(th, vv, 1.0 - uu)
    elif rot == 180:
        out = 1.0 - fn(th, 1.0 - vv, 1.0 - uu)
    elif rot == 270:
        out = 1.0 - fn(th, 1.0 - vv, uu)
    else:
        out = fn(th, vv, uu)
    return _ret(np.clip(out, OUT_EPS, 1.0 - OUT_EPS), scalar)


def _prepare_inverse(w, given):
    """Like ``_prepare`` but keeps near-endpoint probabilities w intact."""
    ww = np.asarray(w, dtype=float)
    gg = np.asarray(given, dtype=float)
    scalar = ww.ndim == 0 and gg.ndim == 0
    ww, gg = np.broadcast_arrays(ww, gg)
    if np.any((ww <= 0) | (ww >= 1) | (gg <= 0) | (gg >= 1)):
        raise InvalidInputError("copula arguments must lie inside the unit square")
    ww = np.clip(ww, OUT_EPS, 1.0 - OUT_EPS)
    gg = np.clip(gg, EPS, 1.0 - EPS)
    return ww, gg, scalar


def inv_h(cop: PairCopula, w, v):
    """Inverse of ``h_function`` in its first argument: h(u | v) = w."""
    ww, vv, scalar = _prepare_inverse(w, v)
    base, rot = split_family(cop.family)
    if base == "independence":
        return _ret(ww + 0.0, scalar)
    th = cop.theta[0]
    fn = _IMPL[base][3]
    if rot == 90:
        out = 1.0 - fn(th, 1.0 - ww, vv)
    elif rot == 180:
        out = 1.0 - fn(th, 1.0 - ww, 1.0 - vv)
    elif rot == 270:
        out = fn(th, ww, 1.0 - vv)
    else:
        out = fn(th, ww, vv)
    return _ret(np.clip(out, EPS, 1.0 - EPS), scalar)


def inv_h_given_u(cop: PairCopula, w, u):
    """Inverse of ``h_given_u``: the v with P(V <= v | U = u) = w."""
    ww, uu, scalar = _prepare_inverse(w, u)
    base, rot = split_family(cop.family)
    if base == "independence":
        return _ret(ww + 0.0, scalar)
    th = cop.theta[0]
    fn = _IMPL[base][3]
    if rot == 90:
        out = fn(th, ww, 1.0 - uu)
    elif rot == 180:
        out = 1.0 - fn(th, 1.0 - ww, 1.0 - uu)
    elif rot == 270:
        out = 1.0 - fn(th, 1.0 - ww, uu)
    else:
        out = fn(th, ww, uu)
    return _ret(np.clip(out, EPS, 1.0 - EPS), scalar)


def sample_pair(cop: PairCopula, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n pairs from the copula by conditional inversion; shape (n, 2)."""
    w = rng.uniform(size=(n, 2))
    u1 = np.clip(w[:, 0], EPS, 1.0 - EPS)
    u2 = inv_h_given_u(cop, np.clip(w[:, 1], EPS, 1.0 - EPS), u1)
    return np.column_stack([u1, u2])


# ---------------------------------------------------------------------------
# Kendall's tau
# ---------------------------------------------------------------------------


def _debye1(theta: float) -> float:
    if theta == 0.0:
        return 1.0
    val, _ = quad(lambda t: t / math.expm1(t) if t != 0 else 1.0, 0.0, theta)
    return val / theta


def _frank_tau(theta: float) -> float:
    if theta == 0.0:
        return 0.0
    s = math.copysign(1.0, theta)
    t = abs(theta)
    return s * (1.0 - 4.0 / t * (1.0 - _debye1(t)))


def kendall_tau(cop: PairCopula) -> float:
    """Population Kendall's tau of the copula (closed form; Frank by quadrature)."""
    base, rot = split_family(cop.family)
    if base == "independence":
        return 0.0
    th = cop.theta[0]
    if base == "gaussian":
        tau = 2.0 / math.pi * math.asin(th)
    elif base == "clayton":
        tau = th / (th + 2.0)
    elif base == "gumbel":
        tau = 1.0 - 1.0 / th
    else:
        tau = _frank_tau(th)
    return -tau if rot in (90, 270) else tau


def _frank_theta_from_tau(tau: float) -> float:
    a = abs(tau)
    if a < 1e-3:
        return math.copysign(0.1, tau if tau != 0 else 1.0)
    if a >= _frank_tau(FRANK_MAX):
        return math.copysign(FRANK_MAX, tau)
    t = optimize.brentq(lambda x: _frank_tau(x) - a, 1e-6, FRANK_MAX)
    return math.copysign(t, tau)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

# transformed unbounded-ish scale: (to_theta, from_theta, s_lo, s_hi)
_SCALES = {
    "gaussian": (
        lambda s: math.tanh(s),
        lambda t: math.atanh(t),
        math.atanh(-RHO_MAX),
        math.atanh(RHO_MAX),
    ),
    "clayton": (
        lambda s: math.exp(s),
        lambda t: math.log(t),
        math.log(CLAYTON_MIN),
        math.log(CLAYTON_MAX),
    ),
    "gumbel": (
        lambda s: 1.0 + math.exp(s),
        lambda t: math.log(t - 1.0),
        math.log(GUMBEL_MIN - 1.0),
        math.log(GUMBEL_MAX - 1.0),
    ),
}


def _init_theta(base: str, tau_eff: float) -> float:
    if base == "gaussian":
        return float(np.clip(math.sin(math.pi * tau_eff / 2.0), -RHO_MAX, RHO_MAX))
    if base == "clayton":
        if tau_eff <= 0.0:
            return CLAYTON_MIN
        return float(np.clip(2.0 * tau_eff / (1.0 - tau_eff), CLAYTON_MIN, CLAYTON_MAX))
    if base == "gumbel":
        if tau_eff <= 0.0:
            return GUMBEL_MIN
        return float(np.clip(1.0 / (1.0 - tau_eff), GUMBEL_MIN, GUMBEL_MAX))
    return _frank_theta_from_tau(tau_eff)


def fit_pair(u, v, family: str) -> PairFit:
    """Maximum-likelihood fit of one family to (u, v) pairs.

    The 1-d optimization runs on a transformed scale (arctanh for the
    Gaussian rho, log for Clayton theta, log(theta - 1) for Gumbel) with
    Brent/golden-section search, initialized from the sample Kendall's tau.
    Hitting a parameter cap sets the ``boundary`` flag.
    """
    uu = np.asarray(u, dtype=float).ravel()
    vv = np.asarray(v, dtype=float).ravel()
    if uu.size != vv.size:
        raise InvalidInputError("u and v must have the same length")
    if uu.size < 10:
        raise InvalidInputError(f"need at least 10 pairs, got {uu.size}")
    if np.any((uu <= 0) | (uu >= 1) | (vv <= 0) | (vv >= 1)):
        raise InvalidInputError("pairs must lie inside the open unit square")
    if np.all(uu == uu[0]) and np.all(vv == vv[0]):
        raise DegenerateDataError("all pairs identical; nothing to fit")

    base, rot = split_family(family)
    if base == "independence":
        return PairFit(INDEPENDENCE, loglik=0.0, n_params=0, aic=0.0)

    tau_hat = kendalltau(uu, vv).statistic
    if not np.isfinite(tau_hat):
        raise DegenerateDataError("Kendall's tau undefined (constant margin)")
    tau_eff = -tau_hat if rot in (90, 270) else tau_hat

    if base == "frank":
        theta0 = _init_theta(base, tau_eff)

        def nll_frank(th):
            t = float(np.clip(th, -FRANK_MAX, FRANK_MAX))
            if abs(t) < FRANK_MIN:
                t = math.copysign(FRANK_MIN, t if t != 0 else 1.0)
            return -np.sum(log_density(PairCopula(family, (t,)), uu, vv)), t

        res = optimize.minimize_scalar(
            lambda s: nll_frank(s)[0],
            bounds=(-FRANK_MAX, FRANK_MAX),
            method="bounded",
            options={"xatol": 1e-8},
        )
        cands = [res.x, theta0]
        vals = [nll_frank(c) for c in cands]
        nll_best, theta = min(vals, key=lambda z: z[0])
        boundary = abs(abs(theta) - FRANK_MAX) < 1e-6
    else:
        to_theta, from_theta, s_lo, s_hi = _SCALES[base]
        theta0 = _init_theta(base, tau_eff)
        s0 = float(np.clip(from_theta(theta0), s_lo, s_hi))

        def nll(s):
            th = to_theta(float(np.clip(s, s_lo, s_hi)))
            return -np.sum(log_density(PairCopula(family, (th,)), uu, vv))

        res = optimize.minimize_scalar(
            nll, bounds=(s_lo, s_hi), method="bounded", options={"xatol": 1e-8}
        )
        s_best = res.x if res.fun <= nll(s0) else s0
        s_best = float(np.clip(s_best, s_lo, s_hi))
        theta = to_theta(s_best)
        nll_best = nll(s_best)
        boundary = min(s_best - s_lo, s_hi - s_best) < 1e-6

    cop = PairCopula(family, (theta,))
    ll = float(-nll_best)
    return PairFit(cop, loglik=ll, n_params=1, aic=-2.0 * ll + 2.0, boundary=boundary)


def select_family(u, v, candidates=None) -> PairFit:
    """Fit every candidate family and return the one minimizing the AIC.

    Independence carries zero parameters and AIC 0.  Ties break toward
    fewer parameters, then candidate order.
    """
    if candidates is None:
        candidates = DEFAULT_CANDIDATES
    candidates = tuple(candidates)
    if not candidates:
        raise InvalidInputError("empty candidate family set")
    fits = [fit_pair(u, v, fam) for fam in candidates]
    best = min(enumerate(fits), key=lambda t: (t[1].aic, t[1].n_params, t[0]))
    return best[1]
