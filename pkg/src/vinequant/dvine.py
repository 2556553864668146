"""D-vine copula models: density evaluation, sequential fitting, truncation.

A D-vine on p naturally ordered variables factorizes the copula density
into trees j = 1..p-1; the pair at tree j, position i couples variables
(i, i+j) given the variables strictly between them.  Conditional CDF
arguments for tree j are produced from tree j-1 by h-functions:

* left argument  F(u_i | u_{i+1..i+j-1})   <- h of the tree j-1 pair at i,
  conditioned on its right argument
* right argument F(u_{i+j} | u_{i+1..i+j-1}) <- h of the tree j-1 pair at
  i+1, conditioned on its left argument

Trees above the truncation level are implicitly independence copulas.
Fitting is sequential (tree by tree), each pair by 1-d MLE, exactly the
pair-copula practice for vines; no joint refit is attempted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import bicop
from .bicop import (
    DEFAULT_CANDIDATES,
    INDEPENDENCE,
    PairCopula,
    PairFit,
    fit_pair,
    select_family,
)
from .errors import DegenerateDataError, InvalidInputError
from .marginals import PseudoSample

CLAMP = 1e-10


@dataclass(frozen=True)
class DVineModel:
    """Dimension, truncation level and the triangular array of pair copulas.

    ``pairs[j-1][i-1]`` is the copula of variables (i, i+j) given those in
    between, for tree j = 1..m_trunc and position i = 1..p-j.
    """

    p: int
    m_trunc: int
    pairs: tuple

    def __post_init__(self):
        if self.p < 2:
            raise InvalidInputError("a D-vine needs p >= 2 variables")
        if not 1 <= self.m_trunc <= self.p - 1:
            raise InvalidInputError(
                f"truncation level must lie in [1, {self.p - 1}], got {self.m_trunc}"
            )
        if len(self.pairs) != self.m_trunc:
            raise InvalidInputError("pairs must hold one tuple per tree")
        for j, tree in enumerate(self.pairs, start=1):
            if len(tree) != self.p - j:
                raise InvalidInputError(
                    f"tree {j} must hold {self.p - j} pair copulas, got {len(tree)}"
                )
        object.__setattr__(self, "pairs", tuple(tuple(t) for t in self.pairs))

    def pair(self, tree: int, position: int) -> PairCopula:
        """Copula at 1-based (tree, position); independence above m_trunc."""
        if tree > self.m_trunc:
            return INDEPENDENCE
        return self.pairs[tree - 1][position - 1]

    def n_params(self) -> int:
        return sum(c.n_params for tree in self.pairs for c in tree)


def independence_vine(p: int) -> DVineModel:
    """All-independence model (any sampling from it is i.i.d. uniform)."""
    return DVineModel(p=p, m_trunc=1, pairs=((INDEPENDENCE,) * (p - 1),))


def markov_vine(pair_copulas) -> DVineModel:
    """One-tree D-vine from a list of p-1 adjacent pair copulas."""
    cops = tuple(pair_copulas)
    return DVineModel(p=len(cops) + 1, m_trunc=1, pairs=(cops,))


@dataclass(frozen=True)
class DVineFit:
    """Fitted model with its sequential log-likelihood and AIC."""

    model: DVineModel
    loglik: float
    n_params: int
    aic: float
    tree_fits: tuple = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# conditional-argument recursion
# ---------------------------------------------------------------------------


def _as_u_matrix(sample) -> np.ndarray:
    if isinstance(sample, PseudoSample):
        return sample.u
    u = np.asarray(sample, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    return u


def _next_tree_args(copulas, left, right):
    """Arguments for tree j+1 given tree j's fitted copulas and arguments.

    ``left`` and ``right`` are (n, p-j) matrices; output matrices have one
    column less.
    """
    n_pos = left.shape[1] - 1
    new_left = np.empty((left.shape[0], n_pos))
    new_right = np.empty((left.shape[0], n_pos))
    for i in range(n_pos):
        new_left[:, i] = bicop.h_function(copulas[i], left[:, i], right[:, i])
        new_right[:, i] = bicop.h_given_u(
            copulas[i + 1], right[:, i + 1], left[:, i + 1]
        )
    np.clip(new_left, CLAMP, 1.0 - CLAMP, out=new_left)
    np.clip(new_right, CLAMP, 1.0 - CLAMP, out=new_right)
    return new_left, new_right


def conditional_pseudo(model: DVineModel, sample, tree: int):
    """Conditional pseudo-observation arguments entering the given tree.

    Returns (left, right): n-by-(p - tree) matrices holding
    F(u_i | u_{i+1..i+tree-1}) and F(u_{i+tree} | u_{i+1..i+tree-1}),
    computed through the h-function cascade of trees 1..tree-1.
    """
    u = _as_u_matrix(sample)
    if u.shape[1] != model.p:
        raise InvalidInputError("sample dimension does not match the model")
    if not 1 <= tree <= model.p - 1:
        raise InvalidInputError(f"tree must lie in [1, {model.p - 1}]")
    left, right = u[:, :-1], u[:, 1:]
    for j in range(1, tree):
        cops = [model.pair(j, i + 1) for i in range(model.p - j)]
        left, right = _next_tree_args(cops, left, right)
    return left, right


def log_density(model: DVineModel, u):
    """Log copula density of the model at u.

    ``u`` may be a single p-vector (returns a float) or an (n, p) matrix
    (returns an n-vector).  Trees above the truncation level contribute 0.
    """
    arr = np.asarray(u, dtype=float)
    single = arr.ndim == 1
    mat = _as_u_matrix(arr)
    if mat.shape[1] != model.p:
        raise InvalidInputError(
            f"expected vectors of length {model.p}, got {mat.shape[1]}"
        )
    if np.any((mat <= 0.0) | (mat >= 1.0)):
        raise InvalidInputError("u must lie inside the open unit cube")
    total = np.zeros(mat.shape[0])
    left, right = mat[:, :-1], mat[:, 1:]
    for j in range(1, model.m_trunc + 1):
        for i in range(model.p - j):
            total += bicop.log_density(model.pair(j, i + 1), left[:, i], right[:, i])
        if j < model.m_trunc:
            cops = [model.pair(j, i + 1) for i in range(model.p - j)]
            left, right = _next_tree_args(cops, left, right)
    return float(total[0]) if single else total


# ---------------------------------------------------------------------------
# fitting policies
# ---------------------------------------------------------------------------

FAMILY_POLICIES = ("gaussian", "aic", "independence")


@dataclass(frozen=True)
class CopulaPolicy:
    """A model-selection policy: which families per pair, how many trees.

    ``trunc_level`` fixes the number of trees; ``None`` selects it by
    cumulative AIC up to ``max_level``.
    """

    name: str
    families: str
    trunc_level: int | None = None
    max_level: int | None = None

    def __post_init__(self):
        if self.families not in FAMILY_POLICIES:
            raise InvalidInputError(f"unknown family policy {self.families!r}")


POLICIES = {
    "gauss2": CopulaPolicy("gauss2", "gaussian", trunc_level=2),
    "aic2": CopulaPolicy("aic2", "aic", trunc_level=2),
    "aicfull": CopulaPolicy("aicfull", "aic", trunc_level=None),
    "indep": CopulaPolicy("indep", "independence", trunc_level=1),
}


def policy_from_name(name: str) -> CopulaPolicy:
    try:
        return POLICIES[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown policy {name!r}; expected one of {sorted(POLICIES)}"
        ) from None


def _fit_one(u_left, u_right, families: str, candidates) -> PairFit:
    if families == "gaussian":
        return fit_pair(u_left, u_right, "gaussian")
    if families == "independence":
        return PairFit(INDEPENDENCE, loglik=0.0, n_params=0, aic=0.0)
    return select_family(u_left, u_right, candidates)


def fit_sequential(
    sample, m_trunc: int, families: str = "gaussian", candidates=None
) -> DVineFit:
    """Fit a D-vine tree by tree up to ``m_trunc`` trees.

    Tree 1 is fitted on adjacent pseudo-observation pairs; conditional
    arguments for each deeper tree come from the previous tree's fitted
    h-functions.  ``families`` is "gaussian" (fixed family), "aic"
    (per-pair AIC selection) or "independence".
    """
    u = _as_u_matrix(sample)
    p = u.shape[1]
    if p < 2:
        raise InvalidInputError("need at least two columns to fit a vine")
    if not 1 <= m_trunc <= p - 1:
        raise InvalidInputError(f"m_trunc must lie in [1, {p - 1}], got {m_trunc}")
    if candidates is None:
        candidates = DEFAULT_CANDIDATES

    tree_fits = []
    left, right = u[:, :-1], u[:, 1:]
    for j in range(1, m_trunc + 1):
        fits_j = []
        for i in range(p - j):
            try:
                fits_j.append(_fit_one(left[:, i], right[:, i], families, candidates))
            except DegenerateDataError as exc:
                raise DegenerateDataError(
                    f"degenerate data at tree {j}, position {i + 1}: {exc}"
                ) from exc
        tree_fits.append(tuple(fits_j))
        if j < m_trunc:
            cops = [f.copula for f in fits_j]
            left, right = _next_tree_args(cops, left, right)

    pairs = tuple(tuple(f.copula for f in tree) for tree in tree_fits)
    model = DVineModel(p=p, m_trunc=m_trunc, pairs=pairs)
    ll = sum(f.loglik for tree in tree_fits for f in tree)
    k = sum(f.n_params for tree in tree_fits for f in tree)
    return DVineFit(
        model=model,
        loglik=ll,
        n_params=k,
        aic=-2.0 * ll + 2.0 * k,
        tree_fits=tuple(tree_fits),
    )


def select_truncation(
    sample, families: str = "aic", max_level: int | None = None, candidates=None
) -> DVineFit:
    """Fit trees incrementally and truncate where the cumulative AIC is lowest.

    Levels 1..max_level are fitted once (lower trees reused); the model
    returned keeps the level with minimal cumulative AIC, ties broken
    toward the smaller level.
    """
    u = _as_u_matrix(sample)
    p = u.shape[1]
    if max_level is None:
        max_level = p - 1
    if not 1 <= max_level <= p - 1:
        raise InvalidInputError(f"max_level must lie in [1, {p - 1}]")
    full = fit_sequential(sample, m_trunc=max_level, families=families, candidates=candidates)

    best_level, best_aic = 1, None
    ll = k = 0.0
    for j, tree in enumerate(full.tree_fits, start=1):
        ll += sum(f.loglik for f in tree)
        k += sum(f.n_params for f in tree)
        aic_j = -2.0 * ll + 2.0 * k
        if best_aic is None or aic_j < best_aic:
            best_aic, best_level = aic_j, j
    trees = full.tree_fits[:best_level]
    pairs = tuple(tuple(f.copula for f in tree) for tree in trees)
    model = DVineModel(p=p, m_trunc=best_level, pairs=pairs)
    ll = sum(f.loglik for tree in trees for f in tree)
    k = sum(f.n_params for tree in trees for f in tree)
    return DVineFit(
        model=model,
        loglik=ll,
        n_params=int(k),
        aic=-2.0 * ll + 2.0 * k,
        tree_fits=trees,
    )


def fit_with_policy(sample, policy: CopulaPolicy, max_level: int | None = None) -> DVineFit:
    """Fit under a named policy (fixed trees or AIC-selected truncation)."""
    u = _as_u_matrix(sample)
    p = u.shape[1]
    if policy.families == "independence":
        model = independence_vine(p)
        return DVineFit(model=model, loglik=0.0, n_params=0, aic=0.0)
    if policy.trunc_level is not None:
        level = min(policy.trunc_level, p - 1)
        return fit_sequential(sample, m_trunc=level, families=policy.families)
    cap = max_level if max_level is not None else policy.max_level
    if cap is None:
        cap = p - 1
    return select_truncation(sample, families=policy.families, max_level=min(cap, p - 1))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def model_to_dict(model: DVineModel, tree_fits=None) -> dict:
    trees = []
    for j, tree in enumerate(model.pairs):
        row = []
        for i, cop in enumerate(tree):
            entry = {"family": cop.family, "theta": list(cop.theta)}
            if tree_fits is not None:
                entry["loglik"] = tree_fits[j][i].loglik
            row.append(entry)
        trees.append(row)
    return {"p": model.p, "m_trunc": model.m_trunc, "trees": trees}


def model_from_dict(obj: dict) -> DVineModel:
    try:
        p = int(obj["p"])
        m_trunc = int(obj["m_trunc"])
        trees = obj["trees"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed model object: {exc}") from exc
    pairs = tuple(
        tuple(PairCopula(e["family"], tuple(e["theta"])) for e in tree)
        for tree in trees
    )
    return DVineModel(p=p, m_trunc=m_trunc, pairs=pairs)


def save_model(model: DVineModel, path, tree_fits=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, tree_fits), fh, indent=2)
        fh.write("\n")


def load_model(path) -> DVineModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
