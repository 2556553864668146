"""Bootstrap sampling from a fitted D-vine by inverse Rosenblatt transformation.

A row (u_1, ..., u_p) is built coordinate by coordinate from independent
uniforms v_i: u_1 = v_1, then u_i is the conditional quantile of U_i given
the already drawn u_1..u_{i-1}.  The nested conditional CDF is peeled one
conditioning variable at a time (oldest first) through inverse h-functions
of the pair copulas; two arrays of forward/backward conditional CDFs are
maintained so each draw costs O(p * m_trunc) h-evaluations.  Trees above
the truncation level are independence copulas, whose h-functions are the
identity and are skipped.
"""

from __future__ import annotations

import numpy as np

from . import bicop
from .dvine import DVineModel
from .errors import InvalidInputError
from .marginals import PseudoSample, inverse_empirical
from .rng import RngStream

_CHUNK = 1 << 16
_EPS = 1e-12


def _sample_chunk(model: DVineModel, v: np.ndarray) -> np.ndarray:
    """Transform one chunk of i.i.d. uniforms (rows) into vine samples."""
    rows, p = v.shape
    m_trunc = model.m_trunc
    out = np.empty_like(v)
    out[:, 0] = v[:, 0]
    # fwd[k-1] = F(u_k | u_{k+1}, ..., u_i) for the current step i
    fwd = [None] * p
    fwd[0] = v[:, 0]
    for i in range(2, p + 1):
        t = v[:, i - 1]
        k_start = max(1, i - m_trunc)
        back = {k_start: t}  # back[k] = F(u_i | u_k, ..., u_{i-1})
        for k in range(k_start, i):
            cop = model.pair(i - k, k)
            if cop.family != "independence":
                t = bicop.inv_h_given_u(cop, t, fwd[k - 1])
            back[k + 1] = t
        out[:, i - 1] = t
        if i < p:
            for k in range(max(1, i + 1 - m_trunc), i):
                cop = model.pair(i - k, k)
                if cop.family != "independence":
                    fwd[k - 1] = bicop.h_function(cop, fwd[k - 1], back[k + 1])
            fwd[i - 1] = t
    return out


def sample_uniform_vine(model: DVineModel, m: int, rng: RngStream) -> np.ndarray:
    """Draw m rows from the model's copula; output lies in (0, 1)^p.

    Deterministic for a given (model, m, rng): the same stream always
    yields the same matrix.
    """
    if m < 1:
        raise InvalidInputError(f"sample size must be >= 1, got {m}")
    gen = rng.generator()
    out = np.empty((m, model.p))
    done = 0
    while done < m:
        c = min(_CHUNK, m - done)
        v = gen.uniform(size=(c, model.p))
        np.clip(v, _EPS, 1.0 - _EPS, out=v)
        out[done : done + c] = _sample_chunk(model, v)
        done += c
    return out


def sample_data(
    model: DVineModel, marginals: PseudoSample, m: int, rng: RngStream
) -> np.ndarray:
    """Draw m rows on the data scale: vine sample mapped through the
    inverse empirical marginals.  Every output value is an observed value
    of the corresponding column."""
    if marginals.p != model.p:
        raise InvalidInputError(
            f"marginals have p={marginals.p} but the model has p={model.p}"
        )
    u = sample_uniform_vine(model, m, rng)
    out = np.empty_like(u)
    for j in range(model.p):
        out[:, j] = inverse_empirical(marginals.column(j), u[:, j])
    return out


def sample_independent(data, m: int, rng: RngStream) -> np.ndarray:
    """Independent column bootstrap: resample each column with replacement."""
    if m < 1:
        raise InvalidInputError(f"sample size must be >= 1, got {m}")
    if isinstance(data, PseudoSample):
        columns = data.sorted_columns
    elif isinstance(data, np.ndarray) and data.ndim == 2:
        columns = [data[:, j] for j in range(data.shape[1])]
    else:
        columns = [np.asarray(c, dtype=float) for c in data]
    gen = rng.generator()
    out = np.empty((m, len(columns)))
    for j, col in enumerate(columns):
        idx = gen.integers(0, col.size, size=m)
        out[:, j] = col[idx]
    return out
