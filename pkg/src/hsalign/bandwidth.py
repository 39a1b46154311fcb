"""Diagonal bandwidth from pooled projected samples.

Both domains share one bandwidth so their density estimates are directly
comparable. The default rule is the multivariate normal-reference rule of
thumb applied per projected coordinate::

    h_j = sigma_j * (4 / ((p + 2) n)) ** (1 / (p + 4))

with ``sigma_j`` the sample standard deviation (ddof=1) of the pooled
projected data and ``n = n_s + n_t``. The returned variances are ``h_j**2``.
"""

import logging

import numpy as np

from .density import Bandwidth, as_matrix
from .errors import BandwidthError, InputError

logger = logging.getLogger(__name__)

DEFAULT_FLOOR = 1e-12
ZERO_SPREAD_RTOL = 1e-15


def rule_of_thumb_factor(p, n):
    return (4.0 / ((p + 2) * n)) ** (1.0 / (p + 4))


def scott_factor(p, n):
    return float(n) ** (-1.0 / (p + 4))


RULES = {
    "rule-of-thumb": rule_of_thumb_factor,
    "scott": scott_factor,
}


def pooled_projection(source, target, w):
    w = as_matrix(w)
    if source.d != target.d:
        raise InputError(f"source d={source.d} and target d={target.d} differ")
    if w.shape[0] != source.d:
        raise InputError(f"projection has {w.shape[0]} rows, data has d={source.d}")
    return np.vstack([source.data, target.data]) @ w


def bandwidth_from_projected(projected, rule="rule-of-thumb", floor=DEFAULT_FLOOR):
    """Bandwidth for an ``(n, p)`` array of already projected pooled samples."""
    try:
        factor_fn = RULES[rule]
    except KeyError:
        raise InputError(f"unknown bandwidth rule {rule!r}; choose from {sorted(RULES)}") from None
    if floor <= 0:
        raise InputError("bandwidth floor must be positive")
    projected = np.asarray(projected, dtype=np.float64)
    n, p = projected.shape
    if n < 2:
        raise BandwidthError(f"need at least 2 pooled samples, got {n}")
    sigma = np.std(projected, axis=0, ddof=1)
    scale = float(np.max(np.abs(projected)))
    for j in range(p):
        if sigma[j] <= ZERO_SPREAD_RTOL * scale:
            raise BandwidthError(f"zero-variance dimension {j}")
    h = sigma * factor_fn(p, n)
    variances = h * h
    low = variances < floor
    if np.any(low):
        logger.warning(
            "bandwidth variance floored to %g in dimension(s) %s",
            floor,
            np.flatnonzero(low).tolist(),
        )
        variances = np.where(low, floor, variances)
    return Bandwidth(variances)


def compute_bandwidth(source, target, w, rule="rule-of-thumb", floor=DEFAULT_FLOOR):
    """Shared bandwidth for the source and target KDEs under projection ``w``.

    Raises
    ------
    BandwidthError
        If a projected dimension has (numerically) zero spread.
    """
    return bandwidth_from_projected(pooled_projection(source, target, w), rule=rule, floor=floor)
