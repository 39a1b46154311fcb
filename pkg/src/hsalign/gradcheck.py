"""Finite-difference gradient oracle for scalar functions of a matrix."""

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InputError, NonFiniteError

DEFAULT_STEP = 1e-6
DEFAULT_REL_FLOOR = 1e-8


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    worst_entry: Tuple[int, int]
    fd_step: Optional[float]
    n_entries: int

    def to_dict(self):
        out = asdict(self)
        out["worst_entry"] = list(self.worst_entry)
        return out


def central_difference(f, at, step=DEFAULT_STEP):
    """Entrywise central differences ``(f(X + hE_ij) - f(X - hE_ij)) / 2h``.

    ``f`` must be pure; it is called ``2 * at.size`` times on copies of ``at``.
    """
    if not step > 0:
        raise InputError("finite-difference step must be positive")
    at = np.array(at, dtype=np.float64)
    if at.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {at.shape}")
    out = np.empty_like(at)
    for idx in np.ndindex(*at.shape):
        plus = at.copy()
        minus = at.copy()
        plus[idx] += step
        minus[idx] -= step
        fp = float(f(plus))
        fm = float(f(minus))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"function is not finite when probing entry {idx}")
        out[idx] = (fp - fm) / (2.0 * step)
    return out


def compare(analytic, numeric, rel_floor=DEFAULT_REL_FLOOR, fd_step=None):
    """Entrywise ``|a - n| / max(|a|, |n|, rel_floor)`` summary.

    Symmetric in ``analytic`` and ``numeric``.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {n.shape}")
    if a.ndim != 2 or a.size == 0:
        raise InputError("compare expects non-empty 2-D matrices")
    abs_err = np.abs(a - n)
    rel_err = abs_err / np.maximum(np.maximum(np.abs(a), np.abs(n)), rel_floor)
    worst = np.unravel_index(int(np.argmax(rel_err)), rel_err.shape)
    return GradCheckReport(
        max_rel_error=float(rel_err[worst]),
        max_abs_error=float(abs_err.max()),
        worst_entry=(int(worst[0]), int(worst[1])),
        fd_step=None if fd_step is None else float(fd_step),
        n_entries=int(a.size),
    )


def check_gradient(f, grad, at, step=DEFAULT_STEP, rel_floor=DEFAULT_REL_FLOOR):
    """Compare ``grad(at)`` against central differences of ``f`` at ``at``."""
    numeric = central_difference(f, at, step)
    return compare(grad(np.asarray(at, dtype=np.float64)), numeric, rel_floor, fd_step=step)
