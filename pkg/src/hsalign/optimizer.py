"""Steepest descent on the Stiefel manifold with Armijo backtracking.

Each iteration optionally refreshes the shared bandwidth at the current
projection, evaluates the objective and its frozen-bandwidth gradient,
projects the gradient onto the tangent space at ``W`` and backtracks along
its negative, mapping every trial point back onto the manifold with a thin
QR retraction.
"""

import logging
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from .bandwidth import DEFAULT_FLOOR, RULES, compute_bandwidth
from .density import ProjectionMatrix
from .divergence import objective, objective_and_gradient
from .errors import BandwidthError, InputError, RetractionError

logger = logging.getLogger(__name__)

MIN_STEP = 1e-14
RANK_TOL = 1e-12


class ConvergedReason(str, Enum):
    REL_TOL = "rel_tol"
    GRAD_TOL = "grad_tol"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAILURE = "line_search_failure"


@dataclass(frozen=True)
class FitConfig:
    subspace_dim: int
    max_iters: int = 200
    initial_step: float = 1.0
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    rel_tol: float = 1e-9
    grad_tol: float = 1e-8
    seed: int = 0
    refresh_bandwidth_every: int = 1
    bandwidth_rule: str = "rule-of-thumb"
    bandwidth_floor: float = DEFAULT_FLOOR
    leave_one_out: bool = False

    def validate(self, d=None):
        if self.subspace_dim < 1:
            raise InputError("subspace_dim must be >= 1")
        if d is not None and self.subspace_dim > d:
            raise InputError(f"subspace_dim={self.subspace_dim} exceeds data dimension d={d}")
        if self.max_iters < 0:
            raise InputError("max_iters must be >= 0")
        if not self.initial_step > 0:
            raise InputError("initial_step must be positive")
        if not 0 < self.armijo_c < 1:
            raise InputError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise InputError("backtrack_factor must lie in (0, 1)")
        if not (self.rel_tol > 0 and self.grad_tol > 0):
            raise InputError("tolerances must be positive")
        if self.refresh_bandwidth_every < 1:
            raise InputError("refresh_bandwidth_every must be >= 1")
        if self.bandwidth_rule not in RULES:
            raise InputError(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        if not self.bandwidth_floor > 0:
            raise InputError("bandwidth_floor must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class FitReport:
    """Optimization trace.

    Entry ``k`` of the per-iterate traces describes iterate ``W_k``:
    ``objective_trace[k]`` is evaluated under the bandwidth of epoch
    ``bandwidth_epoch[k]``; ``step_trace[k]`` and ``accepted_objective_trace[k]``
    describe the step taken from ``W_k`` (zero / NaN for the last iterate).
    """

    final_w: ProjectionMatrix
    objective_trace: List[float]
    grad_norm_trace: List[float]
    step_trace: List[float]
    accepted_objective_trace: List[float]
    bandwidth_epoch: List[int]
    iterations_used: int
    converged_reason: ConvergedReason
    final_bandwidth: np.ndarray = field(default=None)

    def to_dict(self):
        return {
            "final_w": self.final_w.w.tolist(),
            "final_bandwidth": None if self.final_bandwidth is None else self.final_bandwidth.tolist(),
            "objective_trace": list(self.objective_trace),
            "grad_norm_trace": list(self.grad_norm_trace),
            "step_trace": list(self.step_trace),
            "accepted_objective_trace": [None if np.isnan(x) else x for x in self.accepted_objective_trace],
            "bandwidth_epoch": list(self.bandwidth_epoch),
            "iterations_used": self.iterations_used,
            "converged_reason": self.converged_reason.value,
        }


def retract(w_candidate):
    """Q factor of the thin QR of ``w_candidate`` with ``diag(R) > 0``.

    Raises
    ------
    RetractionError
        If some ``|R_jj| < 1e-12`` (candidate numerically rank deficient).
    """
    a = np.asarray(w_candidate, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] > a.shape[0]:
        raise InputError(f"retraction needs a tall d x p matrix, got shape {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.diag(r)
    if np.any(np.abs(diag) < RANK_TOL):
        raise RetractionError("candidate matrix is numerically rank deficient")
    return ProjectionMatrix(q * np.sign(diag))


def random_projection(d, p, seed):
    rng = np.random.default_rng(seed)
    return retract(rng.standard_normal((d, p)))


def _fix_signs(vectors):
    # largest-magnitude entry of each column made positive (first one on ties)
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def init_projection(source, target, p, seed=0):
    """Top-``p`` principal directions of the standardized pooled data.

    Dimensions with zero spread are left unscaled. If the pooled covariance
    has rank below ``p`` a seeded random orthonormal matrix is returned.
    """
    if source.d != target.d:
        raise InputError(f"source d={source.d} and target d={target.d} differ")
    d = source.d
    if not 1 <= p <= d:
        raise InputError(f"need 1 <= p <= d, got p={p}, d={d}")
    pooled = np.vstack([source.data, target.data])
    if pooled.shape[0] < 2:
        raise InputError("need at least 2 pooled samples")
    centered = pooled - pooled.mean(axis=0)
    scale = centered.std(axis=0)
    scale[scale == 0] = 1.0
    z = centered / scale
    cov = z.T @ z / z.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = evals[0] if evals.size else 0.0
    rank = int(np.sum(evals > RANK_TOL * max(top, 0.0))) if top > 0 else 0
    if rank < p:
        logger.info("pooled covariance rank %d < p=%d; using seeded random projection", rank, p)
        return random_projection(d, p, seed)
    return retract(_fix_signs(evecs[:, :p]))


def riemannian_gradient(w, g):
    """Project a Euclidean gradient onto the tangent space of the Stiefel manifold at ``w``."""
    wtg = w.T @ g
    return g - w @ (0.5 * (wtg + wtg.T))


def fit(source, target, config, init=None, callback: Optional[Callable] = None):
    """Minimize the projected Hellinger objective over orthonormal ``W``.

    Parameters
    ----------
    source, target : SampleSet
    config : FitConfig
    init : ProjectionMatrix, optional
        Starting point; defaults to :func:`init_projection`.
    callback : callable, optional
        Called as ``callback(k, W_k, objective_k)`` for every iterate.

    Returns
    -------
    FitReport
    """
    if source.d != target.d:
        raise InputError(f"source d={source.d} and target d={target.d} differ")
    config.validate(source.d)
    p = config.subspace_dim
    if init is None:
        w = init_projection(source, target, p, config.seed)
    else:
        w = init if isinstance(init, ProjectionMatrix) else ProjectionMatrix(init)
        if w.w.shape != (source.d, p):
            raise InputError(f"initial projection has shape {w.w.shape}, expected {(source.d, p)}")

    objectives, grad_norms, steps, accepted, epochs = [], [], [], [], []
    bw = None
    epoch = -1
    it = 0
    last_rel_change = None
    step = config.initial_step
    reason = None

    while True:
        if it % config.refresh_bandwidth_every == 0:
            try:
                bw = compute_bandwidth(
                    source, target, w, config.bandwidth_rule, config.bandwidth_floor
                )
            except BandwidthError as exc:
                raise BandwidthError(f"iteration {it}: {exc}") from exc
            epoch += 1
        value, g = objective_and_gradient(source, target, w, bw, config.leave_one_out)
        f = value.d_hat
        rg = riemannian_gradient(w.w, g)
        gnorm = float(np.linalg.norm(rg))
        objectives.append(f)
        grad_norms.append(gnorm)
        epochs.append(epoch)
        if callback is not None:
            callback(it, w, f)

        if gnorm < config.grad_tol:
            reason = ConvergedReason.GRAD_TOL
        elif last_rel_change is not None and last_rel_change < config.rel_tol:
            reason = ConvergedReason.REL_TOL
        elif it >= config.max_iters:
            reason = ConvergedReason.MAX_ITERS
        if reason is not None:
            steps.append(0.0)
            accepted.append(float("nan"))
            break

        # warm start: allow the step to grow back toward initial_step
        step = min(config.initial_step, 2.0 * step)
        decrease = config.armijo_c * gnorm * gnorm
        new_w = None
        while step >= MIN_STEP:
            try:
                trial = retract(w.w - step * rg)
            except RetractionError:
                step *= config.backtrack_factor
                continue
            f_trial = objective(source, target, trial, bw, config.leave_one_out).d_hat
            if f_trial <= f - step * decrease:
                new_w = trial
                break
            step *= config.backtrack_factor
        if new_w is None:
            reason = ConvergedReason.LINE_SEARCH_FAILURE
            steps.append(0.0)
            accepted.append(float("nan"))
            break

        steps.append(step)
        accepted.append(f_trial)
        last_rel_change = abs(f - f_trial) / max(abs(f), np.finfo(float).tiny)
        w = new_w
        it += 1
        logger.debug("iter %d objective %.12g grad_norm %.3e step %.3e", it, f_trial, gnorm, step)

    return FitReport(
        final_w=w,
        objective_trace=objectives,
        grad_norm_trace=grad_norms,
        step_trace=steps,
        accepted_objective_trace=accepted,
        bandwidth_epoch=epochs,
        iterations_used=it,
        converged_reason=reason,
        final_bandwidth=None if bw is None else np.array(bw.variances),
    )

