"""Gaussian kernel density estimation in a projected subspace.

A :class:`KdeModel` binds a sample set to a ``d x p`` projection ``W`` and a
diagonal bandwidth ``H`` (one variance per projected coordinate). For a query
``x`` and sample ``x_i`` the kernel is

    k(x, x_i) = exp(-0.5 * (x - x_i)^T W H^{-1} W^T (x - x_i))

and the density is the average of fully normalized Gaussian kernels. The log
density gradient with respect to ``W`` (bandwidth held fixed) is

    d log f / dW = -C(x) W H^{-1},   C(x) = sum_i a_i(x) (x - x_i)(x - x_i)^T

where ``a_i(x)`` are the softmax-normalized kernel weights.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from .errors import InputError

LOG_2PI = float(np.log(2.0 * np.pi))
ORTHONORMAL_TOL = 1e-10


class DomainTag(str, Enum):
    SOURCE = "source"
    TARGET = "target"


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Samples from one domain, one row per sample.

    Parameters
    ----------
    data : array-like, shape (n, d)
        Finite feature matrix.
    labels : array-like of int, shape (n,), optional
        Class ids, used only for evaluation.
    domain_tag : DomainTag
        Which domain the rows come from.
    """

    data: np.ndarray
    labels: Optional[np.ndarray] = None
    domain_tag: DomainTag = DomainTag.SOURCE

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InputError(f"sample data must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InputError("sample data contains non-finite entries")
        object.__setattr__(self, "data", _readonly(data))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (data.shape[0],):
                raise InputError(
                    f"labels must have length {data.shape[0]}, got shape {labels.shape}"
                )
            labels = np.array(labels, dtype=np.int64, copy=True)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "domain_tag", DomainTag(self.domain_tag))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    @property
    def has_labels(self):
        return self.labels is not None


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """A ``d x p`` matrix with orthonormal columns."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 2:
            raise InputError(f"projection must be 2-D, got shape {w.shape}")
        d, p = w.shape
        if not 1 <= p <= d:
            raise InputError(f"projection needs 1 <= p <= d, got d={d}, p={p}")
        if not np.all(np.isfinite(w)):
            raise InputError("projection contains non-finite entries")
        err = orthonormality_error(w)
        if err > ORTHONORMAL_TOL:
            raise InputError(f"projection columns are not orthonormal (||W^T W - I||_F = {err:.3e})")
        object.__setattr__(self, "w", _readonly(w))

    @property
    def d(self):
        return self.w.shape[0]

    @property
    def p(self):
        return self.w.shape[1]


@dataclass(frozen=True, eq=False)
class Bandwidth:
    """Diagonal kernel covariance: one variance per projected coordinate."""

    variances: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.variances, dtype=np.float64))
        if v.ndim != 1 or v.size < 1:
            raise InputError(f"bandwidth must be a non-empty vector, got shape {v.shape}")
        if not (np.all(np.isfinite(v)) and np.all(v > 0)):
            raise InputError("bandwidth variances must be finite and strictly positive")
        object.__setattr__(self, "variances", _readonly(v))

    @property
    def p(self):
        return self.variances.size


MatrixLike = Union[ProjectionMatrix, np.ndarray]


def as_matrix(w):
    """Return the raw array of a :class:`ProjectionMatrix` or array-like."""
    if isinstance(w, ProjectionMatrix):
        return w.w
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise InputError(f"projection must be 2-D, got shape {w.shape}")
    return w


def as_variances(bw):
    if isinstance(bw, Bandwidth):
        return bw.variances
    return Bandwidth(bw).variances


def orthonormality_error(w):
    """Frobenius norm of ``W^T W - I``."""
    w = as_matrix(w)
    return float(np.linalg.norm(w.T @ w - np.eye(w.shape[1])))


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Samples bound to a projection and a bandwidth.

    ``projection`` may be any ``d x p`` array; orthonormality is only enforced
    when a :class:`ProjectionMatrix` is passed. Off-manifold matrices are
    needed for finite-difference probes.
    """

    samples: SampleSet
    projection: MatrixLike
    bandwidth: Bandwidth

    def __post_init__(self):
        w = as_matrix(self.projection)
        if not isinstance(self.bandwidth, Bandwidth):
            object.__setattr__(self, "bandwidth", Bandwidth(self.bandwidth))
        if w.shape[0] != self.samples.d:
            raise InputError(
                f"projection has {w.shape[0]} rows but samples have d={self.samples.d}"
            )
        if self.bandwidth.p != w.shape[1]:
            raise InputError(
                f"bandwidth length {self.bandwidth.p} != projection columns {w.shape[1]}"
            )

    @property
    def w(self):
        return as_matrix(self.projection)

    @property
    def variances(self):
        return self.bandwidth.variances

    def log_norm_const(self):
        """log of (2 pi)^{-p/2} |H|^{-1/2}."""
        v = self.variances
        return -0.5 * v.size * LOG_2PI - 0.5 * float(np.sum(np.log(v)))


# ---------------------------------------------------------------------------
# batched kernels (rows of ``queries`` are independent)
# ---------------------------------------------------------------------------


def pairwise_terms(queries, samples, w, variances, exclude=None):
    """Differences, projected differences and log-kernels for all pairs.

    Returns ``(diff, proj, log_k)`` with shapes ``(m, n, d)``, ``(m, n, p)``
    and ``(m, n)``. ``exclude[j]`` (if given) is a sample index whose kernel
    is dropped for query ``j``; ``-1`` keeps every sample.
    """
    diff = queries[:, None, :] - samples[None, :, :]
    proj = diff @ w
    log_k = -0.5 * np.sum(proj * proj / variances, axis=-1)
    if exclude is not None:
        rows = np.flatnonzero(exclude >= 0)
        log_k[rows, exclude[rows]] = -np.inf
    return diff, proj, log_k


def softmax_rows(log_k):
    top = np.max(log_k, axis=1, keepdims=True)
    e = np.exp(log_k - top)
    return e / np.sum(e, axis=1, keepdims=True)


def batch_log_density(log_k, log_const, n_terms):
    return logsumexp(log_k, axis=1) - np.log(n_terms) + log_const


def batch_log_density_gradient(weights, diff, proj, variances):
    """Per-query ``-C(x) W H^{-1}``, shape ``(m, d, p)``."""
    return -np.einsum("mi,mid,mip->mdp", weights, diff, proj / variances)


# ---------------------------------------------------------------------------
# single-query operations
# ---------------------------------------------------------------------------


def _query(model, query):
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.size != model.samples.d:
        raise InputError(f"query has length {q.size}, expected d={model.samples.d}")
    if not np.all(np.isfinite(q)):
        raise InputError("query contains non-finite entries")
    return q[None, :]


def _terms(model, query):
    return pairwise_terms(_query(model, query), model.samples.data, model.w, model.variances)


def kernel_value(model, query, sample_index):
    """Unnormalized Gaussian kernel between ``query`` and one sample; in (0, 1]."""
    if not 0 <= sample_index < model.samples.n:
        raise InputError(f"sample_index {sample_index} out of range for n={model.samples.n}")
    q = _query(model, query)
    delta = q[0] - model.samples.data[sample_index]
    u = delta @ model.w
    return float(np.exp(-0.5 * np.sum(u * u / model.variances)))


def softmax_weights(model, query):
    """Kernel weights normalized to sum to one over the samples."""
    _, _, log_k = _terms(model, query)
    return softmax_rows(log_k)[0]


def log_density(model, query):
    """Log of the normalized projected KDE at ``query`` (log-sum-exp)."""
    _, _, log_k = _terms(model, query)
    return float(batch_log_density(log_k, model.log_norm_const(), model.samples.n)[0])


def scatter_matrix(model, query):
    """Weighted scatter ``sum_i a_i (x - x_i)(x - x_i)^T``, shape ``(d, d)``."""
    diff, _, log_k = _terms(model, query)
    a = softmax_rows(log_k)[0]
    delta = diff[0]
    c = (delta * a[:, None]).T @ delta
    # exact symmetry; the product above is symmetric only up to rounding
    return 0.5 * (c + c.T)


def log_density_gradient(model, query):
    """Gradient of :func:`log_density` w.r.t. ``W`` with the bandwidth frozen."""
    diff, proj, log_k = _terms(model, query)
    return batch_log_density_gradient(softmax_rows(log_k), diff, proj, model.variances)[0]
