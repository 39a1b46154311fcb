"""Data loading, synthetic covariate-shift pairs and transfer evaluation."""

import csv
import math
from dataclasses import dataclass, asdict

import numpy as np

from .density import DomainTag, SampleSet, as_matrix
from .errors import InputError


@dataclass(frozen=True)
class ShiftSpec:
    """Parameters of a two-domain, two-class Gaussian mixture pair.

    The first ``informative_dims`` coordinates carry the class signal; the
    rest are nuisance coordinates. The target domain is rotated by
    ``rotation_angle`` in the plane of the first two nuisance coordinates and
    then translated by ``shift_magnitude`` along the unit vector spread evenly
    over all nuisance coordinates.
    """

    d: int = 4
    n_per_domain: int = 100
    informative_dims: int = 1
    shift_magnitude: float = 0.0
    rotation_angle: float = 0.0
    class_separation: float = 4.0
    seed: int = 0

    def validate(self):
        if self.d < 1:
            raise InputError("d must be >= 1")
        if self.n_per_domain < 2:
            raise InputError("n_per_domain must be >= 2")
        if not 0 <= self.informative_dims <= self.d:
            raise InputError("informative_dims must lie in [0, d]")
        n_nuisance = self.d - self.informative_dims
        if self.shift_magnitude != 0 and n_nuisance < 1:
            raise InputError("a nonzero shift needs at least one nuisance dimension")
        if self.rotation_angle != 0 and n_nuisance < 2:
            raise InputError("a nonzero rotation needs at least two nuisance dimensions")
        for name in ("shift_magnitude", "rotation_angle", "class_separation"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EvalReport:
    accuracy_adapted: float
    accuracy_unadapted: float
    accuracy_pca: float
    n_test: int

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _parse_label(cell, lineno):
    try:
        value = float(cell)
    except ValueError:
        raise InputError(f"line {lineno}: label {cell!r} is not numeric") from None
    if not value.is_integer():
        raise InputError(f"line {lineno}: label {cell!r} is not an integer (missing label column?)")
    return int(value)


def load_csv(path, has_labels=False, domain_tag=DomainTag.SOURCE, header=False):
    """Read a headerless numeric CSV into a :class:`SampleSet`.

    With ``has_labels`` the last column holds integer class ids. ``header``
    skips the first line.
    """
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not record or all(not c.strip() for c in record):
                continue
            if width is None:
                width = len(record)
                if has_labels and width < 2:
                    raise InputError(f"line {lineno}: labeled file needs at least 2 columns")
            elif len(record) != width:
                raise InputError(f"line {lineno}: expected {width} columns, got {len(record)}")
            cells = record[:-1] if has_labels else record
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise InputError(f"line {lineno}: non-numeric cell") from None
            if not all(math.isfinite(v) for v in values):
                raise InputError(f"line {lineno}: non-finite value")
            rows.append(values)
            if has_labels:
                labels.append(_parse_label(record[-1].strip(), lineno))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return SampleSet(
        np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64) if has_labels else None,
        domain_tag=domain_tag,
    )


def format_float(x):
    return repr(float(x))


def write_matrix_csv(fh, data, labels=None):
    """Write rows with shortest round-trip float formatting."""
    data = np.asarray(data, dtype=np.float64)
    for i, row in enumerate(data):
        cells = [format_float(x) for x in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def _draw_domain(rng, spec):
    n, d, k = spec.n_per_domain, spec.d, spec.informative_dims
    labels = rng.integers(0, 2, size=n)
    x = rng.standard_normal((n, d))
    x[:, :k] += ((labels - 0.5) * spec.class_separation)[:, None]
    return x, labels


def make_shift_pair(spec):
    """Labeled source and target sets drawn from ``spec``; deterministic in ``spec.seed``."""
    spec.validate()
    src_seq, tgt_seq = np.random.SeedSequence(spec.seed).spawn(2)
    xs, ys = _draw_domain(np.random.default_rng(src_seq), spec)
    xt, yt = _draw_domain(np.random.default_rng(tgt_seq), spec)
    k, d = spec.informative_dims, spec.d
    if spec.rotation_angle != 0:
        c, s = math.cos(spec.rotation_angle), math.sin(spec.rotation_angle)
        a, b = xt[:, k].copy(), xt[:, k + 1].copy()
        xt[:, k] = c * a - s * b
        xt[:, k + 1] = s * a + c * b
    if spec.shift_magnitude != 0:
        xt[:, k:] += spec.shift_magnitude / math.sqrt(d - k)
    return (
        SampleSet(xs, labels=ys, domain_tag=DomainTag.SOURCE),
        SampleSet(xt, labels=yt, domain_tag=DomainTag.TARGET),
    )


def standardize(source, target):
    """Center and scale both sets by the pooled mean and (ddof=0) std.

    Returns ``(source, target, mean, scale)``.
    """
    if source.d != target.d:
        raise InputError(f"source d={source.d} and target d={target.d} differ")
    pooled = np.vstack([source.data, target.data])
    mean = pooled.mean(axis=0)
    scale = pooled.std(axis=0)
    zero = np.flatnonzero(scale <= 1e-15 * max(1.0, float(np.max(np.abs(pooled)))))
    if zero.size:
        raise InputError(f"zero-variance dimension {int(zero[0])}")

    def apply(s):
        return SampleSet((s.data - mean) / scale, labels=s.labels, domain_tag=s.domain_tag)

    return apply(source), apply(target), mean, scale


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def nearest_neighbor_predict(train_x, train_y, test_x):
    """1-NN labels; equal distances resolve to the lowest training row."""
    preds = np.empty(test_x.shape[0], dtype=np.int64)
    for i, x in enumerate(test_x):
        diff = train_x - x
        dist = np.einsum("ij,ij->i", diff, diff)
        preds[i] = train_y[int(np.argmin(dist))]
    return preds


def knn_transfer_eval(source, target, w):
    """Accuracy on ``target`` of a 1-NN classifier fit on projected ``source``."""
    if not (source.has_labels and target.has_labels):
        raise InputError("transfer evaluation needs labels on both domains")
    w = as_matrix(w)
    if not source.d == target.d == w.shape[0]:
        raise InputError(
            f"dimension mismatch: source d={source.d}, target d={target.d}, projection rows={w.shape[0]}"
        )
    preds = nearest_neighbor_predict(source.data @ w, source.labels, target.data @ w)
    return float(np.mean(preds == target.labels))


def evaluate_transfer(source, target, w, seed=0):
    """Adapted, unadapted (all features) and PCA-baseline 1-NN accuracies."""
    from .optimizer import init_projection

    w = as_matrix(w)
    pca = init_projection(source, target, w.shape[1], seed)
    return EvalReport(
        accuracy_adapted=knn_transfer_eval(source, target, w),
        accuracy_unadapted=knn_transfer_eval(source, target, np.eye(source.d)),
        accuracy_pca=knn_transfer_eval(source, target, pca),
        n_test=target.n,
    )
