"""Fixed-length video encodings: bag-of-words and Fisher vectors.

Per-video descriptor matrices are turned into comparable vectors in two
ways.  A codebook learned by k-means yields an L1-normalized hard
assignment histogram ("bow").  A diagonal-covariance Gaussian mixture
fitted by EM yields a Fisher vector ("fv"): the concatenated gradients
of the video's average log-likelihood with respect to the component
means and variances, whitened by the mixture parameters, then passed
through signed-square-root power normalization and L2-normalized.

Both trainers are seeded and single-threaded, so a fixed seed produces
bit-identical models and encodings on one platform.  Trained models are
immutable; encoding different videos in parallel is safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .dataset import atomic_write_text

BOW = "bow"
FV = "fv"

# Reciprocal-weight normalization downstream cannot take 1/0, so zero
# distances between duplicate vectors are floored by this epsilon.
DISTANCE_EPSILON = 1e-12


@dataclass(frozen=True, eq=False)
class EncodedVector:
    """A fixed-length vector of one kind ("bow" or "fv")."""

    values: np.ndarray
    kind: str


@dataclass(frozen=True, eq=False)
class Codebook:
    """k-means centers for bag-of-words encoding.

    `inertia_history` records the sum of squared distances to the
    nearest center after every assignment step (non-increasing).
    """

    centers: np.ndarray
    inertia_history: list[float]

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Diagonal-covariance Gaussian mixture.

    `log_likelihood_history` records the per-point average
    log-likelihood after every EM iteration (non-decreasing up to
    floating-point slack).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood_history: list[float]

    @property
    def components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def subsample(
    descriptor_sets: list[np.ndarray], fraction: float, seed: int
) -> np.ndarray:
    """Pool a per-video random sample of descriptors for model training.

    From each video, ceil(fraction * rows) descriptors are drawn
    uniformly without replacement with a generator seeded once, so the
    pool is deterministic for a fixed seed and input order.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if not descriptor_sets:
        raise ValueError("no descriptor sets to subsample")
    rng = np.random.default_rng(seed)
    picked = []
    for item in descriptor_sets:
        values = np.asarray(getattr(item, "values", item), dtype=np.float64)
        count = math.ceil(fraction * values.shape[0])
        idx = rng.choice(values.shape[0], size=count, replace=False)
        picked.append(values[np.sort(idx)])
    return np.vstack(picked)


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, points x centers."""
    sq = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.maximum(sq, 0.0)


def _kmeans_pp_init(
    pool: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Seeded k-means++ center selection (D^2 sampling)."""
    n = pool.shape[0]
    centers = np.empty((k, pool.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = pool[first]
    closest = _squared_distances(pool, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # All remaining points coincide with chosen centers; caller
            # has already verified there are k distinct points.
            raise ValueError("k-means++ exhausted distinct points")
        probs = closest / total
        pick = int(rng.choice(n, p=probs))
        centers[j] = pool[pick]
        closest = np.minimum(closest, _squared_distances(pool, centers[j : j + 1])[:, 0])
    return centers


def train_kmeans(
    pool: np.ndarray, size: int, seed: int, max_iters: int = 100
) -> Codebook:
    """Fit a codebook with k-means++ seeding and Lloyd's iterations.

    Stops when the hard assignments are stable or after `max_iters`.
    The recorded inertia sequence is non-increasing.
    """
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2:
        raise ValueError("pool must be a 2-D matrix of descriptors")
    n = pool.shape[0]
    if size < 1:
        raise ValueError(f"codebook size must be >= 1, got {size}")
    if size > n:
        raise ValueError(f"codebook size {size} exceeds pool size {n}")
    distinct = np.unique(pool, axis=0).shape[0]
    if distinct < size:
        raise ValueError(
            f"pool has only {distinct} distinct descriptors "
            f"(duplicates) for {size} centers"
        )
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(pool, size, rng)
    inertia_history: list[float] = []
    labels = None
    for _ in range(max_iters):
        sq = _squared_distances(pool, centers)
        new_labels = np.argmin(sq, axis=1)
        inertia_history.append(float(sq[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(size):
            members = pool[labels == j]
            if members.shape[0] > 0:
                centers[j] = members.mean(axis=0)
            # An empty cluster keeps its previous center; inertia is
            # unaffected since no point is assigned to it.
    return Codebook(centers=centers, inertia_history=inertia_history)


def encode_bow(codebook: Codebook, descriptors: np.ndarray) -> EncodedVector:
    """Hard-assignment histogram over codebook centers, L1-normalized.

    Ties in the nearest-center assignment go to the lowest center index.
    """
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.shape[1] != codebook.dim:
        raise ValueError(
            f"descriptor dim {descriptors.shape[1]} != codebook dim {codebook.dim}"
        )
    labels = np.argmin(_squared_distances(descriptors, codebook.centers), axis=1)
    hist = np.bincount(labels, minlength=codebook.size).astype(np.float64)
    return EncodedVector(values=hist / hist.sum(), kind=BOW)


def _variance_floor(pool: np.ndarray) -> np.ndarray:
    """Per-dimension EM variance floor: 1e-6 * pool variance, min 1e-12."""
    return np.maximum(1e-6 * pool.var(axis=0), 1e-12)


def _log_gaussians(
    points: np.ndarray, means: np.ndarray, variances: np.ndarray
) -> np.ndarray:
    """log N(x | mean_k, diag var_k) for every point/component pair."""
    log_det = np.sum(np.log(2.0 * np.pi * variances), axis=1)
    diff = points[:, None, :] - means[None, :, :]
    mahalanobis = np.sum(diff**2 / variances[None, :, :], axis=2)
    return -0.5 * (log_det[None, :] + mahalanobis)


def gmm_posteriors(gmm: GmmModel, points: np.ndarray) -> np.ndarray:
    """Component responsibilities for each point (rows sum to 1)."""
    log_joint = _log_gaussians(points, gmm.means, gmm.variances) + np.log(
        gmm.weights
    )
    return np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))


def train_gmm(
    pool: np.ndarray,
    components: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> GmmModel:
    """Fit a diagonal-covariance mixture by EM.

    Means initialize from an internal k-means run, weights start
    uniform and variances start at the pooled per-dimension variance.
    Iterations stop when the per-point average log-likelihood improves
    by less than `tol`, or at `max_iters`.  Variances are floored every
    step to keep components from collapsing onto duplicate points.
    """
    pool = np.asarray(pool, dtype=np.float64)
    n = pool.shape[0]
    if components < 1:
        raise ValueError(f"component count must be >= 1, got {components}")
    if components > n:
        raise ValueError(f"component count {components} exceeds pool size {n}")
    floor = _variance_floor(pool)
    means = (
        pool.mean(axis=0, keepdims=True).copy()
        if components == 1
        else train_kmeans(pool, components, seed, max_iters=50).centers.copy()
    )
    weights = np.full(components, 1.0 / components)
    variances = np.tile(np.maximum(pool.var(axis=0), floor), (components, 1))
    history: list[float] = []
    for _ in range(max_iters):
        log_joint = _log_gaussians(pool, means, variances) + np.log(weights)
        log_norm = logsumexp(log_joint, axis=1, keepdims=True)
        resp = np.exp(log_joint - log_norm)
        history.append(float(log_norm.mean()))
        counts = resp.sum(axis=0)
        safe = np.maximum(counts, 1e-300)
        weights = counts / n
        means = (resp.T @ pool) / safe[:, None]
        second = (resp.T @ (pool**2)) / safe[:, None]
        variances = np.maximum(second - means**2, floor)
        if weights.min() <= 0.0:
            # A starved component would break the simplex invariant;
            # renormalize away from exact zero.
            weights = np.maximum(weights, 1e-12)
            weights = weights / weights.sum()
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break
    return GmmModel(
        weights=weights,
        means=means,
        variances=variances,
        log_likelihood_history=history,
    )


def fisher_gradients(
    gmm: GmmModel, descriptors: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Raw (pre-normalization) Fisher gradient blocks for one video.

    Returns the mean-gradient and variance-gradient matrices, each
    components x dim.  The mean block vanishes when every descriptor
    sits at its component's mean.
    """
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.shape[1] != gmm.dim:
        raise ValueError(
            f"descriptor dim {descriptors.shape[1]} != model dim {gmm.dim}"
        )
    t = descriptors.shape[0]
    resp = gmm_posteriors(gmm, descriptors)
    sigma = np.sqrt(gmm.variances)
    diff = (descriptors[:, None, :] - gmm.means[None, :, :]) / sigma[None, :, :]
    root_w = np.sqrt(gmm.weights)[:, None]
    grad_means = np.einsum("tk,tkd->kd", resp, diff) / (t * root_w)
    grad_vars = np.einsum("tk,tkd->kd", resp, diff**2 - 1.0) / (
        t * np.sqrt(2.0) * root_w
    )
    return grad_means, grad_vars


def encode_fisher(gmm: GmmModel, descriptors: np.ndarray) -> EncodedVector:
    """Normalized Fisher vector of one video (length 2 * components * dim).

    Concatenates the mean-gradient block and the variance-gradient
    block, applies signed-square-root power normalization, then L2
    normalization.  A video whose raw gradients are identically zero
    encodes to the zero vector (nothing to normalize).
    """
    grad_means, grad_vars = fisher_gradients(gmm, descriptors)
    raw = np.concatenate([grad_means.ravel(), grad_vars.ravel()])
    powered = np.sign(raw) * np.sqrt(np.abs(raw))
    norm = np.linalg.norm(powered)
    if norm > 0.0:
        powered = powered / norm
    return EncodedVector(values=powered, kind=FV)


def distance(a: EncodedVector, b: EncodedVector) -> float:
    """Euclidean distance between two encodings of the same kind."""
    if a.kind != b.kind:
        raise ValueError(f"encoding kind mismatch: {a.kind!r} vs {b.kind!r}")
    if a.values.shape != b.values.shape:
        raise ValueError(
            f"encoding length mismatch: {a.values.shape} vs {b.values.shape}"
        )
    return float(np.linalg.norm(a.values - b.values))


def _format_row(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(model: Codebook | GmmModel, path: str | Path) -> None:
    """Write a codebook or mixture as text; load_model round-trips exactly."""
    lines = []
    if isinstance(model, Codebook):
        lines.append(f"{BOW} {model.size} {model.dim}")
        for row in model.centers:
            lines.append(_format_row(row))
    elif isinstance(model, GmmModel):
        lines.append(f"{FV} {model.components} {model.dim}")
        lines.append(_format_row(model.weights))
        for row in model.means:
            lines.append(_format_row(row))
        for row in model.variances:
            lines.append(_format_row(row))
    else:
        raise TypeError(f"cannot save model of type {type(model).__name__}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_model(path: str | Path) -> Codebook | GmmModel:
    """Read a model file written by save_model."""
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty model file")
    header = lines[0].split()
    if len(header) != 3 or header[0] not in (BOW, FV):
        raise ValueError(f"{path}: bad model header {lines[0]!r}")
    kind, gamma, dim = header[0], int(header[1]), int(header[2])
    body = [np.array([float(v) for v in ln.split()]) for ln in lines[1:]]
    if kind == BOW:
        if len(body) != gamma or any(row.shape[0] != dim for row in body):
            raise ValueError(f"{path}: codebook body does not match header")
        return Codebook(centers=np.vstack(body), inertia_history=[])
    if len(body) != 1 + 2 * gamma:
        raise ValueError(f"{path}: mixture body does not match header")
    weights = body[0]
    if weights.shape[0] != gamma:
        raise ValueError(f"{path}: expected {gamma} weights, got {weights.shape[0]}")
    means = np.vstack(body[1 : 1 + gamma])
    variances = np.vstack(body[1 + gamma :])
    if means.shape != (gamma, dim) or variances.shape != (gamma, dim):
        raise ValueError(f"{path}: mixture rows do not match header dims")
    return GmmModel(
        weights=weights, means=means, variances=variances, log_likelihood_history=[]
    )


def encoder_kind(model: Codebook | GmmModel) -> str:
    """The EncodedVector kind a model produces."""
    return BOW if isinstance(model, Codebook) else FV


def encode(model: Codebook | GmmModel, descriptors: np.ndarray) -> EncodedVector:
    """Encode one video with whichever model was trained."""
    if isinstance(model, Codebook):
        return encode_bow(model, descriptors)
    return encode_fisher(model, descriptors)
