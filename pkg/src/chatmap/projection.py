"""2D reference layouts by neighbor embedding, plus parametric projection.

The reference layout minimizes

    loss = -sum_edges w_ij * log q_ij  -  gamma * sum_negatives log(1 - q_in),
    q    = 1 / (1 + ||y_i - y_j||^2)

by per-edge stochastic gradient steps with negative sampling (the symmetrized
k-NN graph supplies the edges and weights).  A small MLP (affine -> relu ->
affine) is then regressed onto the layout so points never seen during layout
optimization can be projected quickly; one model is trained per language.

Everything is deterministic for a fixed seed: PCA initialization, an explicit
xorshift64* RNG inside the JIT-compiled edge loop, and seeded numpy Generators
elsewhere.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass

import numba
import numpy as np

from . import binio
from .errors import (
    DimensionMismatch,
    FormatError,
    InvalidArg,
    LanguageMismatch,
    NonFinite,
    NotFound,
    TooManyPoints,
)

MODEL_MAGIC = b"WVPM"
MODEL_VERSION = 1

# Exact k-NN is quadratic; beyond this, callers must subsample (display
# subsets are 1,500 per dataset, far below the limit).
MAX_EXACT_KNN_POINTS = 20_000

_GRAD_CLIP = 4.0
_REPULSION_EPS = 1e-3
_SIGMA_TOL = 1e-6
_SIGMA_ITERS = 64


@dataclass(frozen=True)
class LayoutParams:
    k_neighbors: int = 15
    epochs: int = 200
    learning_rate: float = 1.0
    negatives_per_edge: int = 5
    repulsion_weight: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 2:
            raise InvalidArg("k_neighbors must be >= 2")
        if self.epochs < 1:
            raise InvalidArg("epochs must be >= 1")


@dataclass
class NeighborGraph:
    """Symmetrized weighted k-NN graph; directed edges stored both ways."""

    n_points: int
    heads: np.ndarray   # int64 (n_edges,)
    tails: np.ndarray   # int64 (n_edges,)
    weights: np.ndarray  # float64 (n_edges,)
    X: np.ndarray       # float64 (n_points, dim); retained for initialization


@dataclass
class ReferenceLayout:
    point_ids: list[str]
    Y: np.ndarray               # float64 (n, 2)
    loss_trace: list[float]

    def validate(self) -> None:
        if len(self.point_ids) != len(self.Y):
            raise InvalidArg("point_ids and Y lengths differ")
        if not np.all(np.isfinite(self.Y)):
            raise NonFinite("layout contains non-finite coordinates")
        tail = self.loss_trace[-max(1, len(self.loss_trace) // 10):]
        for prev, cur in zip(tail, tail[1:]):
            if cur > prev * 1.05:
                raise InvalidArg(f"loss trace rose by >5% near the end: {prev} -> {cur}")


# ---------------------------------------------------------------------------
# k-NN graph
# ---------------------------------------------------------------------------


def _pairwise_block(Xc: np.ndarray, X: np.ndarray, x2: np.ndarray, xc2: np.ndarray) -> np.ndarray:
    d2 = xc2[:, None] + x2[None, :] - 2.0 * (Xc @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def _solve_sigma(dists: np.ndarray, rho: float, target: float) -> float:
    """Bisect sigma so sum(exp(-(d - rho)/sigma)) == target (monotone in sigma)."""
    shifted = dists - rho
    if np.all(shifted <= 0.0):
        # every neighbor at distance rho: the sum is constant; sigma is moot
        return 1.0
    lo, hi, mid = 0.0, math.inf, 1.0
    for _ in range(_SIGMA_ITERS):
        s = float(np.exp(-shifted / mid).sum())
        if abs(s - target) < _SIGMA_TOL:
            break
        if s > target:
            hi = mid
            mid = (lo + hi) / 2.0
        else:
            lo = mid
            mid = mid * 2.0 if math.isinf(hi) else (lo + hi) / 2.0
    return mid


def smooth_weights(dists: np.ndarray, k: int) -> tuple[np.ndarray, float, float]:
    """Edge weights exp(-(d - rho)/sigma) with sigma calibrated to log2(k).

    `dists` are one point's ascending distances to its k nearest neighbors.
    Duplicate-heavy input (all k neighbors at distance 0) falls back to
    rho = 0, sigma = 1.
    """
    target = math.log2(k)
    if dists[-1] <= 0.0:
        rho, sigma = 0.0, 1.0
    else:
        rho = float(dists[0])
        sigma = _solve_sigma(dists, rho, target)
    w = np.exp(-(dists - rho) / sigma)
    np.minimum(w, 1.0, out=w)
    return w, rho, sigma


def knn_graph(X, k: int) -> NeighborGraph:
    """Exact k-NN graph with smoothed, symmetrized weights.

    Raises TooManyPoints above the exact-search limit and InvalidArg unless
    len(X) > k.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    n = len(X)
    if n > MAX_EXACT_KNN_POINTS:
        raise TooManyPoints(
            f"{n} points exceeds the exact k-NN limit of {MAX_EXACT_KNN_POINTS}; subsample first"
        )
    if n <= k:
        raise InvalidArg(f"need more than k={k} points, got {n}")

    x2 = np.einsum("ij,ij->i", X, X)
    neighbor_idx = np.empty((n, k), dtype=np.int64)
    neighbor_dist = np.empty((n, k), dtype=np.float64)
    block = max(1, min(n, 8_388_608 // max(n, 1)))
    for start in range(0, n, block):
        stop = min(n, start + block)
        d = _pairwise_block(X[start:stop], X, x2, x2[start:stop])
        for r in range(stop - start):
            d[r, start + r] = np.inf  # exclude self
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        neighbor_idx[start:stop] = order
        neighbor_dist[start:stop] = np.take_along_axis(d, order, axis=1)

    directed: dict[tuple[int, int], float] = {}
    for i in range(n):
        w, _, _ = smooth_weights(neighbor_dist[i], k)
        for j_pos in range(k):
            directed[(i, int(neighbor_idx[i, j_pos]))] = float(w[j_pos])

    undirected: dict[tuple[int, int], float] = {}
    for (i, j) in directed:
        a, b = (i, j) if i < j else (j, i)
        if (a, b) not in undirected:
            w1 = directed.get((a, b), 0.0)
            w2 = directed.get((b, a), 0.0)
            undirected[(a, b)] = w1 + w2 - w1 * w2

    pairs = sorted(undirected)
    heads = np.empty(2 * len(pairs), dtype=np.int64)
    tails = np.empty(2 * len(pairs), dtype=np.int64)
    weights = np.empty(2 * len(pairs), dtype=np.float64)
    for e, (a, b) in enumerate(pairs):
        heads[2 * e], tails[2 * e], weights[2 * e] = a, b, undirected[(a, b)]
        heads[2 * e + 1], tails[2 * e + 1], weights[2 * e + 1] = b, a, undirected[(a, b)]
    return NeighborGraph(n_points=n, heads=heads, tails=tails, weights=weights, X=X)


# ---------------------------------------------------------------------------
# Per-edge loss terms (exact analytic forms; finite-difference checked)
# ---------------------------------------------------------------------------


def attraction_loss(yi, yj, w: float) -> float:
    d2 = float(np.sum((np.asarray(yi) - np.asarray(yj)) ** 2))
    return w * math.log1p(d2)


def attraction_grad(yi, yj, w: float) -> tuple[np.ndarray, np.ndarray]:
    yi = np.asarray(yi, dtype=np.float64)
    yj = np.asarray(yj, dtype=np.float64)
    u = yi - yj
    g = (2.0 * w / (1.0 + float(u @ u))) * u
    return g, -g


def repulsion_loss(yi, yn, gamma: float) -> float:
    d2 = float(np.sum((np.asarray(yi) - np.asarray(yn)) ** 2))
    return gamma * (math.log1p(d2) - math.log(d2))


def repulsion_grad(yi, yn, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    yi = np.asarray(yi, dtype=np.float64)
    yn = np.asarray(yn, dtype=np.float64)
    u = yi - yn
    d2 = float(u @ u)
    g = (-2.0 * gamma / (d2 * (1.0 + d2))) * u
    return g, -g


# ---------------------------------------------------------------------------
# Layout optimization
# ---------------------------------------------------------------------------


@numba.njit(inline="always")
def _rand_u64(state):
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(0x2545F4914F6CDD1D)


@numba.njit(inline="always")
def _clip(v):
    if v > _GRAD_CLIP:
        return _GRAD_CLIP
    if v < -_GRAD_CLIP:
        return -_GRAD_CLIP
    return v


@numba.njit(cache=True)
def _run_epoch(Y, heads, tails, weights, alpha, n_negatives, gamma, state):
    n = Y.shape[0]
    for e in range(heads.shape[0]):
        i = heads[e]
        j = tails[e]
        w = weights[e]
        dx = Y[i, 0] - Y[j, 0]
        dy = Y[i, 1] - Y[j, 1]
        d2 = dx * dx + dy * dy
        coeff = -2.0 * w / (1.0 + d2)
        Y[i, 0] += alpha * _clip(coeff * dx)
        Y[i, 1] += alpha * _clip(coeff * dy)
        for _ in range(n_negatives):
            nidx = int(_rand_u64(state) >> np.uint64(32)) % n
            if nidx == i:
                continue
            ux = Y[i, 0] - Y[nidx, 0]
            uy = Y[i, 1] - Y[nidx, 1]
            d2n = ux * ux + uy * uy
            coeff_n = 2.0 * gamma / ((d2n + _REPULSION_EPS) * (1.0 + d2n))
            Y[i, 0] += alpha * _clip(coeff_n * ux)
            Y[i, 1] += alpha * _clip(coeff_n * uy)


def pca_init(X: np.ndarray) -> np.ndarray:
    """First two principal components, each axis scaled to unit std.

    Component signs are fixed (largest-magnitude loading made positive) so the
    initialization is deterministic.
    """
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = Vt[:2].copy()
    for c in range(comps.shape[0]):
        jmax = int(np.argmax(np.abs(comps[c])))
        if comps[c, jmax] < 0:
            comps[c] *= -1.0
    Y = Xc @ comps.T
    if Y.shape[1] < 2:
        Y = np.hstack([Y, np.zeros((len(Y), 2 - Y.shape[1]))])
    std = Y.std(axis=0)
    std[std == 0] = 1.0
    return np.ascontiguousarray(Y / std, dtype=np.float64)


def _trace_loss(Y, heads, tails, weights, gamma, neg_heads, neg_tails) -> float:
    d2 = np.sum((Y[heads] - Y[tails]) ** 2, axis=1)
    attract = float(np.sum(weights * np.log1p(d2)))
    nd2 = np.sum((Y[neg_heads] - Y[neg_tails]) ** 2, axis=1)
    nd2 = np.maximum(nd2, 1e-12)
    repulse = float(gamma * np.sum(np.log1p(nd2) - np.log(nd2)))
    return attract + repulse


def optimize_layout(graph: NeighborGraph, params: LayoutParams, point_ids=None) -> ReferenceLayout:
    """Run the attraction/repulsion schedule; deterministic per rng_seed."""
    n = graph.n_points
    if point_ids is None:
        point_ids = [str(i) for i in range(n)]
    if len(point_ids) != n:
        raise InvalidArg("point_ids length != graph size")

    Y = pca_init(graph.X)
    state = np.array([np.uint64(params.rng_seed) ^ np.uint64(0x9E3779B97F4A7C15)], dtype=np.uint64)
    if state[0] == 0:
        state[0] = np.uint64(1)

    # Fixed negative pairs for the per-epoch loss estimate (reporting only).
    trace_rng = np.random.default_rng(params.rng_seed + 1)
    m = min(max(len(graph.heads), 1024), 65_536)
    neg_heads = trace_rng.integers(0, n, m)
    neg_tails = trace_rng.integers(0, n, m)
    keep = neg_heads != neg_tails
    neg_heads, neg_tails = neg_heads[keep], neg_tails[keep]

    loss_trace = []
    for epoch in range(params.epochs):
        alpha = params.learning_rate * (1.0 - epoch / params.epochs)
        _run_epoch(Y, graph.heads, graph.tails, graph.weights, alpha,
                   params.negatives_per_edge, params.repulsion_weight, state)
        if not np.all(np.isfinite(Y)):
            bad = int(np.argmin(np.isfinite(Y).all(axis=1)))
            raise NonFinite(f"non-finite coordinate for point {bad} at epoch {epoch}")
        loss_trace.append(_trace_loss(Y, graph.heads, graph.tails, graph.weights,
                                      params.repulsion_weight, neg_heads, neg_tails))

    return ReferenceLayout(point_ids=list(point_ids), Y=Y, loss_trace=loss_trace)


# ---------------------------------------------------------------------------
# Parametric projector
# ---------------------------------------------------------------------------


def mlp_forward(params: dict[str, np.ndarray], X: np.ndarray) -> np.ndarray:
    Z = X @ params["W1"].T + params["b1"]
    A = np.maximum(Z, 0.0)
    return A @ params["W2"].T + params["b2"]


def mlp_loss_and_grad(params: dict[str, np.ndarray], X: np.ndarray, Y: np.ndarray):
    """Mean-squared-error loss (mean over all output elements) and gradients."""
    Z = X @ params["W1"].T + params["b1"]
    A = np.maximum(Z, 0.0)
    P = A @ params["W2"].T + params["b2"]
    E = P - Y
    loss = float(np.mean(E * E))
    dP = (2.0 / E.size) * E
    gW2 = dP.T @ A
    gb2 = dP.sum(axis=0)
    dA = dP @ params["W2"]
    dZ = dA * (Z > 0.0)
    gW1 = dZ.T @ X
    gb1 = dZ.sum(axis=0)
    return loss, {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2}


@dataclass
class ProjectorModel:
    """Per-language map from embedding space to the 2D layout plane.

    Parameters are float32 (exactly what the WVPM file stores); the forward
    pass runs in float64, so save/load round-trips reproduce projections
    bit-for-bit.
    """

    language: str
    input_mean: np.ndarray
    input_scale: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    train_rmse: float

    @property
    def dimension(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def _params64(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k).astype(np.float64) for k in ("W1", "b1", "W2", "b2")}

    def project_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise DimensionMismatch(f"expected (n, {self.dimension}), got {X.shape}")
        Xs = (X - self.input_mean.astype(np.float64)) / self.input_scale.astype(np.float64)
        return mlp_forward(self._params64(), Xs)

    def project(self, v) -> tuple[float, float]:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dimension,):
            raise DimensionMismatch(f"expected dimension {self.dimension}, got shape {v.shape}")
        out = self.project_many(v[None, :])[0]
        return float(out[0]), float(out[1])


def project(model: ProjectorModel, v) -> tuple[float, float]:
    return model.project(v)


def ensure_language(model: ProjectorModel, language: str) -> None:
    if model.language.casefold() != language.casefold():
        raise LanguageMismatch(f"model is for {model.language!r}, record is {language!r}")


def project_for_language(model: ProjectorModel, v, language: str) -> tuple[float, float]:
    ensure_language(model, language)
    return model.project(v)


def fit_projector(
    X,
    layout: ReferenceLayout,
    language: str,
    *,
    hidden: int = 64,
    epochs: int = 400,
    batch_size: int = 128,
    learning_rate: float = 3e-2,
    seed: int = 0,
) -> ProjectorModel:
    """Regress the reference layout onto the embeddings with Adam mini-batches."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(layout.Y, dtype=np.float64)
    if len(X) != len(Y):
        raise InvalidArg(f"{len(X)} inputs vs {len(Y)} layout points")
    n, dim = X.shape

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (X - mean) / scale

    rng = np.random.default_rng(seed)
    params = {
        "W1": rng.normal(0.0, math.sqrt(2.0 / dim), size=(hidden, dim)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, math.sqrt(2.0 / hidden), size=(2, hidden)),
        "b2": Y.mean(axis=0).copy(),
    }
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(vv) for k, vv in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    step = 0
    for epoch in range(epochs):
        # cosine decay: plateaus at a constant rate, so anneal toward zero
        lr_epoch = learning_rate * 0.5 * (1.0 + math.cos(math.pi * epoch / epochs))
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            loss, grads = mlp_loss_and_grad(params, Xs[batch], Y[batch])
            if not math.isfinite(loss):
                raise NonFinite(f"projector loss diverged at epoch {epoch}")
            step += 1
            lr_t = lr_epoch * math.sqrt(1 - beta2 ** step) / (1 - beta1 ** step)
            for k in params:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                params[k] -= lr_t * m[k] / (np.sqrt(v[k]) + eps)

    model = ProjectorModel(
        language=language,
        input_mean=mean.astype(np.float32),
        input_scale=scale.astype(np.float32),
        W1=params["W1"].astype(np.float32),
        b1=params["b1"].astype(np.float32),
        W2=params["W2"].astype(np.float32),
        b2=params["b2"].astype(np.float32),
        train_rmse=0.0,
    )
    pred = model.project_many(X)
    model.train_rmse = float(np.sqrt(np.mean(np.sum((pred - Y) ** 2, axis=1))))
    return model


# ---------------------------------------------------------------------------
# Model persistence (WVPM; layout documented in docs/FORMATS.md)
# ---------------------------------------------------------------------------


def _write_f32_array(buf: io.BytesIO, arr: np.ndarray) -> None:
    buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def write_model_bytes(model: ProjectorModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    binio.write_u16(buf, MODEL_VERSION)
    binio.write_str(buf, model.language)
    binio.write_u32(buf, model.dimension)
    binio.write_u32(buf, model.hidden)
    binio.write_f32(buf, model.train_rmse)
    for arr in (model.input_mean, model.input_scale, model.W1, model.b1, model.W2, model.b2):
        _write_f32_array(buf, arr)
    return buf.getvalue()


def read_model_bytes(data: bytes) -> ProjectorModel:
    r = binio.Reader(data)
    r.expect_magic(MODEL_MAGIC)
    version = r.read_u16()
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    language = r.read_str()
    dim = r.read_u32()
    hidden = r.read_u32()
    train_rmse = r.read_f32()

    def take(shape) -> np.ndarray:
        count = int(np.prod(shape))
        raw = r._take(4 * count)  # noqa: SLF001 - reader owns the cursor
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    model = ProjectorModel(
        language=language,
        input_mean=take((dim,)),
        input_scale=take((dim,)),
        W1=take((hidden, dim)),
        b1=take((hidden,)),
        W2=take((2, hidden)),
        b2=take((2,)),
        train_rmse=train_rmse,
    )
    if not r.eof():
        raise FormatError("trailing bytes after model")
    return model


def save_model(model: ProjectorModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_model_bytes(model))


def load_model(path) -> ProjectorModel:
    with open(path, "rb") as fh:
        return read_model_bytes(fh.read())


def model_fingerprint(model_bytes: bytes) -> str:
    """Version tag for coordinate-cache keys: retrained models never collide."""
    return hashlib.sha256(model_bytes).hexdigest()[:16]


class ProjectorRegistry:
    """Maps language (case-insensitive) to its trained projector."""

    def __init__(self):
        self._models: dict[str, ProjectorModel] = {}

    def register(self, model: ProjectorModel) -> None:
        self._models[model.language.casefold()] = model

    def get(self, language: str) -> ProjectorModel:
        try:
            return self._models[language.casefold()]
        except KeyError:
            raise NotFound(f"no projector for language {language!r}") from None

    def languages(self) -> list[str]:
        return sorted(m.language for m in self._models.values())


# ---------------------------------------------------------------------------
# Small clustering metrics (used by the training CLI)
# ---------------------------------------------------------------------------


def kmeans_labels(X, k: int, seed: int = 0, iters: int = 60) -> np.ndarray:
    """Plain Lloyd's k-means with seeded k-means++ init; returns labels."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    rng = np.random.default_rng(seed)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers[c] = X[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        dists = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if mask.any():
                centers[c] = X[mask].mean(axis=0)
    return labels


def silhouette_score(X, labels) -> float:
    """Mean silhouette over all points (full pairwise; fine at subset scale)."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        return 0.0
    d = np.sqrt(np.maximum(
        np.sum(X ** 2, axis=1)[:, None] + np.sum(X ** 2, axis=1)[None, :] - 2 * (X @ X.T), 0))
    scores = np.zeros(len(X))
    for i in range(len(X)):
        same = labels == labels[i]
        same[i] = False
        a = d[i, same].mean() if same.any() else 0.0
        b = math.inf
        for other in uniq:
            if other == labels[i]:
                continue
            mask = labels == other
            b = min(b, d[i, mask].mean())
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())
