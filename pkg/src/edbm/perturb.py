"""Perturbation schemes: forward channel q(y|x) and negative sampling.

Each scheme defines an information-destroying channel and the matching
recovery distribution used to draw negative samples:

  Bernoulli(eps): y = x XOR xi with xi ~ Bernoulli(eps)^d; negatives re-apply
      fresh noise to y.  The channel is symmetric and doubly stochastic.
  MeanPool(window, shape): deterministic block mean-pool.  The pooled value is
      never materialised; negatives are drawn directly as independent uniform
      within-block permutations of the data point, which is exactly uniform on
      the preimage of the pooled value.
  Grid: y flips one uniformly chosen bit; negatives flip one more, landing at
      Hamming distance 0 or 2 from the data point.
  Directed(graph): y uniform on the out-neighbourhood N(x); negatives uniform
      on the in-neighbourhood of y, each carrying the weight K'_y / K_{x-}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bits import all_states, as_bits, hamming, state_index, state_indices


@dataclass(frozen=True)
class Bernoulli:
    eps: float

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")


@dataclass(frozen=True)
class MeanPool:
    window: tuple  # (rows, cols) of one pooling block
    shape: tuple   # (h, w) layout of the flat state, h*w = d

    def __post_init__(self):
        r, c = self.window
        h, w = self.shape
        if h % r != 0 or w % c != 0:
            raise ValueError(f"window {self.window} does not divide shape {self.shape}")

    @property
    def d(self):
        return self.shape[0] * self.shape[1]


@dataclass(frozen=True)
class Grid:
    pass


class NeighbourGraph:
    """Explicit directed neighbourhood structure over all states of dimension d.

    Kept dense (indexed by state integer), so it is only meant for small d.
    """

    def __init__(self, d, out_lists):
        if d > 16:
            raise ValueError("explicit neighbour graphs are limited to d <= 16")
        self.d = d
        n = 1 << d
        if len(out_lists) != n:
            raise ValueError(f"need an out-neighbour list for each of {n} states")
        self.out_lists = [np.asarray(sorted(set(int(v) for v in lst)), dtype=np.int64)
                          for lst in out_lists]
        for i, lst in enumerate(self.out_lists):
            if len(lst) == 0:
                raise ValueError(f"state {i} has no out-neighbours (K_x >= 1 required)")
            if np.any(lst < 0) or np.any(lst >= n):
                raise ValueError(f"state {i} lists an out-of-range neighbour")
        in_lists = [[] for _ in range(n)]
        for x, lst in enumerate(self.out_lists):
            for y in lst:
                in_lists[y].append(x)
        self.in_lists = [np.asarray(lst, dtype=np.int64) for lst in in_lists]
        self.K = np.array([len(lst) for lst in self.out_lists], dtype=np.int64)
        self.K_in = np.array([len(lst) for lst in self.in_lists], dtype=np.int64)

    @classmethod
    def from_edges(cls, d, edges):
        out_lists = [[] for _ in range(1 << d)]
        for x, y in edges:
            out_lists[int(x)].append(int(y))
        return cls(d, out_lists)

    def edges(self):
        return [(x, int(y)) for x in range(1 << self.d) for y in self.out_lists[x]]


@dataclass(frozen=True)
class Directed:
    graph: NeighbourGraph

    @property
    def d(self):
        return self.graph.d


@dataclass
class NegativeBatch:
    """M negatives per positive; weights present only for directed schemes."""

    positives: np.ndarray            # (N, d) uint8
    negatives: np.ndarray            # (N, M, d) uint8
    weights: np.ndarray | None = None  # (N, M) positive reals, or None

    def __post_init__(self):
        if self.negatives.shape[0] != self.positives.shape[0]:
            raise ValueError("one negative block per positive required")
        if self.negatives.shape[2] != self.positives.shape[1]:
            raise ValueError("negatives must share the positives' dimension")

    @property
    def M(self):
        return self.negatives.shape[1]


def scheme_dim(scheme):
    """The state dimension a scheme is tied to, or None if dimension-agnostic."""
    if isinstance(scheme, MeanPool):
        return scheme.d
    if isinstance(scheme, Directed):
        return scheme.d
    return None


def _check_dim(scheme, d):
    tied = scheme_dim(scheme)
    if tied is not None and tied != d:
        raise ValueError(f"scheme dimension {tied} does not match state dimension {d}")


def _bernoulli_noise(eps, shape, rng):
    return (rng.random(shape) < eps).astype(np.uint8)


def _pool_blocks_view(X, window, shape):
    # Reshape (..., d) into (..., n_blocks, block_size): row-major (h, w)
    # layout, blocks tiled left-to-right then top-to-bottom.
    r, c = window
    h, w = shape
    lead = X.shape[:-1]
    B = X.reshape(*lead, h // r, r, w // c, c)
    B = np.moveaxis(B, -3, -2)  # (..., h//r, w//c, r, c)
    return B.reshape(*lead, (h // r) * (w // c), r * c)


def _pool_unblocks(B, window, shape):
    r, c = window
    h, w = shape
    lead = B.shape[:-2]
    B = B.reshape(*lead, h // r, w // c, r, c)
    B = np.moveaxis(B, -2, -3)  # (..., h//r, r, w//c, c)
    return B.reshape(*lead, h * w)


def _pool_permute(X, window, shape, rng):
    # Independent uniform permutation inside every block of every leading cell.
    blocks = _pool_blocks_view(np.asarray(X, dtype=np.uint8), window, shape)
    order = np.argsort(rng.random(blocks.shape), axis=-1)
    permuted = np.take_along_axis(blocks, order, axis=-1)
    return _pool_unblocks(permuted, window, shape)


def pool_preimage_permute(window, shape, x, rng):
    """Uniform block-wise permutation of one state (a uniform preimage draw)."""
    x = as_bits(x)
    if shape[0] * shape[1] != x.shape[0]:
        raise ValueError(f"shape {shape} does not cover a {x.shape[0]}-bit state")
    return _pool_permute(x[None, :], window, shape, rng)[0]


def pool_class_ids(window, shape):
    """Class label of every state: two states share a label iff they pool equal.

    For binary entries the pooled block means are determined by the block
    sums, so the label enumerates the tuple of block sums.
    """
    d = shape[0] * shape[1]
    states = all_states(d)
    sums = _pool_blocks_view(states, window, shape).sum(axis=-1)
    _, ids = np.unique(sums, axis=0, return_inverse=True)
    return ids.astype(np.int64)


def perturb(scheme, x, rng):
    """One forward draw y ~ q(.|x)."""
    x = as_bits(x)
    d = x.shape[0]
    _check_dim(scheme, d)
    if isinstance(scheme, Bernoulli):
        return np.bitwise_xor(x, _bernoulli_noise(scheme.eps, d, rng))
    if isinstance(scheme, Grid):
        y = x.copy()
        k = rng.integers(0, d)
        y[k] ^= 1
        return y
    if isinstance(scheme, MeanPool):
        # The pooled value is never materialised; the forward step is an
        # identity passthrough at the sample level.
        return x.copy()
    if isinstance(scheme, Directed):
        idx = state_index(x)
        out = scheme.graph.out_lists[idx]
        y = out[rng.integers(0, len(out))]
        return _index_to_state_arr(y, d)
    raise TypeError(f"unknown scheme {scheme!r}")


def _index_to_state_arr(i, d):
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)
    return ((int(i) >> shifts) & 1).astype(np.uint8)


def sample_negatives(scheme, x, M, rng):
    """Draw y ~ q(.|x) once, then M recovery draws; one NegativeBatch row."""
    batch = sample_negatives_batch(scheme, as_bits(x)[None, :], M, rng)
    weights = None if batch.weights is None else batch.weights[0]
    return batch.negatives[0], weights


def sample_negatives_batch(scheme, X, M, rng):
    """Vectorised negative sampling for a (N, d) batch of positives."""
    X = np.asarray(X, dtype=np.uint8)
    N, d = X.shape
    if M < 1:
        raise ValueError("M must be >= 1")
    _check_dim(scheme, d)
    if isinstance(scheme, Bernoulli):
        Y = np.bitwise_xor(X, _bernoulli_noise(scheme.eps, (N, d), rng))
        negs = np.bitwise_xor(Y[:, None, :], _bernoulli_noise(scheme.eps, (N, M, d), rng))
        return NegativeBatch(X, negs)
    if isinstance(scheme, Grid):
        Y = X.copy()
        Y[np.arange(N), rng.integers(0, d, size=N)] ^= 1
        negs = np.repeat(Y[:, None, :], M, axis=1)
        flat = negs.reshape(N * M, d)
        flat[np.arange(N * M), rng.integers(0, d, size=N * M)] ^= 1
        return NegativeBatch(X, flat.reshape(N, M, d))
    if isinstance(scheme, MeanPool):
        tiled = np.repeat(X[:, None, :], M, axis=1)
        negs = _pool_permute(tiled, scheme.window, scheme.shape, rng)
        return NegativeBatch(X, negs)
    if isinstance(scheme, Directed):
        g = scheme.graph
        negs = np.empty((N, M, d), dtype=np.uint8)
        weights = np.empty((N, M), dtype=np.float64)
        idx = state_indices(X)
        for i in range(N):
            out = g.out_lists[idx[i]]
            y = int(out[rng.integers(0, len(out))])
            preds = g.in_lists[y]
            if len(preds) == 0:
                raise ValueError(f"perturbed state {y} has an empty in-neighbourhood")
            picks = preds[rng.integers(0, len(preds), size=M)]
            for j, xm in enumerate(picks):
                negs[i, j] = _index_to_state_arr(xm, d)
            weights[i] = g.K_in[y] / g.K[picks]
        return NegativeBatch(X, negs, weights)
    raise TypeError(f"unknown scheme {scheme!r}")


def directed_weight(graph, y, x_prime):
    """The importance weight K'_y / K_{x'} of App.-style directed sampling."""
    yi = state_index(as_bits(y))
    xi = state_index(as_bits(x_prime))
    if xi not in graph.in_lists[yi]:
        raise ValueError(f"state {xi} is not an in-neighbour of {yi}")
    return graph.K_in[yi] / graph.K[xi]


def exact_forward_density(scheme, y, x):
    """The forward channel probability q(y|x) of a single pair."""
    y = as_bits(y)
    x = as_bits(x)
    if y.shape != x.shape:
        raise ValueError("dimension mismatch between y and x")
    d = x.shape[0]
    _check_dim(scheme, d)
    if isinstance(scheme, Bernoulli):
        h = hamming(x, y)
        return float(scheme.eps ** h * (1.0 - scheme.eps) ** (d - h))
    if isinstance(scheme, Grid):
        return 1.0 / d if hamming(x, y) == 1 else 0.0
    if isinstance(scheme, MeanPool):
        # Identity-passthrough convention: the sample-level forward step
        # leaves x unchanged.
        return 1.0 if np.array_equal(x, y) else 0.0
    if isinstance(scheme, Directed):
        xi = state_index(x)
        yi = state_index(y)
        return 1.0 / graph_K(scheme.graph, xi) if yi in scheme.graph.out_lists[xi] else 0.0
    raise TypeError(f"unknown scheme {scheme!r}")


def graph_K(graph, idx):
    return int(graph.K[idx])


def forward_kernel_matrix(scheme, d):
    """Dense forward kernel for enumeration oracles.

    Returns Q with Q[x, y] = q(y|x).  For Bernoulli, Grid, and Directed the
    column space is the 2^d states.  For MeanPool the columns are the pooled
    classes (indicator of membership), since the channel is deterministic.
    """
    if d > 12:
        raise ValueError("dense kernels are limited to d <= 12")
    _check_dim(scheme, d)
    n = 1 << d
    if isinstance(scheme, Bernoulli):
        idx = np.arange(n, dtype=np.int64)
        xor = idx[:, None] ^ idx[None, :]
        h = popcount(xor)
        return scheme.eps ** h * (1.0 - scheme.eps) ** (d - h)
    if isinstance(scheme, Grid):
        Q = np.zeros((n, n))
        idx = np.arange(n, dtype=np.int64)
        for k in range(d):
            Q[idx, idx ^ (1 << k)] = 1.0 / d
        return Q
    if isinstance(scheme, MeanPool):
        ids = pool_class_ids(scheme.window, scheme.shape)
        Q = np.zeros((n, ids.max() + 1))
        Q[np.arange(n), ids] = 1.0
        return Q
    if isinstance(scheme, Directed):
        Q = np.zeros((n, n))
        for x in range(n):
            Q[x, scheme.graph.out_lists[x]] = 1.0 / scheme.graph.K[x]
        return Q
    raise TypeError(f"unknown scheme {scheme!r}")


def popcount(arr):
    """Bit-population count of a non-negative integer array."""
    arr = np.asarray(arr, dtype=np.int64)
    out = np.zeros(arr.shape, dtype=np.int64)
    work = arr.copy()
    while np.any(work):
        out += work & 1
        work >>= 1
    return out


def save_graph_csv(graph, path):
    """Write a neighbour graph as an edge-list CSV with a dimension header."""
    with open(path, "w") as f:
        f.write(f"# d={graph.d}\n")
        for x, y in graph.edges():
            f.write(f"{x},{y}\n")


def load_graph_csv(path):
    """Read a neighbour graph written by save_graph_csv."""
    d = None
    edges = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line.lstrip("#").split():
                    if tok.startswith("d="):
                        d = int(tok[2:])
                continue
            a, b = line.split(",")
            edges.append((int(a), int(b)))
    if d is None:
        raise ValueError(f"graph file {path} is missing the '# d=<dim>' header")
    return NeighbourGraph.from_edges(d, edges)


def scheme_to_config(scheme):
    """JSON-ready descriptor of a scheme (graphs serialise as a file path)."""
    if isinstance(scheme, Bernoulli):
        return {"type": "bernoulli", "eps": scheme.eps}
    if isinstance(scheme, MeanPool):
        return {"type": "pool", "window": list(scheme.window), "shape": list(scheme.shape)}
    if isinstance(scheme, Grid):
        return {"type": "grid"}
    raise TypeError(f"scheme {scheme!r} has no config form")


def scheme_from_config(cfg):
    """Build a scheme from its JSON descriptor."""
    kind = cfg.get("type")
    if kind == "bernoulli":
        return Bernoulli(float(cfg["eps"]))
    if kind == "pool":
        return MeanPool(tuple(cfg["window"]), tuple(cfg["shape"]))
    if kind == "grid":
        return Grid()
    if kind == "directed":
        return Directed(load_graph_csv(cfg["graph_file"]))
    raise ValueError(f"unknown scheme type {kind!r}")
