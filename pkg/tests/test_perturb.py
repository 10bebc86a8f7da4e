
import numpy as np
import pytest

from edbm.bits import all_states, state_index
from edbm.perturb import (
    Bernoulli,
    Directed,
    Grid,
    MeanPool,
    NeighbourGraph,
    exact_forward_density,
    forward_kernel_matrix,
    load_graph_csv,
    perturb,
    pool_class_ids,
    pool_preimage_permute,
    sample_negatives,
    sample_negatives_batch,
    save_graph_csv,
    scheme_from_config,
    scheme_to_config,
    directed_weight,
)
from edbm.rng import RngStream


def test_bernoulli_eps_range():
    Bernoulli(0.0)
    Bernoulli(1.0)
    with pytest.raises(ValueError):
        Bernoulli(-0.01)
    with pytest.raises(ValueError):
        Bernoulli(1.01)


def test_meanpool_window_must_divide_shape():
    MeanPool((2, 2), (4, 4))
    with pytest.raises(ValueError):
        MeanPool((3, 2), (4, 4))


def test_bernoulli_forward_density():
    scheme = Bernoulli(0.3)
    x = np.array([0, 0, 0, 0], dtype=np.uint8)
    y = np.array([1, 0, 0, 1], dtype=np.uint8)
    assert exact_forward_density(scheme, y, x) == pytest.approx(0.3**2 * 0.7**2)
    # normalisation over all y
    total = sum(exact_forward_density(scheme, yy, x) for yy in all_states(4))
    assert total == pytest.approx(1.0)


def test_grid_forward_density():
    scheme = Grid()
    x = np.array([0, 1, 0, 0], dtype=np.uint8)
    one_flip = x.copy()
    one_flip[2] ^= 1
    assert exact_forward_density(scheme, one_flip, x) == pytest.approx(0.25)
    two_flip = one_flip.copy()
    two_flip[0] ^= 1
    assert exact_forward_density(scheme, two_flip, x) == 0.0
    assert exact_forward_density(scheme, x, x) == 0.0


def test_kernel_matrices_are_doubly_stochastic():
    for scheme in (Bernoulli(0.2), Grid()):
        Q = forward_kernel_matrix(scheme, 5)
        assert np.allclose(Q.sum(axis=1), 1.0, atol=1e-12)
        assert np.allclose(Q.sum(axis=0), 1.0, atol=1e-12)


def test_perturb_bernoulli_extremes():
    x = np.array([0, 1, 1, 0, 1], dtype=np.uint8)
    rng = RngStream(0)
    assert np.array_equal(perturb(Bernoulli(0.0), x, rng), x)
    assert np.array_equal(perturb(Bernoulli(1.0), x, rng), 1 - x)


def test_perturb_grid_flips_exactly_one_bit():
    rng = RngStream(1)
    x = np.array([0, 1, 0, 0, 1, 1], dtype=np.uint8)
    positions = set()
    for _ in range(200):
        y = perturb(Grid(), x, rng)
        diff = np.flatnonzero(y != x)
        assert diff.size == 1
        positions.add(int(diff[0]))
    assert positions == set(range(6))


def test_grid_flip_frequencies_uniform():
    # chi-square against uniform flip positions at d=4
    rng = RngStream(5)
    d, n = 4, 100000
    x = np.zeros(d, dtype=np.uint8)
    counts = np.zeros(d)
    for _ in range(n):
        y = perturb(Grid(), x, rng)
        counts[int(np.flatnonzero(y)[0])] += 1
    expected = n / d
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    # 3 dof, p=0.999 cutoff ~ 16.3
    assert chi2 < 16.3


def test_pool_perturb_is_identity_passthrough():
    scheme = MeanPool((2, 2), (4, 4))
    x = RngStream(2).integers(0, 2, size=16).astype(np.uint8)
    y = perturb(scheme, x, RngStream(3))
    assert np.array_equal(y, x)


def test_pool_negatives_preserve_block_sums():
    scheme = MeanPool((2, 2), (4, 2))
    rng = RngStream(4)
    X = rng.integers(0, 2, size=(50, 8)).astype(np.uint8)
    nb = sample_negatives_batch(scheme, X, 6, rng)
    assert nb.weights is None
    ids = pool_class_ids(scheme.window, scheme.shape)
    x_ids = ids[[state_index(r) for r in X]]
    for j in range(6):
        neg_ids = ids[[state_index(r) for r in nb.negatives[:, j, :]]]
        assert np.array_equal(neg_ids, x_ids)


def test_pool_preimage_permute_uniform_within_block():
    # a single 3-bit block with one set bit: permutation lands uniformly
    scheme_window, scheme_shape = (3, 1), (3, 1)
    x = np.array([1, 0, 0], dtype=np.uint8)
    rng = RngStream(6)
    counts = np.zeros(3)
    n = 30000
    for _ in range(n):
        y = pool_preimage_permute(scheme_window, scheme_shape, x, rng)
        counts[int(np.flatnonzero(y)[0])] += 1
    assert np.all(np.abs(counts / n - 1 / 3) < 0.02)


def test_grid_negatives_at_hamming_zero_or_two():
    rng = RngStream(7)
    X = rng.integers(0, 2, size=(40, 6)).astype(np.uint8)
    nb = sample_negatives_batch(Grid(), X, 5, rng)
    dist = (nb.negatives != X[:, None, :]).sum(axis=2)
    assert set(np.unique(dist).tolist()) <= {0, 2}
    assert (dist == 2).any() and (dist == 0).any()


def test_bernoulli_negatives_reuse_same_eps():
    # negatives are two perturbation steps from x: distance distribution
    # must match XOR of two Bernoulli(eps) noise fields
    eps, d, n, M = 0.2, 8, 4000, 4
    rng = RngStream(8)
    X = np.zeros((n, d), dtype=np.uint8)
    nb = sample_negatives_batch(Bernoulli(eps), X, M, rng)
    q = 2 * eps * (1 - eps)  # per-bit flip prob after two rounds
    got = float((nb.negatives != X[:, None, :]).mean())
    assert abs(got - q) < 0.01


def test_sample_negatives_single_row_matches_batch_shape():
    x = np.array([0, 1, 0], dtype=np.uint8)
    negs, weights = sample_negatives(Bernoulli(0.1), x, 7, RngStream(9))
    assert negs.shape == (7, 3)
    assert weights is None
    # same stream, batched call: row 0 must agree draw for draw
    nb = sample_negatives_batch(Bernoulli(0.1), x[None, :], 7, RngStream(9))
    assert np.array_equal(negs, nb.negatives[0])


def _two_state_cycle_graph():
    # d=1: states {0,1}; 0 -> {1}, 1 -> {0,1}
    return NeighbourGraph(1, [[1], [0, 1]])


def test_neighbour_graph_validation():
    with pytest.raises(ValueError):
        NeighbourGraph(1, [[1]])  # missing a list for state 1
    with pytest.raises(ValueError):
        NeighbourGraph(1, [[1], []])  # empty out-neighbourhood
    with pytest.raises(ValueError):
        NeighbourGraph(1, [[2], [0]])  # out of range


def test_directed_weights():
    g = _two_state_cycle_graph()
    b0 = np.array([0], dtype=np.uint8)
    b1 = np.array([1], dtype=np.uint8)
    # y=0 has in-list {1} and K'_0 = len(in of 0) = 1
    # weight(y, x') = K'_y / K_{x'}
    assert directed_weight(g, b0, b1) == pytest.approx(1.0 / 2.0)
    assert directed_weight(g, b1, b1) == pytest.approx(2.0 / 2.0)
    with pytest.raises(ValueError):
        directed_weight(g, b0, b0)  # 0 not an in-neighbour of 0


def test_directed_symmetric_graph_weights_are_one():
    # hypercube single-flip graph is symmetric with K = d everywhere
    d = 3
    edges = []
    for x in range(1 << d):
        for i in range(d):
            edges.append((x, x ^ (1 << i)))
    g = NeighbourGraph.from_edges(d, edges)
    rng = RngStream(10)
    X = rng.integers(0, 2, size=(20, d)).astype(np.uint8)
    nb = sample_negatives_batch(Directed(g), X, 4, rng)
    assert nb.weights is not None
    assert np.allclose(nb.weights, 1.0)


def test_directed_negative_support():
    g = _two_state_cycle_graph()
    rng = RngStream(11)
    X = np.zeros((30, 1), dtype=np.uint8)  # state 0; y must be 1; negs in {0,1}
    nb = sample_negatives_batch(Directed(g), X, 3, rng)
    assert set(np.unique(nb.negatives).tolist()) <= {0, 1}


def test_graph_csv_round_trip(tmp_path):
    g = _two_state_cycle_graph()
    path = tmp_path / "graph.csv"
    save_graph_csv(g, path)
    back = load_graph_csv(path)
    assert back.d == 1
    assert sorted(back.edges()) == sorted(g.edges())


def test_scheme_config_round_trip():
    schemes = [
        Bernoulli(0.1),
        MeanPool((2, 2), (4, 4)),
        Grid(),
    ]
    for scheme in schemes:
        cfg = scheme_to_config(scheme)
        assert scheme_from_config(cfg) == scheme


def test_scheme_config_rejects_unknown_type():
    with pytest.raises(ValueError):
        scheme_from_config({"type": "mystery"})
