"""The energy discrepancy loss: sampled minibatch estimator and exact oracles.

The sampled loss for a batch of N positives with M negatives each is

    L = (1/N) sum_i [ log(w + sum_j exp(U(x+_i) - U(x-_ij))) - log M ]

with stabilisation offset w >= 0; w > 0 bounds the loss below by
log(w) - log(M).  Directed schemes multiply each exponential term by the
weight K'_y / K_{x-}.  The analytic parameter gradient uses the softmax-like
weights

    lambda_ij = exp(U(x+_i) - U(x-_ij)) / (w + sum_k exp(U(x+_i) - U(x-_ik)))

and every exponential is evaluated in shifted (max-subtracted) form.

The exact counterparts enumerate all 2^d states: the contrastive potential

    U_q(y) = -log sum_x' q(y|x') exp(-U(x'))

the full discrepancy E_p[U] - E_p E_q[U_q(y)], its gradient with respect to a
tabular energy, and the posterior proportional to q(y|z) exp(-U(z)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .bits import all_states, as_bit_matrix, as_bits, state_index
from .perturb import forward_kernel_matrix, pool_class_ids, sample_negatives_batch
from .perturb import Bernoulli, Directed, Grid, MeanPool

# w = 0 with few negatives is known to diverge in training; reports carry an
# instability flag so harnesses can surface it.
UNSTABLE_M_LIMIT = 64


class EnergyOverflowError(RuntimeError):
    """A state produced a non-finite energy; carries the offending state."""

    def __init__(self, state):
        self.state = np.asarray(state)
        super().__init__(f"non-finite energy at state {self.state.tolist()}")


@dataclass(frozen=True)
class LossConfig:
    M: int = 32
    w: float = 1.0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.w < 0:
            raise ValueError("w must be >= 0")

    @property
    def unstable(self):
        return self.w == 0.0 and self.M <= UNSTABLE_M_LIMIT


@dataclass
class LossReport:
    loss: float
    grad: np.ndarray
    mean_weight_mass: float
    max_energy_gap: float
    unstable: bool = False


def stabilised_loss_terms(gaps, w, M, log_weights=None):
    """Per-row loss values and lambda weights from the energy gaps.

    gaps: (N, M) array of U(x+_i) - U(x-_ij).
    log_weights: optional (N, M) log of the per-negative weights.
    Returns (loss_rows (N,), lam (N, M)).
    """
    terms = gaps if log_weights is None else gaps + log_weights
    a = terms.max(axis=1)
    s = np.exp(terms - a[:, None]).sum(axis=1)
    log_sum = a + np.log(s)
    log_w = np.log(w) if w > 0 else -np.inf
    denom_log = np.logaddexp(log_w, log_sum)
    loss_rows = denom_log - np.log(M)
    lam = np.exp(terms - denom_log[:, None])
    return loss_rows, lam


def ed_loss_batch(model, scheme, batch, cfg, rng):
    """Sampled loss, analytic gradient, and diagnostics for one minibatch."""
    X = as_bit_matrix(batch)
    N, d = X.shape
    if N < 1:
        raise ValueError("batch must be nonempty")
    nb = sample_negatives_batch(scheme, X, cfg.M, rng)
    M = cfg.M
    combined = np.concatenate([X, nb.negatives.reshape(N * M, d)], axis=0)
    u_all, ctx = model.energy_batch(combined, want_ctx=True)
    if not np.all(np.isfinite(u_all)):
        bad = int(np.flatnonzero(~np.isfinite(u_all))[0])
        raise EnergyOverflowError(combined[bad])
    u_pos = u_all[:N]
    u_neg = u_all[N:].reshape(N, M)
    gaps = u_pos[:, None] - u_neg
    log_weights = None if nb.weights is None else np.log(nb.weights)
    loss_rows, lam = stabilised_loss_terms(gaps, cfg.w, M, log_weights)
    coeffs = np.concatenate([lam.sum(axis=1) / N, -lam.reshape(N * M) / N])
    grad = model.grad_weighted(combined, coeffs, ctx=ctx)
    return LossReport(
        loss=float(loss_rows.mean()),
        grad=grad,
        mean_weight_mass=float(lam.sum(axis=1).mean()),
        max_energy_gap=float(gaps.max()),
        unstable=cfg.unstable,
    )


def _enum_guard(d, limit=20):
    if d > limit:
        raise ValueError(f"exact enumeration refused for d={d} (limit {limit})")


def _all_energies(model, d):
    u = model.energy_batch(all_states(d))
    return np.asarray(u, dtype=np.float64)


def contrastive_potential_from_kernel(u_all, Q):
    """U_q over the kernel's column space: -log sum_x Q[x, y] exp(-u_all[x])."""
    with np.errstate(divide="ignore"):
        logQ = np.log(Q)
    return -logsumexp(logQ - u_all[:, None], axis=0)


def contrastive_potential_exact(model, scheme, y):
    """Exact U_q(y) by stable enumeration over all 2^d states.

    For MeanPool this is the preimage-sum form: the sum runs over the pooled
    class of y and therefore includes the |g^-1(y)| multiplicity.
    """
    y = as_bits(y)
    d = y.shape[0]
    _enum_guard(d)
    u_all = _all_energies(model, d)
    yi = state_index(y)
    if isinstance(scheme, Bernoulli):
        eps = scheme.eps
        if eps == 0.0:
            return float(u_all[yi])
        if eps == 1.0:
            return float(u_all[yi ^ ((1 << d) - 1)])
        idx = np.arange(1 << d, dtype=np.int64)
        h = _popcount(idx ^ yi)
        lw = h * np.log(eps) + (d - h) * np.log(1.0 - eps)
        return float(-logsumexp(lw - u_all))
    if isinstance(scheme, Grid):
        nbrs = yi ^ (1 << np.arange(d, dtype=np.int64))
        return float(-logsumexp(-u_all[nbrs] - np.log(d)))
    if isinstance(scheme, MeanPool):
        ids = pool_class_ids(scheme.window, scheme.shape)
        members = np.flatnonzero(ids == ids[yi])
        return float(-logsumexp(-u_all[members]))
    if isinstance(scheme, Directed):
        preds = scheme.graph.in_lists[yi]
        if len(preds) == 0:
            return float("inf")
        lw = -np.log(scheme.graph.K[preds].astype(np.float64))
        return float(-logsumexp(lw - u_all[preds]))
    raise TypeError(f"unknown scheme {scheme!r}")


def _popcount(arr):
    out = np.zeros(arr.shape, dtype=np.int64)
    work = np.asarray(arr, dtype=np.int64).copy()
    while np.any(work):
        out += work & 1
        work >>= 1
    return out


def _check_prob_table(p, d):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (1 << d,):
        raise ValueError(f"probability table must have 2^{d} entries")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("probability table must be non-negative and sum to 1")
    return p


def ed_exact(model, scheme, p_data):
    """Exact energy discrepancy E_p[U] - E_p E_q[U_q(y)] by full enumeration."""
    d = model.d
    _enum_guard(d, limit=12)
    p = _check_prob_table(p_data, d)
    u_all = _all_energies(model, d)
    Q = forward_kernel_matrix(scheme, d)
    u_q = contrastive_potential_from_kernel(u_all, Q)
    marginal = Q.T @ p
    term2 = np.where(marginal > 0, marginal * np.where(np.isfinite(u_q), u_q, 0.0), 0.0).sum()
    return float(p @ u_all - term2)


def ed_exact_grad(model, scheme, p_data):
    """Gradient of ed_exact with respect to the tabular energy values.

    d ED / d U(x) = p(x) - sum_y marginal(y) * posterior(x | y)
    with posterior(x|y) proportional to q(y|x) exp(-U(x)).
    """
    d = model.d
    _enum_guard(d, limit=12)
    p = _check_prob_table(p_data, d)
    u_all = _all_energies(model, d)
    Q = forward_kernel_matrix(scheme, d)
    W = Q * np.exp(-(u_all - u_all.min()))[:, None]
    Z = W.sum(axis=0)
    marginal = Q.T @ p
    cols = Z > 0
    P = np.zeros_like(W)
    P[:, cols] = W[:, cols] / Z[cols]
    return p - P @ marginal


def posterior_exact(model, scheme, y):
    """Normalised table proportional to q(y|z) exp(-U(z)) over all states."""
    y = as_bits(y)
    d = y.shape[0]
    _enum_guard(d, limit=16)
    if isinstance(scheme, (Bernoulli, Grid, Directed)):
        _enum_guard(d, limit=12)
        Q = forward_kernel_matrix(scheme, d)
        qcol = Q[:, state_index(y)]
    else:
        ids = pool_class_ids(scheme.window, scheme.shape)
        qcol = (ids == ids[state_index(y)]).astype(np.float64)
    u_all = _all_energies(model, d)
    with np.errstate(divide="ignore"):
        logpost = np.log(qcol) - u_all
    total = logsumexp(logpost)
    if not np.isfinite(total):
        raise ValueError("posterior has no mass at this y")
    return np.exp(logpost - total)
