"""Single-site Gibbs sampling and a minimal persistent contrastive divergence.

The sampler targets p(x) proportional to exp(-U(x)).  Sites are visited in
fixed index order (systematic scan).  The batched driver keeps one energy
value per chain up to date, so a site update costs a single batched energy
evaluation of the flipped states; for Ising models an exact local-field fast
path replaces the generic evaluation and produces the identical trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .bits import Dataset, all_states, as_bits
from .models import IsingEnergy


def gibbs_site_conditional(model, x, i):
    """P(x_i = 1 | rest) = sigmoid(U(x with bit i = 0) - U(x with bit i = 1))."""
    x = as_bits(x)
    if not 0 <= i < x.shape[0]:
        raise ValueError(f"site {i} outside dimension {x.shape[0]}")
    x0 = x.copy()
    x0[i] = 0
    x1 = x.copy()
    x1[i] = 1
    u = model.energy_batch(np.stack([x0, x1]))
    return float(expit(u[0] - u[1]))


@dataclass
class ChainState:
    current: np.ndarray
    rng: object
    sweep_count: int = 0


def gibbs_sweep(model, chain):
    """One systematic scan over all sites of a single chain (updated in place)."""
    x = chain.current
    d = x.shape[0]
    u_cur = model.energy(x)
    for i in range(d):
        x[i] ^= 1
        u_flip = model.energy(x)
        x[i] ^= 1
        u0, u1 = (u_cur, u_flip) if x[i] == 0 else (u_flip, u_cur)
        new_bit = 1 if chain.rng.random() < expit(u0 - u1) else 0
        if new_bit != x[i]:
            x[i] = new_bit
            u_cur = u_flip
    chain.sweep_count += 1
    return chain


def gibbs_sweeps_batch(model, X, n_sweeps, rng):
    """Run n_sweeps systematic scans on every row of X (C, d) in parallel.

    Returns the updated chain matrix (modified in place and returned).
    Chains evolve independently; draws are one uniform per (chain, site).
    """
    X = np.ascontiguousarray(X, dtype=np.uint8)
    C, d = X.shape
    if isinstance(model, IsingEnergy):
        # Local-field fast path: P(s_i = +1 | rest) = sigmoid(4 (J s)_i).
        S = 2.0 * X.astype(np.float64) - 1.0
        J = model.J
        for _ in range(int(n_sweeps)):
            for i in range(d):
                p1 = expit(4.0 * (S @ J[:, i]))
                S[:, i] = np.where(rng.random(C) < p1, 1.0, -1.0)
        np.copyto(X, (S > 0).astype(np.uint8))
        return X
    u_cur = np.asarray(model.energy_batch(X), dtype=np.float64)
    for _ in range(int(n_sweeps)):
        for i in range(d):
            X[:, i] ^= 1
            u_flip = np.asarray(model.energy_batch(X), dtype=np.float64)
            X[:, i] ^= 1
            cur_bit = X[:, i]
            u0 = np.where(cur_bit == 0, u_cur, u_flip)
            u1 = np.where(cur_bit == 0, u_flip, u_cur)
            new_bit = (rng.random(C) < expit(u0 - u1)).astype(np.uint8)
            changed = new_bit != cur_bit
            X[:, i] = new_bit
            u_cur = np.where(changed, u_flip, u_cur)
    return X


def sweeps_for_site_steps(site_steps, d):
    """Whole sweeps covering at least site_steps single-site updates."""
    return max(1, math.ceil(site_steps / d))


def grid_adjacency(L, periodic=False):
    """Adjacency matrix of the L x L 4-neighbour lattice (open boundary by default)."""
    if L < 2:
        raise ValueError("lattice side must be >= 2")
    d = L * L
    A = np.zeros((d, d))
    for r in range(L):
        for c in range(L):
            i = r * L + c
            if c + 1 < L:
                A[i, i + 1] = A[i + 1, i] = 1.0
            elif periodic:
                j = r * L
                A[i, j] = A[j, i] = 1.0
            if r + 1 < L:
                A[i, i + L] = A[i + L, i] = 1.0
            elif periodic:
                j = c
                A[i, j] = A[j, i] = 1.0
    return A


def generate_ising_dataset(L, sigma, n, site_steps, rng, periodic=False):
    """Sample n lattice configurations from p(s) ~ exp(s^T J s), J = sigma * A.

    Each sample is the endpoint of an independent chain started uniform and
    run for at least site_steps single-site updates.  Returns (Dataset, J).
    """
    J = sigma * grid_adjacency(L, periodic=periodic)
    model = IsingEnergy(L * L, J)
    X = rng.integers(0, 2, size=(n, L * L)).astype(np.uint8)
    gibbs_sweeps_batch(model, X, sweeps_for_site_steps(site_steps, L * L), rng)
    label = f"ising-L{L}-sigma{sigma}"
    return Dataset(X, provenance=label), J


@dataclass
class PcdBuffer:
    """Persistent chains advanced a few sweeps per gradient evaluation."""

    chains: np.ndarray
    k: int
    rng: object

    def __post_init__(self):
        self.chains = np.ascontiguousarray(self.chains, dtype=np.uint8)


def pcd_gradient(model, batch, buffer):
    """Contrastive divergence gradient with persistent chains.

    Advances the buffer k sweeps under the current model, then returns
    mean_i grad U(data_i) - mean_c grad U(chain_c).
    """
    batch = np.asarray(batch, dtype=np.uint8)
    if buffer.chains.shape[0] < batch.shape[0]:
        raise ValueError("buffer must hold at least as many chains as the batch")
    if buffer.k > 0:
        gibbs_sweeps_batch(model, buffer.chains, buffer.k, buffer.rng)
    N = batch.shape[0]
    C = buffer.chains.shape[0]
    combined = np.concatenate([batch, buffer.chains], axis=0)
    coeffs = np.concatenate([np.full(N, 1.0 / N), np.full(C, -1.0 / C)])
    return model.grad_weighted(combined, coeffs)


def site_kernel_matrix(model, i):
    """Dense transition matrix of the single-site Gibbs update at site i."""
    d = model.d
    if d > 10:
        raise ValueError("dense kernels are limited to d <= 10")
    states = all_states(d)
    n = 1 << d
    X1 = states.copy()
    X1[:, i] = 1
    X0 = states.copy()
    X0[:, i] = 0
    u0 = model.energy_batch(X0)
    u1 = model.energy_batch(X1)
    p1 = expit(u0 - u1)
    T = np.zeros((n, n))
    idx = np.arange(n, dtype=np.int64)
    bit = 1 << (d - 1 - i)
    T[idx, idx | bit] += p1
    T[idx, idx & ~bit] += 1.0 - p1
    return T


def sweep_kernel_matrix(model):
    """Dense transition matrix of one full systematic scan (site 0, 1, ..., d-1)."""
    T = np.eye(1 << model.d)
    for i in range(model.d):
        T = T @ site_kernel_matrix(model, i)
    return T
