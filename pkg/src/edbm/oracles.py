"""Named self-checks for the mathematical identities the library relies on.

Each check builds small random instances, evaluates an identity by two
independent routes, and reports the largest discrepancy.  They are exposed
through the command line so a broken build can be diagnosed without the
test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .bits import all_states, state_index
from .loss import (
    LossConfig,
    contrastive_potential_exact,
    ed_exact,
    ed_exact_grad,
    ed_loss_batch,
)
from .models import IsingEnergy, MlpEnergy, TabularEnergy
from .perturb import (
    Bernoulli,
    Grid,
    MeanPool,
    exact_forward_density,
    forward_kernel_matrix,
    perturb,
    pool_class_ids,
    sample_negatives_batch,
)
from .rng import RngStream
from .samplers import gibbs_sweeps_batch, site_kernel_matrix, sweep_kernel_matrix


@dataclass
class OracleResult:
    name: str
    ok: bool
    max_err: float
    tolerance: float
    detail: str = ""


def _random_prob(d, rng):
    p = rng.random(1 << d) + 1e-3
    return p / p.sum()


def _random_tabular(d, rng):
    return TabularEnergy(d, rng.normal(size=1 << d))


def _kl(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def check_kl_contraction(d=4, trials=5, seed=0):
    """ED differences equal differences of KL contractions under the kernel.

    For fixed data law p and kernel q: ED(p, U) - KL(p || pi_U) +
    KL(q#p || q#pi_U) is the same constant for every potential U.
    """
    rng = RngStream(seed, path=(101,))
    worst = 0.0
    for t in range(trials):
        scheme = Bernoulli(0.1 + 0.8 * rng.random()) if t % 2 == 0 else Grid()
        p = _random_prob(d, rng)
        Q = forward_kernel_matrix(scheme, d)
        consts = []
        for _ in range(2):
            model = _random_tabular(d, rng)
            u = model.table
            pi = np.exp(-u - logsumexp(-u))
            ed = ed_exact(model, scheme, p)
            kl_diff = _kl(p, pi) - _kl(p @ Q, pi @ Q)
            consts.append(ed - kl_diff)
        worst = max(worst, abs(consts[0] - consts[1]))
    return OracleResult("kl-contraction", worst < 1e-10, worst, 1e-10)


def check_detailed_balance(d=4, trials=3, seed=0):
    """Site kernels are reversible for exp(-U); the scan leaves it invariant.

    Reversibility: pi_x T[x, y] = pi_y T[y, x] for every site kernel.
    As a corollary the contrastive potential of the full-sweep kernel
    reproduces U exactly (not just up to a constant).
    """
    rng = RngStream(seed, path=(102,))
    worst = 0.0
    for _ in range(trials):
        model = _random_tabular(d, rng)
        u = model.table
        pi = np.exp(-u - logsumexp(-u))
        for i in range(d):
            T = site_kernel_matrix(model, i)
            flow = pi[:, None] * T
            worst = max(worst, float(np.max(np.abs(flow - flow.T))))
        T_sweep = sweep_kernel_matrix(model)
        worst = max(worst, float(np.max(np.abs(pi @ T_sweep - pi))))
        # U_q(y) = -log sum_x T[x, y] exp(-U(x)) = U(y) by stationarity
        u_q = -logsumexp(np.log(np.clip(T_sweep, 1e-300, None)) - u[:, None], axis=0)
        finite = T_sweep.sum(axis=0) > 0
        worst = max(worst, float(np.max(np.abs(u_q[finite] - u[finite]))))
    return OracleResult("detailed-balance", worst < 1e-10, worst, 1e-10)


def check_stationarity(d=4, trials=5, seed=0):
    """The exact objective is stationary at U = -log p (up to a constant)."""
    rng = RngStream(seed, path=(103,))
    worst = 0.0
    for t in range(trials):
        p = _random_prob(d, rng)
        scheme = (Bernoulli(0.3), Grid(), MeanPool((2, 1), (d, 1)))[t % 3]
        model = TabularEnergy(d, -np.log(p))
        g = ed_exact_grad(model, scheme, p)
        worst = max(worst, float(np.max(np.abs(g))))
    return OracleResult("stationarity", worst < 1e-10, worst, 1e-10)


def check_convexity(d=4, trials=8, seed=0):
    """The exact objective is convex along straight lines in potential space."""
    rng = RngStream(seed, path=(104,))
    worst = -np.inf
    for t in range(trials):
        p = _random_prob(d, rng)
        scheme = Bernoulli(0.25) if t % 2 == 0 else Grid()
        u1 = rng.normal(size=1 << d)
        u2 = rng.normal(size=1 << d)
        alpha = rng.random()
        mix = ed_exact(TabularEnergy(d, alpha * u1 + (1 - alpha) * u2), scheme, p)
        chord = alpha * ed_exact(TabularEnergy(d, u1), scheme, p) + (1 - alpha) * ed_exact(
            TabularEnergy(d, u2), scheme, p
        )
        worst = max(worst, mix - chord)
    return OracleResult("convexity", worst < 1e-12, max(worst, 0.0), 1e-12)


def check_gauge(d=4, trials=4, seed=0):
    """Constant shifts of the potential leave exact and sampled losses alone."""
    rng = RngStream(seed, path=(105,))
    worst = 0.0
    for t in range(trials):
        p = _random_prob(d, rng)
        scheme = Bernoulli(0.2) if t % 2 == 0 else Grid()
        u = rng.normal(size=1 << d)
        shift = float(rng.normal()) * 10.0
        e1 = ed_exact(TabularEnergy(d, u), scheme, p)
        e2 = ed_exact(TabularEnergy(d, u + shift), scheme, p)
        worst = max(worst, abs(e1 - e2))
        X = all_states(d)[rng.integers(0, 1 << d, size=64)]
        cfg = LossConfig(M=8, w=1.0)
        r1 = ed_loss_batch(TabularEnergy(d, u), scheme, X, cfg, RngStream(seed, path=(9, t)))
        r2 = ed_loss_batch(
            TabularEnergy(d, u + shift), scheme, X, cfg, RngStream(seed, path=(9, t))
        )
        worst = max(worst, abs(r1.loss - r2.loss))
        worst = max(worst, float(np.max(np.abs(r1.grad - r2.grad))))
    return OracleResult("gauge", worst < 1e-9, worst, 1e-9)


def _empirical_state_table(Y):
    d = Y.shape[1]
    weights = 1 << np.arange(d - 1, -1, -1)
    counts = np.bincount(Y @ weights, minlength=1 << d).astype(np.float64)
    return counts / counts.sum()


def check_perturbation_laws(d=6, trials=50000, seed=0):
    """Empirical perturbation frequencies match the stated forward kernels."""
    rng = RngStream(seed, path=(106,))
    worst = 0.0
    detail = []
    x = rng.integers(0, 2, size=d).astype(np.uint8)
    states = all_states(d)
    for scheme in (Bernoulli(0.3), Grid()):
        ys = np.stack([perturb(scheme, x, rng) for _ in range(trials)])
        exact = np.array([exact_forward_density(scheme, y, x) for y in states])
        tv = 0.5 * float(np.abs(_empirical_state_table(ys) - exact).sum())
        worst = max(worst, tv)
        detail.append(f"{type(scheme).__name__}: tv={tv:.4f}")
    # grid negatives sit two hops from the clean state: law is Q @ Q
    grid = Grid()
    nb = sample_negatives_batch(grid, np.tile(x, (trials, 1)), 1, rng)
    Q = forward_kernel_matrix(grid, d)
    exact2 = (Q @ Q)[state_index(x)]
    tv = 0.5 * float(np.abs(_empirical_state_table(nb.negatives[:, 0, :]) - exact2).sum())
    worst = max(worst, tv)
    detail.append(f"Grid-negatives: tv={tv:.4f}")
    # pool negatives stay in the block-sum class of x and cover it uniformly
    pool = MeanPool((3, 1), (d, 1))
    nb = sample_negatives_batch(pool, np.tile(x, (trials, 1)), 1, rng)
    emp = _empirical_state_table(nb.negatives[:, 0, :])
    ids = pool_class_ids(pool.window, pool.shape)
    members = ids == ids[state_index(x)]
    exact_pool = np.where(members, 1.0 / members.sum(), 0.0)
    tv = 0.5 * float(np.abs(emp - exact_pool).sum())
    worst = max(worst, tv)
    detail.append(f"MeanPool-negatives: tv={tv:.4f}")
    return OracleResult("perturbation-laws", worst < 0.02, worst, 0.02, "; ".join(detail))


def check_sampler_kernel(d=4, trials=2000, seed=0):
    """The scan kernel is stochastic, leaves the target invariant, and the
    batched driver actually samples from it."""
    rng = RngStream(seed, path=(107,))
    model = _random_tabular(d, rng)
    u = model.table
    pi = np.exp(-u - logsumexp(-u))
    T = sweep_kernel_matrix(model)
    worst = float(np.max(np.abs(T.sum(axis=1) - 1.0)))
    worst = max(worst, float(np.max(np.abs(pi @ T - pi))))
    if worst >= 1e-10:
        return OracleResult("sampler-kernel", False, worst, 1e-10, "kernel algebra")
    X = rng.integers(0, 2, size=(trials, d)).astype(np.uint8)
    gibbs_sweeps_batch(model, X, 60, rng)
    counts = np.bincount(
        np.dot(X, 1 << np.arange(d - 1, -1, -1)), minlength=1 << d
    ).astype(float)
    tv = 0.5 * float(np.abs(counts / counts.sum() - pi).sum())
    ok = tv < 0.05
    return OracleResult("sampler-kernel", ok, tv, 0.05, f"empirical tv={tv:.4f}")


def fd_gradient_check(model, scheme, batch, cfg, seed, n_coords=24, h=1e-5):
    """Relative error between analytic and frozen-stream central
    finite-difference gradients over a random subset of coordinates.

    The error is normalised by the gradient's largest magnitude, not
    coordinate-wise: coordinates whose true derivative is exactly zero
    (pool-conserved directions) would otherwise amplify pure roundoff.
    """
    report = ed_loss_batch(model, scheme, batch, cfg, RngStream(seed, path=(55,)))
    params = model.get_params()
    picks_rng = np.random.default_rng(seed)
    n = params.shape[0]
    coords = picks_rng.choice(n, size=min(n_coords, n), replace=False)
    worst_abs = 0.0
    for k in coords:
        theta = params.copy()
        theta[k] = params[k] + h
        model.set_params(theta)
        up = ed_loss_batch(model, scheme, batch, cfg, RngStream(seed, path=(55,))).loss
        theta[k] = params[k] - h
        model.set_params(theta)
        dn = ed_loss_batch(model, scheme, batch, cfg, RngStream(seed, path=(55,))).loss
        fd = (up - dn) / (2.0 * h)
        worst_abs = max(worst_abs, abs(fd - report.grad[k]))
    model.set_params(params)
    scale = max(1e-12, float(np.max(np.abs(report.grad))))
    return worst_abs / scale


def check_gradient_fd(d=6, trials=1, seed=0):
    """Analytic loss gradients agree with finite differences for every model."""
    rng = RngStream(seed, path=(108,))
    worst = 0.0
    detail = []
    X = rng.integers(0, 2, size=(16, d)).astype(np.uint8)
    cfg = LossConfig(M=6, w=1.0)
    cases = [
        ("tabular", _random_tabular(d, rng)),
        ("ising", IsingEnergy(d, 0.3 * rng.normal(size=(d, d)))),
        ("mlp", MlpEnergy(d, rng.split(3), hidden=16)),
    ]
    for name, model in cases:
        for scheme in (Bernoulli(0.2), Grid(), MeanPool((2, 1), (d, 1))):
            err = fd_gradient_check(model, scheme, X, cfg, seed + 7)
            worst = max(worst, err)
            detail.append(f"{name}/{type(scheme).__name__}: {err:.2e}")
    return OracleResult("gradient-fd", worst < 1e-6, worst, 1e-6, "; ".join(detail))


def check_consistency(d=6, trials=20000, seed=0):
    """Monte Carlo loss minus its lower-order terms approaches the exact
    objective as the sample budget grows."""
    rng = RngStream(seed, path=(109,))
    p = _random_prob(d, rng)
    cum = np.cumsum(p)
    model = _random_tabular(d, rng)
    scheme = Bernoulli(0.25)
    exact = ed_exact(model, scheme, p)
    idx = np.searchsorted(cum, rng.random(trials))
    X = all_states(d)[idx]
    cfg = LossConfig(M=512, w=1.0)
    total = 0.0
    chunk = 2000
    for lo in range(0, trials, chunk):
        total += ed_loss_batch(model, scheme, X[lo : lo + chunk], cfg, rng).loss * min(
            chunk, trials - lo
        )
    sampled = total / trials
    err = abs(sampled - exact)
    return OracleResult("consistency", err < 0.05, err, 0.05, f"exact={exact:.4f}")


ORACLES = {
    "kl-contraction": check_kl_contraction,
    "detailed-balance": check_detailed_balance,
    "stationarity": check_stationarity,
    "convexity": check_convexity,
    "gauge": check_gauge,
    "perturbation-laws": check_perturbation_laws,
    "sampler-kernel": check_sampler_kernel,
    "gradient-fd": check_gradient_fd,
    "consistency": check_consistency,
}


def run_oracles(names=None, d=None, trials=None, seed=0):
    """Run the selected named checks.  Returns a list of OracleResult."""
    names = list(names) if names else list(ORACLES)
    results = []
    for name in names:
        if name not in ORACLES:
            raise KeyError(f"unknown oracle {name!r}")
        kwargs = {"seed": seed}
        if d is not None:
            kwargs["d"] = d
        if trials is not None:
            kwargs["trials"] = trials
        results.append(ORACLES[name](**kwargs))
    return results
