"""Evaluation metrics: exact and estimated partition functions, NLL, MMD,
coupling recovery error, and a small CSV metrics log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .bits import Dataset, all_states

NEG_LOG_RMSE_CAP = 20.0


def _states_of(x):
    return x.states if isinstance(x, Dataset) else np.asarray(x, dtype=np.uint8)


def exact_log_partition(model):
    """log sum_x exp(-U(x)) by full enumeration (d <= 20)."""
    if model.d > 20:
        raise ValueError("exact log-partition is limited to d <= 20")
    u = model.energy_batch(all_states(model.d))
    return float(logsumexp(-u))


def model_prob_table(model):
    """Normalised probability table exp(-U(x)) / Z over all 2^d states."""
    if model.d > 20:
        raise ValueError("probability table is limited to d <= 20")
    u = model.energy_batch(all_states(model.d))
    logp = -u - logsumexp(-u)
    return np.exp(logp)


def exact_nll(model, data):
    """Mean energy of the data plus the exact log-partition (d <= 20)."""
    X = _states_of(data)
    return float(np.mean(model.energy_batch(X)) + exact_log_partition(model))


def estimate_log_partition(model, S, rng, chunk=1 << 14):
    """Importance-sample log Z with S uniform proposals.

    log Z = d log 2 + log mean exp(-U(x)), x ~ Uniform({0,1}^d).  Returns
    (log_z, stderr) where stderr is the delta-method error of the log-mean.
    Work is chunked so S can be large without materialising S x d at once.
    """
    d = model.d
    S = int(S)
    if S < 2:
        raise ValueError("need at least 2 proposal samples")
    parts = []  # (chunk_max, sum exp(v - m), sum exp(2(v - m)), count)
    remaining = S
    while remaining > 0:
        n = min(chunk, remaining)
        X = rng.integers(0, 2, size=(n, d)).astype(np.uint8)
        v = -np.asarray(model.energy_batch(X), dtype=np.float64)
        m = float(np.max(v))
        e = np.exp(v - m)
        parts.append((m, float(np.sum(e)), float(np.sum(e * e)), n))
        remaining -= n
    m_all = max(p[0] for p in parts)
    s1 = sum(math.exp(p[0] - m_all) * p[1] for p in parts)
    s2 = sum(math.exp(2.0 * (p[0] - m_all)) * p[2] for p in parts)
    mean_w = s1 / S
    var_w = max(0.0, s2 / S - mean_w * mean_w)
    log_z = d * math.log(2.0) + m_all + math.log(mean_w)
    stderr = math.sqrt(var_w / S) / mean_w
    return log_z, stderr


def nll_importance(model, data, S, rng, chunk=1 << 14):
    """Negative log-likelihood with an importance-sampled partition function.

    Returns a MetricRecord; the stderr reflects only the log Z estimate.
    """
    X = _states_of(data)
    if X.shape[1] != model.d:
        raise ValueError(f"data dimension {X.shape[1]} != model dimension {model.d}")
    log_z, stderr = estimate_log_partition(model, S, rng, chunk=chunk)
    value = float(np.mean(model.energy_batch(X)) + log_z)
    return MetricRecord("nll", value, stderr=stderr, n_samples=int(S))


def _hamming_matrix(A, B):
    Af = A.astype(np.float64)
    Bf = B.astype(np.float64)
    return Af @ (1.0 - Bf).T + (1.0 - Af) @ Bf.T


def mmd_hamming(X, Y, bandwidth=0.1):
    """Unbiased squared MMD with kernel exp(-hamming(x, y) / (d * bandwidth)).

    The U-statistic omits diagonal terms, so small or negative values are
    expected when the two samples come from the same law.
    """
    X = _states_of(X)
    Y = _states_of(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError("sample dimensions differ")
    n, m = X.shape[0], Y.shape[0]
    if n < 2 or m < 2:
        raise ValueError("need at least 2 samples on each side")
    scale = -1.0 / (X.shape[1] * bandwidth)
    k_xx = np.exp(scale * _hamming_matrix(X, X))
    k_yy = np.exp(scale * _hamming_matrix(Y, Y))
    k_xy = np.exp(scale * _hamming_matrix(X, Y))
    xx = (k_xx.sum() - np.trace(k_xx)) / (n * (n - 1))
    yy = (k_yy.sum() - np.trace(k_yy)) / (m * (m - 1))
    return float(xx + yy - 2.0 * k_xy.mean())


def mmd_bootstrap_stderr(X, Y, bandwidth=0.1, n_boot=100, rng=None):
    """Bootstrap standard error of mmd_hamming (kernels computed once)."""
    X = _states_of(X)
    Y = _states_of(Y)
    n, m = X.shape[0], Y.shape[0]
    scale = -1.0 / (X.shape[1] * bandwidth)
    k_xx = np.exp(scale * _hamming_matrix(X, X))
    k_yy = np.exp(scale * _hamming_matrix(Y, Y))
    k_xy = np.exp(scale * _hamming_matrix(X, Y))
    vals = np.empty(n_boot)
    for b in range(n_boot):
        ix = rng.integers(0, n, size=n)
        iy = rng.integers(0, m, size=m)
        kxx = k_xx[np.ix_(ix, ix)]
        kyy = k_yy[np.ix_(iy, iy)]
        kxy = k_xy[np.ix_(ix, iy)]
        xx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
        yy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
        vals[b] = xx + yy - 2.0 * kxy.mean()
    return float(np.std(vals, ddof=1))


def neg_log_rmse(J_hat, J_true, off_diagonal_only=False):
    """Natural -log RMSE between coupling matrices, capped at 20 for exact recovery."""
    J_hat = np.asarray(J_hat, dtype=np.float64)
    J_true = np.asarray(J_true, dtype=np.float64)
    if J_hat.shape != J_true.shape:
        raise ValueError("coupling matrices have different shapes")
    diff = J_hat - J_true
    if off_diagonal_only:
        mask = ~np.eye(diff.shape[0], dtype=bool)
        mse = float(np.mean(diff[mask] ** 2))
    else:
        mse = float(np.mean(diff**2))
    if mse == 0.0:
        return NEG_LOG_RMSE_CAP
    return float(min(NEG_LOG_RMSE_CAP, -0.5 * math.log(mse)))


def tv_distance(p, q):
    """Total variation distance between two probability tables."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("tables have different shapes")
    for name, t in (("first", p), ("second", q)):
        if np.any(t < 0) or abs(float(t.sum()) - 1.0) > 1e-9:
            raise ValueError(f"{name} table is not a probability distribution")
    return float(0.5 * np.abs(p - q).sum())


def empirical_table(data, d):
    """Empirical probability table of a bit dataset over all 2^d states."""
    from .bits import state_indices

    X = _states_of(data)
    counts = np.bincount(state_indices(X), minlength=1 << d).astype(np.float64)
    return counts / counts.sum()


@dataclass
class MetricRecord:
    name: str
    value: float
    stderr: Optional[float] = None
    n_samples: Optional[int] = None


class MetricsLog:
    """Append-only metrics log with a deterministic CSV serialisation.

    Columns are fixed: step,metric,value,stderr,n_samples.  Floats are
    written with repr so a rerun with identical inputs produces an
    identical file.
    """

    COLUMNS = "step,metric,value,stderr,n_samples"

    def __init__(self, config_digest=""):
        self.config_digest = config_digest
        self.rows = []

    def log(self, step, record):
        self.rows.append((int(step), record))

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(f"# config_digest={self.config_digest}\n")
            fh.write(self.COLUMNS + "\n")
            for step, rec in self.rows:
                stderr = "" if rec.stderr is None else repr(float(rec.stderr))
                n = "" if rec.n_samples is None else str(int(rec.n_samples))
                fh.write(f"{step},{rec.name},{float(rec.value)!r},{stderr},{n}\n")

    @staticmethod
    def read(path):
        """Parse a metrics CSV back into (config_digest, rows)."""
        rows = []
        digest = ""
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    if key.strip() == "config_digest":
                        digest = val.strip()
                    continue
                if line == MetricsLog.COLUMNS:
                    continue
                step, name, value, stderr, n = line.split(",")
                rows.append(
                    (
                        int(step),
                        MetricRecord(
                            name,
                            float(value),
                            stderr=float(stderr) if stderr else None,
                            n_samples=int(n) if n else None,
                        ),
                    )
                )
        return digest, rows
