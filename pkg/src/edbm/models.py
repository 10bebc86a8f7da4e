"""Parametric energy functions with per-point parameter gradients.

All models share one contract: a flat float64 parameter vector, a batched
energy evaluation, and a weighted parameter gradient

    grad_weighted(X, c) = sum_i c_i * dU(x_i)/dtheta

which is the only gradient form the losses need (one backward pass covers a
whole batch of positives and negatives).
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod

import numpy as np
from scipy.special import expit

from .bits import as_bit_matrix, as_bits, state_indices


class EnergyModel(ABC):
    """Abstract energy U_theta over fixed-dimension binary states."""

    d: int

    @property
    @abstractmethod
    def num_params(self):
        ...

    @abstractmethod
    def get_params(self):
        """Copy of the flat parameter vector."""

    @abstractmethod
    def set_params(self, theta):
        """Write a flat parameter vector (models may project it on write)."""

    @abstractmethod
    def energy_batch(self, X, want_ctx=False):
        """Energies of a (N, d) batch; optionally also a reusable forward context."""

    @abstractmethod
    def grad_weighted(self, X, coeffs, ctx=None):
        """sum_i coeffs[i] * grad_theta U(X[i]) as a flat vector."""

    def energy(self, x):
        return float(self._energies(as_bits(x)[None, :])[0])

    def param_grad(self, x):
        return self.grad_weighted(as_bits(x)[None, :], np.ones(1))

    def _energies(self, X, want_ctx=False):
        X = as_bit_matrix(X)
        if X.shape[1] != self.d:
            raise ValueError(f"dimension mismatch: model d={self.d}, states d={X.shape[1]}")
        return self.energy_batch(X, want_ctx=want_ctx)


class IsingEnergy(EnergyModel):
    """Quadratic spin energy U(x) = -s^T J s with s = 2x - 1.

    J is stored symmetric with zero diagonal; both properties are re-imposed
    on every parameter write so that optimiser updates cannot break them.
    """

    def __init__(self, d, J=None):
        self.d = int(d)
        if J is None:
            self.J = np.zeros((self.d, self.d))
        else:
            self.J = self._project(np.array(J, dtype=np.float64))

    @staticmethod
    def _project(J):
        J = 0.5 * (J + J.T)
        np.fill_diagonal(J, 0.0)
        return J

    @property
    def num_params(self):
        return self.d * self.d

    def get_params(self):
        return self.J.ravel().copy()

    def set_params(self, theta):
        self.J = self._project(np.asarray(theta, dtype=np.float64).reshape(self.d, self.d))

    def energy_batch(self, X, want_ctx=False):
        S = 2.0 * np.asarray(X, dtype=np.float64) - 1.0
        u = -np.einsum("ij,ij->i", S @ self.J, S)
        return (u, S) if want_ctx else u

    def grad_weighted(self, X, coeffs, ctx=None):
        S = ctx if ctx is not None else 2.0 * np.asarray(X, dtype=np.float64) - 1.0
        G = -(S.T @ (S * np.asarray(coeffs, dtype=np.float64)[:, None]))
        np.fill_diagonal(G, 0.0)
        return G.ravel()


def swish(t):
    return t * expit(t)


def swish_prime(t):
    s = expit(t)
    return s * (1.0 + t * (1.0 - s))


class MlpEnergy(EnergyModel):
    """Four-layer MLP energy: layers [d, 256, 256, 256, 1], Swish hidden units.

    Differentiation is a hand-written reverse-mode pass over the fixed
    topology; grad_weighted consumes the forward context so a batch needs one
    forward and one backward pass in total.
    """

    HIDDEN = 256

    def __init__(self, d, rng=None, input_encoding="01", hidden=HIDDEN):
        self.d = int(d)
        self.input_encoding = input_encoding
        if input_encoding not in ("01", "pm1"):
            raise ValueError(f"unknown input encoding {input_encoding!r}")
        self.layer_sizes = [self.d, hidden, hidden, hidden, 1]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            if rng is None:
                W = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights.append(W)
            self.biases.append(np.zeros(fan_out))

    @property
    def num_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def get_params(self):
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {theta.shape}")
        pos = 0
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = theta[pos:pos + W.size].reshape(W.shape).copy()
            pos += W.size
            self.biases[i] = theta[pos:pos + b.size].copy()
            pos += b.size

    def _encode(self, X):
        X = np.asarray(X, dtype=np.float64)
        return 2.0 * X - 1.0 if self.input_encoding == "pm1" else X

    def energy_batch(self, X, want_ctx=False):
        a = self._encode(X)
        acts = [a]
        pres = []
        for i in range(4):
            t = a @ self.weights[i] + self.biases[i]
            pres.append(t)
            a = swish(t) if i < 3 else t
            acts.append(a)
        u = acts[-1][:, 0]
        return (u, (acts, pres)) if want_ctx else u

    def grad_weighted(self, X, coeffs, ctx=None):
        if ctx is None:
            _, ctx = self.energy_batch(X, want_ctx=True)
        acts, pres = ctx
        delta = np.asarray(coeffs, dtype=np.float64)[:, None]
        grads_W = [None] * 4
        grads_b = [None] * 4
        for i in range(3, -1, -1):
            grads_W[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * swish_prime(pres[i - 1])
        parts = []
        for gW, gb in zip(grads_W, grads_b):
            parts.append(gW.ravel())
            parts.append(gb)
        return np.concatenate(parts)


class TabularEnergy(EnergyModel):
    """One free energy value per state; the non-parametric oracle model."""

    def __init__(self, d, table=None):
        if d > 20:
            raise ValueError("tabular energies are limited to d <= 20")
        self.d = int(d)
        n = 1 << self.d
        self.table = np.zeros(n) if table is None else np.array(table, dtype=np.float64)
        if self.table.shape != (n,):
            raise ValueError(f"table must have 2^{d} entries")

    @property
    def num_params(self):
        return self.table.size

    def get_params(self):
        return self.table.copy()

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.table.shape:
            raise ValueError("parameter size mismatch")
        self.table = theta.copy()

    def energy_batch(self, X, want_ctx=False):
        idx = state_indices(np.asarray(X))
        u = self.table[idx]
        return (u, idx) if want_ctx else u

    def grad_weighted(self, X, coeffs, ctx=None):
        idx = ctx if ctx is not None else state_indices(np.asarray(X))
        return np.bincount(idx, weights=np.asarray(coeffs, dtype=np.float64),
                           minlength=self.table.size).astype(np.float64)


def init_model(kind, d, rng=None, **kwargs):
    """Fresh model: Ising at J = 0, MLP Glorot-uniform, Tabular all-zero."""
    if kind == "ising":
        return IsingEnergy(d)
    if kind == "mlp":
        if rng is None:
            raise ValueError("mlp initialisation needs an rng")
        return MlpEnergy(d, rng=rng, **kwargs)
    if kind == "tabular":
        return TabularEnergy(d)
    raise ValueError(f"unknown model kind {kind!r}")


def l1_subgradient(model, coeff):
    """coeff * sign(J) for an Ising model, flat; sign(0) = 0, zero diagonal."""
    if not isinstance(model, IsingEnergy):
        raise TypeError("l1 regularisation applies to Ising couplings only")
    if coeff < 0:
        raise ValueError("coeff must be non-negative")
    G = coeff * np.sign(model.J)
    G = 0.5 * (G + G.T)
    np.fill_diagonal(G, 0.0)
    return G.ravel()


def _model_kind(model):
    if isinstance(model, IsingEnergy):
        return "ising"
    if isinstance(model, MlpEnergy):
        return "mlp"
    if isinstance(model, TabularEnergy):
        return "tabular"
    raise TypeError(f"unknown model type {type(model)!r}")


def save_checkpoint(model, path, step=0, seed=None, digest=""):
    """Write a model as JSON with 17-significant-digit decimal parameters."""
    doc = {
        "kind": _model_kind(model),
        "d": model.d,
        "params": [format(v, ".17g") for v in model.get_params()],
        "meta": {"step": int(step), "seed": seed, "config_digest": digest},
    }
    if isinstance(model, MlpEnergy):
        doc["layer_sizes"] = model.layer_sizes
        doc["input_encoding"] = model.input_encoding
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint; returns (model, meta)."""
    with open(path) as f:
        doc = json.load(f)
    kind = doc["kind"]
    d = int(doc["d"])
    params = np.array([float(v) for v in doc["params"]])
    if kind == "ising":
        model = IsingEnergy(d)
    elif kind == "mlp":
        hidden = doc.get("layer_sizes", [d, 256, 256, 256, 1])[1]
        model = MlpEnergy(d, rng=None, input_encoding=doc.get("input_encoding", "01"),
                          hidden=hidden)
    elif kind == "tabular":
        model = TabularEnergy(d)
    else:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    model.set_params(params)
    return model, doc.get("meta", {})
