"""Binary state vectors, state/index conversions, and dataset containers.

A state is a 1-D numpy uint8 array with entries in {0, 1}; a batch of states
is a 2-D array of shape (N, d).  State indices read the bit vector as a
binary numeral, most significant bit first, so the state (1, 0) has index 2.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


def as_bits(x):
    """Coerce x to a 1-D uint8 array of 0/1 entries, validating the values."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D bit vector, got shape {arr.shape}")
    out = arr.astype(np.uint8)
    if not np.array_equal(out, arr) or np.any(out > 1):
        raise ValueError("bit vector entries must be exactly 0 or 1")
    return out


def as_bit_matrix(X):
    """Coerce X to a (N, d) uint8 array of 0/1 entries."""
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D batch of bit vectors, got shape {arr.shape}")
    out = arr.astype(np.uint8)
    if not np.array_equal(out, arr) or np.any(out > 1):
        raise ValueError("bit vector entries must be exactly 0 or 1")
    return out


def state_index(x):
    """Integer index of a bit vector (MSB first): (1,0) -> 2."""
    x = np.asarray(x)
    d = x.shape[-1]
    weights = 1 << np.arange(d - 1, -1, -1, dtype=np.int64)
    return int(x.astype(np.int64) @ weights)


def state_indices(X):
    """Vectorised state_index over the rows of a (N, d) batch."""
    X = np.asarray(X)
    d = X.shape[-1]
    weights = 1 << np.arange(d - 1, -1, -1, dtype=np.int64)
    return X.astype(np.int64) @ weights


def index_to_state(i, d):
    """Inverse of state_index for dimension d."""
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)
    return ((int(i) >> shifts) & 1).astype(np.uint8)


def all_states(d):
    """All 2^d states as a (2^d, d) uint8 array; row i is the state with index i."""
    if d > 20:
        raise ValueError(f"enumeration of 2^{d} states refused (d must be <= 20)")
    idx = np.arange(1 << d, dtype=np.int64)
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def hamming(a, b):
    """Number of differing positions between two equal-length bit vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


@dataclass
class Dataset:
    """A fixed collection of equal-dimension binary states.

    states: (N, d) uint8 array, each entry 0 or 1.
    provenance: free-text label describing where the data came from.
    """

    states: np.ndarray
    provenance: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.states = as_bit_matrix(self.states)
        if len(self.states) < 1:
            raise ValueError("a dataset must contain at least one state")

    @property
    def d(self):
        return self.states.shape[1]

    def __len__(self):
        return len(self.states)


def save_dataset_csv(dataset, path):
    """Write a dataset as CSV, one row per state, with a metadata header line."""
    header = f"# d={dataset.d} name={dataset.provenance} seed={dataset.seed}"
    with open(path, "w") as f:
        f.write(header + "\n")
        for row in dataset.states:
            f.write(",".join(str(int(v)) for v in row) + "\n")


def load_dataset_csv(path):
    """Read a dataset written by save_dataset_csv (the header line is optional)."""
    provenance = os.path.splitext(os.path.basename(path))[0]
    seed = None
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line.lstrip("#").split():
                    if tok.startswith("name="):
                        provenance = tok[len("name="):]
                    elif tok.startswith("seed=") and tok[len("seed="):] != "None":
                        seed = int(tok[len("seed="):])
                continue
            rows.append([int(v) for v in line.split(",")])
    return Dataset(np.array(rows, dtype=np.uint8), provenance=provenance, seed=seed)
