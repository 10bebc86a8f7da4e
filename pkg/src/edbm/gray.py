"""Gray-code quantization of planar points to 32-bit states.

Each coordinate of a 2-D point is affinely mapped to an integer in
[0, 2^16 - 1], encoded as a reflected binary Gray code (MSB first), and the
two 16-bit codes are concatenated, first coordinate first.  Decoding maps a
code back to the centre value of its quantization cell.
"""

from __future__ import annotations

import numpy as np

GRAY_BITS = 16
GRAY_MAX = (1 << GRAY_BITS) - 1

# Default axis-aligned bounding box for the planar toy datasets: all seven
# generators fit inside [-4, 4]^2.  Points outside are clamped.
DEFAULT_BBOX = ((-4.0, 4.0), (-4.0, 4.0))


def _int_to_bits(n, width):
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((np.asarray(n, dtype=np.int64)[..., None] >> shifts) & 1).astype(np.uint8)


def _bits_to_int(bits):
    bits = np.asarray(bits, dtype=np.int64)
    width = bits.shape[-1]
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def gray_encode(n):
    """Reflected binary Gray code of a 16-bit unsigned integer, MSB first."""
    n = int(n)
    if not 0 <= n <= GRAY_MAX:
        raise ValueError(f"value {n} outside the 16-bit range")
    return _int_to_bits(n ^ (n >> 1), GRAY_BITS)


def gray_decode(g):
    """Exact inverse of gray_encode."""
    g = np.asarray(g)
    if g.shape != (GRAY_BITS,):
        raise ValueError(f"expected {GRAY_BITS} bits, got shape {g.shape}")
    n = int(_bits_to_int(g))
    # Undo the XOR cascade: repeatedly fold the shifted value back in.
    shift = 1
    while shift < GRAY_BITS:
        n ^= n >> shift
        shift <<= 1
    return n


def _quantize(values, lo, hi):
    # Affine map to [0, 2^16-1] with round-half-up, clamping out-of-box input.
    t = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)
    t = np.clip(t, 0.0, 1.0)
    n = np.floor(t * GRAY_MAX + 0.5).astype(np.int64)
    return np.clip(n, 0, GRAY_MAX)


def _dequantize(n, lo, hi):
    return lo + (hi - lo) * (np.asarray(n, dtype=np.float64) / GRAY_MAX)


def float_to_bits(point, bbox=DEFAULT_BBOX):
    """Quantize one 2-D point to a 32-bit state (two concatenated Gray codes)."""
    return float_to_bits_batch(np.asarray(point, dtype=np.float64)[None, :], bbox)[0]


def float_to_bits_batch(points, bbox=DEFAULT_BBOX):
    """Vectorised float_to_bits over a (N, 2) array of points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"expected (N, 2) points, got shape {points.shape}")
    codes = []
    for axis in range(2):
        lo, hi = bbox[axis]
        n = _quantize(points[:, axis], lo, hi)
        codes.append(_int_to_bits(n ^ (n >> 1), GRAY_BITS))
    return np.concatenate(codes, axis=1)


def bits_to_float(x, bbox=DEFAULT_BBOX):
    """Decode a 32-bit state back to the representative point of its cell."""
    return bits_to_float_batch(np.asarray(x)[None, :], bbox)[0]


def bits_to_float_batch(X, bbox=DEFAULT_BBOX):
    """Vectorised bits_to_float over a (N, 32) array of states."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != 2 * GRAY_BITS:
        raise ValueError(f"expected (N, {2 * GRAY_BITS}) states, got shape {X.shape}")
    out = np.empty((X.shape[0], 2), dtype=np.float64)
    for axis in range(2):
        g = _bits_to_int(X[:, axis * GRAY_BITS:(axis + 1) * GRAY_BITS])
        n = g.copy()
        shift = 1
        while shift < GRAY_BITS:
            n ^= n >> shift
            shift <<= 1
        lo, hi = bbox[axis]
        out[:, axis] = _dequantize(n, lo, hi)
    return out
