"""Planar toy dataset generators.

Seven classic 2-D shapes, each scaled to fit inside the default bounding box
[-4, 4]^2.  The exact constants below (radii, noise levels, cluster spreads)
are configuration defaults, not properties of the shapes themselves; they can
be overridden per generator through the `generator_params` config section.
"""

from __future__ import annotations

import numpy as np

from .gray import DEFAULT_BBOX

# Per-generator default constants.  Values follow the conventional planar
# toy-data constructions, scaled into [-4, 4]^2.
GENERATOR_PARAMS = {
    "8gaussians": {"radius": 2.0, "std": 0.1},
    "2spirals": {"turns_deg": 540.0, "scale": 3.0, "noise": 0.1},
    "circles": {"r_outer": 3.0, "r_inner": 1.5, "noise": 0.1},
    "moons": {"scale": 2.0, "noise": 0.1},
    "pinwheel": {
        "num_classes": 5,
        "radial_std": 0.3,
        "tangential_std": 0.1,
        "rate": 0.25,
        "scale": 2.0,
    },
    "swissroll": {"scale": 0.2, "noise": 1.0},
    "checkerboard": {},
}


def _gen_8gaussians(n, rng, radius, std):
    angles = np.pi / 4 * rng.integers(0, 8, size=n)
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return centers + std * rng.normal(size=(n, 2))


def _gen_2spirals(n, rng, turns_deg, scale, noise):
    t = np.sqrt(rng.random(n)) * turns_deg * (2 * np.pi / 360)
    d1x = -np.cos(t) * t + rng.random(n) * 0.5
    d1y = np.sin(t) * t + rng.random(n) * 0.5
    arm = np.where(rng.integers(0, 2, size=n) == 0, 1.0, -1.0)
    pts = np.stack([d1x, d1y], axis=1) * arm[:, None] / scale
    return pts + noise * rng.normal(size=(n, 2))


def _gen_circles(n, rng, r_outer, r_inner, noise):
    radii = np.where(rng.integers(0, 2, size=n) == 0, r_outer, r_inner)
    angles = 2 * np.pi * rng.random(n)
    pts = radii[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return pts + noise * rng.normal(size=(n, 2))


def _gen_moons(n, rng, scale, noise):
    t = np.pi * rng.random(n)
    upper = rng.integers(0, 2, size=n) == 0
    x = np.where(upper, np.cos(t), 1.0 - np.cos(t))
    y = np.where(upper, np.sin(t), 0.5 - np.sin(t))
    pts = np.stack([x - 0.5, y - 0.25], axis=1) * scale
    return pts + noise * rng.normal(size=(n, 2))


def _gen_pinwheel(n, rng, num_classes, radial_std, tangential_std, rate, scale):
    rads = np.linspace(0, 2 * np.pi, num_classes, endpoint=False)
    labels = rng.integers(0, num_classes, size=n)
    feats = rng.normal(size=(n, 2)) * np.array([radial_std, tangential_std])
    feats[:, 0] += 1.0
    angles = rads[labels] + rate * np.exp(feats[:, 0])
    c, s = np.cos(angles), np.sin(angles)
    x = feats[:, 0] * c - feats[:, 1] * s
    y = feats[:, 0] * s + feats[:, 1] * c
    return scale * np.stack([x, y], axis=1)


def _gen_swissroll(n, rng, scale, noise):
    t = 1.5 * np.pi * (1 + 2 * rng.random(n))
    pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=1)
    return (pts + noise * rng.normal(size=(n, 2))) * scale


def _gen_checkerboard(n, rng):
    x1 = rng.random(n) * 4 - 2
    x2 = rng.random(n) - rng.integers(0, 2, size=n) * 2
    x2 = x2 + np.floor(x1) % 2
    return 2 * np.stack([x1, x2], axis=1)


_GENERATORS = {
    "8gaussians": _gen_8gaussians,
    "2spirals": _gen_2spirals,
    "circles": _gen_circles,
    "moons": _gen_moons,
    "pinwheel": _gen_pinwheel,
    "swissroll": _gen_swissroll,
    "checkerboard": _gen_checkerboard,
}

DATASET_NAMES = tuple(sorted(_GENERATORS))


def sample_synthetic(name, n, rng, params=None, bbox=DEFAULT_BBOX):
    """Draw n points from the named planar distribution, clipped into bbox."""
    if name not in _GENERATORS:
        raise ValueError(f"unknown dataset {name!r}; choose from {DATASET_NAMES}")
    if n == 0:
        return np.empty((0, 2), dtype=np.float64)
    merged = dict(GENERATOR_PARAMS[name])
    if params:
        unknown = set(params) - set(merged)
        if unknown:
            raise ValueError(f"unknown generator params for {name!r}: {sorted(unknown)}")
        merged.update(params)
    pts = _GENERATORS[name](int(n), rng, **merged)
    lo = np.array([bbox[0][0], bbox[1][0]])
    hi = np.array([bbox[0][1], bbox[1][1]])
    return np.clip(pts, lo, hi)


def save_points_csv(points, path):
    """Write planar points as a two-column CSV."""
    with open(path, "w") as f:
        for x, y in np.asarray(points, dtype=np.float64):
            f.write(f"{float(x)!r},{float(y)!r}\n")


def load_points_csv(path):
    """Read planar points written by save_points_csv."""
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split(",")
            rows.append((float(a), float(b)))
    return np.array(rows, dtype=np.float64).reshape(-1, 2)
