"""Pure NumPy implementations of the planner's hot kernels.

Fallback used whenever the compiled extension is unavailable (see
swarmchor.kernels). The compiled and pure versions must agree to floating
point round-off; a test enforces this.
"""
from __future__ import annotations

import numpy as np


def collision_projection(
    p: np.ndarray,          # (K1, 3) trajectory of the drone being updated
    neighbors: np.ndarray,  # (M, K1, 3) latest neighbor iterates
    inv_axes: np.ndarray,   # (3,) inverse ellipsoid semi-axes
    gamma: float,
    radius_base: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Polar projection targets for the ellipsoidal clearance constraints.

    For each neighbor j and step k the scaled offset w = (p[k]-xi[j,k])/axes
    must satisfy ||w|| >= r_k, where r_k = radius_base, or for gamma < 1 the
    tightened radius sqrt(radius_base^2 + (1-gamma) * max(h[k-1], 0)) from
    the barrier condition. radius_base > 1 over-separates the samples, e.g.
    to keep linearly interpolated inter-sample points clear of the unit
    ellipsoid. Violating steps get a target point xi + axes * (r_k * w/||w||);
    exactly coincident points split along +x.

    Returns (targets (M, K1, 3), active (M, K1) bool).
    """
    p = np.asarray(p, dtype=float)
    neighbors = np.asarray(neighbors, dtype=float)
    inv_axes = np.asarray(inv_axes, dtype=float)
    M, K1, _ = neighbors.shape
    delta = p[None, :, :] - neighbors              # (M, K1, 3)
    w = delta * inv_axes
    norm = np.linalg.norm(w, axis=2)               # (M, K1)

    radius = np.full((M, K1), float(radius_base))
    if gamma < 1.0:
        h = norm**2 - 1.0
        radius[:, 1:] = np.sqrt(
            radius_base**2 + (1.0 - gamma) * np.maximum(h[:, :-1], 0.0)
        )

    active = norm < radius
    unit = np.zeros_like(w)
    nz = norm > 0
    unit[nz] = w[nz] / norm[nz][:, None]
    unit[~nz] = [1.0, 0.0, 0.0]
    # radial target d = max(r_k, current scaled distance): non-violating
    # steps project onto themselves
    d = np.maximum(radius, norm)
    targets = neighbors + (d[:, :, None] * unit) / inv_axes
    return targets, active


def min_pair_clearance(positions: np.ndarray, inv_axes: np.ndarray) -> float:
    """min over all pairs and steps of h = ||(p_i - p_j)/axes||^2 - 1.

    positions: (N, K1, 3). Returns +inf for N < 2.
    """
    positions = np.asarray(positions, dtype=float)
    N = positions.shape[0]
    if N < 2:
        return float("inf")
    best = float("inf")
    for i in range(N - 1):
        w = (positions[i + 1 :] - positions[i]) * inv_axes  # (N-i-1, K1, 3)
        h = (w**2).sum(axis=2) - 1.0
        best = min(best, float(h.min()))
    return best


def pair_clearance_series(positions: np.ndarray, inv_axes: np.ndarray) -> np.ndarray:
    """(n_pairs, K1) clearance series h_ij[k], pairs in (i<j) row-major order."""
    positions = np.asarray(positions, dtype=float)
    N, K1, _ = positions.shape
    out = []
    for i in range(N - 1):
        w = (positions[i + 1 :] - positions[i]) * inv_axes
        out.append((w**2).sum(axis=2) - 1.0)
    if not out:
        return np.zeros((0, K1))
    return np.concatenate(out, axis=0)
