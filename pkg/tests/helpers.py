"""Shared builders for filter-level tests."""

import numpy as np

from panjertrack.gm import GaussianMixture, LinearGaussianModel


def ncv_model(dt=1.0, accel_sd=0.3, meas_sd=0.2, p_s=0.99, p_d=0.9):
    """Nearly-constant-velocity model, state [x, y, vx, vy], position sensor."""
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    g = np.array([[dt**2 / 2, 0], [0, dt**2 / 2], [dt, 0], [0, dt]])
    q = accel_sd**2 * (g @ g.T)
    h = np.zeros((2, 4))
    h[0, 0] = h[1, 1] = 1.0
    r = meas_sd**2 * np.eye(2)
    return LinearGaussianModel(f, q, h, r, p_s, p_d)


def random_mixture(rng, n, dim=4, spread=10.0, total_mass=None):
    w = rng.uniform(0.2, 1.5, size=n)
    if total_mass is not None:
        w = w * (total_mass / w.sum())
    m = rng.normal(0.0, spread, size=(n, dim))
    a = rng.normal(0.0, 0.6, size=(n, dim, dim))
    p = np.einsum("nij,nkj->nik", a, a) + 0.4 * np.eye(dim)
    return GaussianMixture(w, m, p)


def random_scene(rng, n_comp, n_meas, spread=10.0, total_mass=None):
    """A predicted mixture plus measurements scattered near its components."""
    mix = random_mixture(rng, n_comp, spread=spread, total_mass=total_mass)
    idx = rng.integers(0, n_comp, size=n_meas)
    zs = mix.m[idx, :2] + rng.normal(0.0, 1.0, size=(n_meas, 2))
    return mix, zs
