"""Shared test oracles."""

import numpy as np


def characteristics_solution(H0_func, z_points, t):
    """Independent pre-shock oracle for dH/dt = d_z(H^2).

    H is constant along z(t) = z0 - 2 H0(z0) t; invert the characteristic map
    by Newton iteration at each requested point (unique before crossing).
    """
    out = np.empty_like(z_points)
    for i, zi in enumerate(z_points):
        z0 = zi
        for _ in range(200):
            f = z0 - 2 * H0_func(z0) * t - zi
            df = 1 - 2 * t * (H0_func(z0 + 1e-7) - H0_func(z0 - 1e-7)) / 2e-7
            step = f / df
            z0 -= step
            if abs(step) < 1e-14:
                break
        out[i] = H0_func(z0)
    return out
