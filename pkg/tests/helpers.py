"""Shared fixtures: random drifts with closed-form nonnegative representations."""

import numpy as np
from scipy import special

from fbmb.frac_calc import constants
from fbmb.grid import SampledFunction, TimeGrid, from_callable
from fbmb.rkhs import Drift


def power_exp_f_prime(t, H, g, s):
    """``f'`` whose representation is ``(t/s)**g * exp(-t/s)``."""
    c1 = constants(H).C1
    b = 1.5 - H + g
    p = H - 0.5 + g
    return (c1 * special.gamma(b) / special.gamma(1 + g) * (t / s) ** p
            * special.hyp1f1(b, 1 + g, -t / s) * s ** (H - 0.5))


def random_phi_drift(rng, grid: TimeGrid, H: float = 0.75):
    """Drift with ``phi = a0 (t/s0)^(-1/4) e^(-t/s0) + a1 (t/s1)^(k-1/4) e^(-t/s1)``.

    Both terms are nonnegative; the second bump usually makes ``h`` convex
    somewhere, so the majorant has genuine bridges.  Built for ``H = 3/4``,
    where ``f'`` is regular at the origin.  Returns ``(drift, phi)`` with
    ``phi`` a vectorised callable.
    """
    a0, a1 = rng.uniform(0.2, 1.0), rng.uniform(0.5, 3.0)
    s0, s1 = rng.uniform(0.5, 3.0), rng.uniform(0.3, 2.0)
    k = int(rng.integers(1, 4))

    def fp(t):
        return (a0 * s0 ** -0.25 * power_exp_f_prime(t, H, -0.25, s0)
                + a1 * s1 ** -0.25 * power_exp_f_prime(t, H, k - 0.25, s1))

    def phi(t):
        return (a0 * s0 ** -0.25 * (t / s0) ** -0.25 * np.exp(-t / s0)
                + a1 * s1 ** -0.25 * (t / s1) ** (k - 0.25) * np.exp(-t / s1))

    drift = Drift(from_callable(grid, fp, 0.0), f"random(a0={a0:.3f},a1={a1:.3f},k={k})")
    return drift, phi


def signed_bump(grid: TimeGrid, rng) -> SampledFunction:
    """Smooth signed perturbation ``sum c_i exp(-(t - m_i)^2 / w_i)``."""
    t = grid.nodes
    v = np.zeros_like(t)
    for _ in range(3):
        v += rng.normal() * np.exp(-(t - rng.uniform(0, grid.horizon / 2)) ** 2 / rng.uniform(0.2, 3))
    return SampledFunction(grid, v)


def chord_oracle(V):
    """Smallest concave nondecreasing majorant of each row of ``V`` on nodes ``0..n-1``.

    A nondecreasing majorant dominates the running maximum; the smallest
    concave majorant of a finite set is the pointwise max over all chords.
    """
    W = np.maximum.accumulate(V, axis=1)
    n = V.shape[1]
    out = W.copy()
    for j in range(n):
        for k in range(j + 1, n):
            i = np.arange(j, k + 1)
            lam = (i - j) / (k - j)
            chord = W[:, [j]] * (1 - lam) + W[:, [k]] * lam
            out[:, j:k + 1] = np.maximum(out[:, j:k + 1], chord)
    return out
