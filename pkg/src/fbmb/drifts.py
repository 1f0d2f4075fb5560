"""Builtin drifts with closed-form representations.

Both fixtures are defined through their representation
``phi(t) = t**g * exp(-t)``, for which

    f'(t) = C1 * Gamma(b) / Gamma(1 + g) * t**(H - 1/2 + g) * M(b, 1 + g, -t),
    b = 3/2 - H + g,

with ``M`` Kummer's confluent hypergeometric function.  ``example51`` is
``g = 1/2 - H`` (then ``f'`` is regular at the origin); ``example52``
defaults to ``g = H - 1/2``.  ``scale`` multiplies the whole drift.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .frac_calc import check_hurst, constants
from .grid import SampledFunction, TimeGrid, from_callable
from .rkhs import Drift


def power_exp_phi(grid: TimeGrid, g: float) -> SampledFunction:
    return from_callable(grid, lambda t: t ** g * np.exp(-t), g)


def power_exp_drift(grid: TimeGrid, H, g: float, scale: float = 1.0, name="power_exp") -> Drift:
    """Drift whose representation is ``scale * t**g * exp(-t)``."""
    H = check_hurst(H)
    if g <= -0.5:
        raise ValueError(f"t^{g} e^-t is not square integrable")
    c1 = constants(H).C1
    b = 1.5 - H + g
    p = H - 0.5 + g
    coef = scale * c1 * special.gamma(b) / special.gamma(1.0 + g)
    fn = lambda t: coef * t ** p * special.hyp1f1(b, 1.0 + g, -t)
    return Drift(from_callable(grid, fn, p), name)


def example51(grid: TimeGrid, H, scale: float = 1.0) -> Drift:
    H = check_hurst(H)
    return power_exp_drift(grid, H, 0.5 - H, scale, f"example51(H={H:g},scale={scale:g})")


def example52(grid: TimeGrid, H, scale: float = 1.0, exponent=None) -> Drift:
    H = check_hurst(H)
    g = H - 0.5 if exponent is None else float(exponent)
    return power_exp_drift(grid, H, g, scale, f"example52(H={H:g},g={g:g},scale={scale:g})")


def example_norm(H, g=None) -> float:
    """Closed-form ``||t**g e**-t||_{L2(R+)} = (Gamma(2g+1) / 2**(2g+1))**0.5``."""
    g = 0.5 - H if g is None else g
    return float(np.sqrt(special.gamma(2 * g + 1) / 2 ** (2 * g + 1)))
