# %% [markdown]
# # When the two-sided bounds say something
#
# For the `example51` fixture `K(t)` behaves like `t^(1/2-H)` near the
# origin, so `K(0+) = +inf`.  A boundary with `u(0) > 0`, such as `u = 1`,
# makes the Stieltjes term `int u d(-K)` infinite and the upper bound
# trivial; a lower curve with `u_-(0) < 0` makes the lower bound zero.
# Both bounds become informative once the curves start at the origin.  Here
# `u = sqrt(t)`, `u_- = -sqrt(t)` and the drift is scaled by `gamma`.

# %%
import numpy as np
from scipy import special

from fbmb.bounds import theorem_lower, theorem_upper
from fbmb.drifts import example51
from fbmb.fbm_mc import Boundary, estimate_channel, estimate_P, estimate_P_girsanov
from fbmb.frac_calc import constants
from fbmb.grid import SampledFunction, TimeGrid
from fbmb.majorant import build_bundle

H = 0.75
drift_grid = TimeGrid(20.0, 20001)
mc_grid = TimeGrid(1.0, 257)
m = 100_000

u = SampledFunction(drift_grid, np.sqrt(drift_grid.nodes))
u_minus = SampledFunction(drift_grid, -np.sqrt(drift_grid.nodes))
bd = Boundary(SampledFunction(mc_grid, np.sqrt(mc_grid.nodes)),
              SampledFunction(mc_grid, -np.sqrt(mc_grid.nodes)))

# %% [markdown]
# The trivial case first.

# %%
b1 = build_bundle(example51(drift_grid, H), H)
print("u = 1:", theorem_upper(b1, 1.0, 1.0).value, theorem_upper(b1, 1.0, 1.0).flags)

# %% [markdown]
# With `K = C1^-1 t^(1/2-H) e^-t` the Stieltjes term has the closed form
# `int sqrt(t) d(-K) = gamma Gamma(1/4) / (2 C1)`, a check on the quadrature.

# %%
p0 = estimate_P(None, bd, H, mc_grid, m, seed=1)
channel = estimate_channel(bd, H, mc_grid, m, seed=1)
print(f"P0 = {p0.estimate:.4f}, channel = {channel.estimate:.4f}")
print(f"{'gamma':>5} {'lower':>10} {'P_f (tilted MC)':>22} {'upper':>10}  stieltjes vs closed form")
for gamma in (2.0, 3.0, 4.0):
    b = build_bundle(example51(drift_grid, H, gamma), H)
    up = theorem_upper(b, u, p0)
    lo = theorem_lower(b, u_minus, channel)
    pf = estimate_P_girsanov(b.drift, bd, H, mc_grid, m, seed=2, tilt=b.f_hat)
    ref = gamma * special.gamma(0.25) / (2 * constants(H).C1)
    print(f"{gamma:5.1f} {lo.value:10.3e} {pf.estimate:12.3e} +- {pf.std_error:7.1e} "
          f"{up.value:10.3e}  {up.stieltjes.value:.5f} / {ref:.5f}")

# %% [markdown]
# At `gamma = 2` the upper bound still exceeds 1; from `gamma = 3` on both
# bounds are nontrivial and bracket the Monte Carlo estimate.  The lower
# bound is loose by orders of magnitude because the exponent pays
# `||h_tilde||^2 / 2` in full while the channel probability does not grow.
