"""Analytic bounds for non-crossing probabilities of fBm with trend.

Every function here is deterministic given its inputs; Monte Carlo
estimates are passed in, never sampled internally, except in
:func:`asymptotic_sweep` and :func:`default_u_minus`, which orchestrate
their own runs from an explicit seed.

Bounds live on the drift grid, where ``K`` is defined.  A boundary given on
a shorter grid (or as a scalar) is carried over by linear interpolation and
held at its last value beyond its horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .fbm_mc import (Boundary, EstimatorResult, estimate_channel, estimate_P,
                     estimate_P_girsanov, values_on)
from .grid import SampledFunction, StieltjesResult, TimeGrid, stieltjes_vs_decreasing
from .majorant import MajorantBundle

SQRT_2PI = np.sqrt(2.0 * np.pi)


def normal_cdf(x):
    return special.ndtr(x)


def normal_quantile(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)) or np.any(~np.isfinite(p_arr)):
        raise ValueError(f"quantile needs 0 < p < 1, got {p}")
    return special.ndtri(p)


@dataclass(frozen=True)
class LemmaBounds:
    alpha: float
    abs_bound: float
    bracket: tuple


def lemma_bounds(P0: float, norm_f: float, norm_g: float | None = None) -> LemmaBounds:
    """``alpha = Phi^-1(P0)``, ``|P_f - P0| <= ||f|| / sqrt(2 pi)`` and
    ``[Phi(alpha - ||g||), Phi(alpha + ||f||)]`` for a dominating ``g >= f``."""
    if not 0.0 < P0 < 1.0:
        raise ValueError(f"P0 must lie in (0, 1), got {P0}")
    if norm_f < 0 or (norm_g is not None and norm_g < 0):
        raise ValueError("norms must be nonnegative")
    norm_g = norm_f if norm_g is None else norm_g
    a = float(normal_quantile(P0))
    lo = float(normal_cdf(a - norm_g))
    hi = float(normal_cdf(a + norm_f))
    if norm_f == 0.0 and norm_g == 0.0:
        lo = hi = float(P0)
    return LemmaBounds(a, float(norm_f / SQRT_2PI), (lo, hi))


def boundary_on(grid: TimeGrid, u) -> SampledFunction:
    """A boundary (``Boundary.u``, sampled function or scalar) on ``grid``."""
    if isinstance(u, Boundary):
        u = u.u
    if np.isscalar(u):
        return SampledFunction(grid, np.full(grid.n_points, float(u)))
    if u.grid == grid:
        return u
    return SampledFunction(grid, np.interp(grid.nodes, u.t, u.values))


@dataclass
class TheoremBound:
    value: float
    prob_factor: float
    stieltjes: StieltjesResult
    half_norm_sq: float
    void: bool
    flags: tuple = ()

    @property
    def log_exponent(self) -> float:
        return self.stieltjes.value - self.half_norm_sq


def _combine(p, st: StieltjesResult, half):
    e = st.value - half
    if p == 0.0:
        return 0.0
    if e == np.inf:
        return np.inf
    if e == -np.inf:
        return 0.0
    return float(p * np.exp(e))


def theorem_upper(bundle: MajorantBundle, u, p_residual=1.0) -> TheoremBound:
    """``P_{f - f_hat} * exp(int u d(-K) - ||h_tilde||^2 / 2)``.

    ``p_residual`` is an :class:`EstimatorResult` for the drift ``f - f_hat``
    or the certified value ``1``.  When a condition of the bundle report
    fails the value is still computed, with a signed Stieltjes sum, and
    flagged VOID.
    """
    p = p_residual.estimate if isinstance(p_residual, EstimatorResult) else float(p_residual)
    ub = boundary_on(bundle.K.grid, u)
    void = not bundle.report.all_ok
    st = stieltjes_vs_decreasing(ub, bundle.K, allow_increase=void)
    half = 0.5 * bundle.norms["h_tilde"] ** 2
    flags = []
    if void:
        flags.append("VOID")
    if st.value == np.inf:
        flags.append("TRIVIAL_INFINITE")
    return TheoremBound(_combine(p, st, half), p, st, half, void, tuple(flags))


def theorem_lower(bundle: MajorantBundle, u_minus, p_channel) -> TheoremBound:
    """``P(u_- <= B <= u) * exp(int u_- d(-K) - ||h_tilde||^2 / 2)``.

    For ``H < 1/2`` the bound needs ``f_hat >= f`` on the grid and is refused
    otherwise.
    """
    ev = bundle.report.evidence
    if bundle.H < 0.5 and not ev["f_hat_dominates"]:
        raise ValueError(
            f"lower bound refused: f_hat < f by {-ev['f_hat_minus_f_min']:.3e} "
            f"at t={ev['f_hat_minus_f_argmin']:.6g}")
    p = p_channel.estimate if isinstance(p_channel, EstimatorResult) else float(p_channel)
    if isinstance(u_minus, Boundary):
        if u_minus.u_minus is None:
            raise ValueError("boundary has no lower curve")
        u_minus = u_minus.u_minus
    lb = boundary_on(bundle.K.grid, u_minus)
    void = not bundle.report.all_ok
    st = stieltjes_vs_decreasing(lb, bundle.K, allow_increase=void)
    half = 0.5 * bundle.norms["h_tilde"] ** 2
    flags = []
    if void:
        flags.append("VOID")
    if st.value == -np.inf:
        flags.append("DEGENERATE_ZERO")
    return TheoremBound(_combine(p, st, half), p, st, half, void, tuple(flags))


def min_norm(bundle: MajorantBundle) -> dict:
    """``f_hat`` with ``||f_hat||_H = ||h_tilde||``, the infimum over dominating drifts."""
    nh = bundle.norms["h_tilde"]
    nf = bundle.report.evidence["f_hat_norm"]
    res = abs(nf - nh)
    ok = res <= 1e-3 * max(nh, 1e-300) or nh == 0.0
    return {"norm": nh, "solution": bundle.f_hat, "f_hat_norm": nf, "residual": res,
            "consistent": bool(ok), "void": not bundle.report.all_ok}


def derived_seed(seed: int, row: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=(7, row)).generate_state(1)[0])


@dataclass
class SweepRow:
    gamma: float
    neg_log_p: float
    target: float
    ratio: float
    ess: float
    seed: int
    estimate: EstimatorResult
    flag: str = ""


def asymptotic_sweep(f, f_hat, b: Boundary, H, grid: TimeGrid, gammas, m: int, seed: int,
                     norm_h_tilde: float) -> list[SweepRow]:
    """``-ln P_{gamma f}`` against ``gamma^2 ||h_tilde||^2 / 2``.

    Row 0 is the baseline ``gamma = 0`` (plain sampling, ratio undefined).
    Each further row uses Girsanov tilting by ``gamma f_hat`` with its own
    derived seed.  A row with a zero estimate is flagged UNRESOLVED.
    """
    gammas = [float(g) for g in gammas]
    if any(g <= 0 for g in gammas) or any(b2 <= a for a, b2 in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be positive and increasing")
    fv = values_on(grid, f)
    if not np.any(fv > 0):
        raise ValueError("the drift must be positive somewhere")
    fh = values_on(grid, f_hat)
    rows = []
    s0 = derived_seed(seed, 0)
    base = estimate_P(None, b, H, grid, m, s0, "volterra")
    rows.append(_row(0.0, base, 0.0, s0, m))
    for k, g in enumerate(gammas, start=1):
        sk = derived_seed(seed, k)
        est = estimate_P_girsanov(g * fv, b, H, grid, m, sk, tilt=g * fh)
        rows.append(_row(g, est, 0.5 * g * g * norm_h_tilde ** 2, sk, m))
    return rows


def _row(g, est: EstimatorResult, target, seed, m) -> SweepRow:
    flag = ""
    if est.estimate <= 0.0:
        nlp = np.inf
        flag = "UNRESOLVED"
    else:
        nlp = float(-np.log(est.estimate))
    ratio = nlp / target if target > 0 and np.isfinite(nlp) else np.nan
    ess = est.ess if est.ess is not None else float(est.estimate * m)
    if "LOW_ESS" in est.flags:
        flag = (flag + "|LOW_ESS").strip("|")
    return SweepRow(g, nlp, target, ratio, ess, seed, est, flag)


def default_u_minus(u, H, grid: TimeGrid, m: int, seed: int, method="circulant",
                    level: float = 0.05, lo: float = 0.1, hi: float = 10.0, iters: int = 20):
    """Smallest shift ``c`` in ``[lo, hi]`` with ``P(u - c <= B <= u) >= level``.

    Common random numbers make the channel probability monotone in ``c``.
    Returns ``(c, EstimatorResult)``.
    """
    uv = values_on(grid, u.u if isinstance(u, Boundary) else u)
    us = SampledFunction(grid, uv)

    def prob(c):
        lower = SampledFunction(grid, uv - c)
        return estimate_channel(Boundary(us, lower), H, grid, m, seed, method)

    top = prob(hi)
    if top.estimate < level:
        raise ValueError(f"channel probability {top.estimate:.3g} < {level} even at c={hi}")
    first = prob(lo)
    if first.estimate >= level:
        return lo, first
    a, z, best = lo, hi, top
    for _ in range(iters):
        mid = 0.5 * (a + z)
        r = prob(mid)
        if r.estimate >= level:
            z, best = mid, r
        else:
            a = mid
    return z, best


@dataclass
class BoundReport:
    lemma: LemmaBounds | None = None
    upper: TheoremBound | None = None
    lower: TheoremBound | None = None
    estimates: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def void(self) -> bool:
        return any(x is not None and x.void for x in (self.upper, self.lower))

    def lines(self):
        out = [f"{k}={v}" for k, v in self.info.items()]
        if self.lemma is not None:
            lb = self.lemma
            out += [f"lemma.alpha={lb.alpha!r}", f"lemma.abs_bound={lb.abs_bound!r}",
                    f"lemma.bracket_low={lb.bracket[0]!r}", f"lemma.bracket_high={lb.bracket[1]!r}"]
        for name, tb in (("upper", self.upper), ("lower", self.lower)):
            if tb is None:
                out.append(f"theorem.{name}=omitted")
                continue
            out += [f"theorem.{name}={tb.value!r}",
                    f"theorem.{name}.prob_factor={tb.prob_factor!r}",
                    f"theorem.{name}.stieltjes={tb.stieltjes.value!r}",
                    f"theorem.{name}.stieltjes_grid_part={tb.stieltjes.grid_value!r}",
                    f"theorem.{name}.stieltjes_origin={tb.stieltjes.origin}",
                    f"theorem.{name}.stieltjes_tail={tb.stieltjes.tail_remainder!r}",
                    f"theorem.{name}.half_norm_sq={tb.half_norm_sq!r}",
                    f"theorem.{name}.flags={'|'.join(tb.flags) or 'none'}"]
        for k, est in self.estimates.items():
            out += est.lines(f"mc.{k}")
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"
