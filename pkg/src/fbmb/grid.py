"""Uniform time grids, sampled functions and the quadratures built on them.

Every numerical object in the package lives on a :class:`TimeGrid`, a uniform
partition of ``[0, T]``.  Functions are carried as :class:`SampledFunction`
values.  A function may have an integrable power-law singularity (or a
non-smooth power behaviour) at the origin, declared through
``singular_exponent``; quadratures then integrate the leading power law
in closed form and apply the trapezoid rule to the smoother remainder.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special

EXP_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform nodes ``t_i = i * T / (n_points - 1)``."""

    horizon: float
    n_points: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def step(self) -> float:
        return self.horizon / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.horizon, self.n_points)
        t.setflags(write=False)
        return t

    def __len__(self):
        return self.n_points


def is_singular(p) -> bool:
    """True when a declared exponent requires special handling of the first cell."""
    return p is not None and abs(p) > EXP_TOL


def leading_exponent(*exps):
    """Leading power of a sum; ``None`` stands for a regular function (power 0)."""
    p = min(0.0 if e is None else float(e) for e in exps)
    return p if is_singular(p) else None


@dataclass(frozen=True)
class SampledFunction:
    """Values of a function on the nodes of a grid.

    ``singular_exponent`` is the leading power ``p`` of the function at the
    origin (``f(t) ~ c t**p``).  ``None`` or ``0`` means regular.  When
    ``p < 0`` the value stored at ``t_0`` is a finite placeholder that no
    routine reads.
    """

    grid: TimeGrid
    values: np.ndarray
    singular_exponent: float | None = None
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            bad = np.flatnonzero(~np.isfinite(v))
            raise ValueError(f"non-finite values at nodes {bad[:10].tolist()}")
        p = self.singular_exponent
        if p is not None:
            p = float(p)
            if p <= -1:
                raise ValueError(f"singular exponent {p} is not integrable at 0")
            if abs(p) <= EXP_TOL:
                p = None
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "singular_exponent", p)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def p(self) -> float:
        return 0.0 if self.singular_exponent is None else self.singular_exponent

    def with_values(self, values, singular_exponent="same", **meta):
        p = self.singular_exponent if singular_exponent == "same" else singular_exponent
        return SampledFunction(self.grid, values, p, meta)

    def __mul__(self, c):
        return self.with_values(c * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def to_csv(self, path=None) -> str:
        text = to_csv_text(["t", "value"], [self.t, self.values])
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, singular_exponent=None) -> "SampledFunction":
        t, v = read_two_column_csv(path)
        return cls(grid_from_nodes(t), v, singular_exponent)


def from_callable(grid: TimeGrid, fn, singular_exponent=None) -> SampledFunction:
    """Sample ``fn`` on the grid; the origin is skipped when ``fn`` is singular there."""
    t = grid.nodes
    v = np.zeros_like(t)
    p = singular_exponent
    if p is not None and p < -EXP_TOL:
        v[1:] = fn(t[1:])
    else:
        v[:] = fn(t)
    return SampledFunction(grid, v, p)


def grid_from_nodes(t) -> TimeGrid:
    t = np.asarray(t, dtype=float)
    if t.size < 2 or t[0] != 0.0:
        raise ValueError("nodes must start at 0 and have at least two entries")
    g = TimeGrid(float(t[-1]), t.size)
    if not np.allclose(t, g.nodes, rtol=0, atol=1e-9 * max(1.0, g.horizon)):
        raise ValueError("nodes are not uniformly spaced")
    return g


def to_csv_text(header, columns) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def read_two_column_csv(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    rows = [ln.split(",") for ln in lines[1:]]
    try:
        arr = np.array(rows, dtype=float)
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from None
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError(f"{path}: expected a header and at least two rows of two columns")
    return arr[:, 0], arr[:, 1]


def origin_limit(values: np.ndarray) -> float:
    """Quadratic extrapolation of nodes 1..3 back to ``t = 0``."""
    return 3.0 * values[1] - 3.0 * values[2] + values[3]


def first_cell_coefficient(f: SampledFunction) -> float:
    """``c`` in ``f(t) ~ c t**p`` fitted through the value at ``t_1``."""
    dt = f.grid.step
    return f.values[1] / dt ** f.p


def _leading_split(v: np.ndarray, t: np.ndarray, p: float, power: float = 1.0):
    """Split ``v = c0**power * t**(power*p) * exp(-t) + r`` for a leading term ``c0 t**p``.

    The fitted reference is exponentially damped so that it never dominates
    away from the origin.  Returns ``(c0, r)`` with ``r[0] = 0``.
    """
    G = np.empty_like(v)
    G[1:] = v[1:] / t[1:] ** (power * p)
    c = origin_limit(G) if v.size > 3 else G[1]
    r = np.zeros_like(v)
    r[1:] = v[1:] - c * t[1:] ** (power * p) * np.exp(-t[1:])
    return c, r


def _trapezoid_cells(v: np.ndarray, dt: float) -> np.ndarray:
    return 0.5 * dt * (v[1:] + v[:-1])


def cumulative_integral(f: SampledFunction) -> SampledFunction:
    """``F(t_i) = int_0^{t_i} f``, trapezoid rule.

    With a declared exponent ``p`` the leading behaviour ``c t**p`` is
    matched by ``c t**p e**-t``, whose integral is an incomplete gamma
    function; only the smoother remainder goes through the trapezoid rule.
    """
    dt = f.grid.step
    if not is_singular(f.singular_exponent):
        out = np.concatenate(([0.0], np.cumsum(_trapezoid_cells(f.values, dt))))
        return SampledFunction(f.grid, out, None)
    p = f.p
    t = f.t
    c, r = _leading_split(f.values, t, p)
    out = np.concatenate(([0.0], np.cumsum(_trapezoid_cells(r, dt))))
    out += c * special.gamma(p + 1) * special.gammainc(p + 1, t)
    p_out = p + 1.0
    if abs(p_out - 1.0) <= EXP_TOL:
        p_out = None
    return SampledFunction(f.grid, out, p_out)


def square_cell_integrals(f: SampledFunction) -> np.ndarray:
    """``int f**2`` over every cell, with the power-law split near the origin."""
    dt = f.grid.step
    sq = f.values ** 2
    if not is_singular(f.singular_exponent):
        return _trapezoid_cells(sq, dt)
    p = f.p
    t = f.t
    c, r = _leading_split(sq, t, p, power=2.0)
    ref = c * special.gamma(2 * p + 1) * special.gammainc(2 * p + 1, t)
    return _trapezoid_cells(r, dt) + np.diff(ref)


def l2_norm(f: SampledFunction) -> float:
    """``(int_0^T f**2)**0.5``, with the same treatment of a power law at 0."""
    return float(np.sqrt(max(np.sum(square_cell_integrals(f)), 0.0)))


NOISE_FLOOR = 1e-7


def tail_decay_rate(f: SampledFunction, fraction: float = 0.1):
    """Fit ``|f| ~ A exp(-lam t)`` on the last ``fraction`` of the grid.

    Returns ``(A_at_T, lam)``; ``lam <= 0`` signals a non-decaying tail.
    A tail lying below ``NOISE_FLOOR * max|f|`` is reported with
    ``lam = inf`` since its shape is rounding noise.
    """
    n = f.grid.n_points
    k = max(3, int(n * fraction))
    t = f.t[-k:]
    a = np.abs(f.values[-k:])
    start = 1 if (f.singular_exponent is not None and f.p < 0) else 0
    scale = float(np.max(np.abs(f.values[start:]))) if n > start else 0.0
    if scale == 0.0 or np.all(a <= 1e-300):
        return 0.0, np.inf
    if np.max(a) <= NOISE_FLOOR * scale:
        return float(np.max(a)), np.inf
    y = np.log(np.maximum(a, 1e-300))
    slope = np.polyfit(t, y, 1)[0]
    return float(a[-1]), float(-slope)


def l2_tail_bound(f: SampledFunction) -> float:
    """Estimate of ``(int_T^inf f**2)**0.5`` from an exponential tail fit.

    For a tail at the noise floor the largest tail sample is returned.
    """
    a_T, lam = tail_decay_rate(f)
    if a_T == 0.0:
        return 0.0
    if lam <= 0:
        return np.inf
    if np.isinf(lam):
        return a_T
    return float(a_T / np.sqrt(2 * lam))


class StieltjesResult(NamedTuple):
    value: float
    grid_value: float
    tail_remainder: float
    origin: str


def stieltjes_vs_decreasing(u: SampledFunction, K: SampledFunction,
                            rel_tol: float = 1e-9, allow_increase: bool = False) -> StieltjesResult:
    """``int u d(-K)`` for a nonincreasing integrator ``K``.

    The midpoint Riemann-Stieltjes sum is taken over the cells of the grid.
    When ``K`` is singular at the origin (``K(0+) = +inf``) the first cell
    contributes ``u(0) * inf`` unless ``u(0) = 0``, in which case ``u`` is
    taken linear on ``[0, t_1]`` and the cell is integrated in closed form.
    ``grid_value`` is the sum over cells ``[t_1, T]`` only.
    ``tail_remainder`` bounds the neglected part beyond ``T`` by
    ``|u(T)| * |K(T)|``.

    ``allow_increase`` skips the monotonicity check and takes the signed sum
    as is; the result then has no meaning as a bound.
    """
    if u.grid != K.grid:
        raise ValueError("u and K must share a grid")
    k = K.values.copy()
    uv = u.values
    singular_origin = K.singular_exponent is not None and K.p < -EXP_TOL
    start = 1 if singular_origin else 0
    finite = k[start:]
    tol = rel_tol * max(np.max(np.abs(finite)), 1e-300)
    rises = np.diff(finite)
    if np.any(rises > tol) and not allow_increase:
        i = int(np.argmax(rises)) + start
        raise ValueError(
            f"integrator increases by {rises.max():.3e} at t={K.t[i + 1]:.6g}; "
            "it must be nonincreasing")
    if not allow_increase:
        k[start:] = np.minimum.accumulate(finite)
    drop = k[:-1] - k[1:]
    cells = 0.5 * (uv[1:] + uv[:-1]) * drop
    grid_value = float(np.sum(cells[1:]))
    if singular_origin:
        u0 = uv[0]
        if u0 > 0:
            first, origin = np.inf, "+inf"
        elif u0 < 0:
            first, origin = -np.inf, "-inf"
        else:
            e = K.p
            dt = K.grid.step
            c = k[1] / dt ** e
            # u ~ (u_1/dt) s on the first cell, -dK = -c e s**(e-1) ds
            first = -c * e * (uv[1] / dt) * dt ** (e + 1) / (e + 1)
            origin = "closed-form"
    else:
        first, origin = float(cells[0]), "regular"
    value = first + grid_value
    tail = float(abs(uv[-1]) * abs(k[-1]))
    return StieltjesResult(float(value), grid_value, tail, origin)
