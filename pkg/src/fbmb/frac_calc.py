"""Riemann-Liouville and Weyl fractional calculus on a uniform grid.

Fractional integrals use product integration: the integrand is taken
piecewise linear between nodes and integrated exactly against the weakly
singular kernel ``(t - u)**(alpha - 1)``.  A declared power-law behaviour
at the origin replaces the first cell by the exact integral of ``c u**p``.
Derivatives are computed as ``d/dt`` of the complementary integral.

The weighted operators ``K0p``, ``K0p_star``, ``Kinf`` and ``Kinf_star``
map between a drift derivative and its RKHS representation; see
:func:`weighted_operator`.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from .grid import EXP_TOL, SampledFunction, is_singular, origin_limit, tail_decay_rate

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W
_CLOSED_FORM_CELLS = 32

# multiplier on C1, only ever changed by the self-test fault injection hook
_c1_scale = 1.0


def check_hurst(H) -> float:
    H = float(H)
    if not 0.0 < H < 1.0:
        raise ValueError(f"Hurst index must lie in (0, 1), got {H}")
    return H


def is_brownian(H) -> bool:
    return abs(H - 0.5) < 1e-14


@dataclass(frozen=True)
class Constants:
    H: float
    C1: float
    C2: float
    molchan: float
    _C3: float | None
    _C4: float | None

    @property
    def C3(self) -> float:
        if self._C3 is None:
            raise ValueError(f"C3 is defined for H > 1/2 only (H = {self.H})")
        return self._C3

    @property
    def C4(self) -> float:
        if self._C4 is None:
            raise ValueError(f"C4 is defined for H < 1/2 only (H = {self.H})")
        return self._C4


def constants(H) -> Constants:
    """Gamma-function constants attached to the Hurst index."""
    H = check_hurst(H)
    g = special.gamma
    c1 = np.sqrt(2 * H * g(H + 0.5) * g(1.5 - H) / g(2 - 2 * H)) * _c1_scale
    c2 = c1 / g(H + 0.5)
    c3 = c2 * special.beta(1.5 - H, H - 0.5) if H > 0.5 else None
    c4 = (0.5 - H) * special.beta(H + 0.5, 0.5 - H) if H < 0.5 else None
    molchan = np.sqrt(g(3 - 2 * H) / (2 * H * g(1.5 - H) ** 3 * g(H + 0.5)))
    return Constants(H, float(c1), float(c2), float(molchan), c3, c4)


@contextlib.contextmanager
def corrupted_c1(scale: float):
    """Temporarily scale C1 (fault injection for the self-test)."""
    global _c1_scale
    old, _c1_scale = _c1_scale, scale
    try:
        yield
    finally:
        _c1_scale = old


# ---------------------------------------------------------------------------
# product integration

def _cell_weights(alpha: float, n: int):
    """Left/right node weights of cell ``[k-1, k]`` for ``v**(alpha-1)``.

    ``left[k] = int_{k-1}^k v**(alpha-1) (v-k+1) dv`` and
    ``right[k] = int_{k-1}^k v**(alpha-1) (k-v) dv``, ``k = 1..n``.
    Small ``k`` use antiderivatives; large ``k`` use Gauss-Legendre, which
    avoids the cancellation between ``k**(alpha+1)`` terms.
    """
    left = np.zeros(n + 1)
    right = np.zeros(n + 1)
    m = min(n, _CLOSED_FORM_CELLS)
    k = np.arange(1, m + 1, dtype=float)
    P = lambda x: x ** alpha / alpha
    Q = lambda x: x ** (alpha + 1) / (alpha + 1)
    dP = P(k) - P(k - 1)
    dQ = Q(k) - Q(k - 1)
    left[1:m + 1] = dQ - (k - 1) * dP
    right[1:m + 1] = k * dP - dQ
    if n > m:
        k = np.arange(m + 1, n + 1, dtype=float)[:, None]
        base = (k - 1 + _GL_X) ** (alpha - 1)
        left[m + 1:] = base @ (_GL_W * _GL_X)
        right[m + 1:] = base @ (_GL_W * (1 - _GL_X))
    return left, right


def _conv(a, b, n):
    return signal.oaconvolve(a, b)[:n] if n > 64 else np.convolve(a, b)[:n]


def _product_integral(v: np.ndarray, dt: float, alpha: float, p) -> np.ndarray:
    """Product integration of piecewise-linear samples, times ``Gamma(alpha)``."""
    n = v.size
    left, right = _cell_weights(alpha, n - 1)
    vz = v.copy()
    vz[0] = 0.0
    out = _conv(vz if is_singular(p) else v, left, n) + _conv(vz, right[1:], n + 1)[:n]
    if is_singular(p):
        # replace the linear first cell by the exact integral of c u**p
        k = np.arange(1, n)
        out[1:] -= v[1] * right[k]
        c = v[1] / dt ** p
        t = k * dt
        x = np.minimum(dt / t, 1.0)
        first = c * t ** (alpha + p) * special.beta(p + 1, alpha) * special.betainc(p + 1, alpha, x)
        out[1:] += first / dt ** alpha
    out *= dt ** alpha
    out[0] = 0.0
    return out


def _left_integral_values(v: np.ndarray, dt: float, alpha: float, p) -> np.ndarray:
    """``(I_{0+}^alpha f)(t_i)`` for samples ``v``; ``p`` is the origin exponent.

    With a declared exponent the leading term ``c0 t**p`` is integrated
    exactly and only the remainder goes through product integration.
    """
    if not is_singular(p):
        return _product_integral(v, dt, alpha, None) / special.gamma(alpha)
    n = v.size
    t = np.arange(n) * dt
    G = np.empty(n)
    G[1:] = v[1:] / t[1:] ** p
    c0 = origin_limit(G) if n > 3 else G[1]
    r = v - c0 * t ** p if p > 0 else np.concatenate(([0.0], v[1:] - c0 * t[1:] ** p))
    r[0] = 0.0
    out = _product_integral(r, dt, alpha, p + 1.0) / special.gamma(alpha)
    out[1:] += c0 * special.gamma(p + 1) / special.gamma(p + 1 + alpha) * t[1:] ** (p + alpha)
    out[0] = 0.0
    return out


def _regularised_origin(f: SampledFunction) -> np.ndarray:
    """Samples with ``f(0)`` replaced so the linear first cell has the right integral."""
    v = f.values.copy()
    if is_singular(f.singular_exponent):
        p = f.p
        v[0] = v[1] * (2.0 / (p + 1.0) - 1.0)
    return v


def _times_power(v: np.ndarray, t: np.ndarray, e: float, p_in) -> tuple[np.ndarray, float | None]:
    """Multiply samples by ``t**e`` and track the origin exponent."""
    out = v.copy()
    if abs(e) > EXP_TOL:
        out[1:] *= t[1:] ** e
    p = (0.0 if p_in is None else p_in) + e
    if abs(p) <= EXP_TOL:
        if p_in is not None and abs(p_in) > EXP_TOL:
            out[0] = origin_limit(out)
        return out, None
    out[0] = 0.0
    return out, p


def _diff_power(F: np.ndarray, t: np.ndarray, dt: float, q) -> tuple[np.ndarray, float | None]:
    """Derivative of ``F = t**q G`` with ``G`` smooth, by central differences on ``G``."""
    if q is None or abs(q) <= EXP_TOL:
        return np.gradient(F, dt, edge_order=2), None
    G = np.empty_like(F)
    G[1:] = F[1:] / t[1:] ** q
    G[0] = origin_limit(G)
    dG = np.gradient(G, dt, edge_order=2)
    D = np.empty_like(F)
    D[1:] = q * t[1:] ** (q - 1) * G[1:] + t[1:] ** q * dG[1:]
    p = q - 1.0
    if abs(p) <= EXP_TOL:
        D[0] = q * G[0]
        return D, None
    D[0] = 0.0
    return D, p


def _tail_remainder(f: SampledFunction, alpha: float) -> tuple[float, bool]:
    a_T, lam = tail_decay_rate(f)
    if a_T == 0.0:
        return 0.0, False
    if lam <= 0:
        return np.inf, True
    if np.isinf(lam):
        return a_T, False
    # d = 0 worst case of int_0^inf (d+x)^(alpha-1) e^(-lam x) dx for alpha <= 1
    rem = a_T * lam ** (-alpha)
    if alpha > 1:
        rem *= 2 ** (alpha - 1)
    return float(rem), False


def _component_values(t, order, p):
    """``W(t)`` for ``W = I_{inf-}^order (u**p e**-u)``, ``t > 0``.

    A negative ``order`` is the Weyl derivative of order ``-order < 1``.
    """
    if abs(order) <= EXP_TOL:
        return t ** p * np.exp(-t)
    return np.exp(-t) * t ** (order + p) * special.hyperu(order, order + p + 1.0, t)


def _component_origin(order, p):
    """Finite value of ``W`` at 0, or ``None`` when it blows up."""
    if abs(order) <= EXP_TOL:
        return special.gamma(p + 1) if abs(p) <= EXP_TOL else (0.0 if p > 0 else None)
    if order + p > EXP_TOL:
        return special.gamma(order + p) / special.gamma(order)
    return None


def _split_reference(f: SampledFunction):
    """Split ``f = c W + r`` with ``W`` a closed-form Weyl transform of ``u**p e**-u``.

    A component carried in ``f.meta["component"]`` (left by an earlier
    right-sided operator) is removed first.  Otherwise a non-smooth origin
    ``f ~ c0 t**p`` is matched by ``c0 t**p e**-t``.  Only the smoother
    remainder ``r`` goes through quadrature.  Returns ``(r, (c, order, p))``
    with ``c = 0`` when nothing was split off.
    """
    t = f.t
    comp = f.meta.get("component")
    if comp is not None and abs(comp[3]) <= EXP_TOL:
        c, order, p, _ = comp
        r = np.zeros_like(t)
        r[1:] = f.values[1:] - c * _component_values(t[1:], order, p)
        lead = order + p
        p_r = f.singular_exponent
        if p_r is not None and abs(p_r - lead) <= EXP_TOL:
            p_r = None
        r[0] = 0.0 if p_r is not None and p_r < 0 else origin_limit(r)
        return SampledFunction(f.grid, r, p_r), (c, order, p)
    if not is_singular(f.singular_exponent):
        return f, (0.0, 0.0, 0.0)
    p = f.p
    G = np.empty_like(t)
    G[1:] = f.values[1:] / t[1:] ** p
    c0 = origin_limit(G) if t.size > 3 else G[1]
    r = np.zeros_like(t)
    r[1:] = f.values[1:] - c0 * t[1:] ** p * np.exp(-t[1:])
    pr = p + 1.0
    return SampledFunction(f.grid, r, pr if abs(pr - 1.0) > EXP_TOL else None), (c0, 0.0, p)


def _right_values(f: SampledFunction, alpha: float) -> np.ndarray:
    dt = f.grid.step
    v = _regularised_origin(f)
    return _left_integral_values(v[::-1].copy(), dt, alpha, None)[::-1].copy()


def _add_component(out, t, comp, shift, p_out, meta):
    """Add ``c W`` with its order shifted by ``shift`` and record it in ``meta``."""
    c, order, p = comp
    if c == 0.0:
        return
    order = order + shift
    out[1:] += c * _component_values(t[1:], order, p)
    w0 = _component_origin(order, p)
    if w0 is not None:
        out[0] += c * w0
    elif p_out is None:
        # logarithmic blow-up at the origin; node 0 is not meaningful
        meta["log_origin"] = True
    meta["component"] = (c, order, p, 0.0)


def frac_integral(f: SampledFunction, alpha: float, side: str = "left_0") -> SampledFunction:
    """Fractional integral of order ``alpha > 0``.

    ``side`` is ``"left_0"`` (Riemann-Liouville from 0), ``"right_T"``
    (right-sided on ``[0, T]``) or ``"weyl"`` (right-sided on the half line,
    truncated at ``T``; the estimated tail remainder and a non-decay warning
    are stored in ``meta``).
    """
    alpha = float(alpha)
    if not alpha > 0:
        raise ValueError(f"integral order must be positive, got {alpha}")
    dt = f.grid.step
    if side == "left_0":
        v = _left_integral_values(f.values, dt, alpha, f.singular_exponent)
        return SampledFunction(f.grid, v, f.p + alpha)
    if side not in ("right_T", "weyl"):
        raise ValueError(f"unknown side {side!r}")
    p_out = f.p + alpha if f.p + alpha < -EXP_TOL else None
    meta = {}
    if side == "right_T":
        out = _right_values(f, alpha)
    else:
        r, comp = _split_reference(f)
        out = _right_values(r, alpha)
        _add_component(out, f.t, comp, alpha, p_out, meta)
        rem, bad = _tail_remainder(f, alpha)
        meta.update(tail_remainder=rem, nondecaying_tail=bad)
    if p_out is not None:
        out[0] = 0.0
    return SampledFunction(f.grid, out, p_out, meta)


def frac_derivative(f: SampledFunction, alpha: float, side: str = "left_0") -> SampledFunction:
    """Riemann-Liouville derivative of order ``alpha`` in (0, 1).

    ``left_0``: ``d/dt I_{0+}^{1-alpha} f``.  ``right_inf``:
    ``-d/dt I_{inf-}^{1-alpha} f``.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"derivative order must lie in (0, 1), got {alpha}")
    dt = f.grid.step
    t = f.t
    if side == "left_0":
        F = frac_integral(f, 1.0 - alpha, "left_0")
        D, p = _diff_power(F.values, t, dt, F.singular_exponent)
        return SampledFunction(f.grid, D, p)
    if side != "right_inf":
        raise ValueError(f"unknown side {side!r}")
    r, comp = _split_reference(f)
    F = frac_integral(r, 1.0 - alpha, "weyl")
    D = -np.gradient(F.values, dt, edge_order=2)
    p = f.p - alpha
    p_out = p if p < -EXP_TOL else None
    meta = {}
    _add_component(D, t, comp, -alpha, p_out, meta)
    if p_out is not None:
        D[0] = 0.0
    rem, bad = _tail_remainder(f, 1.0 - alpha)
    meta.update(tail_remainder=rem, nondecaying_tail=bad)
    return SampledFunction(f.grid, D, p_out, meta)


def _shift_component(meta, e, scale):
    """Meta entry for a carried component after multiplying by ``scale t**e``."""
    comp = meta.get("component")
    if comp is None:
        return {}
    c, order, p, e0 = comp
    return {"component": (scale * c, order, p, e0 + e)}


OPERATOR_KINDS = ("K0p", "K0p_star", "Kinf", "Kinf_star")


def weighted_operator(f: SampledFunction, H, kind: str) -> SampledFunction:
    """Apply one of the weighted fractional operators.

    ``K0p f      = C1      t^(H-1/2) I_{0+}^{H-1/2}  (u^(1/2-H) f)``
    ``K0p_star f = C1^(-1) t^(H-1/2) I_{0+}^{1/2-H}  (u^(1/2-H) f)``
    ``Kinf f     = C1      t^(1/2-H) I_{inf-}^{H-1/2}(u^(H-1/2) f)``
    ``Kinf_star f= C1^(-1) t^(1/2-H) I_{inf-}^{1/2-H}(u^(H-1/2) f)``

    A negative order means the fractional derivative of the opposite order.
    For ``H = 1/2`` every operator is the identity.
    """
    H = check_hurst(H)
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator {kind!r}")
    if is_brownian(H):
        return f
    c = constants(H)
    t = f.t
    dt = f.grid.step
    a = H - 0.5
    left = kind.startswith("K0p")
    star = kind.endswith("star")
    order = -a if star else a
    inner_e = -a if left else a
    outer_e = a if left else -a
    scale = 1.0 / c.C1 if star else c.C1

    v, p = _times_power(f.values, t, inner_e, f.singular_exponent)
    if p is not None and p <= -1:
        raise ValueError(
            f"{kind}: weighted input behaves like t^{p:.4g} at 0, not integrable")
    g = SampledFunction(f.grid, v, p, _shift_component(f.meta, inner_e, 1.0))
    if left:
        J = frac_integral(g, order, "left_0") if order > 0 else frac_derivative(g, -order, "left_0")
    else:
        J = frac_integral(g, order, "weyl") if order > 0 else frac_derivative(g, -order, "right_inf")
    w, p_out = _times_power(J.values, t, outer_e, J.singular_exponent)
    meta = dict(J.meta)
    meta.update(_shift_component(J.meta, outer_e, scale))
    return SampledFunction(f.grid, scale * w, p_out, meta)


# ---------------------------------------------------------------------------
# kernels

def _power_integral(s, t, a, b):
    """``int_s^t (u-s)^(a-1) u^b du`` for ``0 < s < t``, ``a > 0``.

    The Pfaff form ``(t/s) 2F1(a+1+b, 1; a+1; 1 - t/s)`` is used where
    ``s/t`` is tiny, since ``hyp2f1`` overflows as its argument nears 1.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    r = s / t
    pre = (t - s) ** a * t ** b / a
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        direct = special.hyp2f1(-b, 1.0, a + 1.0, 1.0 - r)
        pfaff = special.hyp2f1(a + 1.0 + b, 1.0, a + 1.0, 1.0 - 1.0 / r) / r
    out = pre * np.where(r < 1e-6, pfaff, direct)
    return out if out.ndim else float(out)


def kernel_values(kind: str, t, s, H):
    """Vectorised kernel evaluation; ``0 < s < t`` elementwise."""
    H = check_hurst(H)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if kind == "l_H":
        c = constants(H).molchan
        return c * s ** (0.5 - H) * (t - s) ** (0.5 - H)
    if is_brownian(H):
        return np.ones(np.broadcast(t, s).shape)
    c = constants(H)
    g = special.gamma
    if kind == "K_H":
        if H > 0.5:
            return c.C1 / g(H - 0.5) * s ** (0.5 - H) * _power_integral(s, t, H - 0.5, H - 0.5)
        first = (t / s) ** (H - 0.5) * (t - s) ** (H - 0.5)
        second = (H - 0.5) * s ** (0.5 - H) * _power_integral(s, t, H + 0.5, H - 1.5)
        return c.C1 / g(H + 0.5) * (first - second)
    if kind == "K_H_star":
        if H < 0.5:
            return s ** (0.5 - H) / (c.C1 * g(0.5 - H)) * _power_integral(s, t, 0.5 - H, H - 0.5)
        first = (t / s) ** (H - 0.5) * (t - s) ** (0.5 - H)
        second = (H - 0.5) * s ** (0.5 - H) * _power_integral(s, t, 1.5 - H, H - 1.5)
        return (first - second) / (c.C1 * g(1.5 - H))
    raise ValueError(f"unknown kernel {kind!r}")


def eval_kernel(kind: str, t: float, s: float, H) -> float:
    """``K_H(t, s)``, ``K_H^*(t, s)`` or the Molchan kernel ``l_H(t, s)``."""
    if not (0 < s < t):
        raise ValueError(f"kernel needs 0 < s < t, got s={s}, t={t}")
    return float(kernel_values(kind, t, s, H))


# ---------------------------------------------------------------------------

_MISSING = object()


def q_prime(f_prime: SampledFunction, H, singular_exponent=_MISSING) -> SampledFunction:
    """Derivative of ``q(t) = int_0^t l_H(t, s) f'(s) ds``.

    ``q`` is evaluated as ``molchan * Gamma(3/2-H) * I_{0+}^{3/2-H}(s^(1/2-H) f')``
    and differentiated; this is the integrated form of both cases of the
    closed-form convolution and does not need ``f'`` to be differentiable.
    The identity ``(2-2H)^(-1/2) int_0^t q'(s) s^(H-1/2) ds = int_0^t
    (K0p_star f')(s) ds`` is checked and its largest discrepancy stored in
    ``meta["identity_residual"]``.

    The regularity of ``f'`` at the origin must be declared, either on the
    sampled function or through ``singular_exponent`` (``0`` for regular).
    """
    from .grid import cumulative_integral

    H = check_hurst(H)
    if singular_exponent is _MISSING:
        if f_prime.singular_exponent is None:
            raise ValueError("declare the behaviour of f' at 0 (singular_exponent=...)")
    else:
        f_prime = SampledFunction(f_prime.grid, f_prime.values, singular_exponent)
    c = constants(H)
    t = f_prime.t
    dt = f_prime.grid.step
    v, p = _times_power(f_prime.values, t, 0.5 - H, f_prime.singular_exponent)
    g = SampledFunction(f_prime.grid, v, p)
    q = frac_integral(g, 1.5 - H, "left_0")
    qv = c.molchan * special.gamma(1.5 - H) * q.values
    D, pd = _diff_power(qv, t, dt, q.singular_exponent)
    qp = SampledFunction(f_prime.grid, D, pd)

    w, pw = _times_power(qp.values, t, H - 0.5, qp.singular_exponent)
    lhs = cumulative_integral(SampledFunction(f_prime.grid, w, pw)).values / np.sqrt(2 - 2 * H)
    rhs = cumulative_integral(weighted_operator(f_prime, H, "K0p_star")).values
    scale = max(np.max(np.abs(rhs)), 1e-300)
    resid = float(np.max(np.abs(lhs - rhs)) / scale)
    return SampledFunction(f_prime.grid, qp.values, pd, {"identity_residual": resid})
