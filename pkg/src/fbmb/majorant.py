"""Smallest concave nondecreasing majorant and the objects built from it.

Given a drift ``f`` with representation ``phi``, ``h = int phi`` is replaced
by its smallest concave nondecreasing majorant ``h_tilde``.  From the
right-hand derivative of ``h_tilde`` one gets

    K      = Kinf_star h_tilde'
    f_hat' = K0p h_tilde'

and a report on the three admissibility conditions used by the bounds.

Norms of functions vanishing at 0 are the L2 norms of their derivatives.
Where the majorant leaves ``h`` it is linear between hull vertices, and
``h`` is read as linear between nodes there; where it touches ``h`` both
carry ``phi``.  With that reading ``||h||^2 = ||h_tilde||^2 + ||h - h_tilde||^2``
holds exactly, and the reported residual only measures rounding.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .frac_calc import check_hurst, constants, is_brownian, weighted_operator
from .grid import (EXP_TOL, SampledFunction, cumulative_integral, is_singular, l2_norm,
                   leading_exponent, square_cell_integrals, to_csv_text)
from .rkhs import Drift, RkhsElement, to_representation

DEFAULT_TOLS = {
    "monotone_rel": 1e-9,     # allowed rise of K relative to max|K|
    "decay": 1e-3,            # |K(T)| T^H proxy for K = o(t^-H)
    "tail": 1e-3,             # tail remainder of ||phi|| relative to max(1, ||phi||)
    "roundtrip": 1e-2,        # relative L2 residual of K0p_star f_hat' vs h_tilde'
    "dominance": 1e-9,        # slack in f_hat >= f
}


# ---------------------------------------------------------------------------
# hull

def upper_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the upper concave hull of points sorted by ``x`` (monotone chain).

    Collinear points are dropped, so slopes strictly decrease across vertices.
    """
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def concave_majorant(h: SampledFunction):
    """Smallest concave nondecreasing majorant of nodal values.

    Returns ``(vertices, h_tilde, h_tilde_prime)``.  ``vertices`` are node
    indices; ``h_tilde_prime`` holds the right-hand slope at every node (the
    last node repeats the last slope).
    """
    v = h.values
    scale = max(1.0, float(np.max(np.abs(v))))
    if abs(v[0]) > 1e-12 * scale:
        raise ValueError(f"h(0) must be 0, got {v[0]:.3e}")
    t = h.t
    verts = upper_hull(t, v)
    # negative slopes can only form a suffix; flatten it at the top level
    top = verts[int(np.argmax(v[verts]))]
    verts = verts[verts <= top]
    if verts[-1] != t.size - 1:
        verts = np.append(verts, t.size - 1)
    vy = v[verts].astype(float)
    vy[-1] = max(vy[-1], v[top])
    ht = np.interp(t, t[verts], vy)
    slopes = np.diff(vy) / np.diff(t[verts])
    seg = np.searchsorted(verts, np.arange(t.size), side="right") - 1
    seg = np.minimum(seg, slopes.size - 1)
    hp = np.maximum(slopes[seg], 0.0)
    return verts, SampledFunction(h.grid, ht), SampledFunction(h.grid, hp)


def refined_slope(phi: SampledFunction, vertices: np.ndarray,
                  step_slope: SampledFunction) -> SampledFunction:
    """Nodal ``h_tilde'`` that uses ``phi`` itself where ``h_tilde = h`` locally.

    At a node whose two neighbouring hull segments are single cells the
    majorant touches ``h`` on both sides, so its derivative is ``phi``
    there.  Elsewhere the segment slope is kept.  The result is made
    nonincreasing and nonnegative.
    """
    n = phi.grid.n_points
    single = np.zeros(n - 1, dtype=bool)          # cell i is its own hull segment
    gaps = np.diff(vertices)
    single[vertices[:-1][gaps == 1]] = True
    out = step_slope.values.copy()
    inside = np.zeros(n, dtype=bool)
    inside[1:-1] = single[:-1] & single[1:]
    inside[0] = single[0]
    inside[-1] = single[-1]
    out[inside] = phi.values[inside]
    p = phi.singular_exponent if (inside[0] and is_singular(phi.singular_exponent)) else None
    start = 1 if p is not None and p < 0 else 0
    out[start:] = np.maximum(np.minimum.accumulate(out[start:]), 0.0)
    if p is not None and p < 0:
        out[0] = 0.0
    return SampledFunction(phi.grid, out, p)


# ---------------------------------------------------------------------------
# norms

def majorant_norms(phi: SampledFunction, h: SampledFunction, verts, h_tilde: SampledFunction) -> dict:
    """``||h||``, ``||h_tilde||``, ``||h - h_tilde||`` and the Pythagoras residual.

    On cells where the majorant touches ``h`` (single-cell hull segments)
    both functions are ``int phi`` and the cell carries ``int phi**2``.
    On the other cells ``h`` is read as linear between nodes.
    """
    dt = h.grid.step
    dh = np.diff(h.values)
    s = np.diff(h_tilde.values) / dt
    sq_h = dh * dh / dt
    sq_ht = s * s * dt
    sq_d = sq_h - 2.0 * s * dh + sq_ht
    touch = np.zeros(dh.size, dtype=bool)
    touch[verts[:-1][np.diff(verts) == 1]] = True
    exact = square_cell_integrals(phi)
    sq_h[touch] = exact[touch]
    sq_ht[touch] = exact[touch]
    sq_d[touch] = 0.0
    nh, nht, nd = float(np.sum(sq_h)), float(np.sum(sq_ht)), float(np.sum(sq_d))
    return {
        "h": math.sqrt(nh),
        "h_tilde": math.sqrt(nht),
        "h_minus_h_tilde": math.sqrt(max(nd, 0.0)),
        "pythagoras_residual": abs(nh - nht - nd) / max(nh, 1e-300),
    }


# ---------------------------------------------------------------------------
# K, f_hat and the report

def k_function(h_tilde_prime: SampledFunction, H) -> SampledFunction:
    """``K = Kinf_star h_tilde'``."""
    return weighted_operator(h_tilde_prime, check_hurst(H), "Kinf_star")


def f_hat(h_tilde_prime: SampledFunction, H, name="f_hat") -> Drift:
    """Drift with ``f_hat' = K0p h_tilde'``."""
    fp = weighted_operator(h_tilde_prime, check_hurst(H), "K0p")
    return Drift(SampledFunction(fp.grid, fp.values, fp.singular_exponent), name)


@functools.lru_cache(maxsize=8)
def _kappa_table(a: float, lo: float = -20.0, hi: float = 20.0, size: int = 1 << 16):
    x = np.linspace(lo, hi, size)
    return x, np.log(special.hyp2f1(-a, a, a + 1, -np.exp(x)))


def _kappa(t, u, a):
    """``kappa(t, u) = u^-a I(s^a (s-u)^(a-1) on [u, t]) / Gamma(a)``, zero for ``u >= t``.

    Closed form ``(t-u)^a / Gamma(a+1) * 2F1(-a, a; a+1; -(t-u)/u)``; the
    hypergeometric factor is read from a table in ``log((t-u)/u)``.
    """
    out = np.zeros(np.broadcast(t, u).shape)
    t, u = np.broadcast_arrays(t, u)
    m = u < t
    d = t[m] - u[m]
    x, logf = _kappa_table(float(a))
    out[m] = d ** a / special.gamma(a + 1) * np.exp(np.interp(np.log(d / u[m]), x, logf))
    return out


def dominance_gap(D: SampledFunction, H, chunk: int = 256) -> np.ndarray:
    """``f_hat - f = C1 int_0^t kappa(t, u) dD(u)`` for ``H > 1/2``.

    ``D = h_tilde - h`` is read as piecewise linear and the sum is taken by
    parts, ``C1/2 * sum_i D_i (kappa_{i-1} - kappa_{i+1})``.  ``kappa``
    decreases in ``u``, so every weight is nonnegative and ``D >= 0`` gives
    a nonnegative gap node by node.  Only nodes with ``D > 0`` contribute.
    """
    H = check_hurst(H)
    if H <= 0.5:
        raise ValueError("the positive-kernel form needs H > 1/2")
    a = H - 0.5
    t = D.t
    dv = D.values
    S = np.flatnonzero(dv[1:] > 0) + 1
    gap = np.zeros(t.size)
    if S.size == 0:
        return gap
    c1 = constants(H).C1
    u_prev = t[S - 1]
    u_next = t[np.minimum(S + 1, t.size - 1)]
    first = S == 1
    for j0 in range(int(S[0]), t.size, chunk):
        tj = t[j0:j0 + chunk, None]
        k_prev = _kappa(tj, np.where(first, t[S], u_prev)[None, :], a)
        k_next = _kappa(tj, u_next[None, :], a)
        if np.any(first):
            # first cell: kappa ~ u^-a, so its cell mean is kappa(t, t_1)/(1-a)
            k_prev[:, first] *= 2.0 / (1.0 - a)
            k_prev[:, first] -= _kappa(tj, t[S[first]][None, :], a)
        w = np.where(S[None, :] <= np.arange(j0, j0 + tj.shape[0])[:, None], k_prev - k_next, 0.0)
        np.maximum(w, 0.0, out=w)
        gap[j0:j0 + chunk] = 0.5 * c1 * (w @ dv[S])
    return gap


def f_hat_from_drift(f: Drift, phi: SampledFunction, h_tilde_prime: SampledFunction, H,
                     name="f_hat", vertices=None, D: SampledFunction | None = None):
    """``f_hat`` written as ``f + int K0p (h_tilde' - phi)``.

    Equal to :func:`f_hat` in exact arithmetic since ``f' = K0p phi``.
    Where the majorant touches ``h`` the difference vanishes node by node,
    so the representation error of ``f`` does not leak into ``f_hat - f``.
    When the first hull cell touches ``h`` (``vertices[1] == 1``) the
    difference is zero on that cell and is treated as regular there.

    With ``D = h_tilde - h`` given and ``H > 1/2`` the samples of ``f_hat``
    are ``f + dominance_gap(D)``; for ``H = 1/2`` they are ``f + D``.
    Returns ``(f_hat, f_hat - f, derivative_gap)`` where the last entry is
    the integral of ``K0p (h_tilde' - phi)``, the same difference computed
    through the derivative.
    """
    H = check_hurst(H)
    p = h_tilde_prime.singular_exponent
    if p is None and is_singular(phi.singular_exponent):
        p = phi.singular_exponent
    dv = h_tilde_prime.values - phi.values
    if vertices is not None and len(vertices) > 1 and vertices[1] == 1:
        dv[0] = 0.0
        p = None
    d = SampledFunction(phi.grid, dv, p)
    kd = weighted_operator(d, H, "K0p")
    fp = SampledFunction(phi.grid, f.f_prime.values + kd.values,
                         leading_exponent(f.f_prime.singular_exponent, kd.singular_exponent))
    deriv_gap = cumulative_integral(kd).values
    if D is not None and is_brownian(H):
        gap = D.values.copy()
    elif D is not None and H > 0.5:
        gap = dominance_gap(D, H)
    else:
        return Drift(fp, name), deriv_gap, deriv_gap
    return Drift(fp, name, f.values + gap), gap, deriv_gap


def _monotone_check(K: SampledFunction, rel_tol: float):
    start = 1 if K.p < -EXP_TOL else 0
    k = K.values[start:]
    scale = max(float(np.max(np.abs(k))), 1e-300)
    rises = np.diff(k)
    worst = float(rises.max()) if rises.size else 0.0
    where = float(K.t[start + int(np.argmax(rises)) + 1]) if rises.size else 0.0
    return worst <= rel_tol * scale, worst / scale, where


def tail_functional(K: SampledFunction, H, S: float, stride: int = 1) -> float:
    """``int_0^S t^(1-2H) (int_S^T u^(H-1/2) K(u) (u-t)^(H-3/2) du)^2 dt``.

    The inner integral is truncated at the grid end.  ``K u^(H-1/2)`` is
    taken constant on each cell (cell average) and the kernel is integrated
    exactly; the outer integral uses the midpoint rule on (strided) cells.
    """
    t = K.t
    dt = K.grid.step
    beta = H - 1.5
    i_s = int(round(S / dt))
    g = np.zeros_like(t)
    g[1:] = t[1:] ** (H - 0.5) * K.values[1:]
    if K.p < -EXP_TOL or H < 0.5:
        g[0] = g[1]
    gc = 0.5 * (g[i_s:-1] + g[i_s + 1:])
    a = t[i_s:-1]
    b = t[i_s + 1:]
    tm = (np.arange(0, i_s, stride) + 0.5 * stride) * dt
    tm = tm[tm < t[i_s]]
    total = 0.0
    for chunk in np.array_split(tm, max(1, tm.size // 256)):
        if chunk.size == 0:
            continue
        c = chunk[:, None]
        w = ((b - c) ** (beta + 1) - (a - c) ** (beta + 1)) / (beta + 1)
        inner = w @ gc
        total += float(np.sum(chunk ** (1 - 2 * H) * inner ** 2)) * stride * dt
    return total


@dataclass
class ConditionReport:
    i_ok: bool
    ii_ok: bool
    iii_ok: bool
    evidence: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return self.i_ok and self.ii_ok and self.iii_ok

    def lines(self, prefix="condition"):
        out = [f"{prefix}.i={'pass' if self.i_ok else 'fail'}",
               f"{prefix}.ii={'pass' if self.ii_ok else 'fail'}",
               f"{prefix}.iii={'pass' if self.iii_ok else 'fail'}"]
        for k in sorted(self.evidence):
            v = self.evidence[k]
            v = v.item() if isinstance(v, np.generic) else v
            out.append(f"{prefix}.{k}={v!r}")
        return out


@dataclass
class MajorantBundle:
    H: float
    drift: Drift
    element: RkhsElement
    h: SampledFunction
    vertices: np.ndarray
    h_tilde: SampledFunction
    h_tilde_prime: SampledFunction
    h_tilde_prime_nodal: SampledFunction
    K: SampledFunction
    f_hat: Drift
    norms: dict
    report: ConditionReport

    def to_csv(self, path=None) -> str:
        cols = [self.h.t, self.h.values, self.h_tilde.values, self.h_tilde_prime.values,
                self.K.values, self.f_hat.values]
        text = to_csv_text(["t", "h", "h_tilde", "h_tilde_prime", "K", "f_hat"], cols)
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _relative_l2(a: SampledFunction, b: SampledFunction) -> float:
    start = 1 if (a.p < -EXP_TOL or b.p < -EXP_TOL) else 0
    d = a.values[start:] - b.values[start:]
    ref = np.sum(b.values[start:] ** 2)
    if ref == 0.0:
        return float(np.sqrt(np.sum(d * d)))
    return float(np.sqrt(np.sum(d * d) / ref))


def build_bundle(f: Drift, H, tols: dict | None = None, tail_stride=None) -> MajorantBundle:
    """Representation, majorant, ``K``, ``f_hat`` and the condition report for ``f``."""
    H = check_hurst(H)
    tol = dict(DEFAULT_TOLS)
    tol.update(tols or {})
    elem = to_representation(f, H)
    phi = elem.phi
    h = cumulative_integral(phi)
    verts, ht, hp = concave_majorant(h)
    hp_nodal = refined_slope(phi, verts, hp)
    K = k_function(hp_nodal, H)
    D = SampledFunction(h.grid, ht.values - h.values)
    fh, gap, dgap = f_hat_from_drift(f, phi, hp_nodal, H, f"f_hat({f.name})", verts, D)
    norms = majorant_norms(phi, h, verts, ht)
    ev: dict = {"phi_norm": elem.norm, "phi_tail": elem.tail}

    # (i)
    i_ok = bool(np.isfinite(elem.norm) and elem.tail <= tol["tail"] * max(1.0, elem.norm))

    # (ii)
    mono_ok, rise, rise_at = _monotone_check(K, tol["monotone_rel"])
    T = K.grid.horizon
    decay = abs(K.values[-1]) * T ** H
    ev.update(K_monotone=mono_ok, K_max_rise=rise, K_max_rise_at=rise_at,
              K_decay_proxy=decay, K_nondecaying_tail=bool(K.meta.get("nondecaying_tail", False)))
    with np.errstate(all="ignore"):
        try:
            Kabs = SampledFunction(K.grid, np.abs(K.values), K.singular_exponent)
            l2h = l2_norm(weighted_operator(Kabs, H, "Kinf"))
        except ValueError:
            l2h = np.inf
    ev["L2H_proxy"] = l2h
    ii_ok = mono_ok and decay <= tol["decay"] and bool(np.isfinite(l2h))
    if H < 0.5 and not is_brownian(H):
        stride = tail_stride or max(1, K.grid.n_points // 2000)
        t1 = tail_functional(K, H, T / 4, stride)
        t2 = tail_functional(K, H, T / 2, stride)
        ev.update(tail_functional_quarter=t1, tail_functional_half=t2)
        ii_ok = ii_ok and np.isfinite(t1) and t2 <= t1
    ev["h_tilde_prime_L2"] = l2_norm(hp_nodal)

    # (iii)
    back = to_representation(fh, H)
    rt = _relative_l2(back.phi, hp_nodal)
    ev.update(roundtrip_residual=rt, f_hat_norm=back.norm,
              min_norm_residual=abs(back.norm - norms["h_tilde"]) / max(norms["h_tilde"], 1e-300))
    iii_ok = bool(np.isfinite(rt) and rt <= tol["roundtrip"])

    i_min = int(np.argmin(gap))
    scale = max(float(np.max(np.abs(f.values))), 1e-300)
    ev["f_hat_gap_discrepancy"] = float(np.max(np.abs(gap - dgap)) / scale)
    ev.update(f_hat_minus_f_min=float(gap[i_min]), f_hat_minus_f_argmin=float(f.t[i_min]),
              f_hat_dominates=bool(gap[i_min] >= -tol["dominance"]))
    report = ConditionReport(i_ok, bool(ii_ok), iii_ok, ev)
    return MajorantBundle(H, f, elem, h, verts, ht, hp, hp_nodal, K, fh, norms, report)


def check_conditions(f: Drift, H, tols=None) -> ConditionReport:
    return build_bundle(f, H, tols).report
