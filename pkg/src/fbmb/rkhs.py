"""Covariance of fBm, drifts and their RKHS representation.

A drift ``f`` with ``f(0) = 0`` is carried by the samples of ``f'``.  Its
representation is ``phi = K0p_star f'`` and ``||f||_H = ||phi||_{L2}``;
conversely ``f' = K0p phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frac_calc import check_hurst, weighted_operator
from .grid import (EXP_TOL, SampledFunction, TimeGrid, cumulative_integral,
                   grid_from_nodes, l2_norm, l2_tail_bound, leading_exponent, to_csv_text)


def covariance(s, t, H):
    """``R_H(s, t) = (t^2H + s^2H - |t-s|^2H) / 2``, vectorised."""
    H = check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("covariance needs s, t >= 0")
    r = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(r) if r.ndim == 0 else r


def covariance_matrix(times, H) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return covariance(times[:, None], times[None, :], H)


@dataclass(frozen=True)
class Drift:
    """A trend ``f(t) = int_0^t f'(s) ds`` given by samples of ``f'``.

    ``f_values`` optionally pins the samples of ``f`` itself when they come
    from a better quadrature than integrating ``f'``; it is not written to CSV.
    """

    f_prime: SampledFunction
    name: str = "drift"
    f_values: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def grid(self) -> TimeGrid:
        return self.f_prime.grid

    @property
    def singularity_exponent(self) -> float:
        return self.f_prime.p

    @property
    def t(self):
        return self.f_prime.t

    @property
    def values(self) -> np.ndarray:
        """Samples of ``f`` itself."""
        if self.f_values is not None:
            return self.f_values
        return cumulative_integral(self.f_prime).values

    def scaled(self, c: float, name=None) -> "Drift":
        fv = None if self.f_values is None else c * self.f_values
        return Drift(c * self.f_prime, name or f"{c:g}*{self.name}", fv)

    def __add__(self, other: "Drift") -> "Drift":
        d = self - other.scaled(-1.0)
        return Drift(d.f_prime, f"{self.name}+{other.name}", d.f_values)

    def __sub__(self, other: "Drift") -> "Drift":
        if other.grid != self.grid:
            raise ValueError("drifts live on different grids")
        pe = leading_exponent(self.f_prime.singular_exponent, other.f_prime.singular_exponent)
        v = self.f_prime.values - other.f_prime.values
        fv = None
        if self.f_values is not None or other.f_values is not None:
            fv = self.values - other.values
        return Drift(SampledFunction(self.grid, v, pe), f"{self.name}-{other.name}", fv)

    def to_csv(self, path=None) -> str:
        head = f"# singularity_exponent={self.singularity_exponent!r}\n"
        text = head + to_csv_text(["t", "f_prime"], [self.t, self.f_prime.values])
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, name=None) -> "Drift":
        p = None
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].partition("=")
                    if key.strip() == "singularity_exponent":
                        p = float(val)
                    continue
                rows.append(line)
        if not rows or rows[0].replace(" ", "") != "t,f_prime":
            raise ValueError(f"{path}: expected header 't,f_prime'")
        arr = np.array([r.split(",") for r in rows[1:]], dtype=float)
        grid = grid_from_nodes(arr[:, 0])
        return cls(SampledFunction(grid, arr[:, 1], p), name or str(path))

    @classmethod
    def from_values(cls, grid: TimeGrid, f_values, name="sampled") -> "Drift":
        """Build from samples of ``f`` by second-order differencing.

        Only suitable for smooth ``f``; a kink or a power law at the origin
        is smeared over a few cells.
        """
        f_values = np.asarray(f_values, dtype=float)
        if abs(f_values[0]) > 1e-12 * max(1.0, np.max(np.abs(f_values))):
            raise ValueError("a drift must vanish at t = 0")
        return cls(SampledFunction(grid, np.gradient(f_values, grid.step, edge_order=2)), name)


def zero_drift(grid: TimeGrid) -> Drift:
    return Drift(SampledFunction(grid, np.zeros(grid.n_points)), "zero")


@dataclass(frozen=True)
class RkhsElement:
    phi: SampledFunction
    norm: float
    H: float
    source: str = ""
    tail: float = 0.0
    diagnostics: dict = field(default_factory=dict, compare=False)


def _relative_gap(a: SampledFunction, b: SampledFunction) -> float:
    """Sup of ``|a - b|`` over nodes where both carry real values, relative to ``max|b|``."""
    start = 1 if (a.p < -EXP_TOL or b.p < -EXP_TOL) else 0
    d = np.abs(a.values[start:] - b.values[start:])
    scale = np.max(np.abs(b.values[start:])) if d.size else 0.0
    if scale == 0.0:
        return float(np.max(d)) if d.size else 0.0
    return float(np.max(d) / scale)


def to_representation(f: Drift, H) -> RkhsElement:
    """``phi = K0p_star f'`` and ``||f||_H``; the inverse residual is kept in diagnostics."""
    H = check_hurst(H)
    phi = weighted_operator(f.f_prime, H, "K0p_star")
    back = weighted_operator(phi, H, "K0p")
    diag = {"roundtrip_residual": _relative_gap(back, f.f_prime)}
    return RkhsElement(phi, l2_norm(phi), H, f.name, l2_tail_bound(phi), diag)


def element_from_phi(phi: SampledFunction, H, source="phi") -> RkhsElement:
    return RkhsElement(phi, l2_norm(phi), check_hurst(H), source, l2_tail_bound(phi))


def reconstruct(element: RkhsElement) -> Drift:
    """Drift with ``f' = K0p phi``."""
    fp = weighted_operator(element.phi, element.H, "K0p")
    return Drift(SampledFunction(fp.grid, fp.values, fp.singular_exponent),
                 f"reconstructed({element.source})")


def h_function(element: RkhsElement) -> SampledFunction:
    """``h(t) = int_0^t phi``."""
    return cumulative_integral(element.phi)
