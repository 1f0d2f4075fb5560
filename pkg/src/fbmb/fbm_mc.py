"""Sampling fBm on a grid and Monte Carlo estimates of non-crossing probabilities.

Three generators share one interface: ``cholesky`` (dense factor of the
covariance on the nodes), ``circulant`` (Davies-Harte embedding of the
fractional Gaussian noise) and ``volterra`` (the kernel sum
``B(t_i) = sum_j V_ij dW_j`` driven by Wiener increments, which are kept).

Paths are produced in fixed blocks.  Block ``b`` draws from its own stream
``SeedSequence(seed, spawn_key=(b,))``, so results do not depend on the
number of worker threads (``FBMB_THREADS``).
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sp_fft, linalg, special

from .frac_calc import check_hurst, constants, is_brownian, kernel_values
from .grid import SampledFunction, TimeGrid
from .rkhs import Drift, covariance_matrix

BLOCK = 4096
METHODS = ("cholesky", "circulant", "volterra")
CHOLESKY_MAX_N = 4096
MAGIC = b"FBMPATHS"
Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# containers

@dataclass
class PathEnsemble:
    grid: TimeGrid
    H: float
    B: np.ndarray
    method: str
    seed: int
    dW: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.B.shape[0]


@dataclass
class EstimatorResult:
    estimate: float
    std_error: float
    ci95: tuple
    m: int
    method: str
    seed: int
    ess: float | None = None
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    def lines(self, prefix):
        out = [f"{prefix}.estimate={self.estimate!r}", f"{prefix}.std_error={self.std_error!r}",
               f"{prefix}.ci95_low={self.ci95[0]!r}", f"{prefix}.ci95_high={self.ci95[1]!r}",
               f"{prefix}.m={self.m}", f"{prefix}.method={self.method}", f"{prefix}.seed={self.seed}"]
        if self.ess is not None:
            out.append(f"{prefix}.ess={self.ess!r}")
        if self.flags:
            out.append(f"{prefix}.flags={'|'.join(self.flags)}")
        return out


@dataclass(frozen=True)
class Boundary:
    u: SampledFunction
    u_minus: SampledFunction | None = None

    def __post_init__(self):
        if self.u.values[0] < 0:
            raise ValueError(f"u(0) must be >= 0, got {self.u.values[0]}")
        if self.u_minus is not None:
            if self.u_minus.grid != self.u.grid:
                raise ValueError("u and u_minus must share a grid")
            # both curves may meet at t = 0, where B(0) = 0 lies on either
            lo, up = self.u_minus.values, self.u.values
            bad = np.flatnonzero(np.concatenate([[lo[0] > up[0]], lo[1:] >= up[1:]]))
            if bad.size:
                raise ValueError(f"u_minus must stay below u; fails at t={self.u.t[bad[0]]:.6g}")

    @classmethod
    def constant(cls, grid: TimeGrid, level: float, lower=None) -> "Boundary":
        u = SampledFunction(grid, np.full(grid.n_points, float(level)))
        um = None if lower is None else SampledFunction(grid, np.full(grid.n_points, float(lower)))
        return cls(u, um)


# ---------------------------------------------------------------------------
# generators

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FBMB_THREADS", "1")))
    except ValueError:
        return 1


def _block_rng(seed: int, b: int):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(b,)))


@lru_cache(maxsize=16)
def _cholesky_factor(H: float, T: float, n: int) -> np.ndarray:
    t = np.linspace(0.0, T, n)[1:]
    C = covariance_matrix(t, H)
    scale = np.trace(C) / C.shape[0]
    for jitter in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            return linalg.cholesky(C + jitter * scale * np.eye(C.shape[0]), lower=True)
        except linalg.LinAlgError:
            continue
    raise ValueError("covariance matrix is not positive definite even after jitter")


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(H: float, N: int):
    M = 2
    while M < 2 * N:
        M *= 2
    k = np.arange(M // 2 + 1, dtype=float)
    g = 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    row = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise ValueError(f"circulant embedding has a negative eigenvalue {lam.min():.3e}")
    return np.sqrt(np.maximum(lam, 0.0) / M), M


def _gauss_jacobi(k, a, b):
    """Nodes/weights on [0, 1] for the weight ``(1 - x)**a * x**b``."""
    x, w = special.roots_jacobi(k, a, b)
    return 0.5 * (x + 1.0), w * 0.5 ** (a + b + 1)


@lru_cache(maxsize=16)
def volterra_matrix(H: float, T: float, n: int, k: int = 12) -> np.ndarray:
    """Lower-triangular ``V`` with ``B(t_i) = sum_{j < i} V[i-1, j] dW_j``.

    Off-diagonal entries are cell averages ``(1/dt) int_{cell j} K_H(t_i, s) ds``,
    which reproduce ``Cov(B(t_i), W(cell j))`` exactly.  The diagonal entry
    takes the variance that the averages leave out, so ``Var B(t_i) = t_i^(2H)``
    holds exactly.  The kernel behaves like ``s^(-|H-1/2|)`` at the origin
    and like ``(t-s)^(H-1/2)`` on the diagonal; both are absorbed in
    Gauss-Jacobi weights.
    """
    H = check_hurst(H)
    dt = T / (n - 1)
    N = n - 1
    V = np.zeros((N, N))
    if is_brownian(H):
        V[np.tril_indices(N)] = 1.0
        return V
    a0 = -abs(H - 0.5)
    x_reg, w_reg = _gauss_jacobi(k, 0.0, 0.0)
    x_0, w_0 = _gauss_jacobi(k, 0.0, a0)
    idx = np.arange(N)
    for i in range(2, n):
        t = i * dt
        js = idx[:i - 1]
        s = (js[:, None] + x_reg[None, :]) * dt
        vals = kernel_values("K_H", t, s, H) @ w_reg
        s0 = x_0 * dt
        vals[0] = np.sum(kernel_values("K_H", t, s0, H) * s0 ** (-a0) * w_0) * dt ** a0
        V[i - 1, js] = vals
    var = (dt * np.arange(1, n)) ** (2 * H)
    rest = var / dt - np.sum(V * V, axis=1)
    if np.any(rest <= 0):
        raise ValueError("Volterra discretisation lost positivity; refine the grid")
    V[idx, idx] = np.sqrt(rest)
    return V


def _block_paths(H, grid: TimeGrid, method: str, seed: int, b: int, size: int):
    """``size`` paths of block ``b``; returns ``(B, dW)`` with ``dW`` only for volterra."""
    rng = _block_rng(seed, b)
    n = grid.n_points
    N = n - 1
    dt = grid.step
    B = np.zeros((size, n))
    dW = None
    if method == "cholesky":
        L = _cholesky_factor(H, grid.horizon, n)
        B[:, 1:] = rng.standard_normal((size, N)) @ L.T
    elif method == "circulant":
        root, M = _circulant_sqrt_eigs(H, N)
        half = (size + 1) // 2
        # one complex draw gives two independent paths (real and imaginary parts)
        Z = rng.standard_normal((half, 2 * M)).view(np.complex128)
        Z *= root * dt ** H
        Y = sp_fft.fft(Z, axis=1, overwrite_x=True)[:, :N]
        np.cumsum(Y.real, axis=1, out=B[:half, 1:])
        np.cumsum(Y.imag[:size - half], axis=1, out=B[half:, 1:])
    elif method == "volterra":
        V = volterra_matrix(H, grid.horizon, n)
        dW = rng.standard_normal((size, N)) * np.sqrt(dt)
        B[:, 1:] = dW @ V.T
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return B, dW


def _check_method(method, grid):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "cholesky" and grid.n_points > CHOLESKY_MAX_N:
        raise ValueError(f"cholesky is limited to n <= {CHOLESKY_MAX_N}, got {grid.n_points}")


def _block_sizes(m):
    full, rest = divmod(m, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def _map_blocks(fn, m):
    sizes = _block_sizes(m)
    jobs = list(enumerate(sizes))
    workers = _threads()
    if workers == 1 or len(jobs) == 1:
        return [fn(b, s) for b, s in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda j: fn(*j), jobs))


def generate_paths(H, grid: TimeGrid, m: int, method: str = "circulant", seed: int = 0) -> PathEnsemble:
    """``m`` fBm paths on ``grid``; ``B[:, 0] = 0``."""
    H = check_hurst(H)
    _check_method(method, grid)
    parts = _map_blocks(lambda b, s: _block_paths(H, grid, method, seed, b, s), m)
    B = np.concatenate([p[0] for p in parts])
    dW = np.concatenate([p[1] for p in parts]) if method == "volterra" else None
    return PathEnsemble(grid, H, B, method, seed, dW)


# ---------------------------------------------------------------------------
# Molchan martingale

@lru_cache(maxsize=16)
def molchan_matrix(H: float, T: float, n: int) -> np.ndarray:
    """``L[i-1, j]`` = average of ``l_H(t_i, s)`` over cell ``j`` (exact, via incomplete beta)."""
    H = check_hurst(H)
    N = n - 1
    dt = T / (n - 1)
    if is_brownian(H):
        L = np.zeros((N, N))
        L[np.tril_indices(N)] = 1.0
        return L
    a = 0.5 - H
    c = constants(H).molchan
    i = np.arange(1, n)[:, None]
    j = np.arange(N)[None, :]
    t = i * dt
    x1 = np.clip(j / i, 0.0, 1.0)
    x2 = np.clip((j + 1) / i, 0.0, 1.0)
    full = t ** (2 * a + 1) * special.beta(a + 1, a + 1)
    cell = full * (special.betainc(a + 1, a + 1, x2) - special.betainc(a + 1, a + 1, x1))
    return np.where(j < i, c * cell / dt, 0.0)


def molchan_martingale(ens: PathEnsemble) -> np.ndarray:
    """``M(t_i) = sum_j lbar_H(t_i, cell j) dB_j``; ``M[:, 0] = 0``."""
    L = molchan_matrix(ens.H, ens.grid.horizon, ens.grid.n_points)
    M = np.zeros_like(ens.B)
    M[:, 1:] = np.diff(ens.B, axis=1) @ L.T
    return M


# ---------------------------------------------------------------------------
# estimators

def values_on(grid: TimeGrid, obj) -> np.ndarray:
    """Samples of a drift, sampled function or scalar on ``grid`` (linear interpolation)."""
    if obj is None:
        return np.zeros(grid.n_points)
    if isinstance(obj, Drift):
        src_t, src_v = obj.t, obj.values
    elif isinstance(obj, SampledFunction):
        src_t, src_v = obj.t, obj.values
    elif np.isscalar(obj):
        return np.full(grid.n_points, float(obj))
    else:
        v = np.asarray(obj, dtype=float)
        if v.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} samples, got {v.shape}")
        return v
    if src_t.size == grid.n_points and np.allclose(src_t, grid.nodes, atol=1e-12):
        return np.asarray(src_v, dtype=float)
    if src_t[-1] < grid.horizon * (1 - 1e-12):
        raise ValueError(f"function known up to t={src_t[-1]:g}, grid needs {grid.horizon:g}")
    return np.interp(grid.nodes, src_t, src_v)


def wilson_interval(k: int, m: int, z: float = Z95):
    p = k / m
    den = 1 + z * z / m
    mid = (p + z * z / (2 * m)) / den
    half = z * np.sqrt(p * (1 - p) / m + z * z / (4 * m * m)) / den
    return (float(max(0.0, mid - half)), float(min(1.0, mid + half)))


def _plain_counts(H, grid, method, seed, m, upper, lower):
    def job(b, s):
        B, _ = _block_paths(H, grid, method, seed, b, s)
        ok = np.all(B <= upper, axis=1)
        if lower is not None:
            ok &= np.all(B >= lower, axis=1)
        return int(np.count_nonzero(ok))
    return sum(_map_blocks(job, m))


def _plain_result(k, m, method, seed, extra=None):
    p = k / m
    se = float(np.sqrt(max(p * (1 - p), 0.0) / m))
    return EstimatorResult(p, se, wilson_interval(k, m), m, method, seed, extra=extra or {})


def _check_m(m):
    if int(m) != m or m < 100:
        raise ValueError(f"m must be an integer >= 100, got {m}")
    return int(m)


def estimate_P(f, b: Boundary, H, grid: TimeGrid, m: int, seed: int = 0,
               method: str = "circulant") -> EstimatorResult:
    """Fraction of paths with ``B(t_i) + f(t_i) <= u(t_i)`` at every node."""
    H = check_hurst(H)
    m = _check_m(m)
    _check_method(method, grid)
    upper = values_on(grid, b.u) - values_on(grid, f)
    k = _plain_counts(H, grid, method, seed, m, upper, None)
    return _plain_result(k, m, method, seed)


def estimate_channel(b: Boundary, H, grid: TimeGrid, m: int, seed: int = 0,
                     method: str = "circulant") -> EstimatorResult:
    """Fraction of paths with ``u_minus(t_i) <= B(t_i) <= u(t_i)`` at every node."""
    if b.u_minus is None:
        raise ValueError("the boundary has no lower curve")
    H = check_hurst(H)
    m = _check_m(m)
    _check_method(method, grid)
    k = _plain_counts(H, grid, method, seed, m, values_on(grid, b.u), values_on(grid, b.u_minus))
    return _plain_result(k, m, method, seed)


def girsanov_shift(H, grid: TimeGrid, shift: np.ndarray) -> np.ndarray:
    """Per-cell Wiener mean ``c`` with ``V c = shift`` on the nodes ``t_1..``."""
    V = volterra_matrix(check_hurst(H), grid.horizon, grid.n_points)
    return linalg.solve_triangular(V, np.asarray(shift[1:], dtype=float), lower=True)


def estimate_P_girsanov(f, b: Boundary, H, grid: TimeGrid, m: int, seed: int = 0,
                        tilt=None, drop_indicator: bool = False) -> EstimatorResult:
    """Importance-sampling estimate of the non-crossing probability.

    Paths are drawn as ``B - tilt`` (the Wiener increments get mean ``-c``
    with ``V c = tilt``) and reweighted by

        w = exp( sum_j (c_j/dt) dW_j + (1/2) sum_j c_j**2/dt ),

    where ``dW`` are the shifted increments actually used.  This is the
    exact likelihood ratio of the grid law, so the estimator is unbiased for
    the grid event; ``sum c_j**2/dt`` approximates ``||tilt||_H**2``.
    The orientation is pinned by a regression test against plain sampling.

    ``drop_indicator`` returns the mean weight instead (which should be 1).
    The effective sample size is ``(sum w I)**2 / sum (w I)**2``.
    """
    H = check_hurst(H)
    m = _check_m(m)
    tilt_v = values_on(grid, tilt)
    if not np.any(tilt_v) and not drop_indicator:
        res = estimate_P(f, b, H, grid, m, seed, "volterra")
        res.ess = float(res.estimate * m)
        return res
    upper = values_on(grid, b.u) - values_on(grid, f)
    c = girsanov_shift(H, grid, tilt_v)
    dt = grid.step
    V = volterra_matrix(H, grid.horizon, grid.n_points)
    half_sq = 0.5 * float(np.sum(c * c)) / dt

    def job(bk, s):
        rng = _block_rng(seed, bk)
        dW = rng.standard_normal((s, c.size)) * np.sqrt(dt) - c
        logw = dW @ (c / dt) + half_sq
        top = float(np.max(logw))
        if top > 700:
            raise OverflowError(
                f"log-weight {top:.1f} overflows; use a smaller tilt (||tilt||^2 ~ {2 * half_sq:.3g})")
        w = np.exp(logw)
        if drop_indicator:
            x = w
        else:
            B = dW @ V.T
            x = w * np.all(B <= upper[1:], axis=1)
        return float(np.sum(x)), float(np.sum(x * x))

    parts = _map_blocks(job, m)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    p = s1 / m
    var = max(s2 / m - p * p, 0.0) * m / (m - 1)
    se = float(np.sqrt(var / m))
    ess = float(s1 * s1 / s2) if s2 > 0 else 0.0
    flags = ("LOW_ESS",) if ess < 0.01 * m else ()
    return EstimatorResult(float(p), se, (max(0.0, p - Z95 * se), p + Z95 * se), m,
                           "volterra+girsanov", seed, ess, flags,
                           {"tilt_energy": 2 * half_sq})


# ---------------------------------------------------------------------------
# binary export

def write_ensemble(path, ens: PathEnsemble) -> None:
    m, n = ens.B.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQQ", 1, m, n) + b"\0" * 4)
        fh.write(np.ascontiguousarray(ens.B, dtype="<f8").tobytes())


def read_ensemble(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(32)
        if head[:8] != MAGIC:
            raise ValueError(f"{path}: not an FBMPATHS file")
        version, m, n = struct.unpack("<IQQ", head[8:28])
        if version != 1:
            raise ValueError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(m, n)
