"""Command-line front end.

Commands ``norm``, ``bounds``, ``sweep``, ``simulate`` and ``selftest``.
Settings come from a key = value config file (a ``[common]`` section plus
one section per command) and from flags; flags win, then the command
section, then ``[common]``, then the defaults below.

Exit codes: 0 success, 2 a result carries a VOID flag, 1 hard failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bounds import (BoundReport, asymptotic_sweep, default_u_minus, lemma_bounds,
                     normal_cdf, normal_quantile, theorem_lower, theorem_upper)
from .drifts import example51, example52
from .fbm_mc import (METHODS, Boundary, estimate_channel, estimate_P, generate_paths,
                     values_on, write_ensemble)
from .grid import SampledFunction, TimeGrid, to_csv_text
from .majorant import DEFAULT_TOLS, build_bundle
from .rkhs import Drift

COMMANDS = ("norm", "bounds", "sweep", "simulate", "selftest")

# key -> (parser, default); None default means "unset"
FIELDS = {
    "H": (float, 0.75),
    "T": (float, 20.0),
    "n": (int, 20001),
    "mc_T": (float, 1.0),
    "mc_n": (int, 257),
    "m": (int, 100000),
    "seed": (int, 0),
    "drift": (str, "example51"),
    "gamma": (float, 1.0),
    "gammas": (str, "1,2,3"),
    "u_const": (float, None),
    "u_csv": (str, None),
    "u_minus_const": (float, None),
    "u_minus_csv": (str, None),
    "u_minus_auto": (str, "false"),
    "method": (str, "circulant"),
    "conservative": (str, "false"),
    "out": (str, None),
}
TOL_PREFIX = "tol_"
EXIT_OK, EXIT_FAIL, EXIT_VOID = 0, 1, 2


class ConfigError(ValueError):
    pass


def _truthy(s) -> bool:
    s = str(s).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _key_line(path, section, key):
    """Line number of ``key`` inside ``[section]`` of a config file, or None."""
    current = None
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                current = s[1:-1].strip()
            elif current == section and "=" in s:
                if s.split("=", 1)[0].strip().replace("-", "_") == key:
                    return i
    return None


@dataclass
class RunConfig:
    """Resolved settings of one run."""

    command: str
    values: dict
    tols: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def canonical(self) -> str:
        """Stable text of every input that can change a result."""
        items = {k: v for k, v in self.values.items() if k != "out"}
        items.update({TOL_PREFIX + k: v for k, v in self.tols.items()})
        return "\n".join(f"{k}={items[k]!r}" for k in sorted(items))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _parse_value(key, raw, where):
    conv, _ = FIELDS[key]
    try:
        val = conv(raw)
    except ValueError as e:
        raise ConfigError(f"{where}: bad value for {key}: {e}") from None
    return val


def _validate(cfg: RunConfig, where: dict):
    v = cfg.values

    def bad(key, msg):
        raise ConfigError(f"{where.get(key, 'default')}: {key}: {msg}")

    if not 0.0 < v["H"] < 1.0:
        bad("H", f"must lie in (0, 1), got {v['H']}")
    for k in ("T", "mc_T"):
        if not v[k] > 0:
            bad(k, "must be positive")
    for k in ("n", "mc_n"):
        if v[k] < 3:
            bad(k, "must be at least 3")
    if v["m"] < 100:
        bad("m", "must be at least 100")
    if v["seed"] < 0:
        bad("seed", "must be nonnegative")
    if v["method"] not in METHODS:
        bad("method", f"must be one of {', '.join(METHODS)}")
    d = v["drift"]
    if d not in ("example51", "example52", "zero") and not d.startswith(("csv:", "csv-f:")):
        bad("drift", "must be example51, example52, zero, csv:PATH or csv-f:PATH")
    if v["u_const"] is not None and v["u_csv"] is not None:
        bad("u_csv", "give either u_const or u_csv, not both")
    if v["u_const"] is None and v["u_csv"] is None:
        v["u_const"] = 1.0
    for k in ("u_minus_auto", "conservative"):
        try:
            v[k] = _truthy(v[k])
        except ValueError as e:
            bad(k, str(e))
    lower_sources = [k for k in ("u_minus_const", "u_minus_csv") if v[k] is not None]
    if v["u_minus_auto"]:
        lower_sources.append("u_minus_auto")
    if len(lower_sources) > 1:
        bad(lower_sources[-1], f"give only one of {', '.join(lower_sources)}")
    try:
        v["gammas"] = tuple(float(x) for x in str(v["gammas"]).split(",") if x.strip())
    except ValueError:
        bad("gammas", "must be a comma-separated list of numbers")
    for k, t in cfg.tols.items():
        if k not in DEFAULT_TOLS or not t > 0:
            bad(TOL_PREFIX + k, f"unknown or nonpositive tolerance (known: {', '.join(DEFAULT_TOLS)})")


def resolve_config(command: str, config_path=None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, ``[common]``, ``[command]`` and flag overrides."""
    values = {k: d for k, (_, d) in FIELDS.items()}
    tols: dict = {}
    where = {}
    if config_path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(config_path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as e:
            raise ConfigError(f"{config_path}: {e}") from None
        for section in cp.sections():
            if section != "common" and section not in COMMANDS:
                raise ConfigError(f"{config_path}:{_key_line(config_path, section, '') or '?'}: "
                                  f"unknown section [{section}]")
        for section in ("common", command):
            if not cp.has_section(section):
                continue
            for raw_key, raw in cp.items(section):
                key = raw_key.strip().replace("-", "_")
                line = _key_line(config_path, section, key)
                loc = f"{config_path}:{line}"
                if key.startswith(TOL_PREFIX):
                    try:
                        tols[key[len(TOL_PREFIX):]] = float(raw)
                    except ValueError:
                        raise ConfigError(f"{loc}: bad value for {key}: {raw!r}") from None
                    where[key] = loc
                    continue
                if key not in FIELDS:
                    raise ConfigError(f"{loc}: unknown key {raw_key!r}")
                values[key] = _parse_value(key, raw.strip(), loc) if raw.strip() else None
                where[key] = loc
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key.startswith(TOL_PREFIX):
            tols[key[len(TOL_PREFIX):]] = float(raw)
        else:
            values[key] = raw
        where[key] = f"--{key.replace('_', '-')}"
    cfg = RunConfig(command, values, tols)
    _validate(cfg, where)
    return cfg


# ---------------------------------------------------------------------------
# inputs

def drift_grid(cfg: RunConfig) -> TimeGrid:
    return TimeGrid(cfg.T, cfg.n)


def mc_grid(cfg: RunConfig) -> TimeGrid:
    return TimeGrid(cfg.mc_T, cfg.mc_n)


def load_drift(cfg: RunConfig) -> Drift:
    """The configured drift scaled by ``gamma``.

    ``csv-f:PATH`` reads samples of ``f`` and differentiates them numerically,
    which smears any kink or power law at the origin over a few cells.
    """
    source, g = cfg.drift, cfg.gamma
    if source == "example51":
        return example51(drift_grid(cfg), cfg.H, g)
    if source == "example52":
        return example52(drift_grid(cfg), cfg.H, g)
    if source == "zero":
        grid = drift_grid(cfg)
        return Drift(SampledFunction(grid, np.zeros(grid.n_points)), "zero")
    kind, _, path = source.partition(":")
    if kind == "csv":
        d = Drift.from_csv(path)
    else:
        f = SampledFunction.from_csv(path)
        d = Drift.from_values(f.grid, f.values, path)
    return d if g == 1.0 else d.scaled(g)


def load_upper(cfg: RunConfig):
    """The boundary ``u``: a scalar or a sampled function."""
    if cfg.u_csv is not None:
        return SampledFunction.from_csv(cfg.u_csv)
    return float(cfg.u_const)


def mc_boundary(cfg: RunConfig, u, lower=None) -> Boundary:
    grid = mc_grid(cfg)
    uv = SampledFunction(grid, values_on(grid, u))
    lv = None if lower is None else SampledFunction(grid, values_on(grid, lower))
    return Boundary(uv, lv)


def _emit(text: str, out, stream):
    stream.write(text)
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _provenance(cfg: RunConfig) -> list[str]:
    return [f"command={cfg.command}", f"version={__version__}",
            f"config_hash={cfg.config_hash}", f"seed={cfg.seed}"]


# ---------------------------------------------------------------------------
# commands

def cmd_norm(cfg: RunConfig, stream=None) -> int:
    """Norms, Pythagoras residual and the condition report of the drift."""
    stream = stream or sys.stdout
    f = load_drift(cfg)
    b = build_bundle(f, cfg.H, cfg.tols)
    nr = b.norms
    lines = _provenance(cfg) + [
        f"drift={f.name}", f"H={cfg.H!r}",
        f"norm.f={b.element.norm!r}", f"norm.f_tail={b.element.tail!r}",
        f"norm.h={nr['h']!r}", f"norm.h_tilde={nr['h_tilde']!r}",
        f"norm.h_minus_h_tilde={nr['h_minus_h_tilde']!r}",
        f"pythagoras_residual={nr['pythagoras_residual']!r}",
    ] + b.report.lines()
    stream.write("\n".join(lines) + "\n")
    if cfg.out is not None:
        n = b.h.t.size
        cols = [b.h.t, b.h.values, b.h_tilde.values, b.h_tilde_prime.values, b.K.values,
                b.f_hat.values]
        text = to_csv_text(["t", "h", "h_tilde", "h_tilde_prime", "K", "f_hat"], cols)
        _write_tagged_csv(cfg, text, cfg.out)
    return EXIT_OK


def _write_tagged_csv(cfg: RunConfig, text: str, path):
    """Append ``seed,config_hash`` columns to every row of a CSV text."""
    rows = text.rstrip("\n").split("\n")
    tagged = [rows[0] + ",seed,config_hash"] + [f"{r},{cfg.seed},{cfg.config_hash}" for r in rows[1:]]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(tagged) + "\n")


def cmd_bounds(cfg: RunConfig, stream=None) -> int:
    """Full pipeline: drift, bundle, Monte Carlo inputs and the bound report."""
    stream = stream or sys.stdout
    f = load_drift(cfg)
    bundle = build_bundle(f, cfg.H, cfg.tols)
    u = load_upper(cfg)
    b = mc_boundary(cfg, u)
    G = mc_grid(cfg)
    est = {}
    est["P0"] = estimate_P(None, b, cfg.H, G, cfg.m, cfg.seed, cfg.method)
    est["Pf"] = estimate_P(f, b, cfg.H, G, cfg.m, cfg.seed, cfg.method)
    if cfg.conservative:
        p_res = 1.0
    else:
        est["P_f_minus_f_hat"] = estimate_P(f - bundle.f_hat, b, cfg.H, G, cfg.m, cfg.seed,
                                            cfg.method)
        p_res = est["P_f_minus_f_hat"]
    info = {k: v for k, v in (s.split("=", 1) for s in _provenance(cfg))}
    info.update({"drift": f.name, "H": repr(cfg.H), "drift_T": repr(cfg.T), "drift_n": cfg.n,
                 "mc_T": repr(cfg.mc_T), "mc_n": cfg.mc_n, "m": cfg.m, "method": cfg.method,
                 "conservative": cfg.conservative})
    nf = bundle.element.norm
    nfh = bundle.report.evidence["f_hat_norm"]
    info.update({"norm.f": repr(nf), "norm.f_tail": repr(bundle.element.tail),
                 "norm.f_hat": repr(nfh), "norm.h_tilde": repr(bundle.norms["h_tilde"])})
    for line in bundle.report.lines():
        k, _, v = line.partition("=")
        info[k] = v
    P0 = est["P0"].estimate
    lemma = None
    if 0.0 < P0 < 1.0:
        lemma = lemma_bounds(P0, nf, nfh)
        pf = est["Pf"]
        lo, hi = lemma.bracket
        info["lemma.contains_estimate"] = bool(lo - 3 * pf.std_error <= pf.estimate
                                               <= hi + 3 * pf.std_error)
    else:
        info["lemma"] = f"omitted (P0 estimate {P0!r} not in (0, 1))"
    upper = theorem_upper(bundle, u, p_res)
    lower = None
    lower_curve = None
    if cfg.u_minus_const is not None:
        lower_curve = float(cfg.u_minus_const)
    elif cfg.u_minus_csv is not None:
        lower_curve = SampledFunction.from_csv(cfg.u_minus_csv)
    elif cfg.u_minus_auto:
        c, _ = default_u_minus(u, cfg.H, G, cfg.m, cfg.seed, cfg.method)
        info["u_minus.auto_shift"] = repr(c)
        lower_curve = SampledFunction(G, values_on(G, u) - c)
    if lower_curve is not None:
        ch = estimate_channel(mc_boundary(cfg, u, lower_curve), cfg.H, G, cfg.m, cfg.seed,
                              cfg.method)
        est["channel"] = ch
        try:
            lower = theorem_lower(bundle, lower_curve, ch)
        except ValueError as e:
            info["theorem.lower.refused"] = str(e)
    pf = est["Pf"]
    info["sandwich.upper_ok"] = bool(pf.estimate <= upper.value + 3 * pf.std_error)
    if lower is not None:
        info["sandwich.lower_ok"] = bool(lower.value - 3 * pf.std_error <= pf.estimate)
    rep = BoundReport(lemma, upper, lower, est, info)
    _emit(rep.to_text(), cfg.out, stream)
    return EXIT_VOID if rep.void else EXIT_OK


SWEEP_HEADER = "gamma,neg_log_p,target,ratio,ess,seed,flag,config_hash"


def cmd_sweep(cfg: RunConfig, stream=None) -> int:
    """``-ln p`` against the quadratic target for each ``gamma`` of the list."""
    stream = stream or sys.stdout
    f = load_drift(cfg)
    bundle = build_bundle(f, cfg.H, cfg.tols)
    b = mc_boundary(cfg, load_upper(cfg))
    rows = asymptotic_sweep(f, bundle.f_hat, b, cfg.H, mc_grid(cfg), cfg.gammas, cfg.m,
                            cfg.seed, bundle.norms["h_tilde"])
    out = [SWEEP_HEADER]
    for r in rows:
        out.append(",".join([repr(r.gamma), repr(r.neg_log_p), repr(r.target), repr(r.ratio),
                             repr(r.ess), str(r.seed), r.flag or "ok", cfg.config_hash]))
    _emit("\n".join(out) + "\n", cfg.out, stream)
    return EXIT_OK if bundle.report.all_ok else EXIT_VOID


def cmd_simulate(cfg: RunConfig, stream=None) -> int:
    """Sample fBm paths on the Monte Carlo grid; ``out`` receives the binary ensemble."""
    stream = stream or sys.stdout
    G = mc_grid(cfg)
    ens = generate_paths(cfg.H, G, cfg.m, cfg.method, cfg.seed)
    if cfg.out is not None:
        write_ensemble(cfg.out, ens)
    end = ens.B[:, -1]
    lines = _provenance(cfg) + [
        f"H={cfg.H!r}", f"mc_T={cfg.mc_T!r}", f"mc_n={cfg.mc_n}", f"m={cfg.m}",
        f"method={cfg.method}",
        f"terminal.mean={float(np.mean(end))!r}", f"terminal.var={float(np.var(end))!r}",
        f"terminal.var_expected={cfg.mc_T ** (2 * cfg.H)!r}",
    ]
    stream.write("\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# self-test

def _check_gamma_identity():
    from .frac_calc import constants
    worst = 0.0
    for H in (0.1, 0.25, 0.5, 0.75, 0.9):
        c1 = constants(H).C1
        ref = 2 * H * math.gamma(H + 0.5) * math.gamma(1.5 - H) / math.gamma(2 - 2 * H)
        worst = max(worst, abs(c1 * c1 - ref) / ref)
    return worst < 1e-12, f"max relative error of C1^2 {worst:.2e}"


def _check_normal():
    e1 = abs(normal_cdf(1.0) - 0.8413447460685429)
    e2 = abs(normal_cdf(0.0) - 0.5) + abs(normal_quantile(0.5))
    x = np.linspace(-6, 6, 121)
    e3 = float(np.max(np.abs(normal_quantile(normal_cdf(x)) - x)))
    return e1 < 1e-8 and e2 == 0 and e3 < 1e-6, f"Phi(1) error {e1:.1e}, inverse error {e3:.1e}"


def _check_lemma():
    lb = lemma_bounds(0.3, 0.0)
    lb2 = lemma_bounds(0.5, 1.0, 1.0)
    ok = lb.abs_bound == 0 and lb.bracket == (0.3, 0.3)
    ok &= abs(lb2.bracket[0] - 0.158655) < 1e-6 and abs(lb2.abs_bound - 0.398942) < 1e-6
    return ok, f"bracket {lb2.bracket[0]:.6f}..{lb2.bracket[1]:.6f}"


def _check_hull():
    from .majorant import concave_majorant
    g = TimeGrid(3.0, 4)
    _, ht, _ = concave_majorant(SampledFunction(g, np.array([0.0, 2.0, 1.0, 3.0])))
    g2 = TimeGrid(2.0, 3)
    _, ht2, _ = concave_majorant(SampledFunction(g2, np.array([0.0, 2.0, 1.0])))
    ok = np.allclose(ht.values, [0, 2, 2.5, 3]) and np.allclose(ht2.values, [0, 2, 2])
    return ok, f"majorants {ht.values.tolist()} {ht2.values.tolist()}"


def _check_quadrature():
    from .grid import cumulative_integral, from_callable
    g = TimeGrid(10.0, 2001)
    f = from_callable(g, lambda t: t ** -0.25 * np.exp(-t), -0.25)
    h10 = cumulative_integral(f).values[-1]
    from scipy import special
    ref = special.gamma(0.75) * special.gammainc(0.75, 10.0)
    return abs(h10 - ref) < 1e-4, f"int_0^10 s^-1/4 e^-s ds error {abs(h10 - ref):.1e}"


def _check_example51():
    from .drifts import example_norm
    f = example51(TimeGrid(20.0, 4001), 0.75)
    b = build_bundle(f, 0.75)
    ref = example_norm(0.75)
    err = abs(b.norms["h_tilde"] - ref)
    ok = err < 1e-3 and b.report.all_ok and abs(b.norms["pythagoras_residual"]) < 1e-6
    return ok, f"||h_tilde|| error {err:.1e}, conditions {'pass' if b.report.all_ok else 'fail'}"


def _check_operator_roundtrip():
    from .frac_calc import weighted_operator
    from .grid import from_callable, l2_norm
    g = TimeGrid(20.0, 2001)
    f = from_callable(g, lambda t: np.exp(-t), 0.0)
    worst = 0.0
    for H in (0.25, 0.75):
        back = weighted_operator(weighted_operator(f, H, "K0p_star"), H, "K0p")
        d = SampledFunction(g, back.values - f.values, back.singular_exponent)
        start = 1 if back.p < 0 else 0
        d = SampledFunction(g, np.where(np.arange(g.n_points) < start, 0.0, d.values))
        worst = max(worst, l2_norm(d) / l2_norm(f))
    return worst < 1e-3, f"relative L2 round-trip error {worst:.1e}"


def _check_brownian_battery():
    from .frac_calc import weighted_operator
    from .grid import from_callable
    from .rkhs import covariance
    g = TimeGrid(5.0, 501)
    f = from_callable(g, lambda t: np.exp(-t) * np.cos(t), 0.0)
    ident = all(weighted_operator(f, 0.5, k) is f
                for k in ("K0p", "K0p_star", "Kinf", "Kinf_star"))
    s, t = np.meshgrid(np.linspace(0, 2, 9), np.linspace(0, 2, 9))
    cov_ok = np.allclose(covariance(s, t, 0.5), np.minimum(s, t), atol=1e-15)
    G = TimeGrid(1.0, 257)
    p = estimate_P(None, Boundary.constant(G, 1.0), 0.5, G, 20000, 11, "circulant")
    ref = 2 * normal_cdf(1.0) - 1
    mc_ok = ref - 3 * p.std_error <= p.estimate <= ref + 3 * p.std_error + 0.02
    b = build_bundle(example51(TimeGrid(20.0, 2001), 0.5), 0.5)
    red_ok = abs(b.norms["h_tilde"] - b.element.norm) < 1e-3 * b.element.norm
    ok = ident and cov_ok and mc_ok and red_ok and b.report.all_ok
    return ok, (f"identity {ident}, covariance {cov_ok}, P(max B <= 1) {p.estimate:.4f} "
                f"vs {ref:.4f}, bundle {'pass' if b.report.all_ok else 'fail'}")


def _check_determinism():
    G = TimeGrid(1.0, 65)
    b = Boundary.constant(G, 1.0)
    r1 = estimate_P(None, b, 0.75, G, 5000, 3, "circulant")
    r2 = estimate_P(None, b, 0.75, G, 5000, 3, "circulant")
    return r1.estimate == r2.estimate, f"estimates {r1.estimate} and {r2.estimate}"


SELFTEST_CHECKS = (
    ("gamma_identity", _check_gamma_identity),
    ("normal_cdf", _check_normal),
    ("lemma_trivial", _check_lemma),
    ("majorant_small", _check_hull),
    ("incomplete_gamma_quadrature", _check_quadrature),
    ("operator_roundtrip", _check_operator_roundtrip),
    ("example51_bundle", _check_example51),
    ("brownian_reduction", _check_brownian_battery),
    ("determinism", _check_determinism),
)


def cmd_selftest(cfg: RunConfig | None = None, stream=None, corrupt_c1=None) -> int:
    """Fast invariant checks; nonzero exit on any failure.

    ``corrupt_c1`` scales the constant C1 for the duration of the run
    (fault injection).
    """
    stream = stream or sys.stdout
    from .frac_calc import corrupted_c1
    import contextlib

    ctx = corrupted_c1(corrupt_c1) if corrupt_c1 is not None else contextlib.nullcontext()
    failures = 0
    start = time.perf_counter()
    with ctx:
        for name, fn in SELFTEST_CHECKS:
            try:
                ok, detail = fn()
            except Exception as e:  # report and keep going
                ok, detail = False, f"{type(e).__name__}: {e}"
            failures += not ok
            stream.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
    stream.write(f"selftest: {len(SELFTEST_CHECKS) - failures}/{len(SELFTEST_CHECKS)} passed "
                 f"in {time.perf_counter() - start:.1f} s\n")
    return EXIT_OK if failures == 0 else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fbmb", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name == "selftest":
            s.add_argument("--corrupt-c1", type=float, default=None,
                           help="scale C1 by this factor during the run (fault injection)")
            continue
        s.add_argument("--config", default=None)
        s.add_argument("--H", type=float)
        s.add_argument("--T", type=float, help="drift grid horizon")
        s.add_argument("--n", type=int, help="drift grid points")
        s.add_argument("--mc-T", type=float, help="Monte Carlo grid horizon")
        s.add_argument("--mc-n", type=int, help="Monte Carlo grid points")
        s.add_argument("--m", type=int, help="number of paths")
        s.add_argument("--seed", type=int)
        s.add_argument("--drift", help="example51, example52, zero, csv:PATH (t,f_prime) "
                                       "or csv-f:PATH (t,value samples of f)")
        s.add_argument("--gamma", type=float, help="drift scale")
        s.add_argument("--gammas", help="comma-separated scales for sweep")
        grp = s.add_mutually_exclusive_group()
        grp.add_argument("--u-const", type=float)
        grp.add_argument("--u-csv")
        lg = s.add_mutually_exclusive_group()
        lg.add_argument("--u-minus-const", type=float)
        lg.add_argument("--u-minus-csv")
        lg.add_argument("--u-minus-auto", action="store_const", const="true", default=None)
        s.add_argument("--method", choices=METHODS)
        s.add_argument("--out")
        s.add_argument("--conservative", action="store_const", const="true", default=None)
        s.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                       help=f"tolerance override ({', '.join(DEFAULT_TOLS)})")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return cmd_selftest(corrupt_c1=args.corrupt_c1)
    over = {k: v for k, v in vars(args).items()
            if k not in ("command", "config", "tol") and v is not None}
    try:
        for item in args.tol:
            name, _, val = item.partition("=")
            over[TOL_PREFIX + name.strip()] = float(val)
        cfg = resolve_config(args.command, args.config, over)
        fn = {"norm": cmd_norm, "bounds": cmd_bounds, "sweep": cmd_sweep,
              "simulate": cmd_simulate}[args.command]
        code = fn(cfg)
    except (ConfigError, ValueError, OverflowError, OSError) as e:
        sys.stderr.write(f"fbmb {args.command}: error: {e}\n")
        return EXIT_FAIL
    if code == EXIT_VOID:
        sys.stderr.write(f"fbmb {args.command}: VOID (a condition failed; see report)\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
