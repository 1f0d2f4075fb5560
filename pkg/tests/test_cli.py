import numpy as np
import pytest

from fbmb import cli
from fbmb.fbm_mc import read_ensemble
from fbmb.grid import TimeGrid, to_csv_text

SMALL = ["--T", "20", "--n", "2001", "--m", "2000", "--mc-n", "65"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines() if "=" in line)


def test_config_precedence(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("[common]\nH = 0.6\nm = 500\nseed = 4\n\n[bounds]\nm = 700\n")
    cfg = cli.resolve_config("bounds", p, {"seed": 9})
    assert cfg.H == 0.6 and cfg.m == 700 and cfg.seed == 9 and cfg.T == 20.0
    assert cli.resolve_config("norm", p).m == 500


def test_config_hash_tracks_inputs(tmp_path):
    a = cli.resolve_config("bounds", None, {"seed": 1})
    b = cli.resolve_config("bounds", None, {"seed": 1, "out": str(tmp_path / "x")})
    c = cli.resolve_config("bounds", None, {"seed": 2})
    assert a.config_hash == b.config_hash != c.config_hash


def test_config_error_has_line_number(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[common]\nH = 0.75\nm = lots\n")
    with pytest.raises(cli.ConfigError, match=r"bad\.cfg:3: bad value for m"):
        cli.resolve_config("norm", p)
    p.write_text("[common]\nH = 0.75\n\n[norm]\nspeed = 3\n")
    with pytest.raises(cli.ConfigError, match=r"bad\.cfg:5: unknown key"):
        cli.resolve_config("norm", p)
    p.write_text("[common]\nH = 1.5\n")
    with pytest.raises(cli.ConfigError, match=r"bad\.cfg:2: H"):
        cli.resolve_config("norm", p)


def test_conflicting_sources_rejected():
    with pytest.raises(cli.ConfigError):
        cli.resolve_config("bounds", None, {"u_const": 1.0, "u_csv": "u.csv"})
    with pytest.raises(cli.ConfigError):
        cli.resolve_config("bounds", None, {"u_minus_const": -1.0, "u_minus_auto": "true"})
    with pytest.raises(cli.ConfigError):
        cli.resolve_config("bounds", None, {"tol_nonsense": 1.0})


def test_bad_config_exit_code(capsys):
    code, _, err = run(capsys, "norm", "--H", "1.2")
    assert code == cli.EXIT_FAIL and "H" in err


def test_norm_example51(capsys, tmp_path):
    out = tmp_path / "bundle.csv"
    code, text, _ = run(capsys, "norm", "--n", "4001", "--out", str(out))
    d = kv(text)
    assert code == 0
    assert float(d["norm.h_tilde"]) == pytest.approx(1.1195, abs=1e-3)
    assert d["condition.i"] == d["condition.ii"] == d["condition.iii"] == "pass"
    rows = out.read_text().splitlines()
    assert rows[0] == "t,h,h_tilde,h_tilde_prime,K,f_hat,seed,config_hash"
    assert all(r.endswith(f",0,{d['config_hash']}") for r in rows[1:])


def test_norm_example52(capsys):
    code, text, _ = run(capsys, "norm", "--drift", "example52", "--H", "0.25", "--n", "4001")
    d = kv(text)
    assert code == 0
    assert d["condition.i"] == d["condition.ii"] == d["condition.iii"] == "pass"


def test_norm_zero_csv_drift(capsys, tmp_path):
    g = TimeGrid(10.0, 101)
    p = tmp_path / "zero.csv"
    p.write_text(to_csv_text(["t", "f_prime"], [g.nodes, np.zeros(101)]))
    code, text, _ = run(capsys, "norm", "--drift", f"csv:{p}")
    d = kv(text)
    assert code == 0
    for k in ("norm.f", "norm.h", "norm.h_tilde", "norm.h_minus_h_tilde"):
        assert float(d[k]) == 0.0


def test_bounds_without_lower(capsys):
    code, text, _ = run(capsys, "bounds", *SMALL)
    d = kv(text)
    assert code == 0
    assert d["theorem.lower"] == "omitted"
    assert "theorem.upper" in d and "mc.Pf.estimate" in d


def test_bounds_with_lower_and_csv_boundary(capsys, tmp_path):
    g = TimeGrid(20.0, 2001)
    up, lo = tmp_path / "u.csv", tmp_path / "um.csv"
    up.write_text(to_csv_text(["t", "u"], [g.nodes, np.sqrt(g.nodes)]))
    lo.write_text(to_csv_text(["t", "u"], [g.nodes, -np.sqrt(g.nodes)]))
    code, text, _ = run(capsys, "bounds", *SMALL, "--gamma", "3", "--u-csv", str(up),
                        "--u-minus-csv", str(lo))
    d = kv(text)
    assert code == 0
    assert 0 < float(d["theorem.lower"]) < float(d["theorem.upper"]) < 1
    assert d["sandwich.upper_ok"] == d["sandwich.lower_ok"] == "True"


def test_bounds_brownian(capsys):
    code, text, _ = run(capsys, "bounds", *SMALL, "--H", "0.5", "--u-minus-const", "-2")
    d = kv(text)
    assert code == 0 and d["condition.iii"] == "pass"
    assert float(d["norm.f"]) == pytest.approx(float(d["norm.h_tilde"]), rel=1e-3)


def test_void_exit_code(capsys, tmp_path):
    g = TimeGrid(10.0, 1001)
    p = tmp_path / "ramp.csv"
    p.write_text(to_csv_text(["t", "f_prime"], [g.nodes, g.nodes]))
    code, text, err = run(capsys, "bounds", "--drift", f"csv:{p}", "--m", "500", "--mc-n", "33",
                          "--mc-T", "1", "--u-const", "0")
    assert code == cli.EXIT_VOID and "VOID" in err
    assert "VOID" in kv(text)["theorem.upper.flags"]


def test_bounds_deterministic_across_threads(capsys, monkeypatch, tmp_path):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("FBMB_THREADS", threads)
        path = tmp_path / f"b{threads}.txt"
        run(capsys, "bounds", *SMALL, "--m", "9000", "--u-minus-const", "-2", "--out", str(path))
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_sweep(capsys, tmp_path):
    code, text, _ = run(capsys, "sweep", *SMALL, "--gammas", "1,2")
    lines = text.strip().splitlines()
    assert lines[0] == cli.SWEEP_HEADER
    rows = [ln.split(",") for ln in lines[1:]]
    assert [float(r[0]) for r in rows] == [0.0, 1.0, 2.0]
    assert float(rows[2][2]) == pytest.approx(4 * float(rows[1][2]), rel=1e-15)
    code, text, _ = run(capsys, "sweep", *SMALL, "--gammas", "")
    assert len(text.strip().splitlines()) == 2


def test_malformed_csv_is_a_clean_error(capsys, tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("t,u\n")
    code, _, err = run(capsys, "bounds", *SMALL, "--u-csv", str(p))
    assert code == cli.EXIT_FAIL and "empty.csv" in err


def test_simulate(capsys, tmp_path):
    p = tmp_path / "paths.bin"
    code, text, _ = run(capsys, "simulate", "--m", "300", "--mc-n", "33", "--out", str(p))
    assert code == 0 and read_ensemble(p).shape == (300, 33)
    assert "terminal.var=" in text


def test_selftest(capsys):
    code, text, _ = run(capsys, "selftest")
    assert code == 0 and "FAIL" not in text
    code, text, _ = run(capsys, "selftest", "--corrupt-c1", "1.01")
    assert code == cli.EXIT_FAIL
    assert "FAIL gamma_identity" in text
