import os
import subprocess
import sys

import numpy as np
import pytest

from bellsweep import cache, cli, config as cfgmod, models, tebd
from bellsweep.errors import CacheError, ConfigurationError


def run_cli(args, env_extra=None, cwd=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "bellsweep.cli", *args],
                          capture_output=True, text=True, env=env, cwd=cwd)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_parse_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nmodel.kind = TFIM\nmodel.u = 1\nchi = 8\n"
                 "optimizer.eta = 0.2  # trailing comment\n")
    cfg = cfgmod.parse_config_file(p)
    assert cfg.values["model.kind"] == "TFIM"
    assert cfg.values["chi"] == 8
    assert cfg.values["optimizer.eta"] == 0.2


def test_parse_config_rejects_unknown_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("model.bogus = 3\n")
    with pytest.raises(ConfigurationError) as err:
        cfgmod.parse_config_file(p)
    assert "model.bogus" in str(err.value)


def test_config_error_exit_code(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("model.bogus = 3\n")
    r = run_cli(["--config", str(p), "ground-state"])
    assert r.returncode == cli.EXIT_CONFIG
    assert "model.bogus" in r.stderr


def test_empty_sweep_grid_is_config_error(tmp_path):
    r = run_cli(["--set", "sweep.start=1.0", "--set", "sweep.stop=0.5",
                 "--out-dir", str(tmp_path), "sweep"])
    assert r.returncode == cli.EXIT_CONFIG


def test_set_override_round_trip():
    cfg = cfgmod.default_config().with_overrides([("chi", "12")])
    assert cfg.values["chi"] == 12
    with pytest.raises(ConfigurationError):
        cfgmod.default_config().with_overrides([("chi", "abc")])


def test_h_values_grid():
    cfg = cfgmod.default_config().with_overrides(
        [("sweep.start", "0.5"), ("sweep.stop", "1.5"), ("sweep.step", "0.01")])
    hs = cfg.h_values()
    assert len(hs) == 101
    assert hs[0] == 0.5 and hs[-1] == 1.5


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def test_cache_round_trip(tmp_path, tfim_mps):
    spec = models.ModelSpec(kind=models.TFIM, h=2.0, u=1)
    path = cache.cache_path(str(tmp_path), spec, 8, 1e-8)
    cache.save_umps(path, tfim_mps, spec, 8, 1e-8)
    loaded, header = cache.load_umps(path)
    assert loaded.energy_per_site == pytest.approx(tfim_mps.energy_per_site, abs=1e-14)
    assert loaded.n_cell == tfim_mps.n_cell
    for a, b in zip(loaded.gammas, tfim_mps.gammas):
        assert np.allclose(a, b, atol=1e-14)
    assert tebd.canonical_defect(loaded) < 1e-8


def test_cache_checksum_detects_corruption(tmp_path, tfim_mps):
    spec = models.ModelSpec(kind=models.TFIM, h=2.0, u=1)
    path = cache.cache_path(str(tmp_path), spec, 8, 1e-8)
    cache.save_umps(path, tfim_mps, spec, 8, 1e-8)
    raw = bytearray(open(path, "rb").read())
    raw[len(raw) // 2] ^= 0xFF
    open(path, "wb").write(bytes(raw))
    with pytest.raises(CacheError):
        cache.load_umps(path)
    # get_or_compute falls back to recomputation instead of using bad data
    calls = {"n": 0}

    def compute():
        calls["n"] += 1
        return tfim_mps

    mps, hit = cache.get_or_compute(str(tmp_path), spec, 8, 1e-8, compute)
    assert calls["n"] == 1 and not hit


def test_cache_key_sensitivity():
    spec = models.ModelSpec(kind=models.TFIM, h=2.0, u=1)
    k1 = cache.cache_key(spec, 8, 1e-8)
    k2 = cache.cache_key(spec.with_field(2.1), 8, 1e-8)
    k3 = cache.cache_key(spec, 16, 1e-8)
    assert len({k1, k2, k3}) == 3


# ---------------------------------------------------------------------------
# end-to-end commands
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_sweep_args(tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    cachedir = tmp_path_factory.mktemp("cache")
    args = ["--set", "model.kind=TFIM", "--set", "model.u=1",
            "--set", "optimizer.mode=POLAR_MIRROR",
            "--set", "optimizer.locked_sites=",
            "--set", "optimizer.grid_resolution=8",
            "--set", "optimizer.max_iters=25",
            "--set", "chi=4", "--set", "gs_tol=1e-7",
            "--set", "sweep.start=1.6", "--set", "sweep.stop=1.8",
            "--set", "sweep.step=0.05",
            "--cache-dir", str(cachedir)]
    return args, str(out)


def test_sweep_end_to_end_and_determinism(tiny_sweep_args):
    args, out = tiny_sweep_args
    r1 = run_cli([*args, "--out-dir", out, "sweep"])
    assert r1.returncode in (cli.EXIT_OK, cli.EXIT_PARTIAL), r1.stderr
    csv1 = open(os.path.join(out, "sweep.csv"), "rb").read()
    assert os.path.exists(os.path.join(out, "indicators.svg"))
    assert os.path.exists(os.path.join(out, "angles.svg"))
    assert os.path.exists(os.path.join(out, "geometry.txt"))
    r2 = run_cli([*args, "--out-dir", out, "sweep"])
    assert r2.returncode == r1.returncode
    csv2 = open(os.path.join(out, "sweep.csv"), "rb").read()
    assert csv1 == csv2  # byte-identical CSV across repeated runs


def test_plot_rerenders_from_csv(tiny_sweep_args, tmp_path):
    args, out = tiny_sweep_args
    csv_path = os.path.join(out, "sweep.csv")
    svg1 = open(os.path.join(out, "indicators.svg")).read()
    r = run_cli(["--out-dir", str(tmp_path), "plot", "--csv", csv_path])
    assert r.returncode == cli.EXIT_OK, r.stderr
    svg2 = open(os.path.join(tmp_path, "indicators.svg")).read()
    assert svg1 == svg2


def test_ground_state_cache_hit(tiny_sweep_args, tmp_path):
    gs_args, _ = tiny_sweep_args
    r1 = run_cli([*gs_args, "--out-dir", str(tmp_path), "ground-state"])
    assert r1.returncode == cli.EXIT_OK, r1.stderr
    assert "cache = miss" in r1.stdout or "cache = hit" in r1.stdout
    r2 = run_cli([*gs_args, "--out-dir", str(tmp_path), "ground-state"])
    assert "cache = hit" in r2.stdout

    def energy_line(out):
        return next(ln for ln in out.splitlines() if ln.startswith("energy_per_site"))

    assert energy_line(r1.stdout) == energy_line(r2.stdout)


def test_optimize_command(tiny_sweep_args, tmp_path):
    args, _ = tiny_sweep_args
    r = run_cli([*args, "--out-dir", str(tmp_path), "optimize", "--h", "1.7"])
    assert r.returncode == cli.EXIT_OK, r.stderr
    assert "lambda1_per_site" in r.stdout
    assert os.path.exists(os.path.join(tmp_path, "optimize.csv"))


def test_out_dir_env_honored(tiny_sweep_args, tmp_path):
    args, _ = tiny_sweep_args
    r = run_cli([*args, "optimize", "--h", "1.7"],
                env_extra={cli.OUT_DIR_ENV: str(tmp_path)})
    assert r.returncode == cli.EXIT_OK, r.stderr
    assert os.path.exists(os.path.join(tmp_path, "optimize.csv"))


def test_oracle_check_exit_zero(tmp_path):
    r = run_cli(["--out-dir", str(tmp_path), "oracle-check", "--n-sites", "6"])
    assert r.returncode == cli.EXIT_OK, r.stderr + r.stdout
    assert "all checks within tolerance" in r.stdout


def test_oracle_check_guard(tmp_path):
    r = run_cli(["--out-dir", str(tmp_path), "oracle-check", "--n-sites", "12"])
    assert r.returncode == cli.EXIT_CONFIG
