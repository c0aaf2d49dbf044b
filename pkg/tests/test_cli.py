import json
import subprocess
import sys

import numpy as np
import pytest

from jpa3d.cli import main
from jpa3d.config import default_config_text


def run(argv, tmp_path, name="out.csv"):
    out = tmp_path / name
    code = main(argv + ["-o", str(out)])
    return code, out


def test_fluxmap_default(tmp_path):
    code, out = run(["fluxmap"], tmp_path)
    assert code == 0
    text = out.read_bytes().decode("utf-8")
    lines = text.split("\n")
    assert lines[0] == "phi_dc,omega_c_hz,slope_hz_per_phi0,kerr_cav_hz,masked"
    assert len(lines) == 403 and lines[-1] == ""
    report = json.loads((tmp_path / "out.json").read_text())
    assert report["resolved"]["calibration"]["g_hz"] > 0
    assert report["excursion_hz"] == pytest.approx(82.8e6, rel=1e-2)


def test_fluxmap_single_point(tmp_path):
    code, out = run(["fluxmap", "--points", "1"], tmp_path)
    assert code == 0
    assert len(out.read_text().strip().split("\n")) == 2


def test_fluxmap_all_masked(tmp_path):
    with pytest.warns(UserWarning, match="masked"):
        code, out = run(["fluxmap", "--phi-min", "0.48", "--phi-max", "0.52", "--points", "5"], tmp_path)
    assert code == 0
    rows = out.read_text().strip().split("\n")[1:]
    assert all(r.endswith(",nan,nan,nan,1") for r in rows)


def test_gain_sweep_threshold(tmp_path):
    code, out = run(["gain-sweep"], tmp_path)
    assert code == 0
    rep = json.loads((tmp_path / "out.json").read_text())["threshold"]
    assert rep["p_c_dbm_at_reference"] == pytest.approx(-32.8, abs=1e-9)
    assert rep["first_above_threshold_dbm"] == pytest.approx(-32.8)
    assert rep["epsilon_c_hz"] == pytest.approx(0.76e6)
    assert abs(rep["p_c_dbm_fitted"] - rep["p_c_dbm_at_reference"]) < 1.0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data[-1, 0] < -32.8 and np.all(np.diff(data[:, 1]) > 0)


def test_gain_sweep_unpumped_is_flat(tmp_path):
    code, out = run(["gain-sweep", "--pump-dbm-range", "-200", "-190", "1"], tmp_path)
    assert code == 0
    g = np.loadtxt(out, delimiter=",", skiprows=1)[:, 1]
    assert np.all(np.abs(g) < 1e-9)


def test_compression(tmp_path):
    code, out = run(["compression", "--signal-dbm-range", "-140", "-105", "1"], tmp_path)
    assert code == 0
    rep = json.loads((tmp_path / "out.json").read_text())
    assert rep["p1db_dbm"] == pytest.approx(-115.0, abs=0.25)
    assert out.read_text().startswith("signal_power_dbm,gain_db\n")


def test_noise_example(tmp_path):
    code, out = run(["noise", "--snri-db", "13", "--g-db", "17.8", "--t-cryo-k", "4.4", "--draws", "100"], tmp_path, "n.json")
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["t_jpa_k"]["value"] == pytest.approx(0.1475, abs=1e-4)


def test_noise_unphysical_exit_code(tmp_path):
    code, _ = run(["noise", "--snri-db", "19", "--g-db", "17.8", "--t-cryo-k", "4.4"], tmp_path, "n.json")
    assert code == 3


def test_fit_round_trip(tmp_path):
    trace = tmp_path / "trace.csv"
    assert main(["synth-trace", "--noise", "0.01", "--seed", "4", "--amplitude", "0.4",
                 "--delay-s", "3e-8", "-o", str(trace)]) == 0
    code, out = run(["fit", "s11", str(trace)], tmp_path, "fit.json")
    assert code == 0
    fit = json.loads(out.read_text())["fit"]
    assert fit["kappa_ext_hz"] == pytest.approx(1.1e6, rel=0.02)
    assert fit["kappa_int_hz"] == pytest.approx(0.42e6, rel=0.02)


def test_fit_gain(tmp_path):
    p = np.arange(-45.0, -30.5, 0.5)
    x = 10 ** ((p + 30.0) / 10)
    g = 10 * np.log10(1 + 4 * x / (1 - x) ** 2)
    src = tmp_path / "g.csv"
    src.write_text("pump_power_dbm,gain_db\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(p, g)))
    code, out = run(["fit", "gain", str(src)], tmp_path, "fit.json")
    assert code == 0
    assert json.loads(out.read_text())["fit"]["p_c_dbm"] == pytest.approx(-30.0, abs=0.01)


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(default_config_text().replace('"l_geo": 8.6e-9', '"l_geo": "big"'))
    code, _ = run(["fluxmap", "--config", str(bad)], tmp_path)
    assert code == 2


def test_quench_exit_code(tmp_path):
    code, _ = run(["gain-sweep", "--phi-dc", "0.46", "--attenuation-db", "0",
                   "--pump-dbm-range", "0", "1", "1"], tmp_path)
    assert code == 3


def test_nonconvergence_exit_code(tmp_path):
    # a signal above the Kerr-pulled cavity sits in the bistable region
    code, _ = run(["compression", "--kerr-hz=-100", "--delta", "1.5e6",
                   "--signal-dbm-range", "-160", "-100", "2"], tmp_path)
    assert code == 4


def test_bad_arguments():
    assert main(["fluxmap", "--points", "many"]) == 2
    assert main(["gain-sweep", "--pump-dbm-range", "-30", "-40", "1"]) == 2


def test_trajectory(tmp_path):
    code, out = run(["trajectory", "--every", "500"], tmp_path)
    assert code == 0
    assert out.read_text().startswith("t_s,re_alpha,im_alpha\n0.0,0.0,0.0\n")


@pytest.mark.parametrize(
    "argv",
    [
        ["fluxmap", "--points", "101"],
        ["gain-sweep", "--pump-dbm-range", "-40", "-32", "0.25"],
        ["noise", "--snri-db", "13", "--sigma-snri-db", "1", "--g-db", "17.8",
         "--t-cryo-k", "4.4", "--sigma-t-cryo-k", "0.3", "--draws", "5000", "--seed", "3"],
    ],
)
def test_byte_identical(tmp_path, argv):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    assert main(argv + ["-o", str(a / "o.csv")]) == 0
    extra = ["--jobs", "4"] if argv[0] != "noise" else []
    assert main(argv + extra + ["-o", str(b / "o.csv")]) == 0
    for name in ("o.csv", "o.json"):
        if (a / name).exists():
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_console_script_subprocess(tmp_path):
    cmd = [sys.executable, "-m", "jpa3d.cli", "noise", "--snri-db", "13", "--g-db", "17.8",
           "--t-cryo-k", "4.4", "--draws", "10"]
    r1 = subprocess.run(cmd, capture_output=True, check=True)
    r2 = subprocess.run(cmd, capture_output=True, check=True)
    assert r1.stdout == r2.stdout and b"\r" not in r1.stdout
