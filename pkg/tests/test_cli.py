import hashlib
import json
import math

import numpy as np
import pytest

from nvrabi.cli import main
from nvrabi.fileio import read_table, write_stack
from nvrabi.mapping import ContrastStack

LASER_1US = "[sequence]\nlaser_duration = 1e-6\n"


def write(path, text):
    path.write_text(text)
    return str(path)


def digest(*paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(p.read_bytes())
    return h.hexdigest()


# --------------------------------------------------------- simulate-populations

def test_zero_duration_sequence_gives_header_only(tmp_path):
    cfg = write(tmp_path / "z.ini", "[sequence]\nlaser_duration = 0\nwait_duration = 0\n")
    out = tmp_path / "p.csv"
    assert main(["simulate-populations", "-c", cfg, "-o", str(out)]) == 0
    assert out.read_text() == "t_s,n1,n2,n3,n4,n5,n6,n7,n_c,n_E\n"


def test_default_populations_polarize(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["simulate-populations", "-o", str(out), "--stride", "10"]) == 0
    cols = read_table(out)
    end_of_laser = np.searchsorted(cols["t_s"], 10e-6)
    n1, n2, n3 = (cols[k][end_of_laser] for k in ("n1", "n2", "n3"))
    assert n1 / (n1 + n2 + n3) > 0.9
    np.testing.assert_allclose(cols["n_E"], cols["n4"] + cols["n5"] + cols["n6"], atol=1e-15)
    assert (tmp_path / "p.csv.config.ini").exists()


def test_all_cycles_flag_adds_rows(tmp_path):
    cfg = write(tmp_path / "c.ini", LASER_1US)
    one, every = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate-populations", "-c", cfg, "-o", str(one), "--stride", "50"])
    main(["simulate-populations", "-c", cfg, "-o", str(every), "--stride", "50", "--all-cycles"])
    assert len(read_table(every)["t_s"]) > 5 * len(read_table(one)["t_s"])


def test_conflicting_pump_keys_exit_2(tmp_path, capsys):
    cfg = write(tmp_path / "bad.ini", "[drive]\nW_p = 1.9e6\ns = 0.1\n")
    assert main(["simulate-populations", "-c", cfg, "-o", str(tmp_path / "x.csv")]) == 2
    err = capsys.readouterr().err
    assert "W_p" in err and "'s'" in err


def test_non_convergence_exit_3(tmp_path):
    cfg = write(tmp_path / "c.ini", LASER_1US + "[numerics]\nmax_cycles = 2\n")
    assert main(["simulate-populations", "-c", cfg, "-o", str(tmp_path / "x.csv")]) == 3


# ---------------------------------------------------------------- simulate-rabi

def test_rabi_without_rf_is_all_zero(tmp_path):
    cfg = write(tmp_path / "c.ini", LASER_1US + "[drive]\nOmega_R = 0\n")
    out = tmp_path / "r.csv"
    assert main(["simulate-rabi", "-c", cfg, "-o", str(out)]) == 0
    assert np.all(read_table(out)["contrast"] == 0)


def test_rabi_fit_reports(tmp_path, capsys):
    reports = {}
    for name, text in (("long", ""), ("short", LASER_1US)):
        cfg = write(tmp_path / f"{name}.ini", text)
        out = tmp_path / f"{name}.csv"
        assert main(["simulate-rabi", "-c", cfg, "-o", str(out), "--fit"]) == 0
        printed = json.loads(capsys.readouterr().out)
        reports[name] = json.loads((tmp_path / f"{name}.csv.fit.json").read_text())
        assert printed == reports[name]
        assert reports[name]["c_R_rad_per_s"] == pytest.approx(1.5e7, rel=0.02)
    assert reports["short"]["a_R"] > reports["long"]["a_R"]


def test_rabi_output_is_deterministic_across_workers(tmp_path):
    cfg = write(tmp_path / "c.ini", LASER_1US + "[sweep]\ntau_step = 1e-7\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate-rabi", "-c", cfg, "-o", str(a), "--workers", "1"]) == 0
    assert main(["simulate-rabi", "-c", cfg, "-o", str(b), "--workers", "2"]) == 0
    assert digest(a) == digest(b)


def test_effective_config_reproduces_run(tmp_path):
    cfg = write(tmp_path / "c.ini", LASER_1US + "[sweep]\ntau_step = 1e-7\n"
                "[noise]\nseed = 7\ncontrast_noise = 1e-3\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate-rabi", "-c", cfg, "-o", str(a)])
    main(["simulate-rabi", "-c", str(tmp_path / "a.csv.config.ini"), "-o", str(b)])
    assert digest(a) == digest(b)
    assert digest(tmp_path / "a.csv.config.ini") == digest(tmp_path / "b.csv.config.ini")


# -------------------------------------------------------------------- fit-rabi

def test_fit_rabi_round_trip(tmp_path, capsys):
    out = tmp_path / "r.csv"
    cfg = write(tmp_path / "c.ini", LASER_1US)
    main(["simulate-rabi", "-c", cfg, "-o", str(out), "--fit"])
    direct = json.loads(capsys.readouterr().out)
    assert main(["fit-rabi", str(out), "-o", str(tmp_path / "f.json")]) == 0
    refit = json.loads(capsys.readouterr().out)
    assert refit["c_R_rad_per_s"] == direct["c_R_rad_per_s"]
    assert json.loads((tmp_path / "f.json").read_text()) == refit


def test_fit_rabi_with_guess_flags(tmp_path, capsys):
    tau = np.arange(25, 201) * 20e-9
    y = 0.02 * (1 - np.exp(-tau / 1.5e-6) * np.cos(1.4e7 * tau + 0.3))
    csv = tmp_path / "c.csv"
    csv.write_text("tau_s,contrast\n" + "".join(f"{float(t)!r},{float(v)!r}\n" for t, v in zip(tau, y)))
    assert main(["fit-rabi", str(csv), "--c", "1.3e7", "--b", "1e-6"]) == 0
    assert json.loads(capsys.readouterr().out)["c_R_rad_per_s"] == pytest.approx(1.4e7, rel=1e-8)


def test_fit_rabi_empty_csv_exit_2(tmp_path):
    assert main(["fit-rabi", write(tmp_path / "e.csv", "tau_s,contrast\n")]) == 2


def test_fit_rabi_constant_exit_4(tmp_path):
    rows = "".join(f"{i * 2e-8!r},0.05\n" for i in range(50))
    assert main(["fit-rabi", write(tmp_path / "c.csv", "tau_s,contrast\n" + rows)]) == 4


def test_missing_input_exit_2(tmp_path):
    assert main(["fit-rabi", str(tmp_path / "nope.csv")]) == 2


# ------------------------------------------------------------------ saturation

def test_saturation_report(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["saturation", "-o", str(out), "--power", "0.15"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["W_p_sat_per_s"] == pytest.approx(1.9e7, rel=0.1)
    assert report["I_sat_mW_per_um2"] == pytest.approx(2.3, rel=0.03)
    assert report["P_sat_W"] == pytest.approx(1.2, rel=0.03)
    assert 0.06 <= report["s"] <= 0.2
    assert read_table(out)["W_p_per_s"].shape == (61,)


def test_saturation_linear_regime_exit_4(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["saturation", "-o", str(out), "--wp-min", "1e3", "--wp-max", "1e5"]) == 4


def test_saturation_bad_range_exit_2(tmp_path):
    assert main(["saturation", "-o", str(tmp_path / "s.csv"), "--wp-min", "1e6", "--wp-max", "1e5"]) == 2


# ---------------------------------------------------------------------- map-rf

def wire_stack(nx=100, ny=20, um=1.5, b_um=57.0):
    tau = 0.5e-6 + np.arange(176) * 20e-9
    nu = 2e8 / (np.arange(nx) * um + b_um)
    c = 0.03 * (1 - np.exp(-tau / 3e-6) * np.cos(2 * math.pi * nu[:, None] * tau))
    return ContrastStack(np.repeat(c[:, None, :], ny, axis=1).astype(np.float32), um, tau[0], 20e-9)


def test_map_rf_flat_profile(tmp_path):
    tau = 0.5e-6 + np.arange(176) * 20e-9
    c = np.broadcast_to(0.03 * (1 - np.cos(2 * math.pi * 2e6 * tau)), (30, 20, 176))
    write_stack(tmp_path / "s.nvs", ContrastStack(c.astype(np.float32), 1.0, tau[0], 20e-9))
    out = tmp_path / "m.csv"
    assert main(["map-rf", str(tmp_path / "s.nvs"), "--y-center", "10", "-o", str(out)]) == 0
    cols = read_table(out)
    assert set(cols) == {"x_um", "nu_R_Hz", "B_R_mT"}
    assert np.ptp(cols["nu_R_Hz"]) == 0 and cols["nu_R_Hz"][0] == pytest.approx(2e6, rel=0.01)


def test_map_rf_wire_fit(tmp_path, capsys):
    write_stack(tmp_path / "s.nvs", wire_stack())
    out = tmp_path / "m.csv"
    assert main(["map-rf", str(tmp_path / "s.nvs"), "--y-center", "10", "--c-w", "0", "-o", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["b_W_um"] == pytest.approx(57.0, abs=1.0)
    assert json.loads((tmp_path / "m.csv.wire.json").read_text()) == report


def test_map_rf_truncated_stack_exit_2(tmp_path, capsys):
    write_stack(tmp_path / "s.nvs", wire_stack(nx=5))
    raw = (tmp_path / "s.nvs").read_bytes()
    (tmp_path / "s.nvs").write_bytes(raw[:-4])
    assert main(["map-rf", str(tmp_path / "s.nvs"), "--y-center", "10", "-o", str(tmp_path / "m.csv")]) == 2
    assert "payload length mismatch" in capsys.readouterr().err


def test_map_rf_window_outside_stack_exit_2(tmp_path):
    write_stack(tmp_path / "s.nvs", wire_stack(nx=5))
    assert main(["map-rf", str(tmp_path / "s.nvs"), "--y-center", "2", "-o", str(tmp_path / "m.csv")]) == 2


# -------------------------------------------------------------- default-config

def test_default_config_parses_back(tmp_path):
    path = tmp_path / "d.ini"
    assert main(["default-config", "-o", str(path)]) == 0
    out = tmp_path / "p.csv"
    assert main(["simulate-populations", "-c", str(path), "-o", str(out), "--stride", "100"]) == 0
    assert (tmp_path / "p.csv.config.ini").read_text() == path.read_text()


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as err:
        main(["simulate-rabi"])
    assert err.value.code == 2
