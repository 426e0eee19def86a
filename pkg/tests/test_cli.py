import json

import pytest

from vanguard.harness.cli import EXIT_BACKEND, EXIT_CAMPAIGN, EXIT_OK, main


def run(tmp_path, *argv, name="out"):
    out, summary = tmp_path / f"{name}.csv", tmp_path / f"{name}.json"
    code = main([*argv, "--out", str(out), "--summary", str(summary)])
    if code != EXIT_OK:
        return code, None, None
    return code, out.read_text(), json.loads(summary.read_text())


@pytest.mark.parametrize("argv, header, schema", [
    (["sweep", "--codes", "0000,FFFF", "--window", "5"], "dac,channel,code", "vanguard.sweep.v1"),
    (["staircase", "--code-lo", "7FFF", "--code-hi", "8002", "--window", "2"],
     "dac,code,v_measured,increment", "vanguard.staircase.v1"),
    (["psd", "--segments", "8"], "f_hz,psd_v2hz", "vanguard.psd.v1"),
    (["transient", "--duration", "10e-6", "--dt", "1e-7"], "t_s,volts", "vanguard.transient.v1"),
    (["noise-budget", "--resistance", "1", "--resistance", "50"], "resistance_ohm,",
     "vanguard.noise-budget.v1"),
    (["throughput", "--link", "10e6:individual"], "sclk_hz,mode,", "vanguard.throughput.v1"),
])
def test_subcommands(tmp_path, argv, header, schema):
    code, data, summary = run(tmp_path, *argv)
    assert code == EXIT_OK
    assert data.splitlines()[0].startswith(header)
    assert summary["schema"] == schema


def test_sim_summary_records_backend_and_seed(tmp_path):
    _, _, summary = run(tmp_path, "sweep", "--codes", "8000", "--window", "3", "--seed", "7")
    assert summary["backend"] == "sim" and summary["seed"] == 7
    assert "stimulus" not in summary


def test_same_seed_is_byte_identical(tmp_path):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("noise_density = 1e-7\n")
    args = ["sweep", "--codes", "8000", "--window", "50", "--config", str(cfg)]
    a = run(tmp_path, *args, "--seed", "3", name="a")[1]
    b = run(tmp_path, *args, "--seed", "3", name="b")[1]
    c = run(tmp_path, *args, "--seed", "4", name="c")[1]
    assert a == b and a != c


def test_throughput_flags_filter(tmp_path):
    _, data, summary = run(tmp_path, "throughput", "--link", "10e6:individual")
    assert summary["bottlenecks"] == ["filter"]
    assert "416666" in data


def test_campaign_errors_exit_2(tmp_path):
    assert run(tmp_path, "staircase", "--code-lo", "8000", "--code-hi", "8000")[0] == EXIT_CAMPAIGN
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    assert run(tmp_path, "sweep", "--config", str(cfg))[0] == EXIT_CAMPAIGN


def test_missing_port_exits_3(tmp_path):
    argv = ["sweep", "--backend", "serial", "--port", "/dev/does-not-exist-vanguard"]
    assert run(tmp_path, *argv)[0] == EXIT_BACKEND
    assert run(tmp_path, "sweep", "--backend", "serial")[0] == EXIT_BACKEND


def test_serial_loopback_emits_stimulus(tmp_path):
    code, data, summary = run(tmp_path, "sweep", "--backend", "serial", "--port", "loop://",
                              "--channels", "0:0", "--codes", "FFFF")
    assert code == EXIT_OK
    assert summary["backend"] == "serial"
    assert "A5 01 00 09 00 00 AD" in summary["stimulus"]


def test_stdout_when_no_out(capsys):
    assert main(["noise-budget"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("resistance_ohm,")
