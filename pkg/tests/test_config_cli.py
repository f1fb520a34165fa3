import json
import math

import numpy as np
import pytest
import yaml

from collapselab import cli
from collapselab.config import ExperimentConfig, load_raw, merged
from collapselab.errors import ConfigError, IOFailure
from collapselab.presets import PRESETS, run_preset
from collapselab.reporting import (
    format_number,
    operator_csv,
    write_csv,
    write_summary,
)


def base_config():
    return {
        "lattice": {"sites": 4, "spacing": 1.0, "mass": 1.0},
        "kernel": {"ell_min": 0.5, "channels": [
            {"operator": {"type": "site_projector", "site": 1},
             "amplitude": 0.1}]},
        "time": {"t0": 0.0, "t1": 2.0, "dt": 0.03125},
        "noise": {"seed": 3,
                  "window": {"t_on": 0.7, "t_off": 1.3, "ramp": 0.2}},
    }


# --- schema ---------------------------------------------------------------

def test_valid_config_builds_objects():
    cfg = ExperimentConfig.from_dict(base_config())
    assert cfg.grid().n_nodes == 65
    assert len(cfg.channels()) == 1
    assert cfg.seed() == 3
    assert cfg.realizations() == 2  # default when no ensemble section
    assert cfg.build_h0().shape == (8, 8)


def test_missing_section_rejected():
    raw = base_config()
    del raw["lattice"]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_unknown_keys_rejected():
    raw = base_config()
    raw["lattcie"] = {}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)
    raw = base_config()
    raw["time"]["step"] = 0.1
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)
    raw = base_config()
    raw["kernel"]["channels"][0]["strength"] = 1.0
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_operator_spec_rejections():
    raw = base_config()
    raw["kernel"]["channels"][0]["operator"] = {"type": "spin_flip"}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)
    raw = base_config()
    raw["kernel"]["channels"][0]["operator"] = {
        "type": "site_projector", "site": 1, "width": 2.0}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)
    raw = base_config()
    raw["kernel"]["channels"][0]["operator"] = {
        "type": "momentum_function", "values": [1.0, 2.0]}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_type_checks():
    raw = base_config()
    raw["lattice"]["sites"] = "four"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)
    raw = base_config()
    raw["run"] = {"tolerances": {"drift": "tight"}}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_cross_field_resolution_check():
    raw = base_config()
    raw["time"]["dt"] = 0.25  # divides t1 - t0 but cannot resolve the kernel
    with pytest.raises(ConfigError, match="resolve"):
        ExperimentConfig.from_dict(raw)


def test_bad_window_rejected_at_load():
    raw = base_config()
    raw["noise"]["window"] = {"t_on": 0.9, "t_off": 1.1, "ramp": 0.5}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_bad_picture_rejected():
    raw = base_config()
    raw["ensemble"] = {"realizations": 4, "picture": "diagonal"}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_covariance_rotates_channels():
    raw = base_config()
    raw["kernel"]["channels"] = [
        {"operator": {"type": "site_projector", "site": 1}, "amplitude": 1.0},
        {"operator": {"type": "site_projector", "site": 2}, "amplitude": 1.0},
    ]
    raw["kernel"]["covariance"] = [[1.0, 1.0], [1.0, 1.0]]  # rank one
    cfg = ExperimentConfig.from_dict(raw)
    assert len(cfg.channels()) == 1


def test_every_preset_default_is_schema_valid():
    for name, preset in PRESETS.items():
        cfg = ExperimentConfig.from_dict(preset.defaults)
        assert cfg.data["run"]["preset"] == name


def test_merge_semantics():
    base = {"a": {"x": 1, "y": 2}, "b": [1, 2], "c": 5}
    out = merged(base, {"a": {"y": 7}, "b": [9], "d": 1})
    assert out == {"a": {"x": 1, "y": 7}, "b": [9], "c": 5, "d": 1}
    assert base["a"]["y"] == 2  # the base mapping is never mutated


def test_echo_drops_output_directory():
    raw = base_config()
    raw["run"] = {"preset": "conservation", "out": "/tmp/somewhere"}
    cfg = ExperimentConfig.from_dict(raw)
    echo = cfg.echo()
    assert "out" not in echo["run"]
    assert cfg.data["run"]["out"] == "/tmp/somewhere"
    echo["lattice"]["sites"] = 99
    assert cfg.data["lattice"]["sites"] == 4


def test_load_raw_failures(tmp_path):
    with pytest.raises(ConfigError):
        load_raw(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [unterminated")
    with pytest.raises(ConfigError):
        load_raw(bad)
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    with pytest.raises(ConfigError):
        load_raw(empty)
    listy = tmp_path / "list.yaml"
    listy.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_raw(listy)


def test_tolerance_lookup():
    raw = base_config()
    raw["run"] = {"tolerances": {"drift": 0.5}}
    cfg = ExperimentConfig.from_dict(raw)
    assert cfg.tolerance("drift", 1e-6) == 0.5
    assert cfg.tolerance("other", 1e-6) == 1e-6


# --- reporting ------------------------------------------------------------

def test_format_number_round_trips():
    for value in (math.pi, 1.0 / 3.0, 1.2345678901234567e-17, -7.25e300):
        assert float(format_number(value)) == value
    assert format_number(7) == "7"
    assert format_number(np.int64(-3)) == "-3"
    assert format_number(True) == "1"
    assert format_number("label") == "label"


def test_write_csv(tmp_path):
    path = write_csv(tmp_path / "x.csv", ["t", "v"],
                     [np.array([0.0, 0.5]), np.array([1.0, 1.0 / 3.0])])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,v"
    assert lines[2].split(",")[1] == "%.17g" % (1.0 / 3.0)
    with pytest.raises(IOFailure):
        write_csv(tmp_path / "y.csv", ["a"], [np.zeros(2), np.zeros(2)])
    with pytest.raises(IOFailure):
        write_csv(tmp_path / "z.csv", ["a", "b"], [np.zeros(2), np.zeros(3)])


def test_operator_csv(tmp_path):
    op = np.array([[1.0, 2.0j], [-2.0j, 3.0]])
    path = operator_csv(tmp_path / "op.csv", [("A", op)])
    lines = path.read_text().splitlines()
    assert lines[0] == "row,col,A_re,A_im"
    assert len(lines) == 5
    with pytest.raises(IOFailure):
        operator_csv(tmp_path / "none.csv", [])
    with pytest.raises(IOFailure):
        operator_csv(tmp_path / "bad.csv", [("A", op), ("B", np.zeros((3, 3)))])


def test_write_summary_round_trip(tmp_path):
    payload = {"z": np.float64(0.5), "arr": np.arange(3), "c": 1 + 2j,
               "flag": np.bool_(True)}
    path = write_summary(tmp_path / "s.json", payload)
    data = json.loads(path.read_text())
    assert data == {"z": 0.5, "arr": [0, 1, 2], "c": {"re": 1.0, "im": 2.0},
                    "flag": True}
    assert path.read_text().index('"arr"') < path.read_text().index('"z"')


# --- command line ---------------------------------------------------------

def test_cli_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for name in ("conservation", "expansion", "a-operator", "no-heating",
                 "csl-contrast", "lindblad-vs-mc", "collapse-scenario"):
        assert name in out


def test_cli_validate(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text(yaml.safe_dump(base_config()))
    assert cli.main(["validate", "--config", str(good)]) == 0
    assert "valid" in capsys.readouterr().out

    partial = tmp_path / "partial.yaml"
    partial.write_text("lattice: {sites: 4, spacing: 1.0, mass: 1.0}\n")
    assert cli.main(["validate", "--config", str(partial)]) == 2

    raw = base_config()
    raw["run"] = {"preset": "no-such-thing"}
    bad_preset = tmp_path / "bad_preset.yaml"
    bad_preset.write_text(yaml.safe_dump(raw))
    assert cli.main(["validate", "--config", str(bad_preset)]) == 2

    assert cli.main(["validate", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_cli_unknown_preset(capsys):
    assert cli.main(["run", "definitely-not-a-preset"]) == 2
    err = capsys.readouterr().err
    assert "conservation" in err  # the message lists the valid names


def test_cli_run_pass_and_outputs(tmp_path, capsys):
    out = tmp_path / "res"
    code = cli.main(["run", "a-operator", "--realizations", "400",
                     "--out", str(out)])
    text = capsys.readouterr().out
    assert code == 0
    assert "PASS" in text and "a-operator passed" in text
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True
    assert "out" not in summary["config"].get("run", {})
    assert (out / "a_operator.csv").exists()


def test_cli_run_check_failure_exits_one(tmp_path):
    override = tmp_path / "impossible.yaml"
    override.write_text("run:\n  tolerances:\n    drift: 1.0e-30\n")
    out = tmp_path / "res"
    code = cli.main(["run", "conservation", "--config", str(override),
                     "--out", str(out)])
    assert code == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is False


def test_cli_run_solver_failure_exits_three(tmp_path, capsys):
    override = tmp_path / "strong.yaml"
    override.write_text(yaml.safe_dump({"kernel": {"channels": [
        {"operator": {"type": "site_projector", "site": 1},
         "amplitude": 1.2}]}}))
    code = cli.main(["run", "conservation", "--config", str(override),
                     "--out", str(tmp_path / "res")])
    assert code == 3
    assert "solver error" in capsys.readouterr().err


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])


def test_energy_csv_schema(tmp_path):
    result = run_preset("csl-contrast", out=tmp_path / "res",
                        realizations=200)
    header = (tmp_path / "res" / "cfs_energy.csv").read_text().splitlines()[0]
    assert header == "t,E_mean,E_stderr,trace_mean"


def test_reruns_are_byte_identical(tmp_path):
    outs = []
    for tag in ("one", "two"):
        out = tmp_path / tag
        code = cli.main(["run", "a-operator", "--realizations", "400",
                         "--out", str(out)])
        assert code == 0
        outs.append(out)
    for name in ("summary.json", "a_operator.csv"):
        a = (outs[0] / name).read_bytes()
        b = (outs[1] / name).read_bytes()
        assert a == b


def test_config_echo_reproduces_run(tmp_path):
    first = run_preset("a-operator", out=tmp_path / "a", realizations=400)
    echo = first.summary["config"]
    second = run_preset("a-operator", config=echo, out=tmp_path / "b")
    assert ((tmp_path / "a" / "summary.json").read_bytes()
            == (tmp_path / "b" / "summary.json").read_bytes())
