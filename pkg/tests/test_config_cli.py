import json

import numpy as np
import pytest
import yaml

from nfrefractor.cli import EXIT_CONFIG, main
from nfrefractor.config import load_config, parse_config
from nfrefractor.errors import ConfigError

SINGLE = {
    "command": "solve",
    "media": {"n1": 1.0, "n2": 1.5},
    "receiver": {"kind": "plane", "height": 3.0},
    "source": {"center": [0.0, 0.0], "radius": 0.2},
    "targets": [{"Z": [0.1, -0.1, 3.0], "mass": 1.0}],
    "grid": {"cells_per_side": 16},
}


def with_(base, **changes):
    out = json.loads(json.dumps(base))
    for key, value in changes.items():
        if value is None:
            out.pop(key, None)
        else:
            out[key] = value
    return out


def field_of(data):
    with pytest.raises(ConfigError) as info:
        parse_config(data)
    return info.value.field, str(info.value)


def test_minimal_solve_parses():
    cfg = parse_config(SINGLE)
    assert cfg.kappa == pytest.approx(2 / 3)
    assert cfg.command == "solve"
    assert cfg.seed == 0
    assert cfg.to_dict()["grid"]["cells_per_side"] == 16


def test_media_forms_are_equivalent():
    a = parse_config(with_(SINGLE, media={"kappa": 2 / 3}))
    b = parse_config(SINGLE)
    assert a.kappa == b.kappa


@pytest.mark.parametrize("data,field", [
    (with_(SINGLE, grid={"cell_per_side": 16}), "grid.cell_per_side"),
    (with_(SINGLE, colour="red"), "colour"),
    (with_(SINGLE, command="optimise"), "command"),
    (with_(SINGLE, seed=1.5), "seed"),
    (with_(SINGLE, media={"kappa": 0.7, "n1": 1.0, "n2": 1.4}), "media"),
    (with_(SINGLE, media={"n1": 1.0}), "media.n2"),
    (with_(SINGLE, grid={"cells_per_side": 4}), "grid.cells_per_side"),
    (with_(SINGLE, receiver={"kind": "torus"}), "receiver.kind"),
    (with_(SINGLE, targets=[{"Z": [0.1, 0.0, 2.0], "mass": 1.0}]), "targets[0].Z"),
    (with_(SINGLE, targets=[{"Z": [0.1, 0.0, 3.0]}]), "targets[0]"),
    (with_(SINGLE, source={"center": [0.0, 0.0], "radius": 1.2}), "source"),
])
def test_validation_names_the_field(data, field):
    assert field_of(data)[0] == field


@pytest.mark.parametrize("data,words", [
    (with_(SINGLE, media={"kappa": 1.3}), "kappa regime"),
    (with_(SINGLE, media={"kappa": 1.0}), "kappa regime"),
    (with_(SINGLE, tau=0.5), "visibility"),
    (with_(SINGLE, receiver={"kind": "plane", "height": -1.0}), "H4"),
])
def test_validation_names_the_hypothesis(data, words):
    assert words in field_of(data)[1]


def test_mtw_total_internal_reflection_bound():
    data = {"command": "mtw_certify", "media": {"kappa": 1.5},
            "receiver": {"kind": "plane", "height": 3.0}, "mtw": {"v_range": [0.5, 1.0], "p_max": 1.0}}
    field, msg = field_of(data)
    assert field == "mtw.p_max" and "kappa regime" in msg


def test_aliases():
    data = {"command": "mtw-certify", "media": {"kappa": 0.7}, "receiver": {"kind": "plane", "height": 3.0}}
    assert parse_config(data).command == "mtw_certify"


def test_yaml_round_trip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(SINGLE))
    assert load_config(path).to_dict() == parse_config(SINGLE).to_dict()


def test_overrides():
    assert parse_config(SINGLE, {"seed": 9, "output_dir": "elsewhere"}).seed == 9


def run_cli(tmp_path, data, command="solve", extra=()):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(data))
    out = tmp_path / "out"
    return main([command, "--config", str(path), "--out", str(out), *extra]), out


def test_cli_single_target_solve(tmp_path, capsys):
    code, out = run_cli(tmp_path, SINGLE)
    assert code == 0
    summary = (out / "summary.txt").read_text()
    assert summary.rstrip().endswith("RESULT: PASS")
    for name in ("envelope.csv", "rho_grid.csv", "energy_history.csv", "globality.csv", "config_echo.json"):
        assert (out / name).exists(), name
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["command"] == "solve"


def test_cli_config_error_exit_code(tmp_path, capsys):
    code, _ = run_cli(tmp_path, with_(SINGLE, grid={"cells_per_side": 4}))
    assert code == EXIT_CONFIG == 2
    assert "grid.cells_per_side" in capsys.readouterr().err


def test_cli_command_mismatch(tmp_path, capsys):
    code, _ = run_cli(tmp_path, SINGLE, command="trace")
    assert code == EXIT_CONFIG


def test_cli_fills_in_missing_command(tmp_path):
    code, _ = run_cli(tmp_path, with_(SINGLE, command=None))
    assert code == 0


def test_cli_missing_file(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_bad_threads(tmp_path):
    code, _ = run_cli(tmp_path, SINGLE, extra=("--threads", "0"))
    assert code == EXIT_CONFIG


def test_cli_seed_flag_is_recorded(tmp_path):
    code, out = run_cli(tmp_path, SINGLE, extra=("--seed", "11"))
    assert code == 0
    assert json.loads((out / "config_echo.json").read_text())["seed"] == 11


def test_cli_trace(tmp_path):
    data = {"command": "trace", "media": {"kappa": 0.7},
            "receiver": {"kind": "concave_quadratic", "height": 3.0, "K": 0.05},
            "trace": {"rho": {"kind": "taylor_quadratic", "c": 1.2, "g": [0.1, -0.05],
                              "S": [[0.3, 0.05], [0.05, 0.2]]},
                      "points": [[0.0, 0.0], [0.1, 0.0]]}}
    code, out = run_cli(tmp_path, data, command="trace")
    assert code == 0
    rows = (out / "trace.csv").read_text().strip().splitlines()
    assert len(rows) == 3


def test_cli_small_mtw(tmp_path):
    data = {"command": "mtw_certify", "media": {"kappa": 0.7}, "receiver": {"kind": "plane", "height": 3.0},
            "mtw": {"n_samples": 50, "expect": "negative_definite"}}
    code, out = run_cli(tmp_path, data, command="mtw-certify")
    assert code == 0
    assert len((out / "mtw_samples.csv").read_text().strip().splitlines()) == 51


def test_cli_wrong_expectation_fails(tmp_path):
    data = {"command": "mtw_certify", "media": {"kappa": 0.7}, "receiver": {"kind": "plane", "height": 3.0},
            "mtw": {"n_samples": 20, "expect": "positive_definite_regime"}}
    code, out = run_cli(tmp_path, data, command="mtw_certify")
    assert code == 1
    assert (out / "summary.txt").read_text().rstrip().endswith("RESULT: FAIL")
