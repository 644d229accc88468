from __future__ import annotations

import json

import pytest

import uh_spectrum
from src.errors import ConfigError
from src.run_config import build_config, load_config_file, run


def test_flags_override_file_values() -> None:
    data = {"command": "scan", "model": {"family": "periodic", "params": {"pattern": [1.0, 0.0]}},
            "grid_step": 0.05, "settings": {"depth": 32}, "parallelism": 2}
    config = build_config(data, {"step": 0.1, "depth": 16, "window": 10, "E_range": "-1,1"})
    assert config.grid_step == 0.1
    assert config.settings.depth == 16
    assert config.settings.window == (-10, 10)
    assert config.settings.parallelism == 2
    assert config.energy_range == (-1.0, 1.0)
    assert config.model.params["pattern"] == [1.0, 0.0]
    assert config.out_prefix == "output/scan"


def test_model_flag_replaces_family() -> None:
    config = build_config({"model": {"family": "periodic", "params": {"pattern": [1.0]}}},
                          {"model": "random_iid", "seed": 4})
    assert config.model.family == "random_iid"
    assert config.model.params == {"seed": 4}


@pytest.mark.parametrize("data,field", [
    ({"grid_stepp": 0.1}, "grid_stepp"),
    ({"grid_step": -0.1}, "grid_step"),
    ({"energy_range": [1.0]}, "energy_range"),
    ({"settings": {"depht": 64}}, "settings.depht"),
    ({"model": {"family": "nope"}}, "model.family"),
    ({"command": "plot"}, "command"),
])
def test_validation_names_the_field(data, field) -> None:
    with pytest.raises(ConfigError, match=field):
        build_config(data)


def test_yaml_and_json_configs(tmp_path) -> None:
    (tmp_path / "a.yaml").write_text("command: eig\nsection_size: 32\nmodel:\n  family: constant\n")
    (tmp_path / "b.json").write_text(json.dumps({"command": "eig", "section_size": 32}))
    assert build_config(load_config_file(tmp_path / "a.yaml")).section_size == 32
    assert build_config(load_config_file(tmp_path / "b.json")).command == "eig"
    (tmp_path / "c.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "c.yaml")


def test_eig_run_writes_artifacts(tmp_path) -> None:
    config = build_config({"command": "eig", "section_size": 20, "out": str(tmp_path / "eig")})
    paths = run(config)
    assert sorted(p.rsplit(".", 1)[1] for p in paths) == ["csv", "json"]
    payload = json.loads((tmp_path / "eig.json").read_text())
    assert payload["within_bound"] is True
    assert payload["config"]["model"]["family"] == "constant"
    assert payload["config"]["settings"]["depth"] == 64


def test_certify_artifact_is_reproducible(tmp_path) -> None:
    overrides = {"command": "certify", "E": 3.0, "window": 8, "out": str(tmp_path / "c")}
    run(build_config({}, overrides))
    first = (tmp_path / "c.json").read_bytes()
    run(build_config({}, overrides))
    assert (tmp_path / "c.json").read_bytes() == first
    assert json.loads(first)["certified"] is True


def test_scan_artifacts_are_byte_identical_across_runs(tmp_path) -> None:
    overrides = {"command": "scan", "E_range": "-3,3", "step": 0.25, "depth": 16, "window": 8,
                 "out": str(tmp_path / "s")}
    run(build_config({}, overrides))
    first = [(tmp_path / f"s.{ext}").read_bytes() for ext in ("csv", "json")]
    run(build_config({}, overrides))
    assert [(tmp_path / f"s.{ext}").read_bytes() for ext in ("csv", "json")] == first


def test_cli_exit_codes(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    out = str(tmp_path / "run")
    assert uh_spectrum.main(["certify", "--model", "constant", "--E", "3", "--window", "8", "--out", out]) == 0
    assert (tmp_path / "run.json").exists()
    assert uh_spectrum.main(["scan", "--step", "-1"]) == 1
    assert uh_spectrum.main(["green", "--E", "1", "--window", "8", "--out", out]) == 1
    (tmp_path / "blocker").write_text("")
    assert uh_spectrum.main(["eig", "--out", str(tmp_path / "blocker" / "x")]) == 3
    with pytest.raises(SystemExit) as exc:
        uh_spectrum.main(["scan", "--model", "lattice"])
    assert exc.value.code == 1


def test_cli_green_and_witness(tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    assert uh_spectrum.main(["green", "--E", "3", "--out", str(tmp_path / "g")]) == 0
    header = json.loads((tmp_path / "g.json").read_text())
    assert header["verify_inverse"] <= 1e-8
    assert uh_spectrum.main(["witness", "--E", "0", "--window", "4", "--out", str(tmp_path / "w")]) == 0
    data = json.loads((tmp_path / "w.json").read_text())
    assert data["weyl_witness"]["length"] <= 20


def test_stored_configs_are_listed() -> None:
    names = uh_spectrum.list_available_configs()
    assert {"free", "almost_mathieu"} <= set(names)
    assert uh_spectrum.resolve_config_path("free").name == "free.json"
    with pytest.raises(ConfigError):
        uh_spectrum.resolve_config_path("missing-config")
