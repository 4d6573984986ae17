import json
import math

import pytest

from pesinlab.cli import main
from pesinlab.errors import ExperimentFailed, SchemaError
from pesinlab.runner import run_scenario
from pesinlab.scenario import OUTPUT_ENV, SCHEMAS, load_scenario, parse_scenario, serialize_scenario

Z2 = """
experiment = "lyapunov"
seed = 1

[map]
family = "blaschke"
zeros = ["0", "0"]
"""

MAP_TABLES = {
    "lyapunov": '[map]\nfamily = "blaschke"\nzeros = ["0", "0.5"]\n',
    "backward": '[map]\nfamily = "polynomial"\ncoefficients = ["0", "0", "1"]\n',
    "tower": '[map]\nfamily = "polynomial"\ncoefficients = ["-0.1", "0", "1"]\n',
    "periodic": '[map]\nfamily = "polynomial"\ncoefficients = ["-0.1", "0", "1"]\n',
    "return_map": '[map]\nfamily = "blaschke"\nzeros = ["0", "0"]\n',
    "inner": '[map]\nfamily = "blaschke"\nzeros = ["0", "0"]\n',
    "hmeasure": "",
    "rho_check": "",
}


def _same(a, b):
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a):
        return math.isnan(b)
    return a == b


def test_minimal_lyapunov_fills_defaults():
    s = parse_scenario(Z2)
    assert s.experiment == "lyapunov" and s.seed == 1
    assert set(s.params) == set(SCHEMAS["lyapunov"])
    assert s.params["n_quad"] == 1024
    assert s.params["x0"] is None
    assert s.map.degree == 2


@pytest.mark.parametrize("text, path", [
    ('experiment = "lyapunov"\n[map]\nfamily = "blaschke"\nzeros = ["0"]\n', "seed"),
    ('experiment = "lyapunov"\nseed = 3\n', "map"),
    ('experiment = "teleport"\nseed = 3\n', "experiment"),
    (Z2 + "\n[params]\nspeed = 2\n", "params.speed"),
    (Z2 + "\n[params]\nn = 1.5\n", "params.n"),
    (Z2 + '\n[params]\nmethods = ["guess"]\n', "params.methods"),
    ('colour = "red"\n' + Z2, "colour"),
])
def test_schema_errors_carry_path(text, path):
    with pytest.raises(SchemaError) as info:
        parse_scenario(text)
    assert info.value.path == path


def test_seed_range_and_malformed_text():
    with pytest.raises(SchemaError):
        parse_scenario(Z2.replace("seed = 1", f"seed = {2 ** 64}"))
    with pytest.raises(SchemaError):
        parse_scenario(Z2.replace("seed = 1", "seed = -1"))
    with pytest.raises(SchemaError):
        parse_scenario("experiment = ")


@pytest.mark.parametrize("experiment", sorted(SCHEMAS))
def test_serialize_parse_round_trip(experiment):
    text = f'experiment = "{experiment}"\nseed = 7\nname = "rt"\n' + MAP_TABLES[experiment]
    s = parse_scenario(text)
    again = parse_scenario(serialize_scenario(s))
    assert again.digest() == s.digest()
    assert again.experiment == s.experiment and again.seed == s.seed
    for key, value in s.params.items():
        assert _same(again.params[key], value), key


def test_round_trip_of_nondefault_values():
    text = Z2 + '\n[params]\nx0 = "0.25+1j"\nexpected = "nan"\nmethods = ["quadrature"]\nn = 10\n'
    s = parse_scenario(text)
    again = parse_scenario(serialize_scenario(s))
    assert again.params["x0"] == 0.25 + 1j
    assert math.isnan(again.params["expected"])
    assert again.params["methods"] == ["quadrature"] and again.params["n"] == 10
    assert again.digest() == s.digest()


def test_digest_replay_and_sensitivity():
    assert parse_scenario(Z2).digest() == parse_scenario(Z2).digest()
    # layout changes do not matter, values do
    assert parse_scenario("\n\n" + Z2).digest() == parse_scenario(Z2).digest()
    assert parse_scenario(Z2.replace("seed = 1", "seed = 2")).digest() != parse_scenario(Z2).digest()


def test_run_z2_lyapunov(tmp_path):
    s = parse_scenario(Z2 + "\n[params]\nn = 2000\n")
    rep = run_scenario(s, tmp_path)
    assert rep.passed
    data = json.loads((tmp_path / "results.json").read_text())
    for est in data["results"]["estimates"].values():
        assert abs(est["chi"] - math.log(2)) < 1e-12
    assert data["scenario_digest"] == s.digest()
    lines = (tmp_path / "samples.csv").read_text().splitlines()
    assert lines[0] == "method,chi,std_error,n"
    assert len(lines) == 3


def test_csv_bytes_identical_on_replay(tmp_path):
    text = 'experiment = "backward"\nseed = 5\n' + MAP_TABLES["backward"] + '[params]\ndepth = 300\nx0 = "1"\n'
    a = run_scenario(parse_scenario(text), tmp_path / "a")
    b = run_scenario(parse_scenario(text), tmp_path / "b")
    assert a.scenario_digest == b.scenario_digest
    assert (tmp_path / "a" / "samples.csv").read_bytes() == (tmp_path / "b" / "samples.csv").read_bytes()
    other = run_scenario(parse_scenario(text.replace("seed = 5", "seed = 6")), tmp_path / "c")
    assert other.scenario_digest != a.scenario_digest
    assert (tmp_path / "c" / "samples.csv").read_bytes() != (tmp_path / "a" / "samples.csv").read_bytes()


def test_module_errors_wrapped_with_context(tmp_path):
    # forward orbit of z^2 + 0.5 from 1 escapes
    text = ('experiment = "lyapunov"\nseed = 1\nname = "esc"\n[map]\nfamily = "polynomial"\n'
            'coefficients = ["0.5", "0", "1"]\n[params]\nmethods = ["forward"]\nx0 = "1"\nn = 100\n')
    with pytest.raises(ExperimentFailed) as info:
        run_scenario(parse_scenario(text), tmp_path)
    assert "esc" in str(info.value)


def test_output_dir_env_override(tmp_path, monkeypatch):
    s = parse_scenario('output_dir = "nowhere"\n' + Z2)
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert s.resolved_output_dir() == tmp_path / "env"
    monkeypatch.delenv(OUTPUT_ENV)
    assert str(s.resolved_output_dir()) == "nowhere"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, "good.toml", Z2 + "\n[params]\nn = 500\n")
    failing = _write(tmp_path, "fail.toml", Z2 + "\n[params]\nn = 500\nexpected = 1.0\ntolerance = 1e-3\n")
    broken = _write(tmp_path, "broken.toml", 'experiment = "lyapunov"\nseed = 1\n')
    assert main(["validate", good]) == 0
    assert "digest" in capsys.readouterr().out
    assert main(["run", good, "--output-dir", str(tmp_path / "o1")]) == 0
    assert (tmp_path / "o1" / "samples.csv").exists()
    assert main(["run", failing, "--output-dir", str(tmp_path / "o2")]) == 2
    assert "FAIL" in capsys.readouterr().out
    assert main(["validate", broken]) == 1
    assert main(["run", broken]) == 1
    assert main(["run", str(tmp_path / "missing.toml")]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in SCHEMAS:
        assert f"{name}: params" in out


def test_acceptance_scenarios_validate():
    from pathlib import Path
    files = sorted((Path(__file__).parent.parent / "scenarios" / "acceptance").glob("*.toml"))
    assert len(files) >= 15
    for f in files:
        s = load_scenario(f)
        assert s.seed >= 0
        assert parse_scenario(serialize_scenario(s)).digest() == s.digest()
