import json

import pytest

from popfare.cli import main


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "bundle"
    assert main(["generate", "--stations", "16", "--lines", "2", "--seed", "5", "--out", str(out)]) == 0
    return out


def test_validate(bundle, capsys):
    assert main(["validate", "--bundle", str(bundle)]) == 0
    assert capsys.readouterr().out.startswith("OK 16 stations")


def test_validate_reports_bad_network(tmp_path, capsys):
    (tmp_path / "stations.csv").write_text("station_id\na\nb\nc\n")
    (tmp_path / "edges.csv").write_text("station_a,station_b\na,b\n")
    (tmp_path / "demand.csv").write_text("origin,destination,period,passengers\na,b,AM-peak,1\n")
    assert main(["validate", "--bundle", str(tmp_path)]) == 4
    assert "disconnected" in capsys.readouterr().out


def test_parse_error_exit_code(tmp_path, capsys):
    (tmp_path / "stations.csv").write_text("station_id\na\n")
    (tmp_path / "edges.csv").write_text("station_a,station_b\na,zz\n")
    assert main(["validate", "--bundle", str(tmp_path)]) == 3
    assert "edges.csv:2" in capsys.readouterr().err


def test_calibrate(bundle, capsys, tmp_path):
    assert main(["calibrate", "--revenue", "845138"]) == 0
    assert "$210.60" in capsys.readouterr().out
    assert main(["calibrate", "--staffing"]) == 0
    assert "4013" in capsys.readouterr().out
    out = tmp_path / "alpha.json"
    assert main(["calibrate", "--bundle", str(bundle), "--periods", "Midday", "--out", str(out)]) == 0
    assert set(json.loads(out.read_text())) == {"Midday"}


def test_prices_then_check_ic(bundle, tmp_path, capsys):
    table = tmp_path / "capped.csv"
    assert main(["prices", "--bundle", str(bundle), "--kind", "capped-ic", "--out", str(table)]) == 0
    capsys.readouterr()
    assert main(["check-ic", "--bundle", str(bundle), "--prices", str(table), "--peak-flag", "peak"]) == 0
    assert capsys.readouterr().out.startswith("0 violation(s)")
    legacy = bundle / "prices.csv"
    report = tmp_path / "viol.csv"
    assert main(["check-ic", "--bundle", str(bundle), "--prices", str(legacy), "--peak-flag", "peak",
                 "--out", str(report)]) == 0
    assert int(capsys.readouterr().out.split()[0]) > 0
    assert report.read_text().startswith("origin,destination,full_price")


def test_equilibrium(bundle, capsys):
    assert main(["equilibrium", "--bundle", str(bundle), "--period", "Evening"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["converged"] and out["equilibrium_violations"] == 0


def test_line_model(capsys):
    assert main(["line-model", "--trips", "10", "--perturbations", "3", "--technology", "power:0.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["pass_density_at_half"] == pytest.approx(0.5)
    assert out["indifference_max_gap"] < 1e-9 and out["perturbations_nonpositive"]


def test_simulate_writes_tables(bundle, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--bundle", str(bundle), "--periods", "Midday", "--monitorings", "uniform",
                 "--pricing", "legacy,ic,capped-ic", "--out", str(out)]) == 0
    text = (out / "tables.txt").read_text()
    assert "Uncapped IC prices" in text and "IC prices capped by legacy prices" in text
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["scenarios"]) == 3 and manifest["input_checksums"]


def test_missing_arguments(capsys):
    assert main(["simulate", "--out", "x"]) == 2
    assert main(["prices"]) == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])
