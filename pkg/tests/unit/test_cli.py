import pytest

from cmdp_alm.cli import EXIT_ERROR, EXIT_NO_QUALIFYING, EXIT_OK, main

DST_CONFIG = """\
env = "deep-sea-treasure"
algorithm = "pqa-alm"
T = [2]
K = [3]
step_size = [1.0]
eps_sel = {eps_sel}
"""


def write_config(tmp_path, eps_sel: float, K: int = 3):
    path = tmp_path / "dst.toml"
    path.write_text(DST_CONFIG.format(eps_sel=eps_sel).replace("K = [3]", f"K = [{K}]"))
    return str(path)


def test_run_selects_and_writes_results(tmp_path, capsys):
    out = tmp_path / "results"
    status = main(["run", "-c", write_config(tmp_path, 10.0), "-o", str(out), "--no-progress"])
    assert status == EXIT_OK
    assert "selected [T=2 K=3" in capsys.readouterr().out
    assert (out / "deep-sea-treasure-pqa-alm" / "summary.csv").exists()
    assert (out / "gap_vs_gradients.svg").exists()


def test_run_without_qualifying_configuration(tmp_path, capsys):
    out = tmp_path / "results"
    config = write_config(tmp_path, 10.0, K=0)
    status = main(["run", "-c", config, "-o", str(out), "--no-progress", "--eps-sel", "1e-9"])
    assert status == EXIT_NO_QUALIFYING
    assert "No qualifying configuration" in capsys.readouterr().err
    # results are still written for inspection
    assert (out / "violation_vs_iteration.svg").exists()


@pytest.mark.parametrize(
    "name, content",
    [
        ("dst.yaml", "env: deep-sea-treasure"),
        ("dst.toml", 'env = "frozen-lake"'),
        ("dst.json", "{not json"),
    ],
)
def test_run_reports_bad_configs(tmp_path, capsys, name, content):
    path = tmp_path / name
    path.write_text(content)
    status = main(["run", "-c", str(path), "-o", str(tmp_path / "out"), "--no-progress"])
    assert status == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_run_reports_missing_config(tmp_path, capsys):
    status = main(["run", "-c", str(tmp_path / "missing.toml"), "--no-progress"])
    assert status == EXIT_ERROR
    assert "missing.toml" in capsys.readouterr().err


def test_oracle_prints_solution_and_saves_lp(tmp_path, capsys):
    lp_path = tmp_path / "dst_lp.txt"
    assert main(["oracle", "--env", "deep-sea-treasure", "--save-lp", str(lp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "environment: deep-sea-treasure" in out
    assert "V*_r(rho):" in out and "lambda*:" in out and "slater margins zeta:" in out
    text = lp_path.read_text()
    assert "VARIABLES 51" in text
    assert "constraint[0]" in text


def test_export_env(tmp_path, capsys):
    assert main(["export-env", "cliff-world", "-o", str(tmp_path)]) == EXIT_OK
    printed = capsys.readouterr().out.split()
    assert len(printed) == 2
    assert printed[0].endswith(".json")


def test_unknown_environment_is_a_usage_error():
    with pytest.raises(SystemExit) as exc_info:
        main(["oracle", "--env", "frozen-lake"])
    assert exc_info.value.code == 2
