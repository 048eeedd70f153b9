"""CLI subcommands: exit codes, reproducible outputs, comparison guards."""

import json

import pytest

from superbranch import cubic_recipe, gradient_quadratic_recipe
from superbranch.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, main


@pytest.fixture
def super_config(tmp_path):
    cfg = {
        "mode": "super",
        "boundary": {"family": "cosine", "a": 0.1, "omega": 0.5, "offset": 0.1},
        "horizon": 0.2,
        "recipe": gradient_quadratic_recipe().to_json(),
        "rescaling": "type1",
        "betas": [0.4, 0.2],
        "points": [0.0, 1.0],
        "replicas": 1500,
        "seed": 11,
        "oracle": {"period": 25.132741228718345, "points": 128},
    }
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


@pytest.fixture
def mckean_config(tmp_path):
    cfg = {
        "mode": "mckean",
        "boundary": {"family": "constant", "c": 0.5},
        "horizon": 1.0,
        "replicas": 2000,
        "seed": 4,
    }
    path = tmp_path / "mckean.json"
    path.write_text(json.dumps(cfg))
    return path


# -- symbolic subcommands ---------------------------------------------


def test_psi_prints_exact_nonlinearity(capsys):
    assert main(["psi", "--builtin", "cubic", "--rescaling", "type2-paper"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "-u^3"


def test_psi_gradient_quadratic(capsys):
    assert main(["psi", "--builtin", "gradient-quadratic"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "2*u^2 + ux^2"


def test_compile_reports_paper_values(capsys, tmp_path):
    out = tmp_path / "recipe.json"
    code = main(
        [
            "compile",
            "--target=-u^3",
            "--ansatz",
            "power2,reciprocal",
            "--rescaling",
            "type2-paper",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert [e["probability"] for e in doc["entries"]] == ["1/10", "9/10"]
    assert doc["intensity_coeff"] == "5/2"
    assert doc["intensity_exponent"] == 2


def test_compile_infeasible_exits_2(capsys):
    code = main(
        ["compile", "--target", "u^2", "--ansatz", "reciprocal", "--rescaling", "type1"]
    )
    assert code == EXIT_CONFIG


def test_expand_lists_orders(capsys):
    assert main(["expand", "--branching", "power2", "--order", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "beta^1: -2*u" in out
    assert "beta^2: u^2" in out


def test_exist_check_reports(capsys, super_config):
    path, _ = super_config
    assert main(["exist-check", "--config", str(path)]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["status"] == "admissible"
    assert "config_hash" in doc


# -- run subcommands --------------------------------------------------


def test_run_mckean_unit_boundary(tmp_path, capsys):
    cfg = {
        "mode": "mckean",
        "boundary": {"family": "constant", "c": 1.0},
        "horizon": 0.5,
        "replicas": 200,
        "seed": 1,
    }
    path = tmp_path / "unit.json"
    path.write_text(json.dumps(cfg))
    assert main(["run-mckean", "--config", str(path)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "x,t,mode,beta,N,v_hat,u_hat,stderr_u,mean_pop,max_deriv_order,seed"
    fields = lines[2].split(",")
    assert float(fields[6]) == 1.0  # u_hat
    assert float(fields[7]) == 0.0  # stderr_u


def test_run_super_rerun_byte_identical(super_config, tmp_path):
    path, _ = super_config
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run-super", "--config", str(path), "--out", str(out1)]) == EXIT_OK
    assert main(["run-super", "--config", str(path), "--out", str(out2)]) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()


def test_run_super_workers_byte_identical(super_config, tmp_path):
    path, _ = super_config
    out1, out2 = tmp_path / "w1.csv", tmp_path / "w4.csv"
    assert main(
        ["run-super", "--config", str(path), "--workers", "1", "--out", str(out1)]
    ) == EXIT_OK
    assert main(
        ["run-super", "--config", str(path), "--workers", "4", "--out", str(out2)]
    ) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()


def test_mode_mismatch_exits_2(super_config):
    path, _ = super_config
    assert main(["run-mckean", "--config", str(path)]) == EXIT_CONFIG


def test_missing_config_exits_2():
    assert main(["run-mckean", "--config", "/nonexistent/cfg.json"]) == EXIT_CONFIG
    assert main(["run-mckean"]) == EXIT_CONFIG


def test_population_cap_divergence_exits_3(tmp_path):
    cfg = {
        "mode": "mckean",
        "boundary": {"family": "constant", "c": 0.5},
        "horizon": 10.0,
        "replicas": 300,
        "seed": 2,
        "population_cap": 16,
    }
    path = tmp_path / "hot.json"
    path.write_text(json.dumps(cfg))
    assert main(["run-mckean", "--config", str(path), "--out",
                 str(tmp_path / "x.csv")]) == EXIT_DIVERGENCE


def test_oracle_blow_up_exits_3(tmp_path):
    cfg = {
        "mode": "super",
        "boundary": {"family": "constant", "c": 0.3},
        "horizon": 8.0,
        "recipe": cubic_recipe().to_json(),
        "rescaling": "type2-paper",
        "betas": [0.4],
        "replicas": 10,
        "seed": 1,
        "oracle": {"period": 10.0, "points": 32},
    }
    path = tmp_path / "blow.json"
    path.write_text(json.dumps(cfg))
    assert main(["oracle", "--config", str(path), "--out",
                 str(tmp_path / "o.csv")]) == EXIT_DIVERGENCE


# -- compare and sweep ------------------------------------------------


def _produce_pair(path, tmp_path):
    mc, orc = tmp_path / "mc.csv", tmp_path / "oracle.csv"
    assert main(["run-super", "--config", str(path), "--out", str(mc)]) == EXIT_OK
    assert main(["oracle", "--config", str(path), "--out", str(orc)]) == EXIT_OK
    return mc, orc


def test_compare_passes_at_tolerance(super_config, tmp_path, capsys):
    path, _ = super_config
    mc, orc = _produce_pair(path, tmp_path)
    code = main(["compare", "--mc", str(mc), "--oracle", str(orc), "--assert",
                 "--z-max", "3.5", "--abs-tol", "0.01"])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["all_pass"] is True
    assert len(doc["rows"]) == 4  # 2 betas x 2 points


def test_compare_assert_fails_at_impossible_tolerance(super_config, tmp_path, capsys):
    path, _ = super_config
    mc, orc = _produce_pair(path, tmp_path)
    code = main(["compare", "--mc", str(mc), "--oracle", str(orc), "--assert",
                 "--z-max", "1e-6", "--abs-tol", "0"])
    assert code == EXIT_ASSERT


def test_compare_refuses_mismatched_hashes(super_config, tmp_path):
    path, cfg = super_config
    mc, _ = _produce_pair(path, tmp_path)
    cfg2 = dict(cfg, seed=99)
    path2 = tmp_path / "other.json"
    path2.write_text(json.dumps(cfg2))
    orc2 = tmp_path / "oracle2.csv"
    assert main(["oracle", "--config", str(path2), "--out", str(orc2)]) == EXIT_OK
    code = main(["compare", "--mc", str(mc), "--oracle", str(orc2)])
    assert code == EXIT_CONFIG


def test_sweep_summary(super_config, tmp_path):
    path, _ = super_config
    out_json = tmp_path / "sweep.json"
    cfg = json.loads(path.read_text())
    cfg["output"] = {"json": str(out_json)}
    path.write_text(json.dumps(cfg))
    assert main(["sweep", "--config", str(path), "--out",
                 str(tmp_path / "sweep.csv")]) == EXIT_OK
    doc = json.loads(out_json.read_text())
    assert {row["x"] for row in doc["summary"]} == {0.0, 1.0}
    for row in doc["summary"]:
        assert len(row["ladder"]) == 2
        assert row["pass"] in (True, False)


def test_sweep_single_beta_exits_2(super_config, tmp_path):
    path, _ = super_config
    cfg = json.loads(path.read_text())
    cfg["betas"] = [0.4]
    path.write_text(json.dumps(cfg))
    assert main(["sweep", "--config", str(path)]) == EXIT_CONFIG


def test_sweep_mckean_exits_2(mckean_config):
    assert main(["sweep", "--config", str(mckean_config)]) == EXIT_CONFIG
