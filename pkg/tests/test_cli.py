import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from tradeshock import cli

STAGES = list(cli.STAGES)


def run_all(root, *extra):
    for stage in STAGES:
        code = cli.main([stage, "--config", "smoke", "--root", str(root), *extra])
        assert code == 0, stage


@pytest.fixture(scope="module")
def smoke_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    run_all(root)
    return root


def test_report_has_exactly_the_six_files(smoke_root):
    files = sorted(p.name for p in (smoke_root / "report").iterdir())
    assert files == sorted(cli.REPORT_FILES)
    assert (smoke_root / "report" / "monthly_effects.svg").read_text().startswith("<svg")


def test_manifest_records_hashes_of_every_output(smoke_root):
    manifest = json.loads((smoke_root / "manifest.json").read_text())
    assert set(manifest["stages"]) == set(STAGES)
    for stage, entry in manifest["stages"].items():
        for out in entry["outputs"].values():
            assert cli.sha256(smoke_root / out["path"]) == out["sha256"]
    assert manifest["seed"] == 3
    assert manifest["config_hash"] == cli.config_hash(manifest["config"])


def test_effects_stage_outputs(smoke_root):
    import pandas as pd
    eff = pd.read_csv(smoke_root / "effects" / "effects.csv", dtype={"firm_id": str})
    assert list(eff.columns) == ["firm_id", "month", "y_sum", "y_sam", "alpha", "log_effect"]
    assert sorted(eff["month"].unique()) == [1, 2, 4]
    monthly = pd.read_csv(smoke_root / "effects" / "monthly.csv")
    assert monthly.set_index("month").loc[4, "mean_alpha"] < 0


def test_missing_upstream_stage_exits_2(tmp_path, capsys):
    code = cli.main(["train", "--config", "smoke", "--root", str(tmp_path)])
    assert code == cli.EXIT_MISSING
    assert "featurize" in capsys.readouterr().err


def test_config_errors_exit_3_with_field_path(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[models.hyperparameters.tree]\nmax_depth = -2\n")
    assert cli.main(["generate", "--config", str(bad), "--root", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "models.hyperparameters.tree.max_depth" in capsys.readouterr().err
    bad.write_text("[run]\nfolds = 'five'\n")
    assert cli.main(["generate", "--config", str(bad), "--root", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "run.folds" in capsys.readouterr().err
    bad.write_text("[generator]\nn_firms = 0\n")
    assert cli.main(["generate", "--config", str(bad), "--root", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "generator.n_firms" in capsys.readouterr().err
    assert cli.main(["generate", "--config", "smoke", "--root", str(tmp_path),
                     "--set", "run.unknown=1"]) == cli.EXIT_CONFIG
    assert "run.unknown" in capsys.readouterr().err


def test_invalid_input_data_exits_4(tmp_path, capsys):
    tx = tmp_path / "tx.csv"
    tx.write_text("firm_id,date\nA,2018-01-01\n")
    cov = tmp_path / "cov.csv"
    cov.write_text("destination,date\n")
    cfg = tmp_path / "c.toml"
    cfg.write_text(f'[inputs]\ntransactions = "{tx}"\ncovariates = "{cov}"\n')
    code = cli.main(["featurize", "--config", str(cfg), "--root", str(tmp_path / "root")])
    assert code == cli.EXIT_DATA
    assert "product_code" in capsys.readouterr().err


def test_missing_covariates_exit_4(tmp_path, smoke_root):
    import pandas as pd
    gen = smoke_root / "generate"
    cov = pd.read_csv(gen / "covariates.csv", dtype=str)
    cov = cov.loc[~cov["date"].str.startswith("2020")]
    cov.to_csv(tmp_path / "cov.csv", index=False)
    cfg = tmp_path / "c.toml"
    smoke = (Path(cli.CONFIG_DIR) / "smoke.toml").read_text()
    cfg.write_text(smoke.replace("[models]", f'[inputs]\ntransactions = "{gen / "transactions.csv"}"\n'
                                            f'covariates = "{tmp_path / "cov.csv"}"\n\n[models]'))
    code = cli.main(["featurize", "--config", str(cfg), "--root", str(tmp_path / "root")])
    assert code == cli.EXIT_DATA


def test_overrides_and_seed_flag_take_precedence():
    cfg = cli.load_config("smoke", ["run.folds=4", "tree.min_leaf=7"], seed=99)
    assert cfg["run"]["folds"] == 4 and cfg["tree"]["min_leaf"] == 7
    assert cfg["run"]["seed"] == 99
    assert cli.generator_config(cfg).seed == 99


def test_root_from_environment(tmp_path):
    env = dict(os.environ, TRADESHOCK_ROOT=str(tmp_path / "envroot"))
    out = subprocess.run([sys.executable, "-m", "tradeshock.cli", "generate", "--config", "smoke"],
                         env=env, capture_output=True, text=True, cwd=tmp_path)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "envroot" / "generate" / "transactions.csv").exists()


def test_rerunning_a_stage_invalidates_downstream(tmp_path, smoke_root):
    import shutil
    root = tmp_path / "copy"
    shutil.copytree(smoke_root, root)
    assert cli.main(["train", "--config", "smoke", "--root", str(root)]) == 0
    manifest = json.loads((root / "manifest.json").read_text())
    assert "evaluate" not in manifest["stages"] and "report" not in manifest["stages"]
    assert cli.main(["report", "--config", "smoke", "--root", str(root)]) == cli.EXIT_MISSING
