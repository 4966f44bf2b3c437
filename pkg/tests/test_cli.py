import csv
import hashlib
import json
import os

import numpy as np
import pytest

from conftest import DESK_OVERRIDES
from unirep.cli import EXIT_CONFIG, EXIT_OK, main, sweep_cells
from unirep.errors import ConfigError


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny dataset + run shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "config.json"
    overrides = dict(DESK_OVERRIDES)
    overrides.update({
        "gen.samples_per_class": 16,
        "train.epochs": 1,
        "probe.epochs": 10,
    })
    cfg_path.write_text(json.dumps(overrides))
    data_dir = root / "data"
    run_dir = root / "run"
    assert main(["generate", "--config", str(cfg_path), "--out", str(data_dir)]) == EXIT_OK
    assert main(["pretrain", "--config", str(cfg_path), "--data", str(data_dir),
                 "--out", str(run_dir)]) == EXIT_OK
    return root, cfg_path, data_dir, run_dir


class TestGenerate:
    def test_outputs_and_manifest(self, workspace, capsys):
        root, cfg_path, data_dir, _ = workspace
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert set(manifest["splits"]) == {"pretrain", "probe_train", "probe_val",
                                           "test_known", "test_unknown"}
        assert (data_dir / "x_a.bin").exists() and (data_dir / "x_b.json").exists()

    def test_same_seed_identical_manifest_hash(self, workspace, tmp_path):
        _, cfg_path, data_dir, _ = workspace
        again = tmp_path / "data2"
        assert main(["generate", "--config", str(cfg_path), "--out", str(again)]) == EXIT_OK

        def digest(p):
            return hashlib.sha256((p / "manifest.json").read_bytes()).hexdigest()

        assert digest(data_dir) == digest(again)

    def test_invalid_known_count_exits_2_naming_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"gen.n_known": 8, "gen.n_classes": 8}))
        code = main(["generate", "--config", str(bad), "--out", str(tmp_path / "d")])
        assert code == EXIT_CONFIG
        assert "gen.n_known" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"gen.n_knwon": 3}))
        assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "d")]) == EXIT_CONFIG
        assert "gen.n_knwon" in capsys.readouterr().err


class TestPretrain:
    def test_run_directory_contents(self, workspace):
        _, _, _, run_dir = workspace
        assert (run_dir / "config.json").exists()
        assert (run_dir / "checkpoints" / "manifest.json").exists()
        assert (run_dir / "figures" / "training_curves.png").exists()
        records = [json.loads(line) for line in (run_dir / "log.jsonl").read_text().splitlines()]
        assert all(np.isfinite(list(r.values())).all() for r in records)

    def test_effective_config_fully_materialized(self, workspace):
        _, _, _, run_dir = workspace
        from unirep.config import DEFAULTS

        cfg = json.loads((run_dir / "config.json").read_text())
        assert set(cfg) == set(DEFAULTS)

    def test_rerun_same_seed_identical_final_loss(self, workspace, tmp_path):
        _, cfg_path, data_dir, run_dir = workspace
        rerun = tmp_path / "run2"
        assert main(["pretrain", "--config", str(cfg_path), "--data", str(data_dir),
                     "--out", str(rerun)]) == EXIT_OK
        last = (run_dir / "log.jsonl").read_text().splitlines()[-1]
        last2 = (rerun / "log.jsonl").read_text().splitlines()[-1]
        assert last == last2

    def test_zero_jigsaw_weight_logs_zero(self, workspace, tmp_path):
        _, cfg_path, data_dir, _ = workspace
        cfg = json.loads(cfg_path.read_text())
        cfg["train.lambda_jigsaw"] = 0.0
        alt_cfg = tmp_path / "nojig.json"
        alt_cfg.write_text(json.dumps(cfg))
        out = tmp_path / "runzero"
        assert main(["pretrain", "--config", str(alt_cfg), "--data", str(data_dir),
                     "--out", str(out)]) == EXIT_OK
        for line in (out / "log.jsonl").read_text().splitlines():
            assert json.loads(line)["l_cujp"] == 0.0

    def test_missing_dataset_exits_2(self, workspace, tmp_path):
        _, cfg_path, _, _ = workspace
        assert main(["pretrain", "--config", str(cfg_path), "--data",
                     str(tmp_path / "absent"), "--out", str(tmp_path / "r")]) == EXIT_CONFIG


class TestEval:
    def test_report_files_and_schema(self, workspace):
        _, _, _, run_dir = workspace
        assert main(["eval", "--run", str(run_dir), "--direction", "a2b"]) == EXIT_OK
        out = run_dir / "eval_a2b_default"
        report = json.loads((out / "report.json").read_text())
        for key in ("os_star", "unk", "hos", "recall", "theta", "perplexity",
                    "coactivation_summary", "per_class"):
            assert key in report
        assert set(report["recall"]["a_to_b"]) == {"1", "5", "10"}
        assert (out / "figures" / "threshold_sweep.png").exists()
        assert (out / "figures" / "per_class.png").exists()
        with open(out / "report.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 2 and rows[0][0] == "direction"

    def test_hos_recomputable_from_report(self, workspace):
        _, _, _, run_dir = workspace
        report = json.loads((run_dir / "eval_a2b_default" / "report.json").read_text())
        os_star, unk = report["os_star"], report["unk"]
        expected = 0.0 if os_star + unk == 0 else 2 * os_star * unk / (os_star + unk)
        assert abs(report["hos"] - expected) < 1e-6

    def test_direction_flag_flips_encoder(self, workspace):
        _, _, _, run_dir = workspace
        assert main(["eval", "--run", str(run_dir), "--direction", "b2a"]) == EXIT_OK
        report = json.loads((run_dir / "eval_b2a_default" / "report.json").read_text())
        assert report["target_encoder"] == "encoder_a"

    def test_split_preset(self, workspace):
        _, _, _, run_dir = workspace
        assert main(["eval", "--run", str(run_dir), "--direction", "a2b",
                     "--split", "1:1"]) == EXIT_OK
        report = json.loads((run_dir / "eval_a2b_1-1" / "report.json").read_text())
        assert report["n_known_classes"] == 3  # 6 classes at 1:1

    def test_missing_run_exits_2(self, tmp_path):
        assert main(["eval", "--run", str(tmp_path / "norun"), "--direction", "a2b"]) == EXIT_CONFIG


class TestStats:
    def test_coactivation_csv_and_figure(self, workspace):
        _, _, _, run_dir = workspace
        assert main(["stats", "--run", str(run_dir)]) == EXIT_OK
        out = run_dir / "stats"
        with open(out / "coactivation.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["codeword_id", "share_a", "share_b", "class"]
        assert len(rows) == 1 + 32  # header + codebook size
        classes = {row[3] for row in rows[1:]}
        assert classes <= {"dead", "single", "shared", "unified"}
        summary = json.loads((out / "summary.json").read_text())
        assert summary["perplexity"] > 0
        assert (out / "figures" / "codebook_usage.png").exists()


class TestAblate:
    def test_sweep_runs_and_aggregates(self, workspace, tmp_path):
        root, cfg_path, _, _ = workspace
        sweep = tmp_path / "sweep.json"
        sweep.write_text(json.dumps({"jigsaw": ["off", "cujp"], "seeds": [11, 12]}))
        out = tmp_path / "ablation"
        assert main(["ablate", "--config", str(cfg_path), "--sweep", str(sweep),
                     "--out", str(out)]) == EXIT_OK
        with open(out / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert {r["cell"] for r in rows} == {"jig_off", "jig_cujp"}
        assert all(r["status"] == "ok" for r in rows)
        assert (out / "figures" / "ablation_hos.png").exists()

    def test_rerun_is_idempotent(self, workspace, tmp_path):
        _, cfg_path, _, _ = workspace
        sweep = tmp_path / "sweep.json"
        sweep.write_text(json.dumps({"jigsaw": ["off"], "seeds": [11]}))
        out = tmp_path / "abl2"
        assert main(["ablate", "--config", str(cfg_path), "--sweep", str(sweep),
                     "--out", str(out)]) == EXIT_OK
        first = (out / "ablation.csv").read_text()
        cell = out / "cells" / "jig_off__11.json"
        stamp = cell.stat().st_mtime_ns
        assert main(["ablate", "--config", str(cfg_path), "--sweep", str(sweep),
                     "--out", str(out)]) == EXIT_OK
        assert (out / "ablation.csv").read_text() == first
        assert cell.stat().st_mtime_ns == stamp  # cell not recomputed

    def test_infeasible_mixed_cell_marked_skipped(self, workspace, tmp_path):
        _, cfg_path, _, _ = workspace
        cfg = json.loads(cfg_path.read_text())
        cfg.update({"cujp.mmjp_splits": 4, "cujp.mmjp_cap": 24})
        alt = tmp_path / "cfg.json"
        alt.write_text(json.dumps(cfg))
        sweep = tmp_path / "sweep.json"
        sweep.write_text(json.dumps({"jigsaw": ["mmjp"], "seeds": [11]}))
        out = tmp_path / "abl3"
        assert main(["ablate", "--config", str(alt), "--sweep", str(sweep),
                     "--out", str(out)]) == EXIT_OK
        with open(out / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["status"] == "skipped"
        assert "40320" in rows[0]["reason"]

    def test_loss_toggle_preset_has_seven_cells(self):
        cells = sweep_cells({"losses": True})
        assert len(cells) == 7
        assert "fine+coarse+cujp" in cells
        assert cells["coarse"] == {"fcmi.fine": False, "fcmi.coarse": True, "cujp.mode": "off"}

    def test_empty_sweep_rejected(self):
        with pytest.raises(ConfigError):
            sweep_cells({})


def test_seed_override_changes_dataset(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(dict(DESK_OVERRIDES)))
    d1, d2 = tmp_path / "d1", tmp_path / "d2"
    assert main(["generate", "--config", str(cfg), "--out", str(d1), "--seed", "101"]) == EXIT_OK
    assert main(["generate", "--config", str(cfg), "--out", str(d2), "--seed", "102"]) == EXIT_OK
    a = (d1 / "x_a.bin").read_bytes()
    b = (d2 / "x_a.bin").read_bytes()
    assert a != b
