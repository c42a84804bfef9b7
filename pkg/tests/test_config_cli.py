import json
from pathlib import Path

import numpy as np
import pytest

from eegalign.cli import build_parser, main
from eegalign.config import ConfigError, RunConfig, config_schema, load_config

TINY_CONFIG = """
[encoder]
layers = 1
d = 16
heads = 2
dropout = 0.0
max_tokens = 64

[train]
epochs = 2
batch_size = 8
peak_lr = 1e-3
min_lr = 1e-4

[instruct]
n_queries = 2
qformer_layers = 1
text_dim = 32
dropout = 0.0

[data]
subjects = 3
trials_per_subject_per_class = 4
duration_s = 1.0
noise_sigma = 0.3

[[data.classes]]
name = "alpha"
carrier_hz = 10.0
focus = "Oz"

[[data.classes]]
name = "beta"
carrier_hz = 20.0
focus = "C3"
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(TINY_CONFIG)
    return path


class TestConfigFile:
    def test_sections_and_values(self, tiny_config):
        cfg = load_config(tiny_config)
        assert cfg.encoder.d == 16
        assert cfg.train.epochs == 2
        assert cfg.instruct.text_dim == 32
        assert [c.name for c in cfg.data.classes] == ["alpha", "beta"]
        assert cfg.tokenizer.d == 16  # derived from encoder when absent

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[train]\nepochz = 3\n")
        with pytest.raises(ConfigError, match=r"epochz.*\[train\]"):
            load_config(path)

    def test_unknown_section_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError, match=r"\[nonsense\]"):
            load_config(path)

    def test_invalid_value_reported(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[encoder]\nd = 10\nheads = 3\n")
        with pytest.raises(ConfigError, match="divisible"):
            load_config(path)

    def test_betas_become_tuple(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("[train]\nbetas = [0.9, 0.99]\n")
        assert load_config(path).train.betas == (0.9, 0.99)

    def test_snapshot_round_trip(self, tiny_config):
        cfg = load_config(tiny_config)
        snapshot = cfg.to_dict()
        assert snapshot["encoder"]["d"] == 16
        assert snapshot["data"]["classes"][0]["name"] == "alpha"


class TestHelpDocCoverage:
    def test_every_config_key_in_help(self):
        help_text = build_parser().format_help()
        for section, keys in config_schema().items():
            assert f"[{section}]" in help_text
            for key in keys:
                assert key in help_text, f"{section}.{key} missing from --help"

    def test_exit_codes_documented(self):
        help_text = build_parser().format_help()
        for code in range(8):
            assert f"\n  {code}  " in help_text


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliwork")
    config = root / "run.toml"
    config.write_text(TINY_CONFIG)
    return root, config


class TestCliPipeline:
    def test_full_pipeline(self, workspace, capsys):
        root, config = workspace
        corpus = root / "corpus"
        assert main(["synth", "--config", str(config), "--out", str(corpus), "--seed", "5"]) == 0
        assert (corpus / "manifest.json").is_file()
        assert (corpus / "catalog.json").is_file()
        assert (corpus / "run_manifest.json").is_file()
        manifest = json.loads((corpus / "manifest.json").read_text())
        assert len(manifest["trials"]) == 3 * 4 * 2

        pre_dir = root / "pre"
        assert main([
            "pretrain", "--config", str(config), "--corpus", str(corpus),
            "--out", str(pre_dir), "--seed", "5",
        ]) == 0
        assert (pre_dir / "checkpoint.pt").is_file()
        assert (pre_dir / "loss_curve.csv").read_text().startswith("epoch,split,loss,lr")

        tune_dir = root / "tune"
        assert main([
            "tune", "--config", str(config), "--corpus", str(corpus),
            "--checkpoint", str(pre_dir / "checkpoint.pt"),
            "--out", str(tune_dir), "--seed", "5",
        ]) == 0
        assert (tune_dir / "checkpoint.pt").is_file()

        eval_dir = root / "eval"
        assert main([
            "eval", "--config", str(config),
            "--checkpoint", str(tune_dir / "checkpoint.pt"),
            "--corpus", str(corpus), "--out", str(eval_dir),
            "--levels", "none,task,task_and_targets",
        ]) == 0
        reports = json.loads((eval_dir / "reports.json").read_text())
        assert [r["level"] for r in reports] == ["none", "task", "task_and_targets"]
        assert len({r["n_samples"] for r in reports}) == 1

        trial_id = manifest["trials"][0]["trial_id"]
        code = main([
            "infer", "--checkpoint", str(tune_dir / "checkpoint.pt"),
            "--corpus", str(corpus), "--trial", trial_id,
            "--instruction", "Decode synthetic oscillations",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert f"trial={trial_id} predicted=" in out
        assert "cos[alpha]" in out and "cos[beta]" in out

        dump_path = root / "emb.csv"
        assert main([
            "dump", "--checkpoint", str(tune_dir / "checkpoint.pt"),
            "--corpus", str(corpus), "--out", str(dump_path), "--level", "task",
        ]) == 0
        lines = dump_path.read_text().strip().splitlines()
        assert lines[0].startswith("id,label,level,")

    def test_synth_determinism_bytewise(self, workspace, tmp_path):
        root, config = workspace
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert main(["synth", "--config", str(config), "--out", str(out), "--seed", "9"]) == 0
            outs.append(out)
        bins_a = sorted((outs[0] / "trials").iterdir())
        bins_b = sorted((outs[1] / "trials").iterdir())
        assert [p.name for p in bins_a] == [p.name for p in bins_b]
        for pa, pb in zip(bins_a, bins_b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_existing_out_requires_force(self, workspace, tmp_path, capsys):
        root, config = workspace
        out = tmp_path / "occupied"
        out.mkdir()
        (out / "something.txt").write_text("x")
        code = main(["synth", "--config", str(config), "--out", str(out)])
        assert code == 7
        assert "code=7" in capsys.readouterr().err
        assert main(["synth", "--config", str(config), "--out", str(out), "--force"]) == 0

    def test_malformed_config_names_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[train]\nlearning_speed = 2\n")
        code = main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")])
        err = capsys.readouterr().err
        assert code == 4
        assert "learning_speed" in err and "[train]" in err

    def test_missing_checkpoint_exit_code(self, workspace, tmp_path, capsys):
        root, config = workspace
        code = main([
            "tune", "--config", str(config), "--corpus", str(root / "corpus"),
            "--checkpoint", str(tmp_path / "nope.pt"), "--out", str(tmp_path / "t"),
        ])
        assert code == 3
        assert "code=3" in capsys.readouterr().err

    def test_label_without_prototype_named(self, workspace, tmp_path, capsys):
        root, config = workspace
        corpus = root / "corpus"
        # Rewrite the corpus catalog to drop one class from the target list.
        catalog_path = corpus / "catalog.json"
        catalog = json.loads(catalog_path.read_text())
        original = catalog_path.read_text()
        catalog["datasets"][0]["targets"] = ["alpha"]
        catalog_path.write_text(json.dumps(catalog))
        try:
            code = main([
                "tune", "--config", str(config), "--corpus", str(corpus),
                "--checkpoint", str(root / "pre" / "checkpoint.pt"),
                "--out", str(tmp_path / "t2"),
            ])
            err = capsys.readouterr().err
            assert code == 6
            assert "beta" in err
        finally:
            catalog_path.write_text(original)

    def test_unknown_level_rejected(self, workspace, tmp_path, capsys):
        root, config = workspace
        code = main([
            "eval", "--checkpoint", str(root / "tune" / "checkpoint.pt"),
            "--corpus", str(root / "corpus"), "--out", str(tmp_path / "e"),
            "--levels", "none,detailed",
        ])
        assert code == 6
        assert "detailed" in capsys.readouterr().err

    def test_run_manifest_contents(self, workspace):
        root, _ = workspace
        manifest = json.loads((root / "pre" / "run_manifest.json").read_text())
        assert manifest["command"] == "pretrain"
        assert manifest["seed"] == 5
        assert manifest["config_snapshot"]["encoder"]["d"] == 16
        assert "checkpoint.pt" in manifest["artifacts"]
        assert manifest["started_at"] <= manifest["finished_at"]
