import json

import numpy as np
import pytest

from ctsynth.cli import main
from ctsynth.config import Config, config_from_mapping, load_config
from ctsynth.errors import ConfigError
from ctsynth.phantom import write_phantom_pool


class TestConfig:
    def test_defaults_validate(self):
        cfg = load_config(None)
        assert cfg.schema_version == 1
        assert [c.name for c in cfg.classes()] == ["tiny", "small", "medium", "large"]
        assert abs(sum(cfg.mix().values()) - 1.0) < 1e-9

    def test_yaml_roundtrip(self, tmp_path):
        p = tmp_path / "cfg.yaml"
        p.write_text(
            "schema_version: 1\n"
            "seed: 7\n"
            "vessels:\n  k_sigma: 2.5\n"
            "tumor:\n  capsule_delta_hu: 25.0\n"
        )
        cfg = load_config(p)
        assert cfg.seed == 7
        assert cfg.vessels.k_sigma == 2.5
        assert cfg.tumor.capsule_delta_hu == 25.0
        # untouched sections keep defaults
        assert cfg.placement.max_attempts == 200

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_mapping({"schema_version": 1, "bogus": 3})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match=r"vessels.*unknown|unknown key"):
            config_from_mapping({"vessels": {"mode": "relative", "oops": 1}})

    def test_wrong_schema_version(self):
        with pytest.raises(ConfigError, match="schema_version"):
            config_from_mapping({"schema_version": 99})

    def test_bad_types_rejected(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"seed": "twelve"})
        with pytest.raises(ConfigError):
            config_from_mapping({"vessels": {"k_sigma": "big"}})

    def test_class_mix_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="sum to 1"):
            config_from_mapping({"class_mix": {"tiny": 0.5, "small": 0.2}})

    def test_class_mix_unknown_class(self):
        with pytest.raises(ConfigError, match="unknown"):
            config_from_mapping({"class_mix": {"huge": 1.0}})

    def test_effective_config_is_dict(self):
        doc = load_config(None).to_dict()
        assert doc["vessels"]["k_sigma"] == 2.0
        json.dumps(doc)  # must be JSON-serializable for manifests

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.yaml")

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("a: [1, 2\n")
        with pytest.raises(ConfigError):
            load_config(p)


@pytest.fixture(scope="module")
def pool_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_pool")
    write_phantom_pool(root, 2, dims=(40, 40, 40), seed=31)
    return root


class TestCliSynth:
    def test_deterministic_outputs(self, pool_dir, tmp_path):
        base = [
            "synth",
            "--volume", str(pool_dir / "phantom_000_volume.nii.gz"),
            "--liver", str(pool_dir / "phantom_000_liver.nii.gz"),
            "--seed", "5",
            "--size-class", "tiny",
        ]
        assert main(base + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(base + ["--out-dir", str(tmp_path / "b")]) == 0
        for name in ("image.nii.gz", "label.nii.gz", "record.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_record_has_reproduction_info(self, pool_dir, tmp_path):
        rc = main(
            [
                "synth",
                "--volume", str(pool_dir / "phantom_001_volume.nii.gz"),
                "--liver", str(pool_dir / "phantom_001_liver.nii.gz"),
                "--seed", "9",
                "--size-class", "tiny",
                "--out-dir", str(tmp_path / "out"),
            ]
        )
        assert rc == 0
        rec = json.loads((tmp_path / "out" / "record.json").read_text())
        assert rec["seed"] == 9
        assert rec["tumors"][0]["size_class"] == "tiny"
        assert "config" in rec and "volume_sha256" in rec


class TestCliErrors:
    def test_unknown_subcommand_exit_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_file_exit_3(self, tmp_path):
        rc = main(
            [
                "preprocess",
                "--volume", str(tmp_path / "missing.nii.gz"),
                "--out", str(tmp_path / "out.nii.gz"),
            ]
        )
        assert rc == 3

    def test_bad_config_exit_4(self, pool_dir, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("schema_version: 99\n")
        rc = main(
            [
                "vessels",
                "--volume", str(pool_dir / "phantom_000_volume.nii.gz"),
                "--liver", str(pool_dir / "phantom_000_liver.nii.gz"),
                "--config", str(cfg),
                "--out", str(tmp_path / "v.nii.gz"),
            ]
        )
        assert rc == 4

    def test_generation_failure_exit_5(self, tmp_path):
        # liver too small for any small-class tumor: placement can never fit
        from ctsynth.core import BinaryMask, VoxelGrid
        from ctsynth.niftiio import CtVolume, write_mask, write_volume

        data = np.full((16, 16, 16), 90.0, np.float32)
        liver = np.zeros((16, 16, 16), bool)
        liver[7:9, 7:9, 7:9] = True
        write_volume(CtVolume(VoxelGrid(data, (1, 1, 1))), tmp_path / "v.nii.gz")
        write_mask(BinaryMask(VoxelGrid(liver, (1, 1, 1))), tmp_path / "l.nii.gz")
        rc = main(
            [
                "synth",
                "--volume", str(tmp_path / "v.nii.gz"),
                "--liver", str(tmp_path / "l.nii.gz"),
                "--seed", "1",
                "--size-class", "large",
                "--out-dir", str(tmp_path / "out"),
            ]
        )
        assert rc == 5

    def test_data_error_exit_6(self, pool_dir, tmp_path):
        # volume passed where a mask belongs -> non-integer labels
        rc = main(
            [
                "vessels",
                "--volume", str(pool_dir / "phantom_000_volume.nii.gz"),
                "--liver", str(pool_dir / "phantom_000_volume.nii.gz"),
                "--out", str(tmp_path / "v.nii.gz"),
            ]
        )
        assert rc == 6


class TestCliPipelines:
    def test_vessels_writes_mask_and_record(self, pool_dir, tmp_path):
        out = tmp_path / "vessels.nii.gz"
        rc = main(
            [
                "vessels",
                "--volume", str(pool_dir / "phantom_000_volume.nii.gz"),
                "--liver", str(pool_dir / "phantom_000_liver.nii.gz"),
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert out.is_file()
        rec = json.loads((tmp_path / "vessels.nii.gz.record.json").read_text())
        assert rec["command"] == "vessels"

    def test_preprocess(self, pool_dir, tmp_path):
        out = tmp_path / "pre.nii.gz"
        rc = main(
            [
                "preprocess",
                "--volume", str(pool_dir / "phantom_000_volume.nii.gz"),
                "--out", str(out),
            ]
        )
        assert rc == 0
        from ctsynth.niftiio import read_grid

        grid, _ = read_grid(out)
        assert abs(float(grid.data.mean())) < 1e-4
        assert abs(float(grid.data.std()) - 1.0) < 1e-4

    def test_shapes_and_textures_galleries(self, tmp_path):
        rc = main(
            ["shapes", "--seed", "3", "--count", "4", "--size-class", "tiny",
             "--out-dir", str(tmp_path / "shapes"), "--montage"]
        )
        assert rc == 0
        assert len(list((tmp_path / "shapes").glob("shape_*.nii.gz"))) == 4
        assert (tmp_path / "shapes" / "montage.png").is_file()
        assert (tmp_path / "shapes" / "manifest.json").is_file()

        rc = main(
            ["textures", "--seed", "3", "--count", "2", "--dims", "24,24,24",
             "--out-dir", str(tmp_path / "tex")]
        )
        assert rc == 0
        assert len(list((tmp_path / "tex").glob("texture_*.nii.gz"))) == 2

    def test_evaluate_self_identity(self, pool_dir, tmp_path):
        assert main(
            ["make-validation", "--pool", str(pool_dir / "pool.json"),
             "--classes", "tiny", "--seed", "4", "--out-dir", str(tmp_path / "val")]
        ) == 0
        gt = tmp_path / "gt"
        gt.mkdir()
        for p in (tmp_path / "val").glob("*_label.nii.gz"):
            (gt / p.name).write_bytes(p.read_bytes())
        rc = main(
            ["evaluate", "--pred-dir", str(gt), "--gt-dir", str(gt),
             "--out", str(tmp_path / "report.json")]
        )
        assert rc == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["mean_dsc"] == 1.0

    def test_select_checkpoint_and_report(self, tmp_path):
        lines = [
            {"run": 0, "epoch": 100 * (i + 1), "metric": "dsc", "value": v}
            for i, v in enumerate([0.2, 0.5, 0.4])
        ]
        traj = tmp_path / "traj.jsonl"
        traj.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
        out = tmp_path / "sel.json"
        rc = main(["select-checkpoint", str(traj), "--metric", "dsc", "--out", str(out)])
        assert rc == 0
        assert json.loads(out.read_text())["best_epoch"] == 200

        rc = main(
            ["simulate-study", "--seed", "1", "--trials", "20",
             "--out", str(tmp_path / "study.json")]
        )
        assert rc == 0
        rc = main(
            ["report", "--trajectory", str(traj), "--study", str(tmp_path / "study.json"),
             "--out-dir", str(tmp_path / "figs")]
        )
        assert rc == 0
        for name in ("trajectory_dsc.png", "trajectory_dsc.csv",
                     "study_regret.png", "study_regret.csv"):
            assert (tmp_path / "figs" / name).stat().st_size > 0

    def test_report_eval_artifacts(self, pool_dir, tmp_path):
        gt = tmp_path / "gt"
        gt.mkdir()
        assert main(
            ["make-validation", "--pool", str(pool_dir / "pool.json"),
             "--classes", "tiny", "--seed", "2", "--out-dir", str(tmp_path / "val")]
        ) == 0
        for p in (tmp_path / "val").glob("*_label.nii.gz"):
            (gt / p.name).write_bytes(p.read_bytes())
        assert main(
            ["evaluate", "--pred-dir", str(gt), "--gt-dir", str(gt),
             "--out", str(tmp_path / "report.json")]
        ) == 0
        rc = main(
            ["report", "--eval", str(tmp_path / "report.json"),
             "--out-dir", str(tmp_path / "figs")]
        )
        assert rc == 0
        for name in ("eval_sensitivity.png", "eval_cases.csv", "eval_bins.csv"):
            assert (tmp_path / "figs" / name).stat().st_size > 0

    def test_stream_cli(self, pool_dir, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("class_mix: {tiny: 1.0}\nstream: {tumors_min: 1, tumors_max: 2}\n")
        rc = main(
            ["stream", "--pool", str(pool_dir / "pool.json"), "--count", "3",
             "--seed", "6", "--config", str(cfg), "--out-dir", str(tmp_path / "st")]
        )
        assert rc == 0
        records = [
            json.loads(l)
            for l in (tmp_path / "st" / "records.jsonl").read_text().splitlines()
        ]
        assert len(records) == 3
        assert all(r["status"] == "ok" for r in records)
        manifest = json.loads((tmp_path / "st" / "manifest.json").read_text())
        assert manifest["kind"] == "stream"
        assert manifest["config"]["class_mix"]["tiny"] == 1.0
