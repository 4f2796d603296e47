import json

import numpy as np
import pytest

from lesionkit.cli import main
from lesionkit.tagging import Manifest, assign, save_manifest
from lesionkit.transforms import RigidTransform, save_transform
from lesionkit.volume import Volume, read_nifti, write_nifti

from conftest import smooth_phantom


def make_mask_pair(tmp_path):
    mask = np.zeros((10, 10, 10), dtype=np.float32)
    mask[2:5, 2:5, 2:5] = 1
    mask[7:9, 7:9, 7:9] = 1
    v = Volume(mask, np.eye(4), intent="mask")
    write_nifti(v, tmp_path / "pred.nii.gz")
    write_nifti(v, tmp_path / "ref.nii.gz")
    return tmp_path / "pred.nii.gz", tmp_path / "ref.nii.gz"


class TestTopLevel:
    def test_version_prints_schema_versions(self, capsys):
        assert main(["--version"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["formats"]["transform"] == 1
        assert doc["formats"]["manifest"] == 1

    def test_unknown_flag_exits_1_with_usage(self, capsys):
        assert main(["evaluate", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_command_exits_1(self, capsys):
        assert main([]) == 1


class TestEvaluate:
    def test_identical_masks_pq_one(self, tmp_path, capsys):
        pred, ref = make_mask_pair(tmp_path)
        out = tmp_path / "report.json"
        code = main(["evaluate", "--pred", str(pred), "--ref", str(ref), "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["classes"]["1"]["pq"] == 1.0
        assert "pq=1.0000" in capsys.readouterr().err

    def test_stdout_output(self, tmp_path, capsys):
        pred, ref = make_mask_pair(tmp_path)
        code = main(["evaluate", "--pred", str(pred), "--ref", str(ref), "--out", "-"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["schema_version"] == 1

    def test_csv_format(self, tmp_path):
        pred, ref = make_mask_pair(tmp_path)
        out = tmp_path / "report.csv"
        code = main([
            "evaluate", "--pred", str(pred), "--ref", str(ref),
            "--out", str(out), "--format", "csv", "--subject", "sub-9",
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("subject,class,")
        assert lines[1].startswith("sub-9,1,")

    def test_unreadable_input_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "nope.nii"
        code = main(["evaluate", "--pred", str(bad), "--ref", str(bad), "--out", "-"])
        assert code == 1


class TestPreprocessCli:
    def test_missing_config_exit_1(self, tmp_path, capsys):
        code = main([
            "preprocess", "--config", str(tmp_path / "none.json"),
            "--subjects", str(tmp_path),
        ])
        assert code == 1
        assert "config" in capsys.readouterr().err

    def test_config_pointer_reported(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "center_modality": "t1n",
            "moving_modalities": [],
            "atlas": "sri24",
            "output_dir": str(tmp_path / "out"),
            "bogus_key": 1,
        }))
        code = main(["preprocess", "--config", str(cfg), "--subjects", str(tmp_path)])
        assert code == 1
        assert "/bogus_key" in capsys.readouterr().err


class TestSortCli:
    def test_scan_json(self, tmp_path, capsys):
        inbox = tmp_path / "inbox"
        inbox.mkdir()
        write_nifti(smooth_phantom(dims=(6, 6, 6), n_blobs=3, seed=1), inbox / "a.nii.gz")
        (inbox / "junk.bin").write_bytes(b"xx")
        code = main(["sort-scan", "--inbox", str(inbox), "--out", "-"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        kinds = {f["name"]: f["kind"] for f in doc["files"]}
        assert kinds == {"a.nii.gz": "nifti", "junk.bin": "unclassifiable"}

    def test_apply_manifest(self, tmp_path, capsys):
        inbox = tmp_path / "inbox"
        inbox.mkdir()
        write_nifti(smooth_phantom(dims=(6, 6, 6), n_blobs=3, seed=2), inbox / "a.nii.gz")
        m = assign(Manifest(inbox=str(inbox)), str(inbox / "a.nii.gz"), "sub-01", "t1n")
        mpath = tmp_path / "manifest.json"
        save_manifest(m, mpath)
        out = tmp_path / "sorted"
        code = main(["sort-apply", "--manifest", str(mpath), "--out", str(out)])
        assert code == 0
        assert (out / "sub-01" / "sub-01-t1n.nii.gz").exists()
        # statuses were persisted back
        doc = json.loads(mpath.read_text())
        assert doc["entries"][0]["status"] == "committed"

    def test_apply_partial_failure_exit_2(self, tmp_path):
        inbox = tmp_path / "inbox"
        inbox.mkdir()
        write_nifti(smooth_phantom(dims=(6, 6, 6), n_blobs=3, seed=3), inbox / "a.nii.gz")
        out = tmp_path / "sorted"
        (out / "sub-01").mkdir(parents=True)
        (out / "sub-01" / "sub-01-t1n.nii.gz").write_bytes(b"occupied")
        m = assign(Manifest(), str(inbox / "a.nii.gz"), "sub-01", "t1n")
        mpath = tmp_path / "manifest.json"
        save_manifest(m, mpath)
        assert main(["sort-apply", "--manifest", str(mpath), "--out", str(out)]) == 2


class TestTransformCli:
    def test_apply_transform(self, tmp_path, phantom32):
        src = tmp_path / "in.nii.gz"
        write_nifti(phantom32, src)
        t = RigidTransform(translation=(-2.0, 0.0, 0.0))
        tpath = tmp_path / "t.txt"
        save_transform(t, tpath)
        out = tmp_path / "out.nii.gz"
        code = main([
            "transform", "--apply", str(tpath), "--in", str(src),
            "--target", str(src), "--out", str(out), "--interp", "nearest",
        ])
        assert code == 0
        moved = read_nifti(out)
        assert np.array_equal(moved.data[2:], phantom32.data[:-2])

    def test_bad_transform_file_exit_1(self, tmp_path, phantom32, capsys):
        src = tmp_path / "in.nii.gz"
        write_nifti(phantom32, src)
        bad = tmp_path / "bad.txt"
        bad.write_text("garbage")
        code = main([
            "transform", "--apply", str(bad), "--in", str(src),
            "--target", str(src), "--out", str(tmp_path / "o.nii.gz"),
        ])
        assert code == 1
