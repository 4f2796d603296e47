import json
import math

import numpy as np
import pytest

from lesionkit.pipeline import (
    BatchSummary,
    BrainExtractionConfig,
    ConfigError,
    DefacingConfig,
    PipelineConfig,
    config_from_dict,
    discover_subjects,
    load_atlas,
    run_batch,
    run_subject,
)
from lesionkit.registration import RegistrationOptions
from lesionkit.transforms import RigidTransform
from lesionkit.volume import GridSpec, Volume, read_nifti, resample, write_nifti

from conftest import ball_mask, smooth_phantom

FAST_REG = RegistrationOptions(pyramid_factors=(2, 1), max_iterations=40)


def make_base(dims=(28, 28, 28), seed=51):
    base = smooth_phantom(dims=dims, n_blobs=10, seed=seed)
    affine = np.eye(4)
    affine[:3, 3] = [-(d - 1) / 2 for d in dims]
    return Volume(base.data, affine)


def synth_subject(base, misalignments, contrasts=None):
    """Derive modality volumes from one base with known misalignments."""
    inputs = {}
    for tag, t in misalignments.items():
        data = base if contrasts is None else contrasts[tag](base)
        inputs[tag] = resample(data, base.grid, t)
    return inputs


def small_cfg(tmp_path, **overrides):
    kw = dict(
        center_modality="t1n",
        moving_modalities=("t2w",),
        atlas=str(tmp_path / "atlas.nii.gz"),
        output_dir=str(tmp_path / "out"),
        registration=FAST_REG,
    )
    kw.update(overrides)
    return PipelineConfig(**kw)


@pytest.fixture()
def small_setup(tmp_path):
    base = make_base()
    write_nifti(base, tmp_path / "atlas.nii.gz")
    mis = {
        "t1n": RigidTransform(translation=(1.5, -1.0, 0.5)),
        "t2w": RigidTransform(
            rotation=(0, 0, math.radians(3)), translation=(-1.0, 2.0, 0.0)
        ),
    }
    contrasts = {"t1n": lambda v: v, "t2w": lambda v: v.with_data(200.0 - v.data)}
    inputs = synth_subject(base, mis, contrasts)
    return base, inputs


class TestConfig:
    def valid_doc(self):
        return {
            "center_modality": "t1n",
            "moving_modalities": ["t1c", "t2w"],
            "atlas": "sri24",
            "output_dir": "/tmp/out",
        }

    def test_valid_minimal(self):
        cfg = config_from_dict(self.valid_doc())
        assert cfg.center_modality == "t1n"
        assert cfg.moving_modalities == ("t1c", "t2w")
        assert not cfg.second_coregistration
        assert cfg.brain_extraction.mode == "none"

    def test_unknown_key_pointer(self):
        doc = self.valid_doc()
        doc["atlass"] = "x"
        with pytest.raises(ConfigError) as err:
            config_from_dict(doc)
        assert err.value.pointer == "/atlass"

    def test_nested_pointer(self):
        doc = self.valid_doc()
        doc["defacing"] = {"enabled": "yes"}
        with pytest.raises(ConfigError) as err:
            config_from_dict(doc)
        assert err.value.pointer == "/defacing/enabled"

    def test_missing_required(self):
        doc = self.valid_doc()
        del doc["output_dir"]
        with pytest.raises(ConfigError) as err:
            config_from_dict(doc)
        assert err.value.pointer == "/output_dir"

    def test_center_in_moving_rejected(self):
        doc = self.valid_doc()
        doc["moving_modalities"] = ["t1n"]
        with pytest.raises(ConfigError):
            config_from_dict(doc)

    def test_defacing_requires_mask_source(self):
        doc = self.valid_doc()
        doc["defacing"] = {"enabled": True}
        with pytest.raises(ConfigError) as err:
            config_from_dict(doc)
        assert "brain mask" in str(err.value)

    def test_external_mask_needs_path(self):
        doc = self.valid_doc()
        doc["brain_extraction"] = {"mode": "external_mask"}
        with pytest.raises(ConfigError) as err:
            config_from_dict(doc)
        assert err.value.pointer == "/brain_extraction/path"


class TestAtlas:
    def test_builtin_names(self):
        for name in ("sri24", "mni152"):
            v = load_atlas(name)
            assert v.dims[0] > 16

    def test_path_matches_read_nifti(self, tmp_path, phantom32):
        p = tmp_path / "a.nii.gz"
        write_nifti(phantom32, p)
        a = load_atlas(p)
        b = read_nifti(p)
        assert np.array_equal(a.data, b.data)

    def test_unknown_name_lists_valid(self):
        with pytest.raises(ValueError, match="sri24"):
            load_atlas("unknown-atlas")

    def test_env_dir_resolution(self, tmp_path, phantom32, monkeypatch):
        write_nifti(phantom32, tmp_path / "custom.nii.gz")
        monkeypatch.setenv("LESIONKIT_ATLAS_DIR", str(tmp_path))
        v = load_atlas("custom")
        assert v.dims == phantom32.dims


class TestRunSubject:
    def test_minimal_outputs_on_atlas_grid(self, tmp_path, small_setup):
        base, inputs = small_setup
        cfg = small_cfg(tmp_path)
        result = run_subject(inputs, cfg, atlas=base)
        assert set(result.outputs) == {"t1n", "t2w"}
        for vol in result.outputs.values():
            assert vol.dims == base.dims
            assert np.array_equal(vol.affine, base.affine)
        # one registration per moving modality plus center->atlas
        assert result.log.count("register") == len(cfg.moving_modalities) + 1
        assert result.log.count("resample_output") == 2
        for absent in ("deface", "skull_strip", "n4_bias_correction", "normalize"):
            assert result.log.count(absent) == 0

    def test_missing_center_errors(self, tmp_path, small_setup):
        _, inputs = small_setup
        cfg = small_cfg(tmp_path)
        del inputs["t1n"]
        with pytest.raises(ValueError, match="center"):
            run_subject(inputs, cfg)

    def test_single_interpolation_per_modality(self, tmp_path, small_setup):
        base, inputs = small_setup
        cfg = small_cfg(tmp_path, second_coregistration=True)
        result = run_subject(inputs, cfg, atlas=base)
        for tag in ("t1n", "t2w"):
            outs = [
                r
                for r in result.log.records
                if r["step"] == "resample_output" and r["inputs"] == [f"{tag}:native"]
            ]
            assert len(outs) == 1

    def test_defacing_preserves_brain_voxels(self, tmp_path, small_setup):
        base, inputs = small_setup
        mask_arr = ball_mask(base.dims, (13.5, 10.0, 17.0), 6.5)
        mask_path = tmp_path / "mask.nii.gz"
        write_nifti(Volume(mask_arr, base.affine, intent="mask"), mask_path)

        cfg_off = small_cfg(tmp_path)
        plain = run_subject(inputs, cfg_off, atlas=base)

        cfg_on = small_cfg(
            tmp_path,
            brain_extraction=BrainExtractionConfig("external_mask", str(mask_path)),
            defacing=DefacingConfig(True, 2.0),
        )
        defaced = run_subject(inputs, cfg_on, atlas=base)
        inside = mask_arr > 0
        for tag in ("t1n", "t2w"):
            assert np.array_equal(
                defaced.outputs[tag].data[inside], plain.outputs[tag].data[inside]
            )

    def test_fallback_mask_recorded(self, tmp_path, small_setup):
        base, inputs = small_setup
        cfg = small_cfg(tmp_path, brain_extraction=BrainExtractionConfig("fallback"))
        result = run_subject(inputs, cfg, atlas=base)
        assert result.brain_mask is not None
        assert result.log.count("brain_mask") == 1
        assert result.log.count("skull_strip") == 2


class TestBatch:
    def build_tree(self, tmp_path, base, subjects=("sub-01", "sub-02", "sub-03")):
        root = tmp_path / "subjects"
        mis = {
            "t1n": RigidTransform(translation=(1.0, -0.5, 0.5)),
            "t2w": RigidTransform(translation=(-0.5, 1.0, 0.0)),
        }
        for i, s in enumerate(subjects):
            d = root / s
            d.mkdir(parents=True)
            inputs = synth_subject(base, mis)
            for tag, vol in inputs.items():
                write_nifti(vol, d / f"{s}-{tag}.nii.gz")
        return root

    def test_discovery(self, tmp_path):
        base = make_base(dims=(12, 12, 12))
        root = self.build_tree(tmp_path, base, subjects=("sub-01",))
        (root / "sub-01" / "stray.txt").write_text("x")
        subjects, warnings = discover_subjects(root)
        assert [s for s, _ in subjects] == ["sub-01"]
        assert set(subjects[0][1]) == {"t1n", "t2w"}
        assert len(warnings) == 1 and "naming scheme" in warnings[0]

    def test_batch_isolation_and_layout(self, tmp_path):
        base = make_base()
        write_nifti(base, tmp_path / "atlas.nii.gz")
        root = self.build_tree(tmp_path, base)
        # corrupt one subject's center modality
        (root / "sub-02" / "sub-02-t1n.nii.gz").write_bytes(b"not a nifti")
        cfg = small_cfg(tmp_path)
        summary = run_batch(root, cfg, parallelism=1)
        assert set(summary.succeeded) == {"sub-01", "sub-03"}
        assert summary.failed == ("sub-02",)
        assert summary.exit_code == 2
        for s in ("sub-01", "sub-03"):
            out = tmp_path / "out" / s
            assert (out / f"{s}-t1n.nii.gz").exists()
            assert (out / f"{s}-t2w.nii.gz").exists()
            assert (out / "transforms" / "t2w_to_atlas.txt").exists()
            prov = json.loads((out / "provenance.json").read_text())
            assert prov["schema_version"] == 1
            resamples = [r for r in prov["records"] if r["step"] == "resample_output"]
            assert all("output_file" in r for r in resamples)

    def test_empty_subject_list(self, tmp_path):
        root = tmp_path / "empty"
        root.mkdir()
        cfg = small_cfg(tmp_path)
        (tmp_path / "atlas.nii.gz").write_bytes(b"")  # never read: no subjects
        summary = run_batch(root, cfg, parallelism=2)
        assert summary.exit_code == 0
        assert not summary.succeeded and not summary.failed
