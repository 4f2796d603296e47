"""Five-stage multi-modal-to-atlas preprocessing, per subject and in batches.

Stage order: (1) rigid co-registration of every moving modality to the
center modality in native space, (2) registration of the center to the
atlas, with all modalities carried to the atlas grid through composed
transforms, (3) optional second co-registration pass inside atlas space,
folded into the composition, (4) optional skull-stripping / defacing,
(5) optional bias correction and intensity normalization.

Every output image is produced by exactly one interpolation from its native
data: transforms are composed, never chained through intermediate
resamplings (the images materialized for the stage-3 refinement are
estimation inputs only and are recorded as such).

All outputs are deterministic for fixed inputs and configuration; the only
provenance fields that vary between runs are wall-clock timings.
"""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .anonymize import apply_brain_mask, estimate_brain_mask_fallback, quickshear_deface
from .intensity import N4Options, NormalizationSpec, n4_correct, normalization_stats, normalize
from .registration import RegistrationOptions, register_rigid
from .transforms import RigidTransform, compose, save_transform
from .volume import Volume, read_nifti, reorient_to_canonical, resample, write_nifti

PROVENANCE_SCHEMA_VERSION = 1
CONFIG_SCHEMA_VERSION = 1

BUILTIN_ATLASES = ("sri24", "mni152")
ATLAS_DIR_ENV = "LESIONKIT_ATLAS_DIR"

TAG_RE = re.compile(r"^[a-z0-9_]+$")
SUBJECT_RE = re.compile(r"^[A-Za-z0-9-]+$")


class ConfigError(ValueError):
    """Configuration violates the documented schema; carries a JSON pointer."""

    def __init__(self, message: str, pointer: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class BrainExtractionConfig:
    mode: str = "none"  # none | external_mask | fallback
    path: str | None = None


@dataclass(frozen=True)
class DefacingConfig:
    enabled: bool = False
    buffer_mm: float = 10.0


@dataclass(frozen=True)
class N4Config:
    enabled: bool = False
    options: N4Options = field(default_factory=N4Options)


@dataclass(frozen=True)
class NormalizationConfig:
    method: str = "zscore"
    percentiles: tuple[float, float] = (0.5, 99.5)


@dataclass(frozen=True)
class PipelineConfig:
    center_modality: str
    moving_modalities: tuple[str, ...]
    atlas: str
    output_dir: str
    second_coregistration: bool = False
    brain_extraction: BrainExtractionConfig = field(default_factory=BrainExtractionConfig)
    defacing: DefacingConfig = field(default_factory=DefacingConfig)
    n4: N4Config = field(default_factory=N4Config)
    normalization: NormalizationConfig | None = None
    registration: RegistrationOptions = field(default_factory=RegistrationOptions)

    def __post_init__(self):
        if self.center_modality in self.moving_modalities:
            raise ConfigError(
                "center modality must not appear in moving_modalities",
                "/moving_modalities",
            )
        if self.defacing.enabled and self.brain_extraction.mode == "none":
            raise ConfigError(
                "defacing requires a brain mask (brain_extraction mode "
                "'external_mask' or 'fallback')",
                "/defacing/enabled",
            )


def _expect(cond: bool, message: str, pointer: str):
    if not cond:
        raise ConfigError(message, pointer)


def _check_keys(obj: dict, allowed: dict, pointer: str):
    for key in obj:
        _expect(key in allowed, f"unknown key {key!r}", f"{pointer}/{key}")
    for key, required in allowed.items():
        if required:
            _expect(key in obj, f"missing required key {key!r}", f"{pointer}/{key}")


def config_from_dict(doc: dict) -> PipelineConfig:
    """Validate a JSON config document; errors carry the offending pointer."""
    _expect(isinstance(doc, dict), "config must be a JSON object", "")
    _check_keys(
        doc,
        {
            "center_modality": True,
            "moving_modalities": True,
            "atlas": True,
            "output_dir": True,
            "second_coregistration": False,
            "brain_extraction": False,
            "defacing": False,
            "n4": False,
            "normalization": False,
        },
        "",
    )
    _expect(isinstance(doc["center_modality"], str), "must be a string", "/center_modality")
    _expect(
        TAG_RE.match(doc["center_modality"]) is not None,
        "must be a lowercase tag token",
        "/center_modality",
    )
    mm = doc["moving_modalities"]
    _expect(isinstance(mm, list), "must be a list of tags", "/moving_modalities")
    for i, tag in enumerate(mm):
        _expect(
            isinstance(tag, str) and TAG_RE.match(tag) is not None,
            "must be a lowercase tag token",
            f"/moving_modalities/{i}",
        )
    _expect(isinstance(doc["atlas"], str), "must be a string", "/atlas")
    _expect(isinstance(doc["output_dir"], str), "must be a string", "/output_dir")

    second = doc.get("second_coregistration", False)
    _expect(isinstance(second, bool), "must be a boolean", "/second_coregistration")

    be = BrainExtractionConfig()
    if "brain_extraction" in doc:
        sub = doc["brain_extraction"]
        _expect(isinstance(sub, dict), "must be an object", "/brain_extraction")
        _check_keys(sub, {"mode": True, "path": False}, "/brain_extraction")
        mode = sub["mode"]
        _expect(
            mode in ("none", "external_mask", "fallback"),
            "must be one of 'none', 'external_mask', 'fallback'",
            "/brain_extraction/mode",
        )
        if mode == "external_mask":
            _expect(
                isinstance(sub.get("path"), str),
                "external_mask mode requires a mask path",
                "/brain_extraction/path",
            )
        be = BrainExtractionConfig(mode, sub.get("path"))

    df = DefacingConfig()
    if "defacing" in doc:
        sub = doc["defacing"]
        _expect(isinstance(sub, dict), "must be an object", "/defacing")
        _check_keys(sub, {"enabled": True, "buffer_mm": False}, "/defacing")
        _expect(isinstance(sub["enabled"], bool), "must be a boolean", "/defacing/enabled")
        buffer_mm = sub.get("buffer_mm", 10.0)
        _expect(
            isinstance(buffer_mm, (int, float)) and buffer_mm >= 0,
            "must be a non-negative number",
            "/defacing/buffer_mm",
        )
        df = DefacingConfig(sub["enabled"], float(buffer_mm))

    n4 = N4Config()
    if "n4" in doc:
        sub = doc["n4"]
        _expect(isinstance(sub, dict), "must be an object", "/n4")
        allowed = {
            "enabled": True,
            "levels": False,
            "max_iterations": False,
            "convergence_threshold": False,
            "histogram_bins": False,
            "sharpen_fwhm": False,
            "wiener_noise": False,
        }
        _check_keys(sub, allowed, "/n4")
        _expect(isinstance(sub["enabled"], bool), "must be a boolean", "/n4/enabled")
        kwargs = {}
        for key in allowed:
            if key != "enabled" and key in sub:
                _expect(
                    isinstance(sub[key], (int, float)),
                    "must be a number",
                    f"/n4/{key}",
                )
                kwargs[key] = sub[key]
        n4 = N4Config(sub["enabled"], N4Options(**kwargs))

    norm = None
    if doc.get("normalization") is not None:
        sub = doc["normalization"]
        _expect(isinstance(sub, dict), "must be an object or null", "/normalization")
        _check_keys(sub, {"method": True, "percentiles": False}, "/normalization")
        _expect(
            sub["method"] in ("zscore", "minmax", "percentile_clamp"),
            "must be one of 'zscore', 'minmax', 'percentile_clamp'",
            "/normalization/method",
        )
        pct = sub.get("percentiles", [0.5, 99.5])
        _expect(
            isinstance(pct, list) and len(pct) == 2
            and all(isinstance(x, (int, float)) for x in pct)
            and 0 <= pct[0] < pct[1] < 100,
            "must be [low, high] with 0 <= low < high < 100",
            "/normalization/percentiles",
        )
        norm = NormalizationConfig(sub["method"], (float(pct[0]), float(pct[1])))

    return PipelineConfig(
        center_modality=doc["center_modality"],
        moving_modalities=tuple(mm),
        atlas=doc["atlas"],
        output_dir=doc["output_dir"],
        second_coregistration=second,
        brain_extraction=be,
        defacing=df,
        n4=n4,
        normalization=norm,
    )


def load_config(path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", "") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}", "") from e
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# Provenance


class ProvenanceLog:
    """Ordered record of every step, parameter set and produced artifact."""

    def __init__(self, subject: str):
        self.subject = subject
        self.records: list[dict] = []

    def record(self, step: str, params: dict, inputs: list[str], outputs: list[str],
               wall_time_s: float, **extra) -> dict:
        rec = {
            "step": step,
            "params": params,
            "inputs": list(inputs),
            "outputs": list(outputs),
            "wall_time_s": round(float(wall_time_s), 6),
            "tool_version": __version__,
        }
        rec.update(extra)
        self.records.append(rec)
        return rec

    def to_dict(self) -> dict:
        return {
            "schema_version": PROVENANCE_SCHEMA_VERSION,
            "subject": self.subject,
            "records": self.records,
        }

    def count(self, step: str) -> int:
        return sum(1 for r in self.records if r["step"] == step)


def _matrix_entries(t: RigidTransform) -> list[list[float]]:
    return [[float(x) for x in row] for row in t.matrix]


# ---------------------------------------------------------------------------
# Atlases


def load_atlas(name_or_path) -> Volume:
    """Resolve an atlas by bundled name, atlas-directory name, or file path.

    The bundled ``sri24`` and ``mni152`` grids are desk-scale synthetic
    stand-ins for the real atlases (documented in the README); point
    ``atlas`` at a real NIfTI file for production use.
    """
    p = Path(str(name_or_path))
    if p.exists():
        return read_nifti(p)
    name = str(name_or_path)
    if name in BUILTIN_ATLASES:
        ref = resources.files("lesionkit") / "atlases" / f"{name}.nii.gz"
        with resources.as_file(ref) as path:
            return read_nifti(path)
    env_dir = os.environ.get(ATLAS_DIR_ENV)
    if env_dir:
        for suffix in (".nii.gz", ".nii"):
            candidate = Path(env_dir) / f"{name}{suffix}"
            if candidate.exists():
                return read_nifti(candidate)
    raise ValueError(
        f"unknown atlas {name_or_path!r}: not a readable path, not one of the "
        f"built-in names {list(BUILTIN_ATLASES)}, and not found under "
        f"${ATLAS_DIR_ENV}"
    )


# ---------------------------------------------------------------------------
# Per-subject pipeline


@dataclass
class SubjectResult:
    subject: str
    outputs: dict  # tag -> Volume, all on the atlas grid
    transforms: dict  # tag -> RigidTransform pulling atlas world into native world
    brain_mask: Volume | None
    log: ProvenanceLog
    flagged: bool = False
    messages: tuple[str, ...] = ()


class _StepTimer:
    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.monotonic() - self.t0
        return False


def _registration_params(result) -> dict:
    return {
        "final_mi": result.final_mi,
        "converged": result.converged,
        "levels": [
            {
                "factor": lv.factor,
                "iterations": lv.iterations,
                "mi_before": lv.mi_before,
                "mi_after": lv.mi_after,
            }
            for lv in result.levels
        ],
    }


def _foreground_mask(v: Volume) -> Volume:
    return Volume((v.data != 0).astype(np.float32), v.affine, intent="mask")


def _grids_match(a, b, tol=1e-4) -> bool:
    return a.dims == b.dims and bool(np.max(np.abs(a.affine - b.affine)) < tol)


def _resolve_brain_mask(cfg, atlas_grid, center_native, center_atlas, t_atlas, log):
    mode = cfg.brain_extraction.mode
    if mode == "none":
        return None
    with _StepTimer() as t:
        if mode == "fallback":
            mask = estimate_brain_mask_fallback(center_atlas)
            source = "fallback_estimator"
        else:
            raw = reorient_to_canonical(
                read_nifti(cfg.brain_extraction.path).with_intent("mask")
            )
            source = cfg.brain_extraction.path
            if _grids_match(raw.grid, atlas_grid):
                mask = raw
            elif _grids_match(raw.grid, center_native.grid):
                mask = resample(raw, atlas_grid, t_atlas)
            else:
                raise ValueError(
                    "external brain mask grid matches neither the atlas grid nor "
                    "the center modality's native grid"
                )
    log.record(
        "brain_mask",
        {"mode": mode, "source": source},
        ["center:atlas"] if mode == "fallback" else [str(source)],
        ["brainmask:atlas"],
        t.elapsed,
    )
    return mask


def run_subject(
    inputs: dict,
    cfg: PipelineConfig,
    atlas: Volume | None = None,
    subject: str = "subject",
) -> SubjectResult:
    """Run the full preprocessing workflow for one subject, in memory.

    ``inputs`` maps modality tags to Volumes and must contain the configured
    center modality.  Failed registration convergence flags the subject but
    still produces outputs.
    """
    if cfg.center_modality not in inputs:
        raise ValueError(
            f"missing center modality {cfg.center_modality!r} in inputs "
            f"(got {sorted(inputs)})"
        )
    for tag in cfg.moving_modalities:
        if tag not in inputs:
            raise ValueError(f"missing configured moving modality {tag!r}")

    log = ProvenanceLog(subject)
    flagged = False
    messages: list[str] = []

    with _StepTimer() as t:
        atlas_vol = atlas if atlas is not None else load_atlas(cfg.atlas)
        atlas_vol = reorient_to_canonical(atlas_vol)
        native = {tag: reorient_to_canonical(v) for tag, v in inputs.items()}
    log.record(
        "load_and_reorient",
        {"atlas": cfg.atlas},
        [f"{tag}:raw" for tag in sorted(native)],
        [f"{tag}:native" for tag in sorted(native)],
        t.elapsed,
    )
    atlas_grid = atlas_vol.grid
    center = native[cfg.center_modality]

    # stage 1: moving -> center in native space
    stage1: dict[str, RigidTransform] = {}
    for tag in cfg.moving_modalities:
        with _StepTimer() as t:
            res = register_rigid(center, native[tag], cfg.registration)
        stage1[tag] = res.transform
        flagged |= not res.converged
        if not res.converged:
            messages.append(f"registration {tag}->center did not converge")
        log.record(
            "register",
            _registration_params(res),
            [f"{cfg.center_modality}:native", f"{tag}:native"],
            [f"transform:{tag}_to_{cfg.center_modality}"],
            t.elapsed,
            matrix=_matrix_entries(res.transform),
        )

    # stage 2: center -> atlas
    with _StepTimer() as t:
        res_atlas = register_rigid(atlas_vol, center, cfg.registration)
    t_atlas = res_atlas.transform
    flagged |= not res_atlas.converged
    if not res_atlas.converged:
        messages.append("registration center->atlas did not converge")
    log.record(
        "register",
        _registration_params(res_atlas),
        ["atlas", f"{cfg.center_modality}:native"],
        [f"transform:{cfg.center_modality}_to_atlas"],
        t.elapsed,
        matrix=_matrix_entries(t_atlas),
    )

    outputs: dict[str, Volume] = {}
    transforms: dict[str, RigidTransform] = {cfg.center_modality: t_atlas}

    with _StepTimer() as t:
        center_atlas = resample(center, atlas_grid, t_atlas)
    outputs[cfg.center_modality] = center_atlas
    log.record(
        "resample_output",
        {"interpolation": "trilinear", "fill": 0.0},
        [f"{cfg.center_modality}:native"],
        [f"{cfg.center_modality}:atlas"],
        t.elapsed,
        matrix=_matrix_entries(t_atlas),
    )

    # stages 2+3 for moving modalities: compose, optionally refine, resample once
    for tag in cfg.moving_modalities:
        combined = compose(stage1[tag], t_atlas)
        if cfg.second_coregistration:
            with _StepTimer() as t:
                preview = resample(native[tag], atlas_grid, combined)
            log.record(
                "resample_temp",
                {"purpose": "second co-registration estimation input"},
                [f"{tag}:native"],
                [f"{tag}:atlas-preview"],
                t.elapsed,
            )
            with _StepTimer() as t:
                refine = register_rigid(center_atlas, preview, cfg.registration)
            flagged |= not refine.converged
            if not refine.converged:
                messages.append(f"refinement {tag}->center@atlas did not converge")
            log.record(
                "register_refine",
                _registration_params(refine),
                [f"{cfg.center_modality}:atlas", f"{tag}:atlas-preview"],
                [f"transform:{tag}_refine"],
                t.elapsed,
                matrix=_matrix_entries(refine.transform),
            )
            combined = compose(combined, refine.transform)
        transforms[tag] = combined
        with _StepTimer() as t:
            outputs[tag] = resample(native[tag], atlas_grid, combined)
        log.record(
            "resample_output",
            {"interpolation": "trilinear", "fill": 0.0},
            [f"{tag}:native"],
            [f"{tag}:atlas"],
            t.elapsed,
            matrix=_matrix_entries(combined),
        )

    # stage 4: anonymization
    brain_mask = _resolve_brain_mask(cfg, atlas_grid, center, center_atlas, t_atlas, log)
    if cfg.defacing.enabled:
        for tag in list(outputs):
            with _StepTimer() as t:
                outputs[tag] = quickshear_deface(outputs[tag], brain_mask, cfg.defacing.buffer_mm)
            log.record(
                "deface",
                {"buffer_mm": cfg.defacing.buffer_mm},
                [f"{tag}:atlas", "brainmask:atlas"],
                [f"{tag}:atlas"],
                t.elapsed,
            )
    if cfg.brain_extraction.mode != "none":
        for tag in list(outputs):
            with _StepTimer() as t:
                outputs[tag] = apply_brain_mask(outputs[tag], brain_mask)
            log.record(
                "skull_strip",
                {},
                [f"{tag}:atlas", "brainmask:atlas"],
                [f"{tag}:atlas"],
                t.elapsed,
            )

    # stage 5: intensity operations
    if cfg.n4.enabled:
        for tag in list(outputs):
            est_mask = brain_mask if brain_mask is not None else _foreground_mask(outputs[tag])
            with _StepTimer() as t:
                outputs[tag], _bias = n4_correct(outputs[tag], est_mask, cfg.n4.options)
            log.record(
                "n4_bias_correction",
                {
                    "levels": cfg.n4.options.levels,
                    "max_iterations": cfg.n4.options.max_iterations,
                    "convergence_threshold": cfg.n4.options.convergence_threshold,
                    "histogram_bins": cfg.n4.options.histogram_bins,
                    "sharpen_fwhm": cfg.n4.options.sharpen_fwhm,
                    "wiener_noise": cfg.n4.options.wiener_noise,
                    "no_op": _bias.no_op,
                },
                [f"{tag}:atlas"],
                [f"{tag}:atlas"],
                t.elapsed,
            )
    if cfg.normalization is not None:
        for tag in list(outputs):
            mask = brain_mask if brain_mask is not None else _foreground_mask(outputs[tag])
            spec = NormalizationSpec(
                cfg.normalization.method, mask, cfg.normalization.percentiles
            )
            with _StepTimer() as t:
                stats = normalization_stats(outputs[tag], spec)
                outputs[tag] = normalize(outputs[tag], spec)
            log.record(
                "normalize",
                {"method": cfg.normalization.method,
                 "percentiles": list(cfg.normalization.percentiles),
                 "stats": stats},
                [f"{tag}:atlas"],
                [f"{tag}:atlas"],
                t.elapsed,
            )

    return SubjectResult(
        subject, outputs, transforms, brain_mask, log, flagged, tuple(messages)
    )


# ---------------------------------------------------------------------------
# Batch execution


FILENAME_RE = re.compile(r"^(?P<subject>[A-Za-z0-9-]+)-(?P<tag>[a-z0-9_]+)\.nii(\.gz)?$")


def discover_subjects(root) -> tuple[list[tuple[str, dict]], list[str]]:
    """Find `{root}/{subject}/{subject}-{tag}.nii[.gz]` trees.

    Returns (subjects, warnings); warnings flag files that do not follow the
    naming scheme.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"subjects directory {root} does not exist")
    subjects = []
    warnings: list[str] = []
    for subdir in sorted(p for p in root.iterdir() if p.is_dir()):
        tags = {}
        for f in sorted(subdir.iterdir()):
            if not f.is_file() or f.name.startswith("."):
                continue
            m = FILENAME_RE.match(f.name)
            if m is None or m.group("subject") != subdir.name:
                warnings.append(f"{f}: does not match the {{subject}}-{{tag}} naming scheme")
                continue
            tags[m.group("tag")] = str(f)
        if tags:
            subjects.append((subdir.name, tags))
        else:
            warnings.append(f"{subdir}: no readable modality files")
    return subjects, warnings


@dataclass(frozen=True)
class BatchSummary:
    succeeded: tuple[str, ...]
    flagged: tuple[str, ...]
    failed: tuple[str, ...]
    details: dict

    @property
    def exit_code(self) -> int:
        return 0 if not self.flagged and not self.failed else 2


def _write_subject_outputs(result: SubjectResult, out_root: Path) -> None:
    """Write images, transforms and provenance for one subject.

    Provenance references files relative to the output root, so a moved or
    re-rooted output tree stays self-describing.
    """
    subj_dir = out_root / result.subject
    tdir = subj_dir / "transforms"
    tdir.mkdir(parents=True, exist_ok=True)
    for tag, vol in sorted(result.outputs.items()):
        path = subj_dir / f"{result.subject}-{tag}.nii.gz"
        write_nifti(vol, path)
        for rec in result.log.records:
            if rec["step"] == "resample_output" and rec["outputs"] == [f"{tag}:atlas"]:
                rec["output_file"] = str(path.relative_to(out_root))
    if result.brain_mask is not None:
        mpath = subj_dir / f"{result.subject}-brainmask.nii.gz"
        write_nifti(result.brain_mask, mpath)
        for rec in result.log.records:
            if rec["step"] == "brain_mask":
                rec["output_file"] = str(mpath.relative_to(out_root))
    for tag, t in sorted(result.transforms.items()):
        tpath = tdir / f"{tag}_to_atlas.txt"
        save_transform(t, tpath)
        for rec in result.log.records:
            if rec["step"] in ("register", "resample_output") and rec.get("matrix") == _matrix_entries(t):
                rec.setdefault("transform_file", str(tpath.relative_to(out_root)))
    (subj_dir / "provenance.json").write_text(
        json.dumps(result.log.to_dict(), indent=2) + "\n"
    )


def _process_subject(args) -> tuple[str, str, str]:
    subject, paths, cfg = args
    try:
        inputs = {tag: read_nifti(p) for tag, p in paths.items()
                  if tag == cfg.center_modality or tag in cfg.moving_modalities}
        result = run_subject(inputs, cfg, subject=subject)
        _write_subject_outputs(result, Path(cfg.output_dir))
        if result.flagged:
            return subject, "flagged", "; ".join(result.messages)
        return subject, "ok", ""
    except Exception as e:  # per-subject isolation: never abort the batch
        return subject, "failed", f"{type(e).__name__}: {e}"


def run_batch(subjects_dir, cfg: PipelineConfig, parallelism: int = 1) -> BatchSummary:
    """Process every subject under ``subjects_dir``; failures never propagate.

    Output layout per subject: `{out}/{subject}/{subject}-{tag}.nii.gz`,
    `{out}/{subject}/transforms/` and `{out}/{subject}/provenance.json`.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    out_root = Path(cfg.output_dir)
    try:
        out_root.mkdir(parents=True, exist_ok=True)
        probe = out_root / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ValueError(f"output directory {out_root} is not writable: {e}") from e

    subjects, _warnings = discover_subjects(subjects_dir)
    jobs = [(s, paths, cfg) for s, paths in subjects]
    if parallelism == 1 or len(jobs) <= 1:
        results = [_process_subject(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_process_subject, jobs))

    succeeded = tuple(s for s, st, _ in results if st == "ok")
    flagged = tuple(s for s, st, _ in results if st == "flagged")
    failed = tuple(s for s, st, _ in results if st == "failed")
    details = {s: {"status": st, "message": msg} for s, st, msg in results}
    return BatchSummary(succeeded, flagged, failed, details)
