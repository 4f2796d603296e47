"""Tagging manifests: the record mapping raw files to (subject, tag) slots.

The canonical sequence tags are t1n, t1c, t2w and t2f; any other lowercase
token acts as a free-form tag.  Committing copies files (never moves) into
`{output_root}/{subject}/{subject}-{tag}.nii.gz`, which is exactly the tree
the preprocessing batch runner discovers.
"""

from __future__ import annotations

import gzip
import json
import os
import re
import shutil
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

from ..volume import NiftiFormatError, read_middle_slice, read_nifti_header

MANIFEST_SCHEMA_VERSION = 1
NAMING_SCHEME = "{subject}/{subject}-{tag}.nii.gz"
DEFAULT_MANIFEST_NAME = ".lesionkit-manifest.json"

CANONICAL_TAGS = ("t1n", "t1c", "t2w", "t2f")
TAG_RE = re.compile(r"^[a-z0-9_]+$")
SUBJECT_RE = re.compile(r"^[A-Za-z0-9-]+$")


class CollisionError(ValueError):
    """Two files assigned to the same (subject, tag) slot."""


def validate_tag(tag: str) -> str:
    if not isinstance(tag, str) or not TAG_RE.match(tag):
        raise ValueError(f"invalid sequence tag {tag!r} (lowercase [a-z0-9_]+)")
    return tag


def validate_subject(subject: str) -> str:
    if not isinstance(subject, str) or not SUBJECT_RE.match(subject):
        raise ValueError(f"invalid subject id {subject!r} (needs [A-Za-z0-9-]+)")
    return subject


@dataclass(frozen=True)
class ManifestEntry:
    input_path: str
    subject_id: str
    tag: str
    status: str = "pending"  # pending | committed

    def __post_init__(self):
        validate_subject(self.subject_id)
        validate_tag(self.tag)
        if self.status not in ("pending", "committed"):
            raise ValueError(f"invalid status {self.status!r}")

    @property
    def destination(self) -> str:
        return NAMING_SCHEME.format(subject=self.subject_id, tag=self.tag)


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...] = ()
    version: int = 0
    inbox: str | None = None

    def __post_init__(self):
        slots = [(e.subject_id, e.tag) for e in self.entries]
        if len(set(slots)) != len(slots):
            dupes = sorted({s for s in slots if slots.count(s) > 1})
            raise CollisionError(f"duplicate (subject, tag) slots: {dupes}")
        paths = [e.input_path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("an input file may appear in at most one entry")

    def entry_for(self, input_path: str) -> ManifestEntry | None:
        for e in self.entries:
            if e.input_path == input_path:
                return e
        return None

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "naming_scheme": NAMING_SCHEME,
            "version": self.version,
            "inbox": self.inbox,
            "entries": [
                {
                    "input_path": e.input_path,
                    "subject_id": e.subject_id,
                    "tag": e.tag,
                    "status": e.status,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Manifest":
        if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported manifest schema version {doc.get('schema_version')!r}"
            )
        entries = tuple(
            ManifestEntry(
                d["input_path"], d["subject_id"], d["tag"], d.get("status", "pending")
            )
            for d in doc.get("entries", [])
        )
        return cls(entries, int(doc.get("version", 0)), doc.get("inbox"))


def assign(manifest: Manifest, input_path: str, subject_id: str, tag: str) -> Manifest:
    """Add or update the pending entry for ``input_path``.

    A different file already holding (subject, tag) is a collision error that
    names both paths; re-assigning the same file replaces its entry.
    """
    validate_subject(subject_id)
    validate_tag(tag)
    for e in manifest.entries:
        if e.input_path != input_path and (e.subject_id, e.tag) == (subject_id, tag):
            raise CollisionError(
                f"({subject_id}, {tag}) already assigned to {e.input_path}; "
                f"cannot also assign {input_path}"
            )
    entry = ManifestEntry(input_path, subject_id, tag, "pending")
    kept = tuple(e for e in manifest.entries if e.input_path != input_path)
    return replace(manifest, entries=kept + (entry,), version=manifest.version + 1)


def unassign(manifest: Manifest, input_path: str) -> Manifest:
    """Drop the entry for ``input_path`` (card returned to the unsorted pile)."""
    kept = tuple(e for e in manifest.entries if e.input_path != input_path)
    if len(kept) == len(manifest.entries):
        return manifest
    return replace(manifest, entries=kept, version=manifest.version + 1)


# ---------------------------------------------------------------------------
# Inbox scanning


@dataclass(frozen=True)
class FileCandidate:
    name: str
    path: str
    kind: str  # "nifti" | "unclassifiable"
    dims: tuple[int, int, int] | None = None
    spacing: tuple[float, float, float] | None = None
    disk_dtype: str | None = None
    slice_stats: dict | None = None
    reason: str | None = None


def scan_inbox(inbox) -> list[FileCandidate]:
    """List inbox files with header-derived metadata.

    Only the header and the middle axial slice are read per NIfTI file.
    Non-NIfTI files are listed as unclassifiable; dotfiles (including the
    persisted manifest) and directories are skipped.
    """
    inbox = Path(inbox)
    if not inbox.is_dir():
        raise ValueError(f"inbox directory {inbox} does not exist")
    out = []
    for f in sorted(inbox.iterdir()):
        if not f.is_file() or f.name.startswith("."):
            continue
        try:
            hdr = read_nifti_header(f)
            mid = read_middle_slice(f)
            stats = {
                "mean": float(mid.mean()),
                "min": float(mid.min()),
                "max": float(mid.max()),
            }
            out.append(
                FileCandidate(
                    f.name, str(f), "nifti", hdr.dims,
                    tuple(round(s, 6) for s in hdr.spacing), hdr.dtype, stats,
                )
            )
        except NiftiFormatError as e:
            out.append(FileCandidate(f.name, str(f), "unclassifiable", reason=str(e)))
    return out


# ---------------------------------------------------------------------------
# Commit


@dataclass(frozen=True)
class CommitReport:
    statuses: tuple[tuple[str, str], ...]  # (input_path, status)

    @property
    def ok(self) -> bool:
        return all(s == "committed" for _, s in self.statuses)


def _copy_as_gz(src: Path, dst: Path) -> None:
    with open(src, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        shutil.copyfile(src, dst)
    else:
        # pin mtime/filename so repeated commits produce identical bytes
        with open(src, "rb") as fin, open(dst, "wb") as fout:
            with gzip.GzipFile("", fileobj=fout, mode="wb", mtime=0) as gz:
                shutil.copyfileobj(fin, gz)


def commit(manifest: Manifest, output_root) -> tuple[Manifest, CommitReport]:
    """Copy every pending entry to its destination; originals are untouched.

    Existing destinations are refused (per-entry failure); other entries
    still commit.  Already-committed entries are skipped.
    """
    output_root = Path(output_root)
    statuses: list[tuple[str, str]] = []
    new_entries: list[ManifestEntry] = []
    changed = False
    for e in manifest.entries:
        if e.status == "committed":
            statuses.append((e.input_path, "skipped_already_committed"))
            new_entries.append(e)
            continue
        dst = output_root / e.destination
        try:
            if dst.exists():
                raise FileExistsError(f"destination {dst} already exists")
            dst.parent.mkdir(parents=True, exist_ok=True)
            _copy_as_gz(Path(e.input_path), dst)
            statuses.append((e.input_path, "committed"))
            new_entries.append(replace(e, status="committed"))
            changed = True
        except (OSError, FileExistsError) as err:
            statuses.append((e.input_path, f"failed: {err}"))
            new_entries.append(e)
    out = replace(
        manifest,
        entries=tuple(new_entries),
        version=manifest.version + (1 if changed else 0),
    )
    return out, CommitReport(tuple(statuses))


# ---------------------------------------------------------------------------
# Persistence


def save_manifest(manifest: Manifest, path) -> None:
    """Crash-safe write: temp file in the same directory, then rename."""
    path = Path(path)
    blob = json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_manifest(path) -> Manifest:
    return Manifest.from_dict(json.loads(Path(path).read_text()))
