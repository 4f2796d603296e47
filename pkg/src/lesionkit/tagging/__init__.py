"""Sequence tagging: manifest model, inbox scanning, commit, HTTP service."""

from .manifest import (
    CANONICAL_TAGS,
    CollisionError,
    CommitReport,
    FileCandidate,
    Manifest,
    ManifestEntry,
    assign,
    commit,
    load_manifest,
    save_manifest,
    scan_inbox,
    unassign,
)

__all__ = [
    "CANONICAL_TAGS",
    "CollisionError",
    "CommitReport",
    "FileCandidate",
    "Manifest",
    "ManifestEntry",
    "assign",
    "commit",
    "load_manifest",
    "save_manifest",
    "scan_inbox",
    "unassign",
]
