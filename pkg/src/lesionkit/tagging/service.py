"""HTTP/JSON API for interactive tagging, plus the static board UI.

State model: the manifest lives in a single JSON file inside the inbox, so
restarts lose nothing.  Mutations are serialized through one lock and
persisted immediately.  Concurrent editors get last-writer-wins semantics;
clients that send their last-seen version with a mutation receive 409 on
conflict and are expected to refresh.

Binds to localhost by default; there is no authentication layer.
"""

from __future__ import annotations

import io
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from ..volume import NiftiFormatError, read_middle_slice
from .manifest import (
    DEFAULT_MANIFEST_NAME,
    CollisionError,
    Manifest,
    assign,
    commit,
    load_manifest,
    save_manifest,
    scan_inbox,
    unassign,
)


class SliceStats(BaseModel):
    mean: float
    min: float
    max: float


class FileCandidateModel(BaseModel):
    name: str
    path: str
    kind: str
    dims: tuple[int, int, int] | None = None
    spacing: tuple[float, float, float] | None = None
    disk_dtype: str | None = None
    slice_stats: SliceStats | None = None
    reason: str | None = None
    preview_url: str | None = None


class ManifestEntryModel(BaseModel):
    input_path: str
    subject_id: str
    tag: str
    status: str = "pending"


class ManifestModel(BaseModel):
    schema_version: int
    naming_scheme: str
    version: int
    inbox: str | None = None
    entries: list[ManifestEntryModel]


class AssignRequest(BaseModel):
    file: str = Field(description="file name inside the inbox")
    subject: str | None = None
    tag: str | None = Field(default=None, description="null moves the file back to unsorted")
    expected_version: int | None = None


class AssignResponse(BaseModel):
    version: int
    entry: ManifestEntryModel | None = None


class ManifestPut(BaseModel):
    entries: list[ManifestEntryModel]
    expected_version: int | None = None


class CommitRequest(BaseModel):
    expected_version: int | None = None


class EntryStatus(BaseModel):
    input_path: str
    status: str


class CommitResponse(BaseModel):
    version: int
    statuses: list[EntryStatus]
    ok: bool


class _ManifestStore:
    """Single-writer manifest state persisted to the inbox."""

    def __init__(self, inbox: Path, manifest_path: Path):
        self._lock = threading.Lock()
        self._path = manifest_path
        if manifest_path.exists():
            self.manifest = load_manifest(manifest_path)
        else:
            self.manifest = Manifest(inbox=str(inbox))

    def snapshot(self) -> Manifest:
        with self._lock:
            return self.manifest

    def mutate(self, fn, expected_version: int | None):
        with self._lock:
            if expected_version is not None and expected_version != self.manifest.version:
                raise HTTPException(
                    status_code=409,
                    detail={
                        "error": "version conflict",
                        "current_version": self.manifest.version,
                    },
                )
            result = fn(self.manifest)
            manifest = result[0] if isinstance(result, tuple) else result
            self.manifest = manifest
            save_manifest(manifest, self._path)
            return result


def render_slice_png(path, window=(1.0, 99.0)) -> bytes:
    """Windowed middle axial slice as an 8-bit grayscale PNG.

    PNG size is (dimx, dimy); constant slices render mid-gray.
    """
    arr = read_middle_slice(path).astype(np.float64)
    lo, hi = np.percentile(arr, window)
    if hi - lo <= 0:
        gray = np.full(arr.shape, 128, dtype=np.uint8)
    else:
        gray = (np.clip(arr, lo, hi) - lo) / (hi - lo)
        gray = np.round(gray * 255).astype(np.uint8)
    img = Image.fromarray(gray.T, mode="L")  # width = dimx, height = dimy
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


_FALLBACK_PAGE = """<!doctype html>
<html><head><title>lesionkit tagging</title></head>
<body><h1>lesionkit tagging service</h1>
<p>The board UI bundle is not installed. The JSON API is live under
<code>/api/</code> (see <a href="/docs">/docs</a>).</p></body></html>
"""


def create_app(inbox, output_root, manifest_path=None, ui_dir=None) -> FastAPI:
    inbox = Path(inbox)
    output_root = Path(output_root)
    if not inbox.is_dir():
        raise ValueError(f"inbox directory {inbox} does not exist")
    manifest_path = Path(manifest_path) if manifest_path else inbox / DEFAULT_MANIFEST_NAME
    store = _ManifestStore(inbox, manifest_path)

    app = FastAPI(title="lesionkit tagging service", version="1")
    app.state.store = store

    @app.get("/api/files", response_model=list[FileCandidateModel])
    def list_files():
        out = []
        for c in scan_inbox(inbox):
            model = FileCandidateModel(
                name=c.name, path=c.path, kind=c.kind, dims=c.dims,
                spacing=c.spacing, disk_dtype=c.disk_dtype,
                slice_stats=c.slice_stats, reason=c.reason,
            )
            if c.kind == "nifti":
                model.preview_url = f"/api/files/{c.name}/slice.png"
            out.append(model)
        return out

    def _resolve(file_id: str) -> Path:
        if "/" in file_id or file_id.startswith("."):
            raise HTTPException(status_code=404, detail=f"unknown file {file_id!r}")
        path = inbox / file_id
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"unknown file {file_id!r}")
        return path

    @app.get("/api/files/{file_id}/slice.png")
    def slice_png(file_id: str):
        path = _resolve(file_id)
        try:
            png = render_slice_png(path)
        except NiftiFormatError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        return Response(content=png, media_type="image/png")

    @app.get("/api/manifest", response_model=ManifestModel)
    def get_manifest():
        return ManifestModel(**store.snapshot().to_dict())

    @app.put("/api/manifest", response_model=ManifestModel)
    def put_manifest(body: ManifestPut):
        def replace_all(m: Manifest) -> Manifest:
            try:
                fresh = Manifest.from_dict(
                    {
                        "schema_version": 1,
                        "version": m.version + 1,
                        "inbox": m.inbox,
                        "entries": [e.model_dump() for e in body.entries],
                    }
                )
            except (ValueError, CollisionError) as e:
                raise HTTPException(status_code=422, detail=str(e)) from e
            return fresh

        manifest = store.mutate(replace_all, body.expected_version)
        return ManifestModel(**manifest.to_dict())

    @app.post("/api/assign", response_model=AssignResponse)
    def post_assign(body: AssignRequest):
        path = _resolve(body.file)

        def apply(m: Manifest) -> Manifest:
            if body.tag is None:
                return unassign(m, str(path))
            if body.subject is None:
                raise HTTPException(status_code=422, detail="subject is required")
            try:
                return assign(m, str(path), body.subject, body.tag)
            except CollisionError as e:
                raise HTTPException(status_code=409, detail=str(e)) from e
            except ValueError as e:
                raise HTTPException(status_code=422, detail=str(e)) from e

        manifest = store.mutate(apply, body.expected_version)
        entry = manifest.entry_for(str(path))
        return AssignResponse(
            version=manifest.version,
            entry=ManifestEntryModel(
                input_path=entry.input_path, subject_id=entry.subject_id,
                tag=entry.tag, status=entry.status,
            ) if entry else None,
        )

    @app.post("/api/commit", response_model=CommitResponse)
    def post_commit(body: CommitRequest):
        def apply(m: Manifest):
            return commit(m, output_root)

        manifest, report = store.mutate(apply, body.expected_version)
        return CommitResponse(
            version=manifest.version,
            statuses=[EntryStatus(input_path=p, status=s) for p, s in report.statuses],
            ok=report.ok,
        )

    ui = Path(ui_dir) if ui_dir else Path(__file__).parent / "static"
    if ui.is_dir() and (ui / "index.html").exists():
        app.mount("/", StaticFiles(directory=ui, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index():
            return _FALLBACK_PAGE

    return app
