import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

import nifti_reference as ref
from lesionkit.tagging.service import create_app


@pytest.fixture()
def service(tmp_path):
    inbox = tmp_path / "inbox"
    inbox.mkdir()
    rng = np.random.default_rng(71)
    for i in range(3):
        arr = rng.normal(40, 8, size=(8, 7, 6)).astype(np.float32)
        ref.write(inbox / f"scan_{i}.nii.gz", arr, gz=True)
    ref.write(inbox / "flat.nii", np.full((5, 4, 3), 7.0, dtype=np.float32))
    (inbox / "readme.txt").write_text("not an image")
    out = tmp_path / "sorted"
    out.mkdir()
    app = create_app(inbox, out)
    return TestClient(app), inbox, out


class TestFilesApi:
    def test_lists_candidates(self, service):
        client, _, _ = service
        r = client.get("/api/files")
        assert r.status_code == 200
        files = r.json()
        kinds = {f["name"]: f["kind"] for f in files}
        assert sum(1 for k in kinds.values() if k == "nifti") == 4
        assert kinds["readme.txt"] == "unclassifiable"
        nifti = next(f for f in files if f["name"] == "scan_0.nii.gz")
        assert nifti["dims"] == [8, 7, 6]
        assert nifti["preview_url"] == "/api/files/scan_0.nii.gz/slice.png"

    def test_slice_png_dims(self, service):
        client, _, _ = service
        r = client.get("/api/files/flat.nii/slice.png")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        img = Image.open(io.BytesIO(r.content))
        assert img.size == (5, 4)  # (dimx, dimy)
        # constant volume renders uniform gray
        assert set(np.asarray(img).ravel()) == {128}

    def test_slice_unknown_file_404(self, service):
        client, _, _ = service
        assert client.get("/api/files/nope.nii/slice.png").status_code == 404

    def test_path_traversal_rejected(self, service):
        client, _, _ = service
        assert client.get("/api/files/..%2Fsecret/slice.png").status_code == 404


class TestAssignApi:
    def test_assign_then_manifest_visible(self, service):
        client, inbox, _ = service
        r0 = client.get("/api/manifest")
        v0 = r0.json()["version"]
        r = client.post(
            "/api/assign",
            json={"file": "scan_0.nii.gz", "subject": "sub-01", "tag": "t1c"},
        )
        assert r.status_code == 200
        body = r.json()
        assert body["version"] == v0 + 1
        assert body["entry"]["status"] == "pending"
        m = client.get("/api/manifest").json()
        assert m["version"] == v0 + 1
        assert len(m["entries"]) == 1
        assert m["entries"][0]["subject_id"] == "sub-01"

    def test_collision_409_names_conflict(self, service):
        client, _, _ = service
        client.post("/api/assign", json={"file": "scan_0.nii.gz", "subject": "s1", "tag": "t1c"})
        r = client.post("/api/assign", json={"file": "scan_1.nii.gz", "subject": "s1", "tag": "t1c"})
        assert r.status_code == 409
        assert "scan_0.nii.gz" in r.json()["detail"]

    def test_version_conflict_409(self, service):
        client, _, _ = service
        client.post("/api/assign", json={"file": "scan_0.nii.gz", "subject": "s1", "tag": "t1c"})
        r = client.post(
            "/api/assign",
            json={"file": "scan_1.nii.gz", "subject": "s2", "tag": "t1c",
                  "expected_version": 0},
        )
        assert r.status_code == 409
        assert r.json()["detail"]["current_version"] == 1

    def test_unassign_with_null_tag(self, service):
        client, _, _ = service
        client.post("/api/assign", json={"file": "scan_0.nii.gz", "subject": "s1", "tag": "t1c"})
        r = client.post("/api/assign", json={"file": "scan_0.nii.gz", "tag": None})
        assert r.status_code == 200
        assert r.json()["entry"] is None
        assert client.get("/api/manifest").json()["entries"] == []

    def test_state_survives_restart(self, service, tmp_path):
        client, inbox, out = service
        client.post("/api/assign", json={"file": "scan_0.nii.gz", "subject": "s1", "tag": "t2w"})
        fresh = TestClient(create_app(inbox, out))
        m = fresh.get("/api/manifest").json()
        assert len(m["entries"]) == 1
        assert m["entries"][0]["tag"] == "t2w"


class TestManifestPut:
    def test_put_then_get_identical_plus_version_bump(self, service):
        client, inbox, _ = service
        entries = [
            {"input_path": str(inbox / "scan_0.nii.gz"), "subject_id": "a-1",
             "tag": "t1n", "status": "pending"},
            {"input_path": str(inbox / "scan_1.nii.gz"), "subject_id": "a-1",
             "tag": "t2f", "status": "pending"},
        ]
        v0 = client.get("/api/manifest").json()["version"]
        r = client.put("/api/manifest", json={"entries": entries})
        assert r.status_code == 200
        doc = client.get("/api/manifest").json()
        assert doc["version"] == v0 + 1
        assert doc["entries"] == entries

    def test_put_rejects_collisions(self, service):
        client, inbox, _ = service
        entries = [
            {"input_path": str(inbox / "scan_0.nii.gz"), "subject_id": "a", "tag": "t1n"},
            {"input_path": str(inbox / "scan_1.nii.gz"), "subject_id": "a", "tag": "t1n"},
        ]
        assert client.put("/api/manifest", json={"entries": entries}).status_code == 422


class TestCommitApi:
    def test_commit_writes_tree(self, service):
        client, inbox, out = service
        client.post("/api/assign", json={"file": "scan_0.nii.gz", "subject": "sub-01", "tag": "t1c"})
        client.post("/api/assign", json={"file": "scan_1.nii.gz", "subject": "sub-01", "tag": "t2w"})
        r = client.post("/api/commit", json={})
        assert r.status_code == 200
        body = r.json()
        assert body["ok"]
        assert (out / "sub-01" / "sub-01-t1c.nii.gz").exists()
        assert (out / "sub-01" / "sub-01-t2w.nii.gz").exists()
        m = client.get("/api/manifest").json()
        assert all(e["status"] == "committed" for e in m["entries"])

    def test_partial_failure_isolated(self, service):
        client, inbox, out = service
        (out / "sub-01").mkdir()
        (out / "sub-01" / "sub-01-t1c.nii.gz").write_bytes(b"occupied")
        client.post("/api/assign", json={"file": "scan_0.nii.gz", "subject": "sub-01", "tag": "t1c"})
        client.post("/api/assign", json={"file": "scan_1.nii.gz", "subject": "sub-01", "tag": "t2w"})
        body = client.post("/api/commit", json={}).json()
        statuses = {s["input_path"]: s["status"] for s in body["statuses"]}
        assert statuses[str(inbox / "scan_0.nii.gz")].startswith("failed")
        assert statuses[str(inbox / "scan_1.nii.gz")] == "committed"


class TestRoot:
    def test_fallback_page_served(self, service):
        client, _, _ = service
        r = client.get("/")
        assert r.status_code == 200
        assert "lesionkit" in r.text
