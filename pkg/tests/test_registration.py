import math
import time

import numpy as np
import pytest

from lesionkit.registration import (
    InsufficientOverlapError,
    RegistrationOptions,
    mutual_information,
    register_rigid,
)
from lesionkit.transforms import RigidTransform, compose, invert
from lesionkit.volume import Volume, resample

from conftest import smooth_phantom


def binned_entropy(data, bins=32, percentiles=(0.5, 99.5)):
    """Independent oracle: entropy of the clamped-binned histogram, in nats."""
    vals = np.sort(data.ravel().astype(np.float64))
    lo, hi = np.percentile(vals, percentiles)
    if hi - lo <= 0:
        return 0.0
    idx = np.clip(np.floor((vals - lo) * bins / (hi - lo)), 0, bins - 1)
    counts = np.array([(idx == b).sum() for b in range(bins)], dtype=np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def rotation_angle_deg(R):
    c = (np.trace(R) - 1.0) / 2.0
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


class TestMutualInformation:
    def test_self_mi_equals_binned_entropy(self, phantom32):
        mi = mutual_information(phantom32, phantom32, None, bins=32)
        h = binned_entropy(phantom32.data, bins=32)
        assert abs(mi - h) < 1e-9

    def test_independent_noise_mi_near_zero(self):
        rng = np.random.default_rng(11)
        a = Volume(rng.uniform(0, 1, size=(64, 64, 64)), np.eye(4))
        b = Volume(rng.uniform(0, 1, size=(64, 64, 64)), np.eye(4))
        assert mutual_information(a, b, None, bins=32) < 0.05

    def test_constant_fixed_gives_zero(self, phantom32):
        const = Volume(np.full((32, 32, 32), 7.0), np.eye(4))
        assert mutual_information(const, phantom32, None, bins=32) == 0.0

    def test_nonnegative_under_misalignment(self, phantom32):
        t = RigidTransform(translation=(4.0, -3.0, 2.0))
        assert mutual_information(phantom32, phantom32, t, bins=32) >= 0.0

    def test_insufficient_overlap_raises(self, phantom32):
        t = RigidTransform(translation=(500.0, 0.0, 0.0))
        with pytest.raises(InsufficientOverlapError):
            mutual_information(phantom32, phantom32, t)

    def test_bins_validated(self, phantom32):
        with pytest.raises(ValueError):
            mutual_information(phantom32, phantom32, None, bins=1)

    def test_invariant_under_bin_preserving_rescale(self, phantom32):
        # affine intensity rescaling preserves every voxel's bin assignment
        scaled = phantom32.with_data(phantom32.data * 3.0 + 50.0)
        a = mutual_information(phantom32, phantom32, None, bins=16)
        b = mutual_information(scaled, scaled, None, bins=16)
        assert abs(a - b) < 1e-9


class TestRegisterRigid:
    def test_self_registration_recovers_identity(self, phantom32):
        res = register_rigid(phantom32, phantom32)
        t = res.transform
        assert np.max(np.abs(t.translation)) < 0.1
        assert rotation_angle_deg(t.rotation_matrix) < 0.1
        assert res.converged

    def test_translation_recovery(self, phantom64):
        t_syn = RigidTransform(translation=(3.0, -2.0, 1.0))
        moving = resample(phantom64, phantom64.grid, t_syn)
        res = register_rigid(phantom64, moving)
        expected = invert(t_syn).with_center(res.transform.center)
        got = res.transform
        err = np.abs(np.array(got.translation) - np.array(expected.translation))
        assert np.all(err < 0.25), f"translation error {err}"

    def test_rotation_recovery(self, phantom64):
        center = (31.5, 31.5, 31.5)
        t_syn = RigidTransform(rotation=(0, 0, math.radians(5.0)), center=center)
        moving = resample(phantom64, phantom64.grid, t_syn)
        res = register_rigid(phantom64, moving)
        residual = compose(t_syn, res.transform)
        assert rotation_angle_deg(residual.matrix[:3, :3]) < 0.5

    def test_monotone_mi_within_levels(self, phantom32):
        t_syn = RigidTransform(translation=(2.0, 1.0, -1.5))
        moving = resample(phantom32, phantom32.grid, t_syn)
        res = register_rigid(phantom32, moving)
        for rec in res.levels:
            assert rec.mi_after >= rec.mi_before

    def test_final_mi_at_least_initialization(self, phantom32):
        t_syn = RigidTransform(rotation=(0.02, -0.03, 0.05), translation=(1.5, -2.0, 1.0),
                               center=(15.5, 15.5, 15.5))
        moving = resample(phantom32, phantom32.grid, t_syn)
        res = register_rigid(phantom32, moving)
        assert res.final_mi >= res.levels[-1].mi_before

    def test_requires_canonical_orientation(self, phantom32):
        flipped = Volume(phantom32.data, np.diag([-1.0, 1, 1, 1]))
        with pytest.raises(ValueError, match="canonical"):
            register_rigid(flipped, phantom32)

    def test_approximate_symmetry(self):
        a = smooth_phantom(dims=(48, 48, 48), n_blobs=16, seed=21)
        t_syn = RigidTransform(rotation=(0, 0, math.radians(3)), translation=(2.0, -1.0, 1.5),
                               center=(23.5, 23.5, 23.5))
        b = resample(a, a.grid, t_syn)
        ab = register_rigid(a, b).transform
        ba = register_rigid(b, a).transform
        # registering A->B then inverting agrees with registering B->A
        residual = compose(ab, ba)
        disp = residual.apply(np.array([23.5, 23.5, 23.5])) - (23.5, 23.5, 23.5)
        assert np.max(np.abs(disp)) < 0.5


@pytest.mark.slow
def test_recovery_speed(phantom64):
    t_syn = RigidTransform(rotation=(0, math.radians(4), 0), translation=(5.0, 2.0, -3.0),
                           center=(31.5, 31.5, 31.5))
    moving = resample(phantom64, phantom64.grid, t_syn)
    t0 = time.monotonic()
    register_rigid(phantom64, moving)
    assert time.monotonic() - t0 < 30.0
