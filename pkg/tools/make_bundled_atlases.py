"""Regenerate the bundled desk-scale atlas stand-ins.

The shipped `sri24` / `mni152` files are synthetic head-shaped phantoms on
RAS grids, deterministic for a fixed seed.  They define usable target grids
for tests and demos; they are not the real atlases.

Usage: python tools/make_bundled_atlases.py
"""

from pathlib import Path

import numpy as np

from lesionkit.volume import Volume, write_nifti

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "lesionkit" / "atlases"


def head_phantom(dims, spacing, seed):
    rng = np.random.default_rng(seed)
    grids = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")
    c = [(d - 1) / 2.0 for d in dims]
    radii = [0.42 * d for d in dims]

    head = sum(((g - ci) / r) ** 2 for g, ci, r in zip(grids, c, radii))
    data = np.where(head <= 1.0, 60.0, 0.0)

    brain_radii = [0.33 * d for d in dims]
    brain = sum(((g - ci) / r) ** 2 for g, ci, r in zip(grids, c, brain_radii))
    data += np.where(brain <= 1.0, 40.0, 0.0)

    for _ in range(18):
        bc = [rng.uniform(0.3, 0.7) * d for d in dims]
        sigma = rng.uniform(2.0, 6.0)
        amp = rng.uniform(10.0, 35.0)
        d2 = sum((g - ci) ** 2 for g, ci in zip(grids, bc))
        data += np.where(brain <= 1.0, amp * np.exp(-d2 / (2 * sigma**2)), 0.0)

    affine = np.diag([*spacing, 1.0])
    affine[:3, 3] = [-(d - 1) / 2.0 * s for d, s in zip(dims, spacing)]
    return Volume(data, affine)


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    write_nifti(head_phantom((64, 64, 42), (3.0, 3.0, 3.5), seed=24), OUT_DIR / "sri24.nii.gz")
    write_nifti(head_phantom((60, 72, 60), (3.2, 3.0, 3.0), seed=152), OUT_DIR / "mni152.nii.gz")
    print(f"wrote atlases to {OUT_DIR}")


if __name__ == "__main__":
    main()
