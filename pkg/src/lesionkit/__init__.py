"""lesionkit: modular brain-lesion image analysis.

Three pillars:

* a multi-modal-to-atlas preprocessing pipeline (rigid co-registration,
  atlas registration, skull-stripping, defacing, bias correction,
  normalization),
* an instance-wise segmentation evaluator (connected-component instance
  extraction, overlap matching, panoptic and surface metrics),
* a sequence-tagging service for sorting raw NIfTI files into a canonical
  subject/modality layout, headless or via an HTTP board UI.
"""

__version__ = "0.1.0"

# Schema versions of every on-disk format this package emits.
FORMAT_VERSIONS = {
    "transform": 1,
    "provenance": 1,
    "manifest": 1,
    "report": 1,
    "config": 1,
}

from .transforms import RigidTransform, compose, invert, load_transform, save_transform
from .volume import (
    GridSpec,
    Volume,
    read_nifti,
    reorient_to_canonical,
    resample,
    voxel_to_world,
    world_to_voxel,
    write_nifti,
)

__all__ = [
    "FORMAT_VERSIONS",
    "GridSpec",
    "RigidTransform",
    "Volume",
    "compose",
    "invert",
    "load_transform",
    "read_nifti",
    "reorient_to_canonical",
    "resample",
    "save_transform",
    "voxel_to_world",
    "world_to_voxel",
    "write_nifti",
]
