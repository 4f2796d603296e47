"""Independent NIfTI-1 fixture encoder for tests.

Builds files byte-by-byte with struct.pack straight from the published
header layout, deliberately sharing no code with lesionkit's reader/writer,
so round-trip tests exercise two independent implementations of the format.
"""

import gzip
import struct

import numpy as np

DTYPE_CODES = {
    "uint8": (2, 8),
    "int16": (4, 16),
    "int32": (8, 32),
    "float32": (16, 32),
    "float64": (64, 64),
    "uint16": (512, 16),
}


def encode(
    array: np.ndarray,
    spacing=(1.0, 1.0, 1.0),
    srow=None,
    dtype="float32",
    qform=None,
    scl=(1.0, 0.0),
    fourth_dim=False,
    magic=b"n+1\x00",
) -> bytes:
    """Serialize ``array`` as a single-file NIfTI-1 byte string.

    ``srow`` is a 3x4 s-form (enables sform_code=1); ``qform`` a dict with
    quaternion b/c/d + offsets (enables qform_code=1).  ``fourth_dim`` adds a
    singleton 4th axis to the dim field.
    """
    code, bitpix = DTYPE_CODES[dtype]
    dims = array.shape
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    if fourth_dim:
        struct.pack_into("<8h", hdr, 40, 4, dims[0], dims[1], dims[2], 1, 1, 1, 1)
    else:
        struct.pack_into("<8h", hdr, 40, 3, dims[0], dims[1], dims[2], 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, code, bitpix)
    struct.pack_into(
        "<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2], 1.0, 1.0, 1.0, 1.0
    )
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, scl[0], scl[1])
    qform_code = 1 if qform else 0
    sform_code = 1 if srow is not None else 0
    struct.pack_into("<2h", hdr, 252, qform_code, sform_code)
    if qform:
        struct.pack_into(
            "<6f", hdr, 256,
            qform["b"], qform["c"], qform["d"],
            qform["ox"], qform["oy"], qform["oz"],
        )
    if srow is not None:
        flat = [float(x) for row in srow for x in row]
        struct.pack_into("<12f", hdr, 280, *flat)
    hdr[344:348] = magic
    body = np.asarray(array, dtype=dtype).tobytes(order="F")
    return bytes(hdr) + b"\x00" * 4 + body


def write(path, array, gz=False, **kw) -> None:
    blob = encode(array, **kw)
    if gz:
        with open(path, "wb") as f:
            with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as g:
                g.write(blob)
    else:
        with open(path, "wb") as f:
            f.write(blob)
