"""Deterministic npz-style archives with a format tag.

`numpy.savez` stamps zip members with the current time, which breaks
byte-identical outputs for identical inputs.  This writer pins member
timestamps and ordering so equal contents produce equal files; readers can
still use plain `numpy.load`.
"""

from __future__ import annotations

import io
import zipfile

import numpy as np

from .errors import DataFormatError

_EPOCH = (1980, 1, 1, 0, 0, 0)
_TAG_MEMBER = "__format__"


def write_archive(path, format_tag: str, arrays: dict) -> None:
    items = {_TAG_MEMBER: np.frombuffer(format_tag.encode(), dtype=np.uint8)}
    items.update(arrays)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(items):
            buf = io.BytesIO()
            np.lib.format.write_array(
                buf, np.ascontiguousarray(items[name]), allow_pickle=False
            )
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            zf.writestr(info, buf.getvalue())


def read_archive(path, expected_tag: str) -> dict:
    try:
        with np.load(path, allow_pickle=False) as npz:
            data = {name: npz[name] for name in npz.files}
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise DataFormatError(f"cannot read archive {path}: {exc}") from exc
    tag_arr = data.pop(_TAG_MEMBER, None)
    tag = bytes(tag_arr).decode() if tag_arr is not None else "<missing>"
    if tag != expected_tag:
        raise DataFormatError(
            f"archive {path} has format tag {tag!r}, expected {expected_tag!r}"
        )
    return data
