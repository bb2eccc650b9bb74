"""Record files, binary image dumps and provenance."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path
import struct
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from pyisac.exceptions import ParseError

_LOGGER = logging.getLogger(__name__)

PathLike = Union[str, Path]

IMAGE_MAGIC = b"PYISACI1"
_IMAGE_HEADER = struct.Struct("<8sIIdd")


def spec_hash(spec: Any) -> str:
    """Return the sha256 of the canonical JSON form of a mapping."""
    canonical = json.dumps(spec, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def provenance(digest: str, seed: int) -> Dict[str, Any]:
    """Return the provenance block embedded in every output file."""
    return {"spec_hash": digest, "seed": seed}


def write_jsonl(
    path: PathLike,
    records: Iterable[Dict[str, Any]],
    header: Optional[Dict[str, Any]] = None,
) -> int:
    """Write newline-delimited JSON records, returning the record count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        if header is not None:
            fp.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for record in records:
            fp.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    _LOGGER.debug("Wrote %d records to %s", count, path)
    return count


def read_jsonl(path: PathLike) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (line number, record) pairs, skipping blank lines."""
    with open(path, encoding="utf-8") as fp:
        for line_number, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as ex:
                raise ParseError(f"Invalid JSON [{ex.msg}]", line_number) from ex
            if not isinstance(record, dict):
                raise ParseError("Record is not an object", line_number)
            yield line_number, record


def require(record: Dict[str, Any], key: str, line_number: int) -> Any:
    """Return record[key] or raise a ParseError naming the key."""
    try:
        return record[key]
    except KeyError as ex:
        raise ParseError(f"Missing field [{key}]", line_number) from ex


def write_csv(
    path: PathLike,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    meta: Dict[str, Any],
) -> None:
    """Write a CSV file whose first line is a provenance comment."""
    with open(path, "w", encoding="utf-8", newline="") as fp:
        comment = ", ".join(f"{key}={meta[key]}" for key in sorted(meta))
        fp.write(f"# {comment}\n")
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)


def read_csv(path: PathLike) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
    """Return (provenance, rows) of a file written by write_csv."""
    with open(path, encoding="utf-8", newline="") as fp:
        first = fp.readline()
        if not first.startswith("# "):
            raise ParseError("Missing provenance comment", 1)
        meta = dict(
            item.split("=", 1) for item in first[2:].strip().split(", ") if item
        )
        return meta, list(csv.DictReader(fp))


def write_image_dump(
    path: PathLike,
    pixels: NDArray[Any],
    ranges: NDArray[Any],
    angles: NDArray[Any],
    f0: float,
    bs: float,
    meta: Dict[str, Any],
) -> None:
    """Write a complex image: header, axes, provenance, row-major complex64."""
    n_r, n_a = pixels.shape
    info = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(_IMAGE_HEADER.pack(IMAGE_MAGIC, n_r, n_a, f0, bs))
        fp.write(np.asarray(ranges, dtype="<f8").tobytes())
        fp.write(np.asarray(angles, dtype="<f8").tobytes())
        fp.write(struct.pack("<I", len(info)))
        fp.write(info)
        fp.write(np.ascontiguousarray(pixels, dtype="<c8").tobytes())


def read_image_dump(path: PathLike) -> Dict[str, Any]:
    """Read a file written by write_image_dump."""
    data = Path(path).read_bytes()
    if len(data) < _IMAGE_HEADER.size:
        raise ParseError(f"Truncated image dump [{path}]")
    magic, n_r, n_a, f0, bs = _IMAGE_HEADER.unpack_from(data, 0)
    if magic != IMAGE_MAGIC:
        raise ParseError(f"Bad magic [{magic!r}] in [{path}]")
    offset = _IMAGE_HEADER.size
    if len(data) < offset + 8 * (n_r + n_a) + 4:
        raise ParseError(f"Truncated image dump [{path}]")
    ranges = np.frombuffer(data, dtype="<f8", count=n_r, offset=offset)
    offset += 8 * n_r
    angles = np.frombuffer(data, dtype="<f8", count=n_a, offset=offset)
    offset += 8 * n_a
    (info_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if len(data) < offset + info_len:
        raise ParseError(f"Truncated image dump [{path}]")
    try:
        meta = json.loads(data[offset : offset + info_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as ex:
        raise ParseError(f"Corrupt metadata in image dump [{path}]") from ex
    if not isinstance(meta, dict):
        raise ParseError(f"Image dump metadata is not an object [{path}]")
    offset += info_len
    if len(data) != offset + 8 * n_r * n_a:
        raise ParseError(f"Image dump size does not match its header [{path}]")
    pixels = np.frombuffer(data, dtype="<c8", count=n_r * n_a, offset=offset)
    return {
        "pixels": pixels.reshape(n_r, n_a),
        "ranges": ranges,
        "angles": angles,
        "f0": f0,
        "bs": bs,
        "meta": meta,
    }


def write_pgm(path: PathLike, values: NDArray[Any], meta: Dict[str, Any]) -> None:
    """Write a [0, 1] image as an 8-bit binary PGM with a provenance comment."""
    n_r, n_a = values.shape
    gray = np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)
    comment = json.dumps(meta, sort_keys=True)
    with open(path, "wb") as fp:
        fp.write(f"P5\n# {comment}\n{n_a} {n_r}\n255\n".encode("ascii"))
        fp.write(gray.tobytes())
