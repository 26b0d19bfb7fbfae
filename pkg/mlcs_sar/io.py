"""On-disk formats for grids, compressed data, look stacks, targets and images.

Binary grid: a little-endian header ``<4sIIII`` (magic b"MLCS", version,
n_azimuth, n_range, dtype tag) followed by azimuth-major samples, complex64
(tag 1) or float32 (tag 2). Several grids may follow each other in one file.
"""

import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from PIL import Image

from .core import ComplexGrid, LookStack, SamplingMask
from .errors import ShapeError
from .sim import CompressedData, PointTarget

MAGIC = b"MLCS"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIII")
DTYPE_COMPLEX = 1
DTYPE_REAL = 2
_DTYPES = {DTYPE_COMPLEX: np.dtype("<c8"), DTYPE_REAL: np.dtype("<f4")}

CSV_FLOAT_FORMAT = "%.12e"

TARGET_COLUMNS = ["azimuth_m", "range_m", "amplitude_re", "amplitude_im"]

PathLike = Union[str, Path]


def _as_array(grid) -> np.ndarray:
    if isinstance(grid, (ComplexGrid, LookStack)):
        return grid.data
    if isinstance(grid, np.ndarray):
        return grid
    return np.asarray(getattr(grid, "values", grid))


def _write_one(f: BinaryIO, array: np.ndarray) -> None:
    if array.ndim != 2:
        raise ShapeError(f"binary grids are 2D, got shape {array.shape}")
    tag = DTYPE_COMPLEX if np.iscomplexobj(array) else DTYPE_REAL
    f.write(HEADER.pack(MAGIC, FORMAT_VERSION, array.shape[0], array.shape[1], tag))
    f.write(np.ascontiguousarray(array, dtype=_DTYPES[tag]).tobytes())


def _read_one(f: BinaryIO, path: PathLike) -> np.ndarray:
    header = f.read(HEADER.size)
    if len(header) != HEADER.size:
        raise ValueError(f"{path}: truncated grid header")
    magic, version, n_az, n_rg, tag = HEADER.unpack(header)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a grid file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported grid format version {version}")
    if tag not in _DTYPES:
        raise ValueError(f"{path}: unknown dtype tag {tag}")
    dtype = _DTYPES[tag]
    payload = f.read(n_az * n_rg * dtype.itemsize)
    if len(payload) != n_az * n_rg * dtype.itemsize:
        raise ValueError(f"{path}: truncated grid payload")
    return np.frombuffer(payload, dtype=dtype).reshape(n_az, n_rg)


def write_grids(path: PathLike, grids: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        for grid in grids:
            _write_one(f, _as_array(grid))
    return path


def write_grid(path: PathLike, grid) -> Path:
    """Write a ComplexGrid, MultilookImage or 2D array"""
    return write_grids(path, [grid])


def read_grids(path: PathLike) -> List[np.ndarray]:
    grids = []
    size = Path(path).stat().st_size
    with open(path, "rb") as f:
        while f.tell() < size:
            grids.append(_read_one(f, path))
    return grids


def read_grid(path: PathLike) -> np.ndarray:
    grids = read_grids(path)
    if len(grids) != 1:
        raise ValueError(f"{path}: expected one grid, found {len(grids)}")
    return grids[0]


def write_lookstack(
    directory: PathLike,
    looks: LookStack,
    bands: Sequence[Sequence[int]],
    params_digest: str = "",
) -> Tuple[Path, Path]:
    """L consecutive grids in looks.mlcs plus the looks.json manifest"""
    directory = Path(directory)
    grids = write_grids(directory / "looks.mlcs", looks.data)
    manifest = directory / "looks.json"
    with open(manifest, "w") as f:
        json.dump({
            "look_count": looks.look_count,
            "look_shape": list(looks.look_shape),
            "bands": [list(map(int, band)) for band in bands],
            "params_digest": params_digest,
        }, f, indent=2)
    return grids, manifest


def read_lookstack(directory: PathLike) -> Tuple[LookStack, dict]:
    directory = Path(directory)
    with open(directory / "looks.json", "r") as f:
        manifest = json.load(f)
    grids = read_grids(directory / "looks.mlcs")
    if len(grids) != manifest["look_count"]:
        raise ValueError(
            f"{directory}: manifest lists {manifest['look_count']} looks, file holds {len(grids)}"
        )
    return LookStack(np.stack(grids)), manifest


def write_compressed(directory: PathLike, data: CompressedData) -> List[Path]:
    """Retained indices (uint64), values (complex64) and a JSON sidecar"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mask_path = directory / "mask.u64"
    values_path = directory / "values.c64"
    meta_path = directory / "compressed.json"
    data.mask.retained.astype("<u8").tofile(mask_path)
    data.values.astype("<c8").tofile(values_path)
    with open(meta_path, "w") as f:
        json.dump({
            "shape": list(data.full_shape),
            "retained": len(data.mask),
            "rate": data.mask.rate,
        }, f, indent=2)
    return [mask_path, values_path, meta_path]


def read_compressed(directory: PathLike) -> CompressedData:
    directory = Path(directory)
    with open(directory / "compressed.json", "r") as f:
        meta = json.load(f)
    retained = np.fromfile(directory / "mask.u64", dtype="<u8").astype(np.int64)
    values = np.fromfile(directory / "values.c64", dtype="<c8")
    if retained.size != meta["retained"]:
        raise ValueError(f"{directory}: mask holds {retained.size} indices, sidecar says {meta['retained']}")
    return CompressedData(values, SamplingMask(retained, tuple(meta["shape"])))


def write_targets(path: PathLike, targets: Iterable[PointTarget]) -> Path:
    """Plain-text target list: one scatterer per line, offsets from the scene centre"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [
        (t.azimuth_pos_m, t.range_pos_m, complex(t.amplitude).real, complex(t.amplitude).imag)
        for t in targets
    ]
    frame = pd.DataFrame(rows, columns=TARGET_COLUMNS)
    with open(path, "w") as f:
        f.write("# point targets: offsets in metres from the scene centre\n")
        frame.to_csv(f, index=False, float_format="%.9g")
    return path


def read_targets(path: PathLike) -> List[PointTarget]:
    frame = pd.read_csv(path, comment="#", skipinitialspace=True)
    missing = set(TARGET_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: target list lacks columns {sorted(missing)}")
    return [
        PointTarget(float(row.azimuth_m), float(row.range_m),
                    complex(row.amplitude_re, row.amplitude_im))
        for row in frame.itertuples(index=False)
    ]


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    """CSV with a fixed float format so reruns produce identical bytes"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def to_graymap(grid, dynamic_range_db: float = 40.0) -> np.ndarray:
    """8-bit log-magnitude image; the peak maps to 255, peak - range and below to 0"""
    if dynamic_range_db <= 0:
        raise ValueError(f"dynamic range must be positive, got {dynamic_range_db}")
    magnitude = np.abs(_as_array(grid)).astype(float)
    if magnitude.ndim != 2:
        raise ShapeError(f"graymap export needs a 2D image, got shape {magnitude.shape}")
    peak = magnitude.max() if magnitude.size else 0.0
    if peak == 0.0:
        return np.zeros(magnitude.shape, dtype=np.uint8)
    with np.errstate(divide="ignore"):
        level_db = 20.0 * np.log10(magnitude / peak)
    scaled = np.clip((level_db + dynamic_range_db) / dynamic_range_db, 0.0, 1.0)
    return np.round(255.0 * scaled).astype(np.uint8)


def write_pgm(path: PathLike, grid, dynamic_range_db: float = 40.0) -> Path:
    """Binary (P5) portable graymap; rows are azimuth lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_graymap(grid, dynamic_range_db)).save(path, format="PPM")
    return path
