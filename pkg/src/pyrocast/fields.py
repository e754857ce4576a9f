"""Gridded monthly fields: data model and binary raster container.

A simulation run holds 30 years (360 months) of four variables on one grid:
burnt area fraction, leaf area index, soil moisture and surface temperature.
Ocean points carry the value 0 everywhere; the land mask travels with every
serialized file.

Container layout (PYRO1, little-endian):

    magic  b"PYRO1"
    u32    height
    u32    width
    u32    n_variables
    u32    n_timesteps
    bytes  land mask, one bit per cell, row-major, packed big-endian per byte
    f32    planes ordered [variable][time][row][col]

Run metadata (identifier, ignition regime, free-text description) lives in a
JSON sidecar next to the binary file, named ``<file>.json``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, TruncatedFileError

MAGIC = b"PYRO1"
MONTHS_PER_RUN = 360
VARIABLES = ("burnt_area", "lai", "soil_moisture", "temperature")


@dataclass(frozen=True)
class GridSpec:
    """Grid extents.  Both must be even and at least 4 so pooling can halve them."""

    height: int
    width: int

    def __post_init__(self) -> None:
        for name, extent in (("height", self.height), ("width", self.width)):
            if extent < 4 or extent % 2:
                raise DimensionError(
                    f"grid {name} must be an even extent of at least 4, got {extent}")

    @property
    def cells(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass
class LandMask:
    """Boolean land/ocean partition of a grid."""

    grid: GridSpec
    land: np.ndarray

    def __post_init__(self) -> None:
        self.land = np.asarray(self.land, dtype=bool)
        if self.land.shape != self.grid.shape:
            raise DimensionError(
                f"mask shape {self.land.shape} does not match grid {self.grid.shape}")

    @property
    def land_count(self) -> int:
        return int(self.land.sum())

    def packed(self) -> bytes:
        return np.packbits(self.land.ravel()).tobytes()

    @staticmethod
    def unpack(grid: GridSpec, raw: bytes) -> "LandMask":
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=grid.cells)
        return LandMask(grid, bits.astype(bool).reshape(grid.shape))


@dataclass
class FieldSnapshot:
    """One variable at one calendar month (1-based, 1..360)."""

    variable: str
    month: int
    values: np.ndarray


@dataclass
class SimulationRun:
    """All four variables over a full 360-month run."""

    run_id: str
    grid: GridSpec
    data: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if set(self.data) != set(VARIABLES):
            raise FormatError(
                f"run must carry exactly the variables {VARIABLES}, got {sorted(self.data)}")
        for name in VARIABLES:
            arr = np.asarray(self.data[name], dtype=np.float32)
            if arr.shape != (MONTHS_PER_RUN, *self.grid.shape):
                raise DimensionError(
                    f"variable {name} has shape {arr.shape}, expected "
                    f"({MONTHS_PER_RUN}, {self.grid.height}, {self.grid.width})")
            if not np.all(np.isfinite(arr)):
                raise FormatError(f"variable {name} contains non-finite values")
            self.data[name] = arr

    @property
    def months(self) -> int:
        return MONTHS_PER_RUN

    def series(self, variable: str) -> np.ndarray:
        """The full (360, H, W) stack; index 0 is calendar month 1."""
        return self.data[variable]

    def snapshot(self, variable: str, month: int) -> FieldSnapshot:
        """Fetch one month by its 1-based calendar index."""
        if not 1 <= month <= MONTHS_PER_RUN:
            raise DimensionError(f"month {month} outside 1..{MONTHS_PER_RUN}")
        return FieldSnapshot(variable, month, self.data[variable][month - 1])


def apply_mask(values: np.ndarray, mask: LandMask) -> np.ndarray:
    """Zero ocean cells.  Accepts (H, W) or any (..., H, W) stack."""
    values = np.asarray(values, dtype=np.float32)
    if values.shape[-2:] != mask.grid.shape:
        raise DimensionError(
            f"field shape {values.shape} does not end in grid {mask.grid.shape}")
    return np.where(mask.land, values, np.float32(0.0))


# ---------------------------------------------------------------------------
# serialization

_HEADER = struct.Struct("<4I")


def save_raster(path: str | Path, mask: LandMask, planes: dict[str, np.ndarray],
                metadata: dict | None = None) -> None:
    """Write named (T, H, W) planes plus the mask; T is shared by all."""
    path = Path(path)
    names = list(planes)
    steps = {a.shape[0] for a in planes.values()}
    if len(steps) != 1:
        raise DimensionError("all variables must share one timestep count")
    n_t = steps.pop()
    grid = mask.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(grid.height, grid.width, len(names), n_t))
        fh.write(mask.packed())
        for name in names:
            arr = np.ascontiguousarray(planes[name], dtype="<f4")
            if arr.shape != (n_t, grid.height, grid.width):
                raise DimensionError(f"plane {name} has shape {arr.shape}")
            fh.write(arr.tobytes())
    sidecar = dict(metadata or {})
    sidecar.setdefault("variables", names)
    sidecar["grid"] = [grid.height, grid.width]
    sidecar["months"] = n_t
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_raster(path: str | Path) -> tuple[LandMask, dict[str, np.ndarray], dict]:
    """Read a raster file back.  Raises FormatError on any layout violation."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + _HEADER.size:
        raise TruncatedFileError(f"{path} is shorter than the fixed header")
    if raw[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path} does not start with the {MAGIC!r} magic")
    height, width, n_vars, n_t = _HEADER.unpack_from(raw, len(MAGIC))
    if min(height, width, n_vars, n_t) == 0:
        raise FormatError(f"{path} header declares a zero extent")
    grid = GridSpec(height, width)
    offset = len(MAGIC) + _HEADER.size
    mask_bytes = (grid.cells + 7) // 8
    payload = 4 * n_vars * n_t * grid.cells
    expected = offset + mask_bytes + payload
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path} holds {len(raw)} bytes, layout requires {expected}")
    if len(raw) > expected:
        raise FormatError(f"{path} carries {len(raw) - expected} trailing bytes")
    mask = LandMask.unpack(grid, raw[offset:offset + mask_bytes])
    offset += mask_bytes
    block = np.frombuffer(raw, dtype="<f4", offset=offset)
    block = block.reshape(n_vars, n_t, height, width)

    sidecar_path = Path(str(path) + ".json")
    metadata: dict = {}
    if sidecar_path.exists():
        metadata = json.loads(sidecar_path.read_text())
    names = metadata.get("variables")
    if not names or len(names) != n_vars:
        names = [f"var{i}" for i in range(n_vars)]
    planes = {name: np.array(block[i]) for i, name in enumerate(names)}
    return mask, planes, metadata


def save_run(path: str | Path, run: SimulationRun, mask: LandMask) -> None:
    metadata = dict(run.metadata)
    metadata["run_id"] = run.run_id
    metadata["variables"] = list(VARIABLES)
    save_raster(path, mask, {v: run.data[v] for v in VARIABLES}, metadata)


def load_run(path: str | Path) -> tuple[SimulationRun, LandMask]:
    """Read a full simulation run; the file must carry exactly 4 variables."""
    mask, planes, metadata = load_raster(path)
    if len(planes) != len(VARIABLES):
        raise FormatError(
            f"{path} declares {len(planes)} variables, a run requires {len(VARIABLES)}")
    names = metadata.get("variables", list(VARIABLES))
    if sorted(names) != sorted(VARIABLES):
        raise FormatError(f"{path} variable names {names} do not match {VARIABLES}")
    first = next(iter(planes.values()))
    if first.shape[0] != MONTHS_PER_RUN:
        raise FormatError(
            f"{path} holds {first.shape[0]} months, a run requires {MONTHS_PER_RUN}")
    run_id = metadata.get("run_id", Path(path).stem)
    run = SimulationRun(run_id, mask.grid, dict(planes), metadata)
    return run, mask
