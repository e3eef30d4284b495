"""Observation ingestion and binning into a partially observed tensor."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from .constants import TIME_COLUMN
from .space import Grid, UnknownCategoryError


if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping, Sequence

    from numpy.typing import NDArray

    from .space import Coordinate


__all__ = [
    "ObservationError",
    "ObservationSet",
    "SparseTensor",
    "bin_observations",
    "density",
    "load_observations",
    "read_configurations",
]

logger = logging.getLogger(__name__)


class ObservationError(ValueError):
    """Raised when an observation dataset is malformed."""

    def __init__(self, message: str, row: int | None = None) -> None:
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Executed configurations and their measured times (seconds).

    ``frame`` holds one column per grid parameter in mode order: floats for
    numerical parameters and string labels for categorical ones.
    """

    frame: pd.DataFrame
    times: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Check that every configuration has a positive time."""
        if len(self.frame) != len(self.times):
            raise ObservationError(
                f"{len(self.frame)} configurations but {len(self.times)} times."
            )
        bad = np.flatnonzero(~(self.times > 0))
        if bad.size:
            raise ObservationError(
                f"time must be positive, got {self.times[bad[0]]!r} "
                f"({bad.size} non-positive rows)",
                row=int(bad[0]) + 1,
            )

    def __len__(self) -> int:
        return len(self.times)

    @property
    def names(self) -> tuple[str, ...]:
        """Parameter names in mode order."""
        return tuple(str(c) for c in self.frame.columns)

    def configuration(self, k: int) -> tuple[Coordinate, ...]:
        """Return the k'th configuration as a coordinate tuple."""
        return tuple(self.frame.iloc[k].tolist())

    def to_frame(self) -> pd.DataFrame:
        """Return the configurations with a trailing ``time`` column."""
        frame = self.frame.copy()
        frame[TIME_COLUMN] = self.times
        return frame

    def configurations(self) -> Iterator[tuple[Coordinate, ...]]:
        """Iterate over all configurations in row order."""
        for row in self.frame.itertuples(index=False, name=None):
            yield tuple(row)

    @classmethod
    def from_records(
        cls,
        grid: Grid,
        records: Sequence[Sequence[Coordinate]],
        times: Sequence[float] | NDArray[np.float64],
    ) -> ObservationSet:
        """Build an observation set from in-memory configurations."""
        columns: dict[str, list[Coordinate]] = {name: [] for name in grid.names}
        for row_num, record in enumerate(records, 1):
            if len(record) != grid.ndim:
                raise ObservationError(
                    f"expected {grid.ndim} coordinates, got {len(record)}", row=row_num
                )
            for name, value in zip(grid.names, record, strict=True):
                columns[name].append(value)
        frame = _typed_frame(grid, pd.DataFrame(columns, dtype=object))
        return cls(frame, np.asarray(times, dtype=np.float64))


def _typed_frame(grid: Grid, raw: pd.DataFrame) -> pd.DataFrame:
    """Convert raw columns to floats/labels and validate categorical labels."""
    typed: dict[str, pd.Series] = {}
    for mode, spec in enumerate(grid.specs):
        column = raw[spec.name]
        if spec.is_numerical:
            values = pd.to_numeric(column, errors="coerce").astype(np.float64)
            bad = np.flatnonzero(~np.isfinite(values.to_numpy()))
            if bad.size:
                raise ObservationError(
                    f"cannot parse '{column.iloc[bad[0]]}' as a number for '{spec.name}'",
                    row=int(bad[0]) + 1,
                )
            typed[spec.name] = values.reset_index(drop=True)
        else:
            labels = column.astype(str).str.strip().reset_index(drop=True)
            for row, label in enumerate(labels, 1):
                try:
                    grid.category_index(mode, label)
                except UnknownCategoryError as exc:
                    raise ObservationError(str(exc), row=row) from exc
            typed[spec.name] = labels
    return pd.DataFrame(typed, columns=list(grid.names))


def read_configurations(path: str | Path, grid: Grid) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Read a configuration CSV keyed by header names.

    Returns:
        Tuple of (raw string frame as read, typed parameter frame).

    Raises:
        ObservationError: If a parameter column is missing or a value is invalid.
    """
    raw = pd.read_csv(
        Path(path).expanduser(),
        dtype=str,
        comment="#",
        skipinitialspace=True,
        keep_default_na=False,
        encoding="utf-8",
    )
    raw.columns = [str(c).strip() for c in raw.columns]
    for name in grid.names:
        if name not in raw.columns:
            raise ObservationError(f"missing column '{name}' in '{path}'")
    return raw, _typed_frame(grid, raw)


def load_observations(path: str | Path, grid: Grid) -> ObservationSet:
    """Load an observation CSV with one column per parameter plus ``time``.

    Columns are matched by header name, so column order is free. Lines
    starting with ``#`` before the header are comments.

    Args:
        path: CSV file path.
        grid: Grid whose parameter names and kinds validate the columns.

    Returns:
        The parsed observation set.

    Raises:
        ObservationError: On a missing column, an unparseable number, an
            unknown category or a non-positive time; the message names the
            1-based data row.
    """
    raw, frame = read_configurations(path, grid)
    if TIME_COLUMN not in raw.columns:
        raise ObservationError(f"missing column '{TIME_COLUMN}' in '{path}'")

    times = pd.to_numeric(raw[TIME_COLUMN], errors="coerce").to_numpy(dtype=np.float64)
    unparsed = np.flatnonzero(np.isnan(times))
    if unparsed.size:
        raise ObservationError(
            f"cannot parse time '{raw[TIME_COLUMN].iloc[unparsed[0]]}'", row=int(unparsed[0]) + 1
        )
    observations = ObservationSet(frame, times)
    logger.info("Loaded %d observations from %s", len(observations), path)
    return observations


@dataclass(frozen=True, eq=False)
class SparseTensor:
    """Partially observed tensor of mean execution times.

    Attributes:
        dims: Tensor shape I_1..I_d.
        indices: Observed multi-indices (|Ω| x d), sorted lexicographically.
        values: Mean raw time per observed cell (strictly positive).
        counts: Number of observations binned to each cell.
        dropped: Number of out-of-domain observations left out when binning.
    """

    dims: tuple[int, ...]
    indices: NDArray[np.int64]
    values: NDArray[np.float64]
    counts: NDArray[np.int64]
    dropped: int = 0

    def __post_init__(self) -> None:
        """Validate shapes, bounds and positivity."""
        nnz = len(self.values)
        if self.indices.shape != (nnz, len(self.dims)):
            raise ValueError(f"indices must have shape ({nnz}, {len(self.dims)})")
        if self.counts.shape != (nnz,):
            raise ValueError("counts must match values")
        if nnz:
            if np.any(self.indices < 0) or np.any(self.indices >= np.asarray(self.dims)):
                raise ValueError("tensor index out of bounds")
            if np.any(~(self.values > 0)):
                raise ValueError("tensor values must be strictly positive")
            if np.any(self.counts < 1):
                raise ValueError("counts must be at least 1")
        for arr in (self.indices, self.values, self.counts):
            arr.setflags(write=False)

    @property
    def nnz(self) -> int:
        """Number of observed cells |Ω|."""
        return len(self.values)

    @property
    def ndim(self) -> int:
        """Number of modes d."""
        return len(self.dims)

    def entries(self) -> dict[tuple[int, ...], tuple[float, int]]:
        """Return Ω as a mapping from multi-index to (mean value, count)."""
        return {
            tuple(int(i) for i in idx): (float(v), int(c))
            for idx, v, c in zip(self.indices, self.values, self.counts, strict=True)
        }

    @classmethod
    def from_dense(
        cls,
        array: NDArray[np.float64],
        mask: NDArray[np.bool_] | None = None,
    ) -> SparseTensor:
        """Build a tensor observing every (or every masked) entry of ``array``."""
        arr = np.asarray(array, dtype=np.float64)
        observed = np.ones(arr.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        indices = np.argwhere(observed).astype(np.int64)
        values = arr[observed]
        return cls(
            tuple(int(n) for n in arr.shape),
            indices,
            values.astype(np.float64),
            np.ones(len(values), dtype=np.int64),
        )

    @classmethod
    def from_entries(
        cls,
        dims: Sequence[int],
        entries: Mapping[tuple[int, ...], float],
    ) -> SparseTensor:
        """Build a tensor from a mapping of multi-index to value."""
        keys = sorted(entries)
        indices = np.asarray(keys, dtype=np.int64).reshape(len(keys), len(dims))
        values = np.asarray([entries[k] for k in keys], dtype=np.float64)
        return cls(tuple(dims), indices, values, np.ones(len(keys), dtype=np.int64))


def density(t: SparseTensor) -> float:
    """Return the fraction of cells with at least one observation."""
    total = float(np.prod(t.dims, dtype=np.float64))
    return t.nnz / total if total else 0.0


def _locate(obs: ObservationSet, grid: Grid) -> tuple[NDArray[np.int64], NDArray[np.bool_]]:
    """Vectorized cell lookup; returns (n x d indices, in-domain mask)."""
    n = len(obs)
    indices = np.zeros((n, grid.ndim), dtype=np.int64)
    inside = np.ones(n, dtype=bool)
    for mode, spec in enumerate(grid.specs):
        column = obs.frame[spec.name]
        if not spec.is_numerical:
            indices[:, mode] = [grid.category_index(mode, label) for label in column]
            continue
        edges = grid.edges[mode]
        assert edges is not None
        coords = column.to_numpy(dtype=np.float64)
        inside &= (coords >= edges[0]) & (coords <= edges[-1])
        pos = np.searchsorted(edges, coords, side="right") - 1
        indices[:, mode] = np.clip(pos, 0, spec.cells - 1)
    return indices, inside


def _cell_sums(
    linear: NDArray[np.int64], times: NDArray[np.float64]
) -> tuple[NDArray[np.int64], NDArray[np.float64], NDArray[np.int64]]:
    """Per-cell (sum, count) with summation order fixed by sorting."""
    order = np.lexsort((times, linear))
    linear, times = linear[order], times[order]
    cells, starts, counts = np.unique(linear, return_index=True, return_counts=True)
    # np.sum on each contiguous run uses pairwise summation
    sums = np.array([times[s : s + c].sum() for s, c in zip(starts, counts, strict=True)])
    return cells, sums.astype(np.float64), counts.astype(np.int64)


def bin_observations(obs: ObservationSet, grid: Grid, workers: int = 1) -> SparseTensor:
    """Average observed times per grid cell.

    Out-of-domain observations are dropped (and counted). With
    ``workers > 1`` rows are partitioned across threads and the per-worker
    partial sums are merged; the result matches the sequential one.

    Args:
        obs: Observations to bin.
        grid: Grid defining the cells.
        workers: Number of threads for the partial sums.

    Returns:
        The partially observed tensor of per-cell mean times.

    Raises:
        ObservationError: If no observation falls inside the domain.
    """
    if obs.names != grid.names:
        raise ObservationError(f"observation columns {obs.names} do not match grid {grid.names}")
    indices, inside = _locate(obs, grid)
    dropped = int(np.count_nonzero(~inside))
    if dropped:
        logger.warning("Dropped %d out-of-domain observations while binning", dropped)
    if not np.any(inside):
        raise ObservationError("no observations fall inside the modeling domain")

    linear = np.ravel_multi_index(tuple(indices[inside].T), grid.dims).astype(np.int64)
    times = obs.times[inside]

    if workers > 1 and len(times) > workers:
        chunks = np.array_split(np.arange(len(times)), workers)
        with ThreadPoolExecutor(max_workers=workers) as executor:
            partials = list(executor.map(lambda ix: _cell_sums(linear[ix], times[ix]), chunks))
        part_cells = np.concatenate([p[0] for p in partials])
        part_sums = np.concatenate([p[1] for p in partials])
        part_counts = np.concatenate([p[2] for p in partials])
        cells, sums, _ = _cell_sums(part_cells, part_sums)
        counts = np.bincount(
            np.searchsorted(cells, part_cells), weights=part_counts, minlength=len(cells)
        ).astype(np.int64)
    else:
        cells, sums, counts = _cell_sums(linear, times)

    values = sums / counts
    tensor = SparseTensor(
        grid.dims,
        np.stack(np.unravel_index(cells, grid.dims), axis=1).astype(np.int64),
        values,
        counts,
        dropped=dropped,
    )
    logger.info(
        "Binned %d observations into %d cells (density %.4f)",
        len(times),
        tensor.nnz,
        density(tensor),
    )
    return tensor
