"""Parameter specifications and regular-grid discretization of the modeling domain.

A grid splits every numerical parameter range into cells (uniform or
logarithmic spacing) and indexes categorical parameters by label position.
Each cell is represented by its midpoint; tensor element ``i`` of a mode is
associated with midpoint ``M[i]`` of that mode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np


if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from numpy.typing import NDArray


__all__ = [
    "Anchor",
    "Grid",
    "ModeAnchor",
    "OutOfDomainError",
    "ParameterKind",
    "ParameterSpec",
    "SpaceError",
    "UnknownCategoryError",
    "build_grid",
    "cell_index",
    "coordinate_value",
    "interpolation_anchor",
    "load_space",
    "mode_anchor",
    "parse_space_line",
]

logger = logging.getLogger(__name__)

# One coordinate per mode: reals for numerical modes, labels for categorical modes.
Coordinate = float | str


class SpaceError(ValueError):
    """Raised when a parameter specification or coordinate is invalid."""


class OutOfDomainError(SpaceError):
    """Raised when a numerical coordinate falls outside the discretized range."""

    def __init__(self, mode: int, name: str, value: float, lower: float, upper: float) -> None:
        super().__init__(
            f"Parameter '{name}' (mode {mode}) value {value!r} is outside [{lower!r}, {upper!r}]"
        )
        self.mode = mode
        self.name = name
        self.value = value


class UnknownCategoryError(SpaceError):
    """Raised when a categorical coordinate names an unknown label."""


class ParameterKind(Enum):
    """How a parameter's range is discretized."""

    LINEAR = "lin"
    LOG = "log"
    CATEGORICAL = "cat"


@dataclass(frozen=True)
class ParameterSpec:
    """One modeled parameter (one tensor mode)."""

    name: str
    kind: ParameterKind
    lower: float | None = None
    upper: float | None = None
    cells: int = 1
    categories: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        """Validate the specification and derive categorical cell counts."""
        if not self.name or not self.name.strip():
            raise SpaceError("Parameter name must be non-empty.")
        if self.kind is ParameterKind.CATEGORICAL:
            if not self.categories:
                raise SpaceError(f"Parameter '{self.name}' needs at least one category.")
            seen: set[str] = set()
            for label in self.categories:
                if label in seen:
                    raise SpaceError(f"Parameter '{self.name}' has duplicate category '{label}'.")
                seen.add(label)
            object.__setattr__(self, "cells", len(self.categories))
            return

        if self.lower is None or self.upper is None:
            raise SpaceError(f"Parameter '{self.name}' needs lower and upper bounds.")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise SpaceError(f"Parameter '{self.name}' bounds must be finite.")
        if self.lower >= self.upper:
            raise SpaceError(
                f"Parameter '{self.name}' lower bound {self.lower} must be below "
                f"upper bound {self.upper}."
            )
        if self.kind is ParameterKind.LOG and self.lower <= 0:
            raise SpaceError(
                f"Parameter '{self.name}' is log-spaced and needs a positive lower bound."
            )
        if self.cells < 1:
            raise SpaceError(f"Parameter '{self.name}' needs at least one cell.")

    @classmethod
    def linear(cls, name: str, lower: float, upper: float, cells: int) -> ParameterSpec:
        """Create a uniformly discretized numerical parameter."""
        return cls(name, ParameterKind.LINEAR, float(lower), float(upper), int(cells))

    @classmethod
    def log(cls, name: str, lower: float, upper: float, cells: int) -> ParameterSpec:
        """Create a logarithmically discretized numerical parameter."""
        return cls(name, ParameterKind.LOG, float(lower), float(upper), int(cells))

    @classmethod
    def categorical(cls, name: str, categories: Iterable[str]) -> ParameterSpec:
        """Create a categorical parameter with ordered labels."""
        return cls(name, ParameterKind.CATEGORICAL, categories=tuple(str(c) for c in categories))

    @property
    def is_numerical(self) -> bool:
        """Whether the parameter has a numerical range."""
        return self.kind is not ParameterKind.CATEGORICAL


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable discretization of a d-dimensional modeling domain.

    Attributes:
        specs: One specification per mode, in mode order.
        edges: Per numerical mode, the ``cells + 1`` increasing cell edges;
            ``None`` for categorical modes.
        midpoints: Per mode, the ``cells`` representative coordinates. For
            categorical modes these are the positions ``0..cells-1``.
    """

    specs: tuple[ParameterSpec, ...]
    edges: tuple[NDArray[np.float64] | None, ...]
    midpoints: tuple[NDArray[np.float64], ...]
    _category_maps: tuple[dict[str, int], ...] = field(init=False, repr=False, compare=False)
    _h_midpoints: tuple[NDArray[np.float64], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        """Check array shapes, freeze arrays and precompute lookups."""
        if not self.specs:
            raise SpaceError("A grid needs at least one parameter.")
        if not (len(self.edges) == len(self.midpoints) == len(self.specs)):
            raise SpaceError("Grid edges and midpoints must cover every parameter.")
        names = [spec.name for spec in self.specs]
        if len(set(names)) != len(names):
            raise SpaceError(f"Duplicate parameter names in {names}.")

        for spec, edges, mids in zip(self.specs, self.edges, self.midpoints, strict=True):
            if mids.shape != (spec.cells,):
                raise SpaceError(f"Parameter '{spec.name}' needs {spec.cells} midpoints.")
            mids.setflags(write=False)
            if spec.is_numerical:
                if edges is None or edges.shape != (spec.cells + 1,):
                    raise SpaceError(f"Parameter '{spec.name}' needs {spec.cells + 1} edges.")
                if np.any(np.diff(edges) <= 0):
                    raise SpaceError(f"Parameter '{spec.name}' edges must be strictly increasing.")
                edges.setflags(write=False)

        maps = tuple(
            {label: pos for pos, label in enumerate(spec.categories)} for spec in self.specs
        )
        h_mids = tuple(self.transform(j, mids) for j, mids in enumerate(self.midpoints))
        for arr in h_mids:
            arr.setflags(write=False)
        object.__setattr__(self, "_category_maps", maps)
        object.__setattr__(self, "_h_midpoints", h_mids)

    @property
    def ndim(self) -> int:
        """Number of modes d."""
        return len(self.specs)

    @property
    def dims(self) -> tuple[int, ...]:
        """Cell counts I_1..I_d (the tensor shape)."""
        return tuple(spec.cells for spec in self.specs)

    @property
    def names(self) -> tuple[str, ...]:
        """Parameter names in mode order."""
        return tuple(spec.name for spec in self.specs)

    @property
    def numerical_modes(self) -> tuple[int, ...]:
        """Indices of the numerical modes."""
        return tuple(j for j, spec in enumerate(self.specs) if spec.is_numerical)

    def transform(self, mode: int, values: NDArray[np.float64] | float) -> NDArray[np.float64]:
        """Apply the mode's coordinate transform h_j (log for log-spaced modes)."""
        arr = np.asarray(values, dtype=np.float64)
        if self.specs[mode].kind is ParameterKind.LOG:
            return np.log(arr)
        return arr.copy()

    def transformed_midpoints(self, mode: int) -> NDArray[np.float64]:
        """Return h_j applied to the midpoints of ``mode``."""
        return self._h_midpoints[mode]

    def category_index(self, mode: int, label: object) -> int:
        """Return the position of a categorical label.

        Raises:
            UnknownCategoryError: If the label is not a category of the mode.
        """
        key = str(label).strip()
        try:
            return self._category_maps[mode][key]
        except KeyError:
            spec = self.specs[mode]
            raise UnknownCategoryError(
                f"Unknown category '{key}' for parameter '{spec.name}' "
                f"(expected one of {', '.join(spec.categories)})"
            ) from None

    def contains(self, mode: int, value: float) -> bool:
        """Whether a numerical coordinate lies inside the mode's closed range."""
        edges = self.edges[mode]
        if edges is None:
            raise SpaceError(f"Parameter '{self.specs[mode].name}' is categorical.")
        return bool(edges[0] <= value <= edges[-1])


def _log_midpoints(spec: ParameterSpec, edges: NDArray[np.float64]) -> NDArray[np.float64]:
    # ceil of the geometric mean of adjacent edges
    mids = np.ceil(np.sqrt(edges[:-1] * edges[1:]))
    last = spec.cells - 1
    prefix = f"Parameter '{spec.name}' over [{spec.lower:g}, {spec.upper:g}]"
    if mids[last] > edges[-1]:
        raise SpaceError(
            f"{prefix}: rounded midpoint {mids[last]:g} of the last cell lies above the upper "
            "bound; widen the range to reach the next integer."
        )
    # an interior midpoint on its upper edge would be located in the next cell
    for i in range(last):
        if mids[i] >= edges[i + 1]:
            raise SpaceError(
                f"{prefix}: rounded midpoint {mids[i]:g} of cell {i} does not lie below the "
                f"edge {edges[i + 1]:g} with {spec.cells} cells; use a coarser cell count."
            )
    return mids


def build_grid(specs: Sequence[ParameterSpec]) -> Grid:
    """Discretize the modeling domain described by ``specs``.

    Linear modes get equally spaced edges and arithmetic-mean midpoints. Log
    modes get edges equally spaced in log and midpoints
    ``ceil(sqrt(e_i * e_{i+1}))``. Categorical modes get midpoints equal to
    their label positions.

    Args:
        specs: Parameter specifications in mode order.

    Returns:
        The immutable grid.

    Raises:
        SpaceError: If a specification is invalid or a log mode is too fine
            for its rounded midpoints to stay distinct.
    """
    edges_list: list[NDArray[np.float64] | None] = []
    mids_list: list[NDArray[np.float64]] = []
    for spec in specs:
        if spec.kind is ParameterKind.CATEGORICAL:
            edges_list.append(None)
            mids_list.append(np.arange(spec.cells, dtype=np.float64))
            continue

        assert spec.lower is not None
        assert spec.upper is not None
        if spec.kind is ParameterKind.LINEAR:
            edges = np.linspace(spec.lower, spec.upper, spec.cells + 1)
        else:
            ratio = spec.upper / spec.lower
            edges = spec.lower * ratio ** (np.arange(spec.cells + 1) / spec.cells)
        edges[0], edges[-1] = spec.lower, spec.upper
        if spec.kind is ParameterKind.LINEAR:
            mids = 0.5 * (edges[:-1] + edges[1:])
        else:
            mids = _log_midpoints(spec, edges)
        edges_list.append(edges)
        mids_list.append(mids)

    grid = Grid(tuple(specs), tuple(edges_list), tuple(mids_list))
    logger.info("Built %s grid over %s", "x".join(map(str, grid.dims)), ", ".join(grid.names))
    return grid


def coordinate_value(value: Coordinate, spec: ParameterSpec) -> float:
    """Parse a numerical coordinate.

    Raises:
        SpaceError: If ``value`` is not a finite number.
    """
    try:
        coord = float(value)
    except (TypeError, ValueError):
        raise SpaceError(f"Parameter '{spec.name}' expects a number, got {value!r}") from None
    if not math.isfinite(coord):
        raise SpaceError(f"Parameter '{spec.name}' expects a finite number, got {value!r}")
    return coord


def cell_index(grid: Grid, x: Sequence[Coordinate]) -> tuple[int, ...]:
    """Map a configuration to the multi-index of the cell containing it.

    Cells are half-open ``[e_i, e_{i+1})`` except the last, which is closed.

    Raises:
        OutOfDomainError: If a numerical coordinate lies outside its range.
        UnknownCategoryError: If a categorical label is unknown.
    """
    if len(x) != grid.ndim:
        raise SpaceError(f"Configuration has {len(x)} coordinates, grid has {grid.ndim} modes.")
    index: list[int] = []
    for mode, (spec, value) in enumerate(zip(grid.specs, x, strict=True)):
        if not spec.is_numerical:
            index.append(grid.category_index(mode, value))
            continue
        edges = grid.edges[mode]
        assert edges is not None
        coord = coordinate_value(value, spec)
        if not edges[0] <= coord <= edges[-1]:
            raise OutOfDomainError(mode, spec.name, coord, float(edges[0]), float(edges[-1]))
        pos = int(np.searchsorted(edges, coord, side="right")) - 1
        index.append(min(pos, spec.cells - 1))
    return tuple(index)


@dataclass(frozen=True)
class ModeAnchor:
    """Interpolation anchor along one mode.

    ``weight`` is ``None`` for modes with a fixed index (categorical, single
    cell, or extrapolated). Otherwise the mode blends midpoints ``base`` and
    ``base + 1`` with weights ``1 - weight`` and ``weight``; ``edge`` marks
    linear extrapolation beyond the outer midpoints (weight outside [0, 1]).
    """

    base: int
    weight: float | None = None
    edge: bool = False

    def corners(self) -> tuple[tuple[int, float], ...]:
        """Return the (index, weight) pairs this mode contributes."""
        if self.weight is None:
            return ((self.base, 1.0),)
        return ((self.base, 1.0 - self.weight), (self.base + 1, self.weight))


@dataclass(frozen=True)
class Anchor:
    """Per-mode interpolation anchors for one configuration."""

    modes: tuple[ModeAnchor, ...]

    @property
    def has_edge(self) -> bool:
        """Whether any mode extrapolates linearly past its outer midpoints."""
        return any(m.edge for m in self.modes)


def mode_anchor(grid: Grid, mode: int, value: Coordinate) -> ModeAnchor:
    """Compute the interpolation anchor of a single in-domain coordinate."""
    spec = grid.specs[mode]
    if not spec.is_numerical:
        return ModeAnchor(grid.category_index(mode, value))
    edges = grid.edges[mode]
    assert edges is not None
    coord = coordinate_value(value, spec)
    if not edges[0] <= coord <= edges[-1]:
        raise OutOfDomainError(mode, spec.name, coord, float(edges[0]), float(edges[-1]))
    if spec.cells == 1:
        return ModeAnchor(0)

    mids = grid.midpoints[mode]
    h_mids = grid.transformed_midpoints(mode)
    h_x = float(grid.transform(mode, coord))
    if coord < mids[0]:
        base, edge = 0, True
    elif coord >= mids[-1]:
        base, edge = spec.cells - 2, bool(coord > mids[-1])
    else:
        base, edge = int(np.searchsorted(mids, coord, side="right")) - 1, False
    if coord == mids[base]:
        weight = 0.0
    elif coord == mids[base + 1]:
        weight = 1.0
    else:
        weight = (h_x - h_mids[base]) / (h_mids[base + 1] - h_mids[base])
    return ModeAnchor(base, float(weight), edge)


def interpolation_anchor(grid: Grid, x: Sequence[Coordinate]) -> Anchor:
    """Locate a configuration between neighbouring midpoints on every mode.

    Raises:
        OutOfDomainError: If a numerical coordinate lies outside its range.
        UnknownCategoryError: If a categorical label is unknown.
    """
    if len(x) != grid.ndim:
        raise SpaceError(f"Configuration has {len(x)} coordinates, grid has {grid.ndim} modes.")
    return Anchor(tuple(mode_anchor(grid, mode, value) for mode, value in enumerate(x)))


def parse_space_line(line: str, line_num: int = 0) -> ParameterSpec:
    """Parse one ``name,lin|log,lower,upper,cells`` or ``name,cat,a|b|c`` line."""
    parts = [part.strip() for part in line.split(",")]
    where = f"line {line_num}: " if line_num else ""
    if len(parts) < 3:
        raise SpaceError(f"{where}expected 'name,kind,...', got '{line.strip()}'")
    name, kind_token = parts[0], parts[1].lower()
    try:
        kind = ParameterKind(kind_token)
    except ValueError:
        raise SpaceError(f"{where}unknown parameter kind '{parts[1]}' for '{name}'") from None

    if kind is ParameterKind.CATEGORICAL:
        if len(parts) != 3:
            raise SpaceError(f"{where}categorical parameter '{name}' expects 'name,cat,a|b|c'")
        labels = [label.strip() for label in parts[2].split("|")]
        return ParameterSpec.categorical(name, labels)

    if len(parts) != 5:
        raise SpaceError(
            f"{where}numerical parameter '{name}' expects 'name,kind,lower,upper,cells'"
        )
    try:
        lower, upper, cells = float(parts[2]), float(parts[3]), int(parts[4])
    except ValueError:
        raise SpaceError(f"{where}invalid bounds or cell count for '{name}'") from None
    return ParameterSpec(name, kind, lower, upper, cells)


def load_space(path: str | Path) -> list[ParameterSpec]:
    """Read a parameter-space definition file.

    One parameter per line; lines starting with ``#`` and blank lines are
    skipped. Parameter order fixes mode order.

    Raises:
        SpaceError: If a line is malformed or a specification is invalid.
    """
    specs: list[ParameterSpec] = []
    with Path(path).expanduser().open("r", encoding="utf-8") as f:
        for line_num, raw_line in enumerate(f, 1):
            stripped = raw_line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                specs.append(parse_space_line(stripped, line_num))
            except SpaceError as exc:
                if str(exc).startswith("line "):
                    raise
                raise SpaceError(f"line {line_num}: {exc}") from exc
    if not specs:
        raise SpaceError(f"No parameters defined in '{path}'.")
    return specs
