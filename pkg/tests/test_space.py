"""Tests for the space module."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import pytest

from perftensor.space import (
    OutOfDomainError,
    ParameterKind,
    ParameterSpec,
    SpaceError,
    UnknownCategoryError,
    build_grid,
    cell_index,
    interpolation_anchor,
    load_space,
    mode_anchor,
    parse_space_line,
)


if TYPE_CHECKING:
    from perftensor.space import Grid


class TestParameterSpec:
    """Tests for parameter specification validation."""

    def test_categorical_cells_follow_labels(self) -> None:
        """Test that a categorical parameter has one cell per label."""
        spec = ParameterSpec.categorical("algo", ["a", "b", "c"])
        assert spec.cells == 3
        assert not spec.is_numerical

    def test_rejects_inverted_bounds(self) -> None:
        """Test that lower must be below upper."""
        with pytest.raises(SpaceError, match="lower bound"):
            ParameterSpec.linear("p", 5, 5, 2)

    def test_log_needs_positive_lower(self) -> None:
        """Test that log parameters need a positive range."""
        with pytest.raises(SpaceError, match="positive lower bound"):
            ParameterSpec.log("m", 0, 10, 2)

    def test_rejects_zero_cells(self) -> None:
        """Test that a numerical parameter needs a cell."""
        with pytest.raises(SpaceError, match="at least one cell"):
            ParameterSpec.linear("p", 0, 1, 0)

    def test_rejects_duplicate_categories(self) -> None:
        """Test that category labels are unique."""
        with pytest.raises(SpaceError, match="duplicate"):
            ParameterSpec.categorical("algo", ["a", "a"])

    def test_rejects_non_finite_bounds(self) -> None:
        """Test that bounds are finite."""
        with pytest.raises(SpaceError, match="finite"):
            ParameterSpec.linear("p", 0, math.inf, 2)


class TestBuildGrid:
    """Tests for grid construction."""

    def test_linear_midpoints(self, mixed_grid: Grid) -> None:
        """Test arithmetic midpoints of a uniform mode."""
        np.testing.assert_array_equal(mixed_grid.midpoints[1], [1.0, 3.0, 5.0, 7.0, 9.0])
        edges = mixed_grid.edges[1]
        assert edges is not None
        np.testing.assert_array_equal(edges, [0.0, 2.0, 4.0, 6.0, 8.0, 10.0])

    def test_log_midpoints_are_ceiled_geometric_means(self, mixed_grid: Grid) -> None:
        """Test log midpoints against ceil(sqrt(e_i * e_{i+1}))."""
        edges = mixed_grid.edges[0]
        assert edges is not None
        expected = np.ceil(np.sqrt(edges[:-1] * edges[1:]))
        np.testing.assert_array_equal(mixed_grid.midpoints[0], expected)
        np.testing.assert_array_equal(mixed_grid.midpoints[0], [32.0, 317.0, 3163.0])

    def test_log_edges_span_range(self, mixed_grid: Grid) -> None:
        """Test that log edges start and end at the bounds and are log-equidistant."""
        edges = mixed_grid.edges[0]
        assert edges is not None
        assert edges[0] == 10.0
        assert edges[-1] == 10000.0
        np.testing.assert_allclose(np.diff(np.log(edges)), math.log(10.0), rtol=1e-12)

    def test_spec_example_midpoints(self, log_grid_1d: Grid) -> None:
        """Test midpoints of a two-cell log mode over [1, 100]."""
        np.testing.assert_array_equal(log_grid_1d.midpoints[0], [4.0, 32.0])

    def test_categorical_midpoints_are_positions(self, mixed_grid: Grid) -> None:
        """Test categorical modes use label positions."""
        np.testing.assert_array_equal(mixed_grid.midpoints[2], [0.0, 1.0])
        assert mixed_grid.edges[2] is None

    def test_dims_and_names(self, mixed_grid: Grid) -> None:
        """Test grid shape metadata."""
        assert mixed_grid.dims == (3, 5, 2)
        assert mixed_grid.names == ("m", "p", "algo")
        assert mixed_grid.numerical_modes == (0, 1)

    def test_colliding_log_midpoints_rejected(self) -> None:
        """Test that too fine a log mode over a short range is rejected."""
        with pytest.raises(SpaceError, match="coarser"):
            build_grid([ParameterSpec.log("m", 1, 4, 10)])

    def test_interior_midpoint_on_edge_rejected(self) -> None:
        """Test a midpoint equal to the next cell's lower edge is rejected."""
        # edges [1, 2, 4], midpoints ceil(sqrt(2)) = 2 and ceil(sqrt(8)) = 3
        with pytest.raises(SpaceError, match="cell 0 does not lie below the edge 2"):
            build_grid([ParameterSpec.log("m", 1, 4, 2)])

    def test_last_midpoint_above_range_rejected(self) -> None:
        """Test a single cell with no integer above its geometric mean is rejected."""
        with pytest.raises(SpaceError, match="widen the range"):
            build_grid([ParameterSpec.log("m", 1, 1.5, 1)])

    def test_last_midpoint_on_upper_bound_accepted(self) -> None:
        """Test the last midpoint may equal the upper bound."""
        grid = build_grid([ParameterSpec.log("m", 1.5, 2, 1)])
        np.testing.assert_array_equal(grid.midpoints[0], [2.0])
        assert cell_index(grid, [2.0]) == (0,)

    def test_duplicate_names_rejected(self) -> None:
        """Test that parameter names are unique."""
        with pytest.raises(SpaceError, match="Duplicate"):
            build_grid([ParameterSpec.linear("p", 0, 1, 2), ParameterSpec.linear("p", 0, 1, 2)])

    def test_arrays_are_read_only(self, mixed_grid: Grid) -> None:
        """Test that grid arrays cannot be mutated."""
        with pytest.raises(ValueError, match="read-only"):
            mixed_grid.midpoints[0][0] = 1.0

    def test_transform(self, mixed_grid: Grid) -> None:
        """Test h_j is log on log modes and identity otherwise."""
        assert float(mixed_grid.transform(0, 100.0)) == pytest.approx(math.log(100.0))
        assert float(mixed_grid.transform(1, 4.0)) == 4.0


class TestCellIndex:
    """Tests for mapping configurations to cells."""

    def test_interior_point(self, mixed_grid: Grid) -> None:
        """Test a point inside the domain."""
        assert cell_index(mixed_grid, [50.0, 3.0, "b"]) == (0, 1, 1)

    def test_edge_belongs_to_upper_cell(self, mixed_grid: Grid) -> None:
        """Test half-open cells: a shared edge maps to the upper cell."""
        edges = mixed_grid.edges[1]
        assert edges is not None
        assert cell_index(mixed_grid, [50.0, float(edges[2]), "a"])[1] == 2

    def test_upper_bound_in_last_cell(self, mixed_grid: Grid) -> None:
        """Test the closed upper bound maps to the last cell."""
        assert cell_index(mixed_grid, [10000.0, 10.0, "a"]) == (2, 4, 0)

    def test_out_of_domain(self, mixed_grid: Grid) -> None:
        """Test out-of-range coordinates raise with the offending mode."""
        with pytest.raises(OutOfDomainError) as excinfo:
            cell_index(mixed_grid, [50.0, 10.5, "a"])
        assert excinfo.value.mode == 1
        assert excinfo.value.name == "p"

    def test_nan_coordinate(self, mixed_grid: Grid) -> None:
        """Test NaN is rejected rather than treated as out of domain."""
        with pytest.raises(SpaceError, match="finite number") as excinfo:
            cell_index(mixed_grid, [math.nan, 3.0, "a"])
        assert not isinstance(excinfo.value, OutOfDomainError)

    def test_unknown_category(self, mixed_grid: Grid) -> None:
        """Test unknown labels raise."""
        with pytest.raises(UnknownCategoryError, match="'c'"):
            cell_index(mixed_grid, [50.0, 3.0, "c"])

    def test_wrong_arity(self, mixed_grid: Grid) -> None:
        """Test configurations must cover every mode."""
        with pytest.raises(SpaceError, match="3 modes"):
            cell_index(mixed_grid, [50.0, 3.0])

    def test_non_numeric_value(self, mixed_grid: Grid) -> None:
        """Test a label on a numerical mode raises."""
        with pytest.raises(SpaceError, match="expects a number"):
            cell_index(mixed_grid, ["big", 3.0, "a"])


class TestAnchors:
    """Tests for interpolation anchors."""

    def test_log_midpoint_weight(self, log_grid_1d: Grid) -> None:
        """Test the log-space midpoint of 4 and 32 has weight one half."""
        anchor = mode_anchor(log_grid_1d, 0, math.sqrt(128.0))
        assert anchor.base == 0
        assert anchor.weight == pytest.approx(0.5)
        assert not anchor.edge

    def test_linear_weight(self, mixed_grid: Grid) -> None:
        """Test weights on a uniform mode."""
        anchor = mode_anchor(mixed_grid, 1, 4.0)
        assert anchor.base == 1
        assert anchor.weight == 0.5

    def test_exact_weights_at_midpoints(self, mixed_grid: Grid) -> None:
        """Test that midpoint coordinates get weights of exactly 0 or 1."""
        for i, mid in enumerate(mixed_grid.midpoints[0]):
            anchor = mode_anchor(mixed_grid, 0, float(mid))
            corners = dict(anchor.corners())
            assert corners[i] == 1.0
            assert sum(w for j, w in corners.items() if j != i) == 0.0

    def test_below_first_midpoint_is_edge(self, mixed_grid: Grid) -> None:
        """Test linear extrapolation below the first midpoint."""
        anchor = mode_anchor(mixed_grid, 1, 0.5)
        assert anchor.edge
        assert anchor.base == 0
        assert anchor.weight == pytest.approx(-0.25)

    def test_above_last_midpoint_is_edge(self, mixed_grid: Grid) -> None:
        """Test linear extrapolation above the last midpoint."""
        anchor = mode_anchor(mixed_grid, 0, 5000.0)
        assert anchor.edge
        assert anchor.base == 1
        assert anchor.weight is not None
        assert anchor.weight > 1.0

    def test_categorical_anchor(self, mixed_grid: Grid) -> None:
        """Test categorical modes anchor at their label position."""
        anchor = mode_anchor(mixed_grid, 2, "b")
        assert anchor.base == 1
        assert anchor.weight is None
        assert anchor.corners() == ((1, 1.0),)

    def test_single_cell_mode(self) -> None:
        """Test a single-cell mode has a fixed index."""
        grid = build_grid([ParameterSpec.linear("p", 0, 1, 1)])
        assert mode_anchor(grid, 0, 0.9).corners() == ((0, 1.0),)

    def test_interpolation_anchor_edge_flag(self, mixed_grid: Grid) -> None:
        """Test the anchor reports edge extrapolation on any mode."""
        assert interpolation_anchor(mixed_grid, [20.0, 3.0, "a"]).has_edge
        assert not interpolation_anchor(mixed_grid, [100.0, 3.0, "a"]).has_edge

    def test_interpolation_anchor_out_of_domain(self, mixed_grid: Grid) -> None:
        """Test out-of-domain coordinates raise."""
        with pytest.raises(OutOfDomainError):
            interpolation_anchor(mixed_grid, [5.0, 3.0, "a"])


class TestSpaceFiles:
    """Tests for parameter-space definition files."""

    def test_parse_lines(self) -> None:
        """Test each parameter kind parses."""
        assert parse_space_line("m,log,32,4096,8") == ParameterSpec.log("m", 32, 4096, 8)
        assert parse_space_line("p, lin, 0, 1, 4").kind is ParameterKind.LINEAR
        assert parse_space_line("algo,cat,a|b|c").categories == ("a", "b", "c")

    def test_unknown_kind(self) -> None:
        """Test unknown kinds are rejected."""
        with pytest.raises(SpaceError, match="unknown parameter kind"):
            parse_space_line("m,exp,1,2,3")

    def test_wrong_field_count(self) -> None:
        """Test numerical lines need five fields."""
        with pytest.raises(SpaceError, match="expects"):
            parse_space_line("m,log,1,2")

    def test_load_space_skips_comments(self, space_file) -> None:
        """Test comments and blank lines are skipped and order is kept."""
        path = space_file(["# gemm", "m,log,32,4096,8", "", "n,lin,1,9,4", "algo,cat,x|y"])
        specs = load_space(path)
        assert [s.name for s in specs] == ["m", "n", "algo"]

    def test_load_space_reports_line(self, space_file) -> None:
        """Test errors name the offending line."""
        path = space_file(["m,log,32,4096,8", "n,lin,9,1,4"])
        with pytest.raises(SpaceError, match="line 2"):
            load_space(path)

    def test_load_space_empty(self, space_file) -> None:
        """Test a file without parameters is rejected."""
        path = space_file(["# nothing"])
        with pytest.raises(SpaceError, match="No parameters"):
            load_space(path)
