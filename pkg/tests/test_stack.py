"""Geometry and format tests: parse/serialize round trips, rasterization
conservation, and overlap validation against a shapely oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import box

from stacktherm.errors import DomainError, ParseError, ValidationError
from stacktherm.stack import (
    Block,
    Floorplan,
    Layer,
    LayerKind,
    Material,
    PowerAssignment,
    StackSpec,
    parse_floorplan,
    parse_power,
    parse_stack,
    rasterize,
    serialize_floorplan,
    serialize_power,
    serialize_stack,
)

SIMPLE_FLP = "die 0.016 0.016\ncache0 0.008 0.008 0 0\n"


def two_layer_stack_text():
    return (
        "ambient 300.0\n"
        "sink_r 2e-4\n"
        "layer 0 active_silicon 100um 150.0 1 flp=main\n"
        "layer 1 epoxy 20um resistivity=0.25 0\n"
    )


def make_stack(**kwargs):
    fp = parse_floorplan(SIMPLE_FLP)
    return parse_stack(two_layer_stack_text(), floorplans={"main": fp}, **kwargs)


class TestFloorplanParsing:
    def test_single_block_read_back(self):
        fp = parse_floorplan(SIMPLE_FLP)
        assert len(fp.blocks) == 1
        assert fp.blocks[0].area == pytest.approx(6.4e-5, rel=1e-12)

    def test_identical_blocks_overlap_error(self):
        text = SIMPLE_FLP + "cache1 0.008 0.008 0 0\n"
        with pytest.raises(ValidationError) as err:
            parse_floorplan(text)
        assert "cache0" in str(err.value) and "cache1" in str(err.value)

    def test_block_out_of_die(self):
        text = "die 0.016 0.016\nbig 0.010 0.008 0.008 0\n"
        with pytest.raises(ValidationError, match="outside"):
            parse_floorplan(text)

    def test_touching_edges_allowed(self):
        text = (
            "die 0.016 0.016\n"
            "a 0.008 0.016 0 0\n"
            "b 0.008 0.016 0.008 0\n"
        )
        assert len(parse_floorplan(text).blocks) == 2

    def test_malformed_line_reports_number(self):
        with pytest.raises(ParseError, match="line 3"):
            parse_floorplan("die 0.016 0.016\n# fine\ncache0 0.008 0.008\n")

    def test_round_trip(self):
        fp = parse_floorplan(
            "die 0.016 0.016\n"
            "a 0.008 0.008 0.0 0.0\n"
            "b 0.008 0.008 0.008 0.008\n"
        )
        assert parse_floorplan(serialize_floorplan(fp)) == fp


rects = st.tuples(
    st.floats(0.0, 0.9), st.floats(0.0, 0.9),
    st.floats(0.05, 1.0), st.floats(0.05, 1.0),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(rects, min_size=2, max_size=6))
def test_overlap_validation_matches_shapely(raw):
    die = 2.0
    blocks = []
    shapes = []
    for i, (left, bottom, width, height) in enumerate(raw):
        width = min(width, die - left)
        height = min(height, die - bottom)
        blocks.append(Block(f"b{i}", width, height, left, bottom))
        shapes.append(box(left, bottom, left + width, bottom + height))
    oracle_overlap = any(
        shapes[i].intersection(shapes[j]).area > 1e-9 * die * die
        for i in range(len(shapes))
        for j in range(i + 1, len(shapes))
    )
    try:
        Floorplan(die_width=die, die_height=die, blocks=tuple(blocks))
        validated_ok = True
    except ValidationError:
        validated_ok = False
    assert validated_ok == (not oracle_overlap)


class TestStackParsing:
    def test_resistivity_becomes_conductivity(self):
        stack = make_stack()
        assert stack.layers[1].material.thermal_conductivity == pytest.approx(4.0)

    def test_fine_epoxy_resistivity(self):
        text = two_layer_stack_text().replace("resistivity=0.25", "resistivity=0.005")
        fp = parse_floorplan(SIMPLE_FLP)
        stack = parse_stack(text, floorplans={"main": fp})
        assert stack.layers[1].material.thermal_conductivity == pytest.approx(200.0)

    def test_unit_suffix_thickness(self):
        stack = make_stack()
        assert stack.layers[0].thickness == pytest.approx(100e-6, rel=1e-12)

    def test_powered_epoxy_rejected(self):
        text = two_layer_stack_text().replace(
            "layer 1 epoxy 20um resistivity=0.25 0",
            "layer 1 epoxy 20um resistivity=0.25 1",
        )
        with pytest.raises(ValidationError):
            parse_stack(text, floorplans={"main": parse_floorplan(SIMPLE_FLP)})

    def test_powered_layer_without_floorplan_rejected(self):
        text = "layer 0 active_silicon 100um 150.0 1\n"
        with pytest.raises(ValidationError):
            parse_stack(text)

    def test_index_gap_rejected(self):
        text = (
            "layer 0 active_silicon 100um 150.0 1 flp=main\n"
            "layer 2 epoxy 20um 4.0 0\n"
        )
        with pytest.raises(ValidationError, match="contiguous"):
            parse_stack(text, floorplans={"main": parse_floorplan(SIMPLE_FLP)})

    def test_missing_floorplan_file_names_path(self, tmp_path):
        stack_file = tmp_path / "s.stack"
        stack_file.write_text("layer 0 active_silicon 100um 150.0 1 flp=nope.flp\n")
        with pytest.raises(ParseError, match="nope.flp"):
            parse_stack(stack_file.read_text(), base_dir=str(tmp_path))

    def test_round_trip(self, tmp_path):
        (tmp_path / "main.flp").write_text(SIMPLE_FLP)
        text = two_layer_stack_text().replace("flp=main", "flp=main.flp")
        stack = parse_stack(text, base_dir=str(tmp_path))
        again = parse_stack(serialize_stack(stack), base_dir=str(tmp_path))
        assert again == stack

    def test_die_dims_from_floorplan(self):
        stack = make_stack()
        assert stack.die_width == pytest.approx(0.016)
        assert stack.die_height == pytest.approx(0.016)


class TestPowerParsing:
    def test_density_converts_via_block_area(self):
        stack = make_stack()
        power = parse_power("layer 0 cache0 3W/cm2\n", stack)
        # 3 W/cm^2 over 0.64 cm^2
        assert power.entries[(0, "cache0")] == pytest.approx(1.92, rel=1e-12)

    def test_total_watts(self):
        stack = make_stack()
        power = parse_power("layer 0 cache0 10W\n", stack)
        assert power.entries[(0, "cache0")] == 10.0
        assert power.total() == 10.0

    def test_zero_power_allowed(self):
        stack = make_stack()
        power = parse_power("layer 0 cache0 0W\n", stack)
        assert power.total() == 0.0

    def test_unknown_block_rejected(self):
        stack = make_stack()
        with pytest.raises(ValidationError, match="nosuch"):
            parse_power("layer 0 nosuch 1W\n", stack)

    def test_unpowered_layer_rejected(self):
        stack = make_stack()
        with pytest.raises(ValidationError):
            parse_power("layer 1 cache0 1W\n", stack)

    def test_negative_rejected(self):
        stack = make_stack()
        with pytest.raises(DomainError):
            parse_power("layer 0 cache0 -1W\n", stack)

    def test_missing_unit_rejected(self):
        stack = make_stack()
        with pytest.raises(ParseError):
            parse_power("layer 0 cache0 3\n", stack)

    def test_round_trip(self):
        stack = make_stack()
        power = parse_power("layer 0 cache0 3W/cm2\n", stack)
        again = parse_power(serialize_power(power), stack)
        assert again.entries == power.entries

    def test_combined(self):
        a = PowerAssignment({(0, "x"): 1.0})
        b = PowerAssignment({(0, "x"): 2.0, (0, "y"): 3.0})
        merged = a.combined(b)
        assert merged.entries == {(0, "x"): 3.0, (0, "y"): 3.0}


class TestRasterize:
    def test_full_die_block_splits_evenly(self):
        fp = parse_floorplan("die 0.01 0.01\nall 0.01 0.01 0 0\n")
        grid = rasterize(fp, {"all": 10.0}, 2, 2)
        assert grid == pytest.approx(np.full((2, 2), 2.5))

    def test_half_die_block_exact(self):
        fp = parse_floorplan("die 0.01 0.01\nleft 0.005 0.01 0 0\n")
        grid = rasterize(fp, {"left": 8.0}, 2, 1)
        assert grid[0, 0] == pytest.approx(8.0)
        assert grid[1, 0] == 0.0

    def test_conservation_on_odd_grid(self):
        fp = parse_floorplan("die 0.016 0.016\nb 0.007 0.0052 0.0031 0.0043\n")
        grid = rasterize(fp, {"b": 3.7}, 7, 5)
        assert grid.sum() == pytest.approx(3.7, rel=1e-12)

    def test_conservation_random_cases(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            die_w, die_h = rng.uniform(0.005, 0.05, 2)
            left = rng.uniform(0, 0.8) * die_w
            bottom = rng.uniform(0, 0.8) * die_h
            width = rng.uniform(0.05, 1.0) * (die_w - left)
            height = rng.uniform(0.05, 1.0) * (die_h - bottom)
            fp = Floorplan(die_w, die_h, (Block("b", width, height, left, bottom),))
            nx, ny = rng.integers(1, 40, 2)
            watts = rng.uniform(0.1, 100.0)
            grid = rasterize(fp, {"b": watts}, int(nx), int(ny))
            assert grid.sum() == pytest.approx(watts, rel=1e-12)
            assert (grid >= 0).all()

    def test_bad_grid_rejected(self):
        fp = parse_floorplan(SIMPLE_FLP)
        with pytest.raises(DomainError):
            rasterize(fp, {"cache0": 1.0}, 0, 4)
