"""Electrothermal coupling tests.

The lumped one-cell fixture has a closed-form fixed point
T* = ambient + P_dyn/(1 - slope*R), which anchors the convergence,
damping-independence and loop-gain checks.
"""

import numpy as np
import pytest

from stacktherm.cell import CellSpec, DoubleKModel
from stacktherm.coupling import (
    AffineBlockLeakage,
    CouplingConfig,
    DeviceBlockLeakage,
    LeakageBinding,
    fixed_point,
    format_convergence_csv,
    leakage_power_map,
    parse_binding,
    runaway_margin,
)
from stacktherm.errors import (
    DomainError,
    NonConvergenceError,
    ParseError,
    ThermalRunawayError,
    ValidationError,
)
from stacktherm.fixtures import reference_nmos, reference_pmos, sram_cell
from stacktherm.stack import (
    Block,
    Floorplan,
    Layer,
    LayerKind,
    Material,
    PowerAssignment,
    StackSpec,
)

AMBIENT = 300.0


def lumped_stack():
    # die 1e-4 m^2 with sink_r 1e-4 K m^2/W: exactly 1 K/W to ambient
    fp = Floorplan(0.01, 0.01, (Block("element", 0.01, 0.01, 0.0, 0.0),))
    layer = Layer(
        0, LayerKind.ACTIVE_SILICON, 100e-6, Material("si", 150.0),
        powered=True, floorplan=fp,
    )
    return StackSpec((layer,), AMBIENT, 1e-4)


def affine_binding(slope, base=0.0):
    return LeakageBinding(
        (AffineBlockLeakage(0, "element", slope_w_per_k=slope, base_w=base),)
    )


DYN = PowerAssignment({(0, "element"): 10.0})


def sram_binding(layer, block, cells=1000):
    spec, model = sram_cell()
    return DeviceBlockLeakage(
        layer=layer,
        block=block,
        cell_count=cells,
        cell=spec,
        k_model=model,
        nmos=reference_nmos(),
        pmos=reference_pmos(),
        vdd=2.0,
    )


class TestLeakagePowerMap:
    def test_zero_cell_count_gives_zero_power(self):
        binding = LeakageBinding((sram_binding(0, "element", cells=0),))
        power = leakage_power_map(binding, {(0, "element"): 320.0})
        assert power.total() == 0.0

    def test_matches_direct_evaluation(self):
        entry = sram_binding(0, "element", cells=500)
        power = leakage_power_map(
            LeakageBinding((entry,)), {(0, "element"): 315.0}
        )
        assert power.entries[(0, "element")] == pytest.approx(
            entry.power(315.0), rel=1e-12
        )

    def test_warmer_block_leaks_strictly_more(self):
        entry = sram_binding(0, "element")
        assert entry.power(350.0) > entry.power(300.0)

    def test_missing_temperature_rejected(self):
        binding = LeakageBinding((sram_binding(0, "element"),))
        with pytest.raises(DomainError):
            leakage_power_map(binding, {})

    def test_affine_clamps_at_zero(self):
        entry = AffineBlockLeakage(0, "b", slope_w_per_k=0.5, t_ref=300.0)
        assert entry.power(280.0) == 0.0
        assert entry.power(302.0) == pytest.approx(1.0)


class TestFixedPoint:
    def test_affine_fixture_hits_closed_form(self):
        result = fixed_point(lumped_stack(), DYN, affine_binding(0.01), nx=1, ny=1)
        assert result.converged
        oracle = AMBIENT + 10.0 / (1.0 - 0.01)
        assert result.field.peak == pytest.approx(oracle, abs=0.01)

    def test_constant_leakage_converges_second_iteration(self):
        binding = affine_binding(0.0, base=1.0)
        result = fixed_point(lumped_stack(), DYN, binding, nx=1, ny=1)
        assert result.iterations == 2
        assert result.history[-1].max_delta_K == 0.0

    def test_loop_gain_two_raises(self):
        with pytest.raises((ThermalRunawayError, NonConvergenceError)) as err:
            fixed_point(lumped_stack(), DYN, affine_binding(2.0), nx=1, ny=1)
        assert err.value.history  # log survives the failure

    def test_monotone_iterates_under_positive_slope(self):
        result = fixed_point(
            lumped_stack(), DYN, affine_binding(0.05), nx=1, ny=1,
            cfg=CouplingConfig(tol_K=1e-6),
        )
        peaks = [step.peak_T_K for step in result.history]
        assert all(a <= b + 1e-12 for a, b in zip(peaks, peaks[1:]))

    def test_damping_does_not_move_fixed_point(self):
        full = fixed_point(lumped_stack(), DYN, affine_binding(0.01), nx=1, ny=1)
        damped = fixed_point(
            lumped_stack(), DYN, affine_binding(0.01), nx=1, ny=1,
            cfg=CouplingConfig(alpha=0.5),
        )
        assert damped.converged
        assert abs(full.field.peak - damped.field.peak) <= 0.01

    def test_converged_solution_is_solver_consistent(self):
        from stacktherm.solver import assemble, build_mesh, power_cells, solve

        stack = lumped_stack()
        cfg = CouplingConfig(tol_K=0.001)
        result = fixed_point(stack, DYN, affine_binding(0.01), cfg, nx=1, ny=1)
        mesh = build_mesh(stack, 1, 1, 1)
        grid = power_cells(mesh, stack, DYN.combined(result.leakage))
        system = assemble(mesh, grid, AMBIENT, stack.sink_area_resistance)
        resolved = solve(system, rel_tol=1e-12)
        assert np.abs(resolved.values - result.field.values).max() <= cfg.tol_K

    def test_device_binding_converges(self):
        # transistor-level binding on a 2x2 grid; modest cell count keeps
        # the loop gain far below 1
        stack = lumped_stack()
        binding = LeakageBinding((sram_binding(0, "element", cells=100000),))
        result = fixed_point(stack, DYN, binding, nx=2, ny=2)
        assert result.converged
        assert result.field.peak > AMBIENT + 10.0  # leakage adds heat

    def test_runaway_ceiling_honored(self):
        cfg = CouplingConfig(runaway_ceiling=400.0)
        with pytest.raises(ThermalRunawayError):
            fixed_point(
                lumped_stack(), PowerAssignment({(0, "element"): 200.0}),
                affine_binding(0.1), cfg, nx=1, ny=1,
            )


class TestRunawayMargin:
    def test_insensitive_binding_has_zero_gain(self):
        gain = runaway_margin(
            lumped_stack(), affine_binding(0.0, base=2.0), 310.0, nx=1, ny=1
        )
        assert gain == 0.0

    def test_affine_gain_is_slope_times_resistance(self):
        gain = runaway_margin(lumped_stack(), affine_binding(0.01), 310.0, nx=1, ny=1)
        assert gain == pytest.approx(0.01, abs=1e-6)

    def test_gain_two(self):
        gain = runaway_margin(lumped_stack(), affine_binding(2.0), 310.0, nx=1, ny=1)
        assert gain == pytest.approx(2.0, abs=1e-6)


class TestBindingParsing:
    def test_affine_entry(self):
        binding = parse_binding("affine 0 element slope=0.01 tref=300.0\n")
        entry = binding.entries[0]
        assert isinstance(entry, AffineBlockLeakage)
        assert entry.slope_w_per_k == 0.01

    def test_device_entry(self, tmp_path):
        from stacktherm.device import serialize_device_params

        (tmp_path / "n.params").write_text(
            serialize_device_params(reference_nmos())
        )
        (tmp_path / "p.params").write_text(
            serialize_device_params(reference_pmos())
        )
        text = (
            "device 0 element cells=100 nn=4 np=2 kn=0.25 kp=0.5 "
            "nmos=n.params pmos=p.params vdd=2.0\n"
        )
        binding = parse_binding(text, base_dir=str(tmp_path))
        entry = binding.entries[0]
        assert isinstance(entry, DeviceBlockLeakage)
        assert entry.cell_count == 100
        assert entry.nmos == reference_nmos()

    def test_missing_option_rejected(self):
        with pytest.raises(ParseError):
            parse_binding("affine 0 element tref=300.0\n")

    def test_duplicate_block_rejected(self):
        text = (
            "affine 0 element slope=0.01\n"
            "affine 0 element slope=0.02\n"
        )
        with pytest.raises(ValidationError):
            parse_binding(text)

    def test_validate_against_unknown_block(self):
        binding = parse_binding("affine 0 nosuch slope=0.01\n")
        with pytest.raises(ValidationError):
            binding.validate_against(lumped_stack())

    def test_convergence_csv_format(self):
        result = fixed_point(lumped_stack(), DYN, affine_binding(0.01), nx=1, ny=1)
        text = format_convergence_csv(result.history)
        lines = text.strip().splitlines()
        assert lines[0] == "iter,max_delta_K,peak_T_K,total_leakage_W"
        assert lines[1].startswith("1,")
