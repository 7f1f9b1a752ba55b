"""Electrothermal co-simulation toolkit for 3D-stacked memory.

Temperature-dependent transistor and cell leakage (subthreshold model with
cell-level design factors), steady-state heat conduction in layered
silicon/epoxy stacks, and a damped fixed-point loop coupling the two.
"""

from .cell import (
    CellSpec,
    DoubleKModel,
    InputGroupMeasurements,
    SingleKModel,
    cell_leakage_double,
    cell_leakage_single,
    fit_k_factors,
    static_power_butts_sohi,
)
from .coupling import (
    AffineBlockLeakage,
    CouplingConfig,
    CouplingResult,
    DeviceBlockLeakage,
    LeakageBinding,
    fixed_point,
    leakage_power_map,
    runaway_margin,
)
from .device import (
    CONSTANTS,
    DeviceKind,
    DeviceParams,
    Measurement,
    OperatingPoint,
    PhysicalConstants,
    ThresholdParams,
    device_leakage,
    fit_subthreshold_params,
    thermal_voltage,
    threshold_voltage,
)
from .errors import (
    DomainError,
    FitError,
    NonConvergenceError,
    ParseError,
    SolverError,
    StackthermError,
    ThermalRunawayError,
    ValidationError,
)
from .solver import (
    ConductanceSystem,
    Mesh,
    TemperatureField,
    assemble,
    build_mesh,
    closed_form_delta_t,
    compact_layer_model,
    layer_summary,
    power_cells,
    sink_heat_flow,
    solve,
)
from .stack import (
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

__version__ = "0.1.0"
