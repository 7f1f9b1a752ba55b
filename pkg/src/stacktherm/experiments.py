"""The stacked-memory experiment suite.

Eight 3D scenarios (power-density sweep, selective powering, epoxy glue
variants), a 2D single-die baseline, and a 3-vs-6-layer comparison, all on
the reference floorplan. The harness reports per-layer peak temperatures
and a cross-experiment summary; published absolute temperatures are echoed
for comparison, never asserted.
"""

import os
from dataclasses import dataclass
from enum import Enum

from . import fixtures
from .errors import ValidationError
from .solver import (
    Mesh,
    TemperatureField,
    assemble,
    build_mesh,
    format_field_csv,
    format_layer_pgm,
    format_summary_csv,
    layer_summary,
    power_cells,
    sink_heat_flow,
    solve,
)
from .stack import (
    PowerAssignment,
    StackSpec,
    serialize_floorplan,
    serialize_power,
    serialize_stack,
)

LOGIC_DENSITY_W_CM2 = 1.0  # fixed background density for non-cache blocks


class PoweredSet(Enum):
    ALL = "all"
    ALTERNATE_LAYERS = "alternate_layers"
    LAYER1_ONLY = "layer1_only"
    LAYER1_TWO_BLOCKS = "layer1_two_blocks"


@dataclass(frozen=True)
class ExperimentDef:
    id: str
    silicon_layers: int
    epoxy_resistivity: float | None  # m K/W; None for the single-die case
    powered: PoweredSet
    cache_density_w_cm2: float | None = None
    cache_total_w: float | None = None
    reference_K: float | None = None  # published value echoed for comparison

    def __post_init__(self):
        if (self.cache_density_w_cm2 is None) == (self.cache_total_w is None):
            raise ValidationError(
                "exactly one of cache_density_w_cm2 / cache_total_w is required"
            )

    @property
    def cache_power_label(self):
        if self.cache_density_w_cm2 is not None:
            return f"{self.cache_density_w_cm2:g}W/cm2"
        return f"{self.cache_total_w:g}W"


# The canonical experiment list. "Alternate layers" powers the 1st, 3rd
# and 5th of the six silicon layers; experiment 6 ("only two cells in a
# layer are accessed") powers blocks cache0 and cache1 of silicon layer 1.
EXPERIMENTS = {
    "1": ExperimentDef("1", 6, 0.25, PoweredSet.ALL, cache_density_w_cm2=3.0),
    "2": ExperimentDef("2", 6, 0.25, PoweredSet.ALL, cache_density_w_cm2=8.0),
    "3": ExperimentDef("3", 6, 0.25, PoweredSet.ALL, cache_density_w_cm2=10.0),
    "4": ExperimentDef(
        "4", 6, 0.25, PoweredSet.ALTERNATE_LAYERS, cache_density_w_cm2=3.0
    ),
    "5": ExperimentDef(
        "5", 6, 0.25, PoweredSet.LAYER1_ONLY, cache_density_w_cm2=3.0
    ),
    "6": ExperimentDef(
        "6", 6, 0.25, PoweredSet.LAYER1_TWO_BLOCKS, cache_density_w_cm2=3.0
    ),
    "7": ExperimentDef("7", 6, 0.001, PoweredSet.ALL, cache_density_w_cm2=3.0),
    "8": ExperimentDef("8", 6, 0.005, PoweredSet.ALL, cache_density_w_cm2=3.0),
    "2d-baseline": ExperimentDef(
        "2d-baseline", 1, None, PoweredSet.ALL, cache_total_w=10.0,
        reference_K=331.26,
    ),
    "3layer-compare": ExperimentDef(
        "3layer-compare", 3, 0.25, PoweredSet.ALL, cache_density_w_cm2=3.0
    ),
}


def powered_silicon_layers(exp):
    """1-based silicon layer numbers that carry power in this scenario."""
    if exp.powered is PoweredSet.ALL:
        return tuple(range(1, exp.silicon_layers + 1))
    if exp.powered is PoweredSet.ALTERNATE_LAYERS:
        return tuple(range(1, exp.silicon_layers + 1, 2))
    return (1,)  # layer1_only and layer1_two_blocks


def build_experiment_stack(exp):
    return fixtures.memory_stack(
        n_silicon=exp.silicon_layers,
        epoxy_resistivity=exp.epoxy_resistivity if exp.epoxy_resistivity else 0.25,
    )


def build_experiment_power(exp, stack):
    """Cache blocks at the experiment's power, other blocks at the fixed
    background density, on the selected silicon layers."""
    fp = stack.layers[0].floorplan
    entries = {}
    for j in powered_silicon_layers(exp):
        layer_idx = fixtures.silicon_layer_index(j)
        for block in fp.blocks:
            is_cache = block.name.startswith("cache")
            if exp.powered is PoweredSet.LAYER1_TWO_BLOCKS:
                if block.name not in ("cache0", "cache1"):
                    continue
            if is_cache:
                if exp.cache_total_w is not None:
                    watts = exp.cache_total_w
                else:
                    watts = exp.cache_density_w_cm2 * block.area * 1e4
            else:
                watts = LOGIC_DENSITY_W_CM2 * block.area * 1e4
            entries[(layer_idx, block.name)] = watts
    return PowerAssignment(entries).validate_against(stack)


@dataclass(frozen=True)
class ExperimentResult:
    definition: ExperimentDef
    stack: StackSpec
    mesh: Mesh
    power: PowerAssignment
    field: TemperatureField
    stats: list
    sink_flow_W: float

    @property
    def peak_K(self):
        return self.field.peak

    def silicon_peaks(self):
        """(silicon layer number, stack layer index, peak K) rows."""
        by_layer = {s.layer: s for s in self.stats}
        rows = []
        for j in range(1, self.definition.silicon_layers + 1):
            idx = fixtures.silicon_layer_index(j)
            rows.append((j, idx, by_layer[idx].t_max))
        return rows


def run_experiment(exp, nx=32, ny=32, z_subdivisions=1, rel_tol=1e-10):
    stack = build_experiment_stack(exp)
    power = build_experiment_power(exp, stack)
    mesh = build_mesh(stack, nx, ny, z_subdivisions)
    grid = power_cells(mesh, stack, power)
    system = assemble(
        mesh, grid, stack.ambient_temperature, stack.sink_area_resistance
    )
    field = solve(system, rel_tol=rel_tol)
    return ExperimentResult(
        definition=exp,
        stack=stack,
        mesh=mesh,
        power=power,
        field=field,
        stats=layer_summary(field, mesh),
        sink_flow_W=sink_heat_flow(system, field),
    )


def expand_selection(selection):
    """Resolve a --set value into experiment ids, preserving order.

    Accepts comma-separated tokens from {1..8, all, 2d, compare-layers}.
    "compare-layers" runs the 3-layer variant plus experiment 1.
    """
    ids = []

    def push(exp_id):
        if exp_id not in ids:
            ids.append(exp_id)

    for token in selection.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "all":
            for i in range(1, 9):
                push(str(i))
        elif token == "2d":
            push("2d-baseline")
        elif token == "compare-layers":
            push("3layer-compare")
            push("1")
        elif token in EXPERIMENTS:
            push(token)
        else:
            raise ValidationError(
                f"unknown experiment selector {token!r}; expected 1..8, "
                "all, 2d or compare-layers"
            )
    if not ids:
        raise ValidationError("empty experiment selection")
    return ids


EXPERIMENTS_CSV_HEADER = (
    "experiment,silicon_layers,cache_power,epoxy_resistivity_mK_per_W,"
    "powered,peak_T_K,bottom_silicon_peak_K,top_silicon_peak_K,reference_K"
)

LAYER_PEAKS_CSV_HEADER = "experiment,silicon_layer,stack_layer,peak_K"


def format_experiments_csv(results):
    lines = [EXPERIMENTS_CSV_HEADER]
    for r in results:
        exp = r.definition
        peaks = r.silicon_peaks()
        resistivity = (
            f"{exp.epoxy_resistivity:g}" if exp.epoxy_resistivity else ""
        )
        reference = f"{exp.reference_K:g}" if exp.reference_K else ""
        lines.append(
            f"{exp.id},{exp.silicon_layers},{exp.cache_power_label},"
            f"{resistivity},{exp.powered.value},{r.peak_K:.9g},"
            f"{peaks[0][2]:.9g},{peaks[-1][2]:.9g},{reference}"
        )
    return "\n".join(lines) + "\n"


def format_layer_peaks_csv(results):
    lines = [LAYER_PEAKS_CSV_HEADER]
    for r in results:
        for j, idx, peak in r.silicon_peaks():
            lines.append(f"{r.definition.id},{j},{idx},{peak:.9g}")
    return "\n".join(lines) + "\n"


def write_experiment_outputs(result, out_dir):
    """field.csv, per-layer PGMs, summary.csv plus the serialized inputs."""
    os.makedirs(out_dir, exist_ok=True)
    mesh = result.mesh
    with open(os.path.join(out_dir, "field.csv"), "w", encoding="utf-8") as fh:
        fh.write(format_field_csv(result.field, mesh))
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(format_summary_csv(result.stats))
    for layer_index in mesh.layer_indices():
        path = os.path.join(out_dir, f"layer{layer_index}.pgm")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_layer_pgm(result.field, mesh, layer_index))
    with open(os.path.join(out_dir, "floorplan.flp"), "w", encoding="utf-8") as fh:
        fh.write(serialize_floorplan(result.stack.layers[0].floorplan))
    paths = {lay.index: "floorplan.flp" for lay in result.stack.powered_layers()}
    with open(os.path.join(out_dir, "stack.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_stack(result.stack, floorplan_paths=paths))
    with open(os.path.join(out_dir, "power.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_power(result.power))
