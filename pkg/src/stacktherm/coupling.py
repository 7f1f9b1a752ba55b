"""Leakage-temperature coupling via damped fixed-point iteration.

Each powered block carries either a transistor-level leakage description
(cell spec + design factors + device parameters) or a linearized affine
surrogate. The loop alternates between the thermal solve and re-evaluating
block leakage power at the blocks' mean temperatures, and detects thermal
runaway (loop gain >= 1 has no stable operating point).
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .cell import CellSpec, DoubleKModel, cell_leakage_double, load_cell_spec
from .device import DeviceParams, OperatingPoint, device_leakage, load_device_params
from .errors import (
    DomainError,
    NonConvergenceError,
    ParseError,
    ThermalRunawayError,
    ValidationError,
)
from .solver import TemperatureField, assemble, build_mesh, power_cells, solve
from .stack import PowerAssignment, rasterize


@dataclass(frozen=True)
class DeviceBlockLeakage:
    """Leakage of one block: cell_count repeated cells of one design."""

    layer: int
    block: str
    cell_count: int
    cell: CellSpec
    k_model: DoubleKModel
    nmos: DeviceParams
    pmos: DeviceParams
    vdd: float

    def __post_init__(self):
        if self.cell_count < 0:
            raise ValidationError("cell_count must be >= 0")
        if self.vdd < 0:
            raise DomainError("vdd must be >= 0")

    def power(self, temperature):
        if temperature <= 0:
            raise DomainError(f"temperature must be > 0 K, got {temperature}")
        op = OperatingPoint(vdd=self.vdd, temperature=temperature)
        i_cell = cell_leakage_double(
            self.cell,
            self.k_model,
            device_leakage(self.nmos, op),
            device_leakage(self.pmos, op),
        )
        return self.vdd * self.cell_count * i_cell


@dataclass(frozen=True)
class AffineBlockLeakage:
    """Linearized surrogate P(T) = base + slope*(T - t_ref), clamped at 0."""

    layer: int
    block: str
    slope_w_per_k: float
    t_ref: float = 300.0
    base_w: float = 0.0

    def power(self, temperature):
        if temperature <= 0:
            raise DomainError(f"temperature must be > 0 K, got {temperature}")
        return max(
            0.0, self.base_w + self.slope_w_per_k * (temperature - self.t_ref)
        )


@dataclass(frozen=True)
class LeakageBinding:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        keys = [(e.layer, e.block) for e in self.entries]
        if len(set(keys)) != len(keys):
            raise ValidationError("duplicate (layer, block) in leakage binding")

    def validate_against(self, stack):
        for e in self.entries:
            if not 0 <= e.layer < len(stack.layers):
                raise ValidationError(f"binding references unknown layer {e.layer}")
            layer = stack.layers[e.layer]
            if layer.floorplan is None or e.block not in layer.floorplan.block_names():
                raise ValidationError(
                    f"layer {e.layer} has no block {e.block!r}"
                )
        return self


@dataclass(frozen=True)
class CouplingConfig:
    max_iters: int = 100
    tol_K: float = 0.01          # on max per-block temperature change
    alpha: float = 1.0           # damping, (0, 1]
    runaway_ceiling: float = 1000.0  # K

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.tol_K <= 0:
            raise ValidationError("tol_K must be positive")
        if not 0 < self.alpha <= 1:
            raise ValidationError("alpha must be in (0, 1]")
        if self.runaway_ceiling <= 0:
            raise ValidationError("runaway_ceiling must be positive")


def leakage_power_map(binding, block_temperatures):
    """Evaluate every binding entry at its block temperature.

    ``block_temperatures`` maps (layer, block) to the block's mean
    temperature in kelvin.
    """
    entries = {}
    for e in binding.entries:
        try:
            t = block_temperatures[(e.layer, e.block)]
        except KeyError:
            raise DomainError(
                f"no temperature for layer {e.layer} block {e.block!r}"
            ) from None
        entries[(e.layer, e.block)] = e.power(t)
    return PowerAssignment(entries)


def _block_weights(mesh, stack, binding):
    """Rasterized overlap weights of each bound block, normalized to 1."""
    weights = {}
    for e in binding.entries:
        layer = stack.layers[e.layer]
        slab_ids = mesh.slabs_of_layer(e.layer)
        target = next(i for i in slab_ids if mesh.slabs[i].injects_power)
        w = rasterize(layer.floorplan, {e.block: 1.0}, mesh.nx, mesh.ny)
        weights[(e.layer, e.block)] = (target, w)
    return weights


def block_mean_temperatures(field, weights):
    """Overlap-weighted mean temperature of each block on its power slab."""
    return {
        key: float(np.sum(w * field.values[slab]))
        for key, (slab, w) in weights.items()
    }


@dataclass(frozen=True)
class CouplingStep:
    iteration: int
    max_delta_K: float
    peak_T_K: float
    total_leakage_W: float


@dataclass(frozen=True)
class CouplingResult:
    field: TemperatureField
    iterations: int
    converged: bool
    history: tuple
    block_temperatures: dict
    leakage: PowerAssignment


CONVERGENCE_CSV_HEADER = "iter,max_delta_K,peak_T_K,total_leakage_W"


def format_convergence_csv(history):
    lines = [CONVERGENCE_CSV_HEADER]
    for step in history:
        lines.append(
            f"{step.iteration},{step.max_delta_K:.9g},"
            f"{step.peak_T_K:.9g},{step.total_leakage_W:.9g}"
        )
    return "\n".join(lines) + "\n"


def write_convergence_csv(history, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_convergence_csv(history))


def fixed_point(
    stack,
    dynamic_power,
    binding,
    cfg=CouplingConfig(),
    nx=32,
    ny=32,
    z_subdivisions=1,
    rel_tol=1e-8,
    max_solver_iters=10000,
):
    """Iterate temperature and leakage power to a joint fixed point.

    Starts from the dynamic-power-only solution, then repeats
    T <- (1-alpha)*T + alpha*Solve(dynamic + leakage(T)) until the largest
    per-block mean-temperature change drops to cfg.tol_K. Raises
    ThermalRunawayError past cfg.runaway_ceiling and NonConvergenceError
    when max_iters is exhausted; both carry the convergence history.
    """
    dynamic_power.validate_against(stack)
    binding.validate_against(stack)
    mesh = build_mesh(stack, nx, ny, z_subdivisions)
    weights = _block_weights(mesh, stack, binding)
    ambient = stack.ambient_temperature
    sink_r = stack.sink_area_resistance

    def run_solve(assignment):
        grid = power_cells(mesh, stack, assignment)
        system = assemble(mesh, grid, ambient, sink_r)
        return solve(system, rel_tol=rel_tol, max_iters=max_solver_iters)

    field = run_solve(dynamic_power)
    block_t = block_mean_temperatures(field, weights)
    history = []

    for iteration in range(1, cfg.max_iters + 1):
        leakage = leakage_power_map(binding, block_t)
        solved = run_solve(dynamic_power.combined(leakage))
        damped = (1.0 - cfg.alpha) * field.values + cfg.alpha * solved.values
        field = TemperatureField(
            values=damped, iterations=solved.iterations, residual=solved.residual
        )
        new_block_t = block_mean_temperatures(field, weights)
        if block_t:
            max_delta = max(
                abs(new_block_t[k] - block_t[k]) for k in new_block_t
            )
        else:
            max_delta = 0.0  # nothing bound: converged immediately
        block_t = new_block_t
        history.append(
            CouplingStep(
                iteration=iteration,
                max_delta_K=max_delta,
                peak_T_K=field.peak,
                total_leakage_W=leakage.total(),
            )
        )
        if field.peak > cfg.runaway_ceiling:
            raise ThermalRunawayError(
                f"peak temperature {field.peak:.1f} K exceeded the runaway "
                f"ceiling {cfg.runaway_ceiling:.1f} K at iteration {iteration}",
                history=history,
            )
        if max_delta <= cfg.tol_K:
            return CouplingResult(
                field=field,
                iterations=iteration,
                converged=True,
                history=tuple(history),
                block_temperatures=dict(block_t),
                leakage=leakage,
            )

    raise NonConvergenceError(
        f"no convergence after {cfg.max_iters} iterations "
        f"(last change {max_delta:.4g} K)",
        last_delta=max_delta,
        history=history,
    )


def runaway_margin(
    stack,
    binding,
    at_temperature,
    nx=32,
    ny=32,
    z_subdivisions=1,
    diff_step=0.1,
    rel_tol=1e-12,
):
    """Loop-gain estimate: max over blocks of dP/dT times self-resistance.

    dP/dT is a central difference with the given step; the self-resistance
    comes from probing the solver with 1 W on the block alone. A gain of
    1 or more predicts a diverging fixed-point iteration.
    """
    binding.validate_against(stack)
    if at_temperature - diff_step <= 0:
        raise DomainError("at_temperature too close to 0 K for the probe step")
    mesh = build_mesh(stack, nx, ny, z_subdivisions)
    weights = _block_weights(mesh, stack, binding)
    ambient = stack.ambient_temperature

    gain = 0.0
    for e in binding.entries:
        slope = (
            e.power(at_temperature + diff_step)
            - e.power(at_temperature - diff_step)
        ) / (2.0 * diff_step)
        probe = PowerAssignment({(e.layer, e.block): 1.0})
        grid = power_cells(mesh, stack, probe)
        system = assemble(mesh, grid, ambient, stack.sink_area_resistance)
        field = solve(system, rel_tol=rel_tol)
        slab, w = weights[(e.layer, e.block)]
        self_r = float(np.sum(w * field.values[slab])) - ambient  # K per W
        gain = max(gain, slope * self_r)
    return gain


# --- binding file -----------------------------------------------------------


def parse_binding(text, base_dir=None):
    """Parse a leakage binding file.

    Two entry kinds, one per line, '#' comments:

        device <layer> <block> cells=<n> nn=<i> np=<i> kn=<f> kp=<f>
               nmos=<path> pmos=<path> vdd=<V>
        affine <layer> <block> slope=<W/K> tref=<K> [base=<W>]

    Device parameter paths resolve against base_dir.
    """
    from .units import iter_content_lines

    entries = []
    params_cache = {}

    def load_params(ref, lineno):
        if ref not in params_cache:
            path = ref if base_dir is None else os.path.join(base_dir, ref)
            try:
                params_cache[ref] = load_device_params(path)
            except OSError as exc:
                raise ParseError(f"cannot read device params {path!r}: {exc}", lineno)
        return params_cache[ref]

    for lineno, line in iter_content_lines(text):
        tokens = line.split()
        if len(tokens) < 3:
            raise ParseError(f"malformed binding line {line!r}", lineno)
        kind, layer_s, block = tokens[0], tokens[1], tokens[2]
        try:
            layer = int(layer_s)
        except ValueError:
            raise ParseError(f"bad layer index {layer_s!r}", lineno)
        opts = {}
        for tok in tokens[3:]:
            if "=" not in tok:
                raise ParseError(f"expected key=value, got {tok!r}", lineno)
            key, _, value = tok.partition("=")
            opts[key] = value
        try:
            if kind == "device":
                entries.append(
                    DeviceBlockLeakage(
                        layer=layer,
                        block=block,
                        cell_count=int(opts["cells"]),
                        cell=CellSpec(
                            name=f"{block}_cell",
                            n_n=int(opts["nn"]),
                            n_p=int(opts["np"]),
                        ),
                        k_model=DoubleKModel(
                            k_n=float(opts["kn"]), k_p=float(opts["kp"])
                        ),
                        nmos=load_params(opts["nmos"], lineno),
                        pmos=load_params(opts["pmos"], lineno),
                        vdd=float(opts["vdd"]),
                    )
                )
            elif kind == "affine":
                entries.append(
                    AffineBlockLeakage(
                        layer=layer,
                        block=block,
                        slope_w_per_k=float(opts["slope"]),
                        t_ref=float(opts.get("tref", 300.0)),
                        base_w=float(opts.get("base", 0.0)),
                    )
                )
            else:
                raise ParseError(
                    f"binding kind must be 'device' or 'affine', got {kind!r}",
                    lineno,
                )
        except KeyError as exc:
            raise ParseError(f"missing binding option {exc}", lineno) from None
    return LeakageBinding(entries=tuple(entries))


def load_binding(path):
    with open(path, encoding="utf-8") as fh:
        return parse_binding(fh.read(), base_dir=os.path.dirname(path) or ".")
