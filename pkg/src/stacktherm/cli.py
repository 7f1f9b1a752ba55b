"""Command-line front end.

Subcommands: ``leak`` (device/cell leakage sweeps to stdout CSV),
``solve`` (one thermal solve to field.csv / layer PGMs / summary.csv),
``experiments`` (the stacked-memory scenario suite), and ``couple``
(electrothermal fixed point with a convergence log).

Exit codes: 0 success, 1 data or domain error, 2 usage error,
3 non-convergence or thermal runaway.
"""

import argparse
import os
import sys

import numpy as np

from . import fixtures
from .cell import cell_leakage_double, cell_leakage_single, load_cell_spec
from .coupling import (
    CouplingConfig,
    NonConvergenceError,
    ThermalRunawayError,
    fixed_point,
    format_convergence_csv,
    load_binding,
    write_convergence_csv,
)
from .device import DeviceKind, OperatingPoint, device_leakage, load_device_params
from .errors import (
    DomainError,
    FitError,
    ParseError,
    SolverError,
    StackthermError,
    ValidationError,
)
from .experiments import (
    EXPERIMENTS,
    expand_selection,
    format_experiments_csv,
    format_layer_peaks_csv,
    run_experiment,
    write_experiment_outputs,
)
from .solver import (
    assemble,
    build_mesh,
    format_summary_csv,
    layer_summary,
    power_cells,
    solve,
    write_field_csv,
    write_layer_pgms,
    write_summary_csv,
)
from .stack import load_power, load_stack

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3


class UsageError(Exception):
    pass


def _parse_grid(text):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise UsageError(f"--grid must look like 32x32, got {text!r}")
    try:
        nx, ny = int(parts[0]), int(parts[1])
    except ValueError:
        raise UsageError(f"--grid must look like 32x32, got {text!r}")
    if nx < 1 or ny < 1:
        raise UsageError("--grid dimensions must be >= 1")
    return nx, ny


def _sweep_axis(args):
    if args.sweep_from >= args.sweep_to:
        raise UsageError("--from must be less than --to")
    if args.steps < 2:
        raise UsageError("--steps must be at least 2")
    return np.linspace(args.sweep_from, args.sweep_to, args.steps)


def cmd_leak(args, out=sys.stdout):
    if (args.device is None) == (args.cell is None):
        raise UsageError("exactly one of --device or --cell is required")

    params_files = args.params or []
    if args.device is not None:
        kind = DeviceKind(args.device)
        if len(params_files) > 1:
            raise UsageError("--device mode takes at most one --params file")
        if params_files:
            params = load_device_params(params_files[0])
            if params.kind is not kind:
                raise ValidationError(
                    f"--device {kind.value} but {params_files[0]} describes "
                    f"a {params.kind.value} device"
                )
        else:
            params = (
                fixtures.reference_nmos()
                if kind is DeviceKind.NMOS
                else fixtures.reference_pmos()
            )

        def current(op):
            return device_leakage(params, op)

    else:
        spec, model = load_cell_spec(args.cell)
        if model is None:
            raise ValidationError(
                f"cell file {args.cell!r} carries no design factors"
            )
        loaded = [load_device_params(p) for p in params_files]
        by_kind = {p.kind: p for p in loaded}
        if len(by_kind) != len(loaded):
            raise UsageError("--params files must describe distinct device kinds")
        nmos = by_kind.get(DeviceKind.NMOS, fixtures.reference_nmos())
        pmos = by_kind.get(DeviceKind.PMOS, fixtures.reference_pmos())

        from .cell import DoubleKModel, SingleKModel

        def current(op):
            i_n = device_leakage(nmos, op)
            i_p = device_leakage(pmos, op)
            if isinstance(model, DoubleKModel):
                return cell_leakage_double(spec, model, i_n, i_p)
            return cell_leakage_single(spec, model, i_n, i_p)

    axis = _sweep_axis(args)
    if args.sweep == "temp":
        if args.vdd is None:
            raise UsageError("--sweep temp needs a fixed --vdd")
        points = [OperatingPoint(vdd=args.vdd, temperature=t) for t in axis]
    else:
        if args.temp is None:
            raise UsageError("--sweep vdd needs a fixed --temp")
        points = [OperatingPoint(vdd=v, temperature=args.temp) for v in axis]

    out.write("x,current_A\n")
    for x, op in zip(axis, points):
        out.write(f"{x:.9g},{current(op):.9g}\n")
    return EXIT_OK


def cmd_solve(args, out=sys.stdout):
    nx, ny = _parse_grid(args.grid)
    stack = load_stack(args.stack)
    power = load_power(args.power, stack)
    mesh = build_mesh(stack, nx, ny, args.zsub)
    grid = power_cells(mesh, stack, power)
    system = assemble(
        mesh, grid, stack.ambient_temperature, stack.sink_area_resistance
    )
    field = solve(system, rel_tol=args.rel_tol)
    stats = layer_summary(field, mesh)

    os.makedirs(args.out, exist_ok=True)
    write_field_csv(field, mesh, os.path.join(args.out, "field.csv"))
    write_layer_pgms(field, mesh, args.out)
    write_summary_csv(stats, os.path.join(args.out, "summary.csv"))
    out.write(format_summary_csv(stats))
    return EXIT_OK


def cmd_experiments(args, out=sys.stdout):
    nx, ny = _parse_grid(args.grid)
    ids = expand_selection(args.set)
    results = []
    for exp_id in ids:
        result = run_experiment(
            EXPERIMENTS[exp_id], nx=nx, ny=ny, z_subdivisions=args.zsub
        )
        results.append(result)
        write_experiment_outputs(
            result, os.path.join(args.out, f"exp_{exp_id}")
        )
    os.makedirs(args.out, exist_ok=True)
    summary = format_experiments_csv(results)
    with open(
        os.path.join(args.out, "experiments.csv"), "w", encoding="utf-8"
    ) as fh:
        fh.write(summary)
    with open(
        os.path.join(args.out, "layer_peaks.csv"), "w", encoding="utf-8"
    ) as fh:
        fh.write(format_layer_peaks_csv(results))
    out.write(summary)
    return EXIT_OK


def cmd_couple(args, out=sys.stdout):
    nx, ny = _parse_grid(args.grid)
    stack = load_stack(args.stack)
    power = load_power(args.power, stack)
    binding = load_binding(args.binding)
    cfg = CouplingConfig(
        max_iters=args.max_iters,
        tol_K=args.tol,
        alpha=args.alpha,
    )
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "convergence.csv")
    try:
        result = fixed_point(
            stack, power, binding, cfg, nx=nx, ny=ny, z_subdivisions=args.zsub
        )
    except (ThermalRunawayError, NonConvergenceError) as exc:
        write_convergence_csv(exc.history, log_path)
        raise
    mesh = build_mesh(stack, nx, ny, args.zsub)
    write_field_csv(result.field, mesh, os.path.join(args.out, "field.csv"))
    write_layer_pgms(result.field, mesh, args.out)
    write_summary_csv(
        layer_summary(result.field, mesh), os.path.join(args.out, "summary.csv")
    )
    write_convergence_csv(result.history, log_path)
    out.write(format_convergence_csv(result.history))
    out.write(
        f"# converged in {result.iterations} iterations, "
        f"peak {result.field.peak:.9g} K\n"
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stacktherm",
        description="Leakage and thermal analysis of stacked memory dies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_leak = sub.add_parser("leak", help="leakage current sweeps (CSV on stdout)")
    p_leak.add_argument("--device", choices=["nmos", "pmos"])
    p_leak.add_argument("--cell", metavar="FILE", help="cell spec with k factors")
    p_leak.add_argument(
        "--params",
        action="append",
        metavar="FILE",
        help="device parameter file (repeat for cell mode); defaults to the "
        "packaged reference devices",
    )
    p_leak.add_argument("--sweep", choices=["temp", "vdd"], required=True)
    p_leak.add_argument("--from", dest="sweep_from", type=float, required=True)
    p_leak.add_argument("--to", dest="sweep_to", type=float, required=True)
    p_leak.add_argument("--steps", type=int, default=101)
    p_leak.add_argument("--vdd", type=float, help="fixed supply for --sweep temp")
    p_leak.add_argument("--temp", type=float, help="fixed kelvin for --sweep vdd")
    p_leak.set_defaults(func=cmd_leak)

    p_solve = sub.add_parser("solve", help="steady-state thermal solve")
    p_solve.add_argument("--stack", required=True)
    p_solve.add_argument("--power", required=True)
    p_solve.add_argument("--grid", default="32x32", metavar="NXxNY")
    p_solve.add_argument("--zsub", type=int, default=1)
    p_solve.add_argument("--rel-tol", type=float, default=1e-8)
    p_solve.add_argument("--out", required=True)
    p_solve.set_defaults(func=cmd_solve)

    p_exp = sub.add_parser("experiments", help="run the scenario suite")
    p_exp.add_argument(
        "--set",
        required=True,
        help="comma list of 1..8, all, 2d, compare-layers",
    )
    p_exp.add_argument("--grid", default="32x32", metavar="NXxNY")
    p_exp.add_argument("--zsub", type=int, default=1)
    p_exp.add_argument("--out", required=True)
    p_exp.set_defaults(func=cmd_experiments)

    p_couple = sub.add_parser("couple", help="coupled leakage/thermal run")
    p_couple.add_argument("--stack", required=True)
    p_couple.add_argument("--power", required=True)
    p_couple.add_argument("--binding", required=True)
    p_couple.add_argument("--grid", default="32x32", metavar="NXxNY")
    p_couple.add_argument("--zsub", type=int, default=1)
    p_couple.add_argument("--alpha", type=float, default=1.0)
    p_couple.add_argument("--tol", type=float, default=0.01)
    p_couple.add_argument("--max-iters", type=int, default=100)
    p_couple.add_argument("--out", required=True)
    p_couple.set_defaults(func=cmd_couple)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ThermalRunawayError, NonConvergenceError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ParseError, ValidationError, DomainError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        name = getattr(exc, "filename", None)
        where = f" ({name})" if name else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_DATA
    except StackthermError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
