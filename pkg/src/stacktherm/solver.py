"""Steady-state heat conduction in a layered stack.

Three fidelities:

* a finite-volume mesh of hexahedral cells forming a 7-point conductance
  network, solved with diagonally preconditioned conjugate gradients;
* a per-layer resistive chain (single node per layer plane) that is
  algebraically identical to the mesh at nx = ny = 1;
* the one-dimensional closed form dT = R_th * P / A.

Boundary conditions: lateral and top faces adiabatic, every bottom-slab
cell coupled to ambient through the sink area resistance. Cell values live
at cell centers; within a powered layer, power is injected into the slab
farthest from the sink.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DomainError, SolverError, ValidationError
from .stack import rasterize


@dataclass(frozen=True)
class Slab:
    """One z-division of a layer: thickness and per-cell conductivity."""

    dz: float
    conductivity: np.ndarray  # (nx, ny), W/(m K)
    layer_index: int
    injects_power: bool  # topmost slab of its layer

    def __post_init__(self):
        if self.dz <= 0:
            raise ValidationError("slab thickness must be positive")
        if (self.conductivity <= 0).any():
            raise ValidationError("slab conductivity must be positive")


@dataclass(frozen=True)
class Mesh:
    nx: int
    ny: int
    dx: float
    dy: float
    slabs: tuple

    def __post_init__(self):
        object.__setattr__(self, "slabs", tuple(self.slabs))
        if self.nx < 1 or self.ny < 1:
            raise ValidationError("mesh needs nx, ny >= 1")
        if not self.slabs:
            raise ValidationError("mesh needs at least one slab")

    @property
    def n_slabs(self):
        return len(self.slabs)

    @property
    def n_cells(self):
        return self.n_slabs * self.nx * self.ny

    @property
    def cell_area(self):
        return self.dx * self.dy

    def layer_indices(self):
        seen = []
        for slab in self.slabs:
            if slab.layer_index not in seen:
                seen.append(slab.layer_index)
        return tuple(seen)

    def slabs_of_layer(self, layer_index):
        return tuple(
            i for i, slab in enumerate(self.slabs)
            if slab.layer_index == layer_index
        )


def build_mesh(stack, nx, ny, z_subdivisions=1):
    """Mesh the stack laterally nx-by-ny with z subdivisions per layer.

    ``z_subdivisions`` is an int applied to every layer or a per-layer
    sequence. Slab conductivity comes from the layer material.
    """
    if nx < 1 or ny < 1:
        raise DomainError("nx and ny must be >= 1")
    n_layers = len(stack.layers)
    if isinstance(z_subdivisions, int):
        subs = [z_subdivisions] * n_layers
    else:
        subs = list(z_subdivisions)
        if len(subs) != n_layers:
            raise DomainError(
                f"z_subdivisions has {len(subs)} entries for {n_layers} layers"
            )
    if any(s < 1 for s in subs):
        raise DomainError("z_subdivisions must be >= 1 everywhere")

    die_w, die_h = stack.die_width, stack.die_height
    slabs = []
    for layer, n_sub in zip(stack.layers, subs):
        k = np.full((nx, ny), layer.material.thermal_conductivity)
        dz = layer.thickness / n_sub
        for j in range(n_sub):
            slabs.append(
                Slab(
                    dz=dz,
                    conductivity=k,
                    layer_index=layer.index,
                    injects_power=(j == n_sub - 1),
                )
            )
    return Mesh(nx=nx, ny=ny, dx=die_w / nx, dy=die_h / ny, slabs=tuple(slabs))


def power_cells(mesh, stack, assignment):
    """Rasterize a PowerAssignment onto the mesh.

    Returns an (n_slabs, nx, ny) array of watts; each powered layer's
    blocks land in that layer's power-injection slab.
    """
    assignment.validate_against(stack)
    grid = np.zeros((mesh.n_slabs, mesh.nx, mesh.ny))
    for layer in stack.layers:
        watts = assignment.for_layer(layer.index)
        if not watts:
            continue
        slab_ids = mesh.slabs_of_layer(layer.index)
        target = next(i for i in slab_ids if mesh.slabs[i].injects_power)
        grid[target] += rasterize(layer.floorplan, watts, mesh.nx, mesh.ny)
    return grid


@dataclass(frozen=True)
class ConductanceSystem:
    """Symmetric positive-definite G*T = P over the mesh cells.

    ``matrix`` is CSR in 7-point stencil form; ``rhs`` holds per-cell power
    plus the sink boundary contribution g_sink * T_ambient; ``sink_g`` is
    the per-bottom-cell conductance to ambient.
    """

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    sink_g: np.ndarray  # (nx*ny,)
    ambient: float
    injected_power: float
    mesh: Mesh


def assemble(mesh, power, ambient, sink_area_resistance):
    """Assemble the conductance system for a per-cell power array.

    Face conductance between adjacent cells is the series combination
    g = A_face / (d1/(2 k1) + d2/(2 k2)); every bottom-slab cell couples
    to ambient with conductance dx*dy / sink_area_resistance.
    """
    power = np.asarray(power, dtype=float)
    if power.shape != (mesh.n_slabs, mesh.nx, mesh.ny):
        raise DomainError(
            f"power shape {power.shape} does not match mesh "
            f"{(mesh.n_slabs, mesh.nx, mesh.ny)}"
        )
    if (power < 0).any():
        raise DomainError("cell powers must be >= 0")
    if not np.isfinite(sink_area_resistance) or sink_area_resistance <= 0:
        raise ValidationError(
            "zero sink conductance: sink_area_resistance must be positive "
            "and finite, or the system is singular"
        )

    nx, ny, nz = mesh.nx, mesh.ny, mesh.n_slabs
    n_lat = nx * ny
    n = nz * n_lat
    dx, dy = mesh.dx, mesh.dy

    def flat(s):
        # flat index block of slab s, shaped (nx, ny)
        return np.arange(s * n_lat, (s + 1) * n_lat).reshape(nx, ny)

    diag = np.zeros(n)
    rows, cols, vals = [], [], []

    def add_faces(idx_a, idx_b, g):
        a = idx_a.ravel()
        b = idx_b.ravel()
        gv = g.ravel()
        rows.extend((a, b))
        cols.extend((b, a))
        vals.extend((-gv, -gv))
        np.add.at(diag, a, gv)
        np.add.at(diag, b, gv)

    for s, slab in enumerate(mesh.slabs):
        k = slab.conductivity
        ids = flat(s)
        if nx > 1:
            g = (dy * slab.dz) / (
                dx / (2.0 * k[:-1, :]) + dx / (2.0 * k[1:, :])
            )
            add_faces(ids[:-1, :], ids[1:, :], g)
        if ny > 1:
            g = (dx * slab.dz) / (
                dy / (2.0 * k[:, :-1]) + dy / (2.0 * k[:, 1:])
            )
            add_faces(ids[:, :-1], ids[:, 1:], g)
        if s + 1 < nz:
            upper = mesh.slabs[s + 1]
            g = (dx * dy) / (
                slab.dz / (2.0 * k) + upper.dz / (2.0 * upper.conductivity)
            )
            add_faces(ids, flat(s + 1), g)

    g_sink = np.full(n_lat, dx * dy / sink_area_resistance)
    diag[:n_lat] += g_sink

    rhs = power.reshape(n).copy()
    rhs[:n_lat] += g_sink * ambient

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()

    return ConductanceSystem(
        matrix=matrix,
        rhs=rhs,
        sink_g=g_sink,
        ambient=ambient,
        injected_power=float(power.sum()),
        mesh=mesh,
    )


@dataclass(frozen=True)
class TemperatureField:
    """Per-cell steady-state temperatures, (n_slabs, nx, ny)."""

    values: np.ndarray
    iterations: int
    residual: float  # relative, ||G T - P|| / ||P||

    @property
    def peak(self):
        return float(self.values.max())

    @property
    def minimum(self):
        return float(self.values.min())


def solve(system, rel_tol=1e-8, max_iters=10000):
    """Diagonally preconditioned conjugate gradients on G*T = P.

    Starts from a uniform-ambient guess (exact for zero power). Raises
    SolverError when the relative residual has not reached rel_tol within
    max_iters.
    """
    a = system.matrix
    b = system.rhs
    n = b.size
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        raise SolverError("zero right-hand side; system has no heat input")
    inv_diag = 1.0 / a.diagonal()

    x = np.full(n, system.ambient)
    r = b - a @ x
    rel = float(np.linalg.norm(r)) / norm_b
    iterations = 0
    if rel > rel_tol:
        z = inv_diag * r
        p = z.copy()
        rz = float(r @ z)
        for iterations in range(1, max_iters + 1):
            ap = a @ p
            alpha = rz / float(p @ ap)
            x += alpha * p
            r -= alpha * ap
            rel = float(np.linalg.norm(r)) / norm_b
            if rel <= rel_tol:
                # recurrence residual can drift; confirm with the true one
                r = b - a @ x
                rel = float(np.linalg.norm(r)) / norm_b
                if rel <= rel_tol:
                    break
            z = inv_diag * r
            rz_next = float(r @ z)
            p = z + (rz_next / rz) * p
            rz = rz_next
        else:
            raise SolverError(
                f"no convergence after {max_iters} iterations "
                f"(relative residual {rel:.3e})",
                residual=rel,
                iterations=max_iters,
            )
    mesh = system.mesh
    return TemperatureField(
        values=x.reshape(mesh.n_slabs, mesh.nx, mesh.ny),
        iterations=iterations,
        residual=rel,
    )


def sink_heat_flow(system, field):
    """Heat leaving through the sink boundary, sum g_sink*(T - T_ambient)."""
    bottom = field.values[0].reshape(-1)
    return float(np.sum(system.sink_g * (bottom - system.ambient)))


def closed_form_delta_t(r_th, p, a):
    """dT = R_th * P / A for a single lumped thermal resistance."""
    if a <= 0:
        raise DomainError(f"area must be positive, got {a}")
    return r_th * p / a


def compact_layer_model(stack, layer_powers, die_area=None):
    """Per-layer plane temperatures from the 1D resistive chain.

    Layer nodes sit at layer midplanes, linked by the series combination
    of adjacent half-layer resistances, exactly like the mesh at
    nx = ny = 1 (which this reproduces to rounding). Power enters at each
    layer's node; the flow through every link is the total power injected
    above it.
    """
    powers = np.asarray(layer_powers, dtype=float)
    if powers.shape != (len(stack.layers),):
        raise DomainError(
            f"need one power per layer ({len(stack.layers)}), got {powers.shape}"
        )
    if (powers < 0).any():
        raise DomainError("layer powers must be >= 0")
    area = die_area
    if area is None:
        area = stack.die_width * stack.die_height
    if area <= 0:
        raise DomainError("die area must be positive")

    # power flowing through the link below each plane i: everything
    # injected at plane i or above
    above = np.cumsum(powers[::-1])[::-1]

    temps = np.empty(len(stack.layers))
    temps[0] = (
        stack.ambient_temperature
        + stack.sink_area_resistance / area * above[0]
    )
    for i in range(len(stack.layers) - 1):
        lo, hi = stack.layers[i], stack.layers[i + 1]
        r_link = (
            lo.thickness / (2.0 * lo.material.thermal_conductivity)
            + hi.thickness / (2.0 * hi.material.thermal_conductivity)
        ) / area
        temps[i + 1] = temps[i] + r_link * above[i + 1]
    return temps


@dataclass(frozen=True)
class LayerStats:
    layer: int
    t_min: float
    t_mean: float
    t_max: float


def layer_summary(field, mesh, stack=None):
    """Per-layer (min, mean, max) over that layer's slabs and cells."""
    if field.values.shape != (mesh.n_slabs, mesh.nx, mesh.ny):
        raise DomainError("field does not match mesh")
    stats = []
    for layer_index in mesh.layer_indices():
        ids = mesh.slabs_of_layer(layer_index)
        vals = field.values[list(ids)]
        stats.append(
            LayerStats(
                layer=layer_index,
                t_min=float(vals.min()),
                t_mean=float(vals.mean()),
                t_max=float(vals.max()),
            )
        )
    return stats


# --- exports ----------------------------------------------------------------

FIELD_CSV_HEADER = "layer,iz,ix,iy,x_m,y_m,T_K"


def format_field_csv(field, mesh):
    lines = [FIELD_CSV_HEADER]
    for iz, slab in enumerate(mesh.slabs):
        for ix in range(mesh.nx):
            x = (ix + 0.5) * mesh.dx
            for iy in range(mesh.ny):
                y = (iy + 0.5) * mesh.dy
                t = field.values[iz, ix, iy]
                lines.append(
                    f"{slab.layer_index},{iz},{ix},{iy},{x:.9g},{y:.9g},{t:.9g}"
                )
    return "\n".join(lines) + "\n"


def write_field_csv(field, mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_field_csv(field, mesh))


SUMMARY_CSV_HEADER = "layer,min_K,mean_K,max_K"


def format_summary_csv(stats):
    lines = [SUMMARY_CSV_HEADER]
    for s in stats:
        lines.append(f"{s.layer},{s.t_min:.9g},{s.t_mean:.9g},{s.t_max:.9g}")
    return "\n".join(lines) + "\n"


def write_summary_csv(stats, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_summary_csv(stats))


def format_layer_pgm(field, mesh, layer_index):
    """Plain (P2) 8-bit grayscale map of one layer.

    Grey levels map the global field range [min, max] onto [0, 255] with
    ties-to-even rounding (a uniform field renders as 0). Rows run from
    the top of the die (iy = ny-1) downward. The field range is recorded
    in the comment line.
    """
    f_min = field.minimum
    f_max = field.peak
    ids = list(mesh.slabs_of_layer(layer_index))
    if not ids:
        raise DomainError(f"mesh has no layer {layer_index}")
    lateral = field.values[ids].max(axis=0)  # (nx, ny)
    if f_max > f_min:
        levels = np.rint((lateral - f_min) / (f_max - f_min) * 255.0)
    else:
        levels = np.zeros_like(lateral)
    levels = levels.astype(int)
    lines = [
        "P2",
        f"# min_K={f_min:.9g} max_K={f_max:.9g}",
        f"{mesh.nx} {mesh.ny}",
        "255",
    ]
    for iy in range(mesh.ny - 1, -1, -1):
        lines.append(" ".join(str(levels[ix, iy]) for ix in range(mesh.nx)))
    return "\n".join(lines) + "\n"


def write_layer_pgms(field, mesh, out_dir, prefix="layer"):
    """One PGM per layer, named <prefix><layer>.pgm. Returns the paths."""
    paths = []
    for layer_index in mesh.layer_indices():
        path = os.path.join(out_dir, f"{prefix}{layer_index}.pgm")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_layer_pgm(field, mesh, layer_index))
        paths.append(path)
    return paths
