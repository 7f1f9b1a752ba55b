"""Chip-stack geometry: floorplans, layers, power assignments.

Three '#'-commented, whitespace-delimited text formats (floorplan, stack,
power) with canonical serialization, plus rasterization of block power
onto a lateral simulation grid. Parsed objects are immutable after
validation and safe to share between concurrent solves.
"""

import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, ParseError, ValidationError
from .units import iter_content_lines, parse_quantity

# Interiors closer than this (relative to die size) count as overlapping;
# block edges may touch.
_GEOM_RTOL = 1e-9


@dataclass(frozen=True)
class Material:
    name: str
    thermal_conductivity: float  # W/(m K)

    def __post_init__(self):
        if self.thermal_conductivity <= 0:
            raise ValidationError(
                f"conductivity of {self.name!r} must be positive"
            )


@dataclass(frozen=True)
class Block:
    name: str
    width: float
    height: float
    left: float
    bottom: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"block {self.name!r} must have positive size")

    @property
    def right(self):
        return self.left + self.width

    @property
    def top(self):
        return self.bottom + self.height

    @property
    def area(self):
        return self.width * self.height


@dataclass(frozen=True)
class Floorplan:
    die_width: float
    die_height: float
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.die_width <= 0 or self.die_height <= 0:
            raise ValidationError("die dimensions must be positive")
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise ValidationError(f"duplicate block name {dup!r}")
        eps_x = _GEOM_RTOL * self.die_width
        eps_y = _GEOM_RTOL * self.die_height
        for b in self.blocks:
            if (b.left < -eps_x or b.bottom < -eps_y
                    or b.right > self.die_width + eps_x
                    or b.top > self.die_height + eps_y):
                raise ValidationError(
                    f"block {b.name!r} extends outside the {self.die_width} x "
                    f"{self.die_height} die"
                )
        for i, a in enumerate(self.blocks):
            for b in self.blocks[i + 1:]:
                dx = min(a.right, b.right) - max(a.left, b.left)
                dy = min(a.top, b.top) - max(a.bottom, b.bottom)
                if dx > eps_x and dy > eps_y:
                    raise ValidationError(
                        f"blocks {a.name!r} and {b.name!r} overlap"
                    )

    def block(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def block_names(self):
        return tuple(b.name for b in self.blocks)


class LayerKind(Enum):
    ACTIVE_SILICON = "active_silicon"
    EPOXY = "epoxy"
    SPREADER = "spreader"
    PACKAGE = "package"
    INTERFACE = "interface"


@dataclass(frozen=True)
class Layer:
    index: int               # 0 = nearest the heat sink
    kind: LayerKind
    thickness: float         # m
    material: Material
    powered: bool = False
    floorplan: Floorplan | None = None
    floorplan_path: str | None = None  # provenance, used when re-serializing

    def __post_init__(self):
        if self.thickness <= 0:
            raise ValidationError(f"layer {self.index}: thickness must be positive")
        if self.powered and self.kind is not LayerKind.ACTIVE_SILICON:
            raise ValidationError(
                f"layer {self.index}: only active_silicon layers may be powered"
            )
        if self.powered and self.floorplan is None:
            raise ValidationError(
                f"layer {self.index}: powered layer needs a floorplan"
            )


@dataclass(frozen=True)
class StackSpec:
    """Layer stack, bottom (heat-sink side) first.

    Bottom face couples to ambient through sink_area_resistance (Robin
    condition); lateral and top faces are adiabatic.
    """

    layers: tuple
    ambient_temperature: float = 300.0    # K
    sink_area_resistance: float = 2e-4    # K m^2 / W

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValidationError("stack needs at least one layer")
        for pos, layer in enumerate(self.layers):
            if layer.index != pos:
                raise ValidationError(
                    f"layer indices must be contiguous from 0; position {pos} "
                    f"has index {layer.index}"
                )
        if self.ambient_temperature <= 0:
            raise ValidationError("ambient temperature must be positive")
        if self.sink_area_resistance <= 0:
            raise ValidationError("sink_area_resistance must be positive")
        dims = {
            (lay.floorplan.die_width, lay.floorplan.die_height)
            for lay in self.layers if lay.floorplan is not None
        }
        if len(dims) > 1:
            raise ValidationError(f"floorplans disagree on die size: {dims}")

    @property
    def die_width(self):
        return self._die_dims()[0]

    @property
    def die_height(self):
        return self._die_dims()[1]

    def _die_dims(self):
        for lay in self.layers:
            if lay.floorplan is not None:
                return lay.floorplan.die_width, lay.floorplan.die_height
        raise ValidationError("no layer carries a floorplan; die size unknown")

    def layer(self, index):
        return self.layers[index]

    def powered_layers(self):
        return tuple(lay for lay in self.layers if lay.powered)


@dataclass(frozen=True)
class PowerAssignment:
    """Per (layer index, block name) heat dissipation in watts."""

    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))
        for (layer, block), watts in self.entries.items():
            if watts < 0:
                raise DomainError(
                    f"power of layer {layer} block {block!r} must be >= 0"
                )

    def validate_against(self, stack):
        for (layer_idx, block) in self.entries:
            if not 0 <= layer_idx < len(stack.layers):
                raise ValidationError(f"power references unknown layer {layer_idx}")
            layer = stack.layers[layer_idx]
            if not layer.powered or layer.floorplan is None:
                raise ValidationError(
                    f"layer {layer_idx} is not a powered layer"
                )
            if block not in layer.floorplan.block_names():
                raise ValidationError(
                    f"layer {layer_idx} floorplan has no block {block!r}"
                )
        return self

    def for_layer(self, layer_idx):
        return {
            block: watts
            for (idx, block), watts in self.entries.items()
            if idx == layer_idx
        }

    def total(self):
        return sum(self.entries.values())

    def combined(self, other):
        merged = dict(self.entries)
        for key, watts in other.entries.items():
            merged[key] = merged.get(key, 0.0) + watts
        return PowerAssignment(merged)


# --- parsing ----------------------------------------------------------------


def parse_floorplan(text):
    """Parse floorplan text: "die <w> <h>" then "name <w> <h> <left> <bottom>"."""
    die = None
    blocks = []
    for lineno, line in iter_content_lines(text):
        tokens = line.split()
        if die is None:
            if tokens[0] != "die" or len(tokens) != 3:
                raise ParseError(
                    "first line must be 'die <width_m> <height_m>'", line=lineno
                )
            die = (
                parse_quantity(tokens[1], lineno),
                parse_quantity(tokens[2], lineno),
            )
            continue
        if len(tokens) != 5:
            raise ParseError(
                f"expected 'name width height left bottom', got {line!r}",
                line=lineno,
            )
        blocks.append(
            Block(
                name=tokens[0],
                width=parse_quantity(tokens[1], lineno),
                height=parse_quantity(tokens[2], lineno),
                left=parse_quantity(tokens[3], lineno),
                bottom=parse_quantity(tokens[4], lineno),
            )
        )
    if die is None:
        raise ParseError("floorplan has no 'die' line")
    return Floorplan(die_width=die[0], die_height=die[1], blocks=tuple(blocks))


def serialize_floorplan(fp):
    lines = [f"die {fp.die_width!r} {fp.die_height!r}"]
    for b in fp.blocks:
        lines.append(f"{b.name} {b.width!r} {b.height!r} {b.left!r} {b.bottom!r}")
    return "\n".join(lines) + "\n"


def load_floorplan(path):
    with open(path, encoding="utf-8") as fh:
        return parse_floorplan(fh.read())


def parse_stack(text, base_dir=None, floorplans=None):
    """Parse a stack file into a StackSpec.

    Layer floorplan references ("flp=<path>") resolve against ``base_dir``
    (or the mapping ``floorplans`` when given, useful in tests).
    Conductivity is a bare number in W/(m K); "resistivity=R" gives
    conductivity 1/R with R in m K/W.
    """
    layers = []
    ambient = 300.0
    sink_r = 2e-4
    fp_cache = {}

    def lookup_floorplan(ref, lineno):
        if floorplans is not None and ref in floorplans:
            return floorplans[ref]
        if ref not in fp_cache:
            path = ref if base_dir is None else os.path.join(base_dir, ref)
            try:
                fp_cache[ref] = load_floorplan(path)
            except OSError as exc:
                raise ParseError(f"cannot read floorplan {path!r}: {exc}", lineno)
        return fp_cache[ref]

    for lineno, line in iter_content_lines(text):
        tokens = line.split()
        keyword = tokens[0]
        if keyword == "ambient":
            if len(tokens) != 2:
                raise ParseError("expected 'ambient <K>'", line=lineno)
            ambient = parse_quantity(tokens[1], lineno)
        elif keyword == "sink_r":
            if len(tokens) != 2:
                raise ParseError("expected 'sink_r <K m^2/W>'", line=lineno)
            sink_r = parse_quantity(tokens[1], lineno)
        elif keyword == "layer":
            if len(tokens) < 6 or len(tokens) > 7:
                raise ParseError(
                    "expected 'layer <index> <kind> <thickness> "
                    "<conductivity|resistivity=V> <powered:0|1> [flp=<path>]'",
                    line=lineno,
                )
            index = int(tokens[1])
            try:
                kind = LayerKind(tokens[2])
            except ValueError:
                raise ParseError(f"unknown layer kind {tokens[2]!r}", lineno)
            thickness = parse_quantity(tokens[3], lineno)
            if tokens[4].startswith("resistivity="):
                resistivity = parse_quantity(tokens[4].split("=", 1)[1], lineno)
                if resistivity <= 0:
                    raise ParseError("resistivity must be positive", line=lineno)
                conductivity = 1.0 / resistivity
            else:
                conductivity = parse_quantity(tokens[4], lineno)
            if tokens[5] not in ("0", "1"):
                raise ParseError(
                    f"powered flag must be 0 or 1, got {tokens[5]!r}", lineno
                )
            powered = tokens[5] == "1"
            fp = None
            fp_path = None
            if len(tokens) == 7:
                if not tokens[6].startswith("flp="):
                    raise ParseError(
                        f"expected 'flp=<path>', got {tokens[6]!r}", lineno
                    )
                fp_path = tokens[6].split("=", 1)[1]
                fp = lookup_floorplan(fp_path, lineno)
            try:
                layers.append(
                    Layer(
                        index=index,
                        kind=kind,
                        thickness=thickness,
                        material=Material(kind.value, conductivity),
                        powered=powered,
                        floorplan=fp,
                        floorplan_path=fp_path,
                    )
                )
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
        else:
            raise ParseError(f"unknown keyword {keyword!r}", lineno)

    layers.sort(key=lambda lay: lay.index)
    return StackSpec(
        layers=tuple(layers),
        ambient_temperature=ambient,
        sink_area_resistance=sink_r,
    )


def serialize_stack(stack, floorplan_paths=None):
    """Canonical stack text. ``floorplan_paths`` overrides the recorded
    per-layer floorplan paths (keyed by layer index)."""
    lines = [
        f"ambient {stack.ambient_temperature!r}",
        f"sink_r {stack.sink_area_resistance!r}",
    ]
    for lay in stack.layers:
        parts = [
            "layer",
            str(lay.index),
            lay.kind.value,
            repr(lay.thickness),
            repr(lay.material.thermal_conductivity),
            "1" if lay.powered else "0",
        ]
        path = None
        if floorplan_paths is not None:
            path = floorplan_paths.get(lay.index)
        if path is None:
            path = lay.floorplan_path
        if lay.floorplan is not None and path is not None:
            parts.append(f"flp={path}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_stack(path):
    with open(path, encoding="utf-8") as fh:
        return parse_stack(fh.read(), base_dir=os.path.dirname(path) or ".")


_POWER_UNITS = ("W", "W/cm2")


def parse_power(text, stack):
    """Parse power lines "layer <index> <block> <value><unit>".

    Unit W assigns a block total; W/cm2 multiplies by the block area in
    cm^2. Unknown layers/blocks are validation errors.
    """
    entries = {}
    for lineno, line in iter_content_lines(text):
        tokens = line.split()
        if len(tokens) != 4 or tokens[0] != "layer":
            raise ParseError(
                "expected 'layer <index> <block> <value><unit>'", line=lineno
            )
        layer_idx = int(tokens[1])
        block_name = tokens[2]
        value_token = tokens[3]
        unit = None
        for candidate in _POWER_UNITS:
            if value_token.endswith(candidate):
                unit = candidate
                number = value_token[: -len(candidate)]
                break
        if unit is None or not number:
            raise ParseError(
                f"power needs a unit from {_POWER_UNITS}, got {value_token!r}",
                line=lineno,
            )
        try:
            value = float(number)
        except ValueError:
            raise ParseError(f"bad number {number!r}", line=lineno)
        if value < 0:
            raise DomainError(f"line {lineno}: power must be >= 0")
        if not 0 <= layer_idx < len(stack.layers):
            raise ValidationError(f"line {lineno}: unknown layer {layer_idx}")
        layer = stack.layers[layer_idx]
        if not layer.powered or layer.floorplan is None:
            raise ValidationError(
                f"line {lineno}: layer {layer_idx} is not a powered layer"
            )
        try:
            block = layer.floorplan.block(block_name)
        except KeyError:
            raise ValidationError(
                f"line {lineno}: layer {layer_idx} has no block {block_name!r}"
            )
        if unit == "W/cm2":
            watts = value * block.area * 1e4  # m^2 -> cm^2
        else:
            watts = value
        key = (layer_idx, block_name)
        entries[key] = entries.get(key, 0.0) + watts
    return PowerAssignment(entries).validate_against(stack)


def serialize_power(assignment):
    lines = []
    for (layer_idx, block), watts in sorted(assignment.entries.items()):
        lines.append(f"layer {layer_idx} {block} {watts!r}W")
    return "\n".join(lines) + "\n"


def load_power(path, stack):
    with open(path, encoding="utf-8") as fh:
        return parse_power(fh.read(), stack)


# --- rasterization ----------------------------------------------------------


def rasterize(floorplan, block_watts, nx, ny):
    """Distribute block powers onto an nx-by-ny cell grid.

    Each block's power is split across cells in proportion to the
    cell/block overlap area, so the grid total equals the block total to
    summation precision.

    Returns an (nx, ny) array of watts; [ix, iy] indexes x then y.
    """
    if nx < 1 or ny < 1:
        raise DomainError("grid must be at least 1 x 1")
    grid = np.zeros((nx, ny))
    if not block_watts:
        return grid
    dx = floorplan.die_width / nx
    dy = floorplan.die_height / ny
    x_edges = np.arange(nx + 1) * dx
    y_edges = np.arange(ny + 1) * dy
    for name, watts in block_watts.items():
        if watts < 0:
            raise DomainError(f"block {name!r} power must be >= 0")
        if watts == 0:
            continue
        b = floorplan.block(name)
        over_x = np.minimum(x_edges[1:], b.right) - np.maximum(x_edges[:-1], b.left)
        over_y = np.minimum(y_edges[1:], b.top) - np.maximum(y_edges[:-1], b.bottom)
        np.clip(over_x, 0.0, None, out=over_x)
        np.clip(over_y, 0.0, None, out=over_y)
        overlap = np.outer(over_x, over_y)
        total = overlap.sum()
        if total <= 0:
            raise ValidationError(f"block {name!r} does not intersect the grid")
        grid += overlap * (watts / total)
    return grid
