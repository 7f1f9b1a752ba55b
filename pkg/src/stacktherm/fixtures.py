"""Loaders for the packaged reference fixtures (see data/)."""

import os
from functools import lru_cache

from .cell import load_cell_spec
from .device import load_device_params
from .stack import Layer, LayerKind, Material, StackSpec, load_floorplan, load_stack

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

SILICON_CONDUCTIVITY = 150.0   # W/(m K)
SILICON_THICKNESS = 100e-6     # m
EPOXY_THICKNESS = 20e-6        # m
DEFAULT_AMBIENT = 300.0        # K
DEFAULT_SINK_R = 2e-4          # K m^2 / W


def data_path(name):
    path = os.path.join(_DATA_DIR, name)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no packaged fixture {name!r}")
    return path


@lru_cache(maxsize=None)
def reference_nmos():
    return load_device_params(data_path("nmos_ref.params"))


@lru_cache(maxsize=None)
def reference_pmos():
    return load_device_params(data_path("pmos_ref.params"))


@lru_cache(maxsize=None)
def sram_cell():
    """(CellSpec, DoubleKModel) of the 6T SRAM fixture."""
    return load_cell_spec(data_path("sram6t.cell"))


@lru_cache(maxsize=None)
def reference_floorplan():
    return load_floorplan(data_path("floorplan_ref.flp"))


def reference_stack():
    """The shipped 11-layer (6 silicon + 5 epoxy) memory stack."""
    return load_stack(data_path("stack_6layer.stack"))


def memory_stack(
    n_silicon=6,
    epoxy_resistivity=0.25,
    ambient=DEFAULT_AMBIENT,
    sink_area_resistance=DEFAULT_SINK_R,
    floorplan=None,
):
    """Build an n-silicon-layer stack with epoxy glue between the dies.

    ``epoxy_resistivity`` is thermal resistivity in m K/W (conductivity is
    its reciprocal). Layer 0 sits on the heat sink; silicon layers land at
    even stack indices.
    """
    if n_silicon < 1:
        raise ValueError("need at least one silicon layer")
    fp = floorplan if floorplan is not None else reference_floorplan()
    silicon = Material("silicon", SILICON_CONDUCTIVITY)
    epoxy = Material("epoxy", 1.0 / epoxy_resistivity)
    layers = []
    for j in range(n_silicon):
        if j > 0:
            layers.append(
                Layer(
                    index=len(layers),
                    kind=LayerKind.EPOXY,
                    thickness=EPOXY_THICKNESS,
                    material=epoxy,
                )
            )
        layers.append(
            Layer(
                index=len(layers),
                kind=LayerKind.ACTIVE_SILICON,
                thickness=SILICON_THICKNESS,
                material=silicon,
                powered=True,
                floorplan=fp,
                floorplan_path="floorplan_ref.flp",
            )
        )
    return StackSpec(
        layers=tuple(layers),
        ambient_temperature=ambient,
        sink_area_resistance=sink_area_resistance,
    )


def silicon_layer_index(j):
    """Stack index of 1-based silicon layer j (layer 1 is on the sink)."""
    return 2 * (j - 1)
