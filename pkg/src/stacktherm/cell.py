"""Cell-level leakage aggregation and static power.

Combines per-device off currents into cell leakage with either a shared
design factor or separate pull-down/pull-up factors, fits those factors
from per-input-vector current groups, and evaluates circuit-level static
power as V_CC * N * K_design * I_leakage.
"""

import csv
import io
from dataclasses import dataclass

from .errors import DomainError, FitError, ParseError, ValidationError
from .units import format_keyvalues, parse_quantity, read_keyvalues

DEFAULT_K_MAX = 10.0


@dataclass(frozen=True)
class CellSpec:
    name: str
    n_n: int  # NMOS count
    n_p: int  # PMOS count

    def __post_init__(self):
        if self.n_n < 0 or self.n_p < 0:
            raise ValidationError("transistor counts must be non-negative")
        if self.n_n + self.n_p < 1:
            raise ValidationError("cell must contain at least one transistor")


@dataclass(frozen=True)
class SingleKModel:
    k_design: float
    k_max: float = DEFAULT_K_MAX

    def __post_init__(self):
        if not 0 < self.k_design <= self.k_max:
            raise ValidationError(
                f"k_design must be in (0, {self.k_max}], got {self.k_design}"
            )


@dataclass(frozen=True)
class DoubleKModel:
    k_n: float
    k_p: float

    def __post_init__(self):
        if self.k_n <= 0 or self.k_p <= 0:
            raise ValidationError("design factors must be positive")


@dataclass(frozen=True)
class InputGroupMeasurements:
    """Off currents split by which network each input vector turns off."""

    pulldown_off_currents: tuple
    pullup_off_currents: tuple
    total_combinations: int

    def __post_init__(self):
        pd = tuple(self.pulldown_off_currents)
        pu = tuple(self.pullup_off_currents)
        object.__setattr__(self, "pulldown_off_currents", pd)
        object.__setattr__(self, "pullup_off_currents", pu)
        if len(pd) + len(pu) < 1:
            raise ValidationError("at least one measured current is required")
        if self.total_combinations < len(pd) + len(pu):
            raise ValidationError(
                "total_combinations must cover both measurement groups"
            )
        if any(c <= 0 for c in pd + pu):
            raise DomainError("measured currents must be positive")


def _check_currents(i_n, i_p):
    if i_n < 0 or i_p < 0:
        raise DomainError("device currents must be non-negative")


def cell_leakage_single(spec, model, i_n, i_p):
    """(n_n*i_n + n_p*i_p) * k_design."""
    _check_currents(i_n, i_p)
    return (spec.n_n * i_n + spec.n_p * i_p) * model.k_design


def cell_leakage_double(spec, model, i_n, i_p):
    """n_n*k_n*i_n + n_p*k_p*i_p."""
    _check_currents(i_n, i_p)
    return spec.n_n * model.k_n * i_n + spec.n_p * model.k_p * i_p


def fit_k_factors(spec, meas, i_n, i_p, k_max=DEFAULT_K_MAX):
    """Design factors from grouped per-input-vector currents.

    k_n = sum(pulldown-off currents) / (N * n_n * i_n), and symmetrically
    for k_p. Results above k_max are rejected as corrupt fits.
    """
    if i_n <= 0 or i_p <= 0:
        raise DomainError("unit currents must be positive")
    if not meas.pulldown_off_currents or not meas.pullup_off_currents:
        raise FitError("both measurement groups must be non-empty")
    if spec.n_n == 0:
        raise FitError("cell has no NMOS devices but a pulldown-off group")
    if spec.n_p == 0:
        raise FitError("cell has no PMOS devices but a pullup-off group")
    n = meas.total_combinations
    k_n = sum(meas.pulldown_off_currents) / (n * spec.n_n * i_n)
    k_p = sum(meas.pullup_off_currents) / (n * spec.n_p * i_p)
    for name, k in (("k_n", k_n), ("k_p", k_p)):
        if k > k_max:
            raise FitError(f"{name} = {k:.4g} exceeds sanity bound {k_max}")
    return DoubleKModel(k_n=k_n, k_p=k_p)


def static_power_butts_sohi(vcc, n_transistors, k_design, i_leakage):
    """V_CC * N * K_design * I_leakage in watts."""
    if min(vcc, n_transistors, k_design, i_leakage) < 0:
        raise DomainError("all static-power inputs must be non-negative")
    return vcc * n_transistors * k_design * i_leakage


# --- text I/O ---------------------------------------------------------------


def parse_cell_spec(text):
    """Read a cell file: name, n_n, n_p, plus optional k factors.

    Returns (CellSpec, DoubleKModel | SingleKModel | None).
    """
    raw = read_keyvalues(text)
    fields = {}
    for key, (value, lineno) in raw.items():
        if key == "name":
            fields["name"] = value
        elif key in ("n_n", "n_p"):
            fields[key] = int(parse_quantity(value, line=lineno))
        elif key in ("k_n", "k_p", "k_design"):
            fields[key] = parse_quantity(value, line=lineno)
        else:
            raise ParseError(f"unknown cell key {key!r}", lineno)
    for required in ("name", "n_n", "n_p"):
        if required not in fields:
            raise ParseError(f"missing required key {required!r}")
    spec = CellSpec(name=fields["name"], n_n=fields["n_n"], n_p=fields["n_p"])
    model = None
    if "k_design" in fields:
        model = SingleKModel(k_design=fields["k_design"])
    elif "k_n" in fields or "k_p" in fields:
        if not ("k_n" in fields and "k_p" in fields):
            raise ParseError("k_n and k_p must be given together")
        model = DoubleKModel(k_n=fields["k_n"], k_p=fields["k_p"])
    return spec, model


def serialize_cell_spec(spec, model=None):
    pairs = [("name", spec.name), ("n_n", str(spec.n_n)), ("n_p", str(spec.n_p))]
    if isinstance(model, DoubleKModel):
        pairs += [("k_n", model.k_n), ("k_p", model.k_p)]
    elif isinstance(model, SingleKModel):
        pairs += [("k_design", model.k_design)]
    return format_keyvalues(pairs)


def load_cell_spec(path):
    with open(path, encoding="utf-8") as fh:
        return parse_cell_spec(fh.read())


GROUP_HEADER = ("group", "current_A")
_GROUP_NAMES = ("pulldown_off", "pullup_off")


def parse_group_measurements_csv(text):
    """Read grouped currents from CSV with header "group,current_A".

    An optional comment line "# total_combinations = N" sets N; otherwise
    N defaults to the number of data rows.
    """
    total = None
    data_lines = []
    for raw in text.splitlines():
        stripped = raw.strip()
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.replace(" ", "").startswith("total_combinations="):
                total = int(body.split("=", 1)[1])
            continue
        if stripped:
            data_lines.append(raw)
    reader = csv.reader(io.StringIO("\n".join(data_lines)))
    rows = list(reader)
    if not rows or tuple(cell.strip() for cell in rows[0]) != GROUP_HEADER:
        raise ParseError(f"expected header {','.join(GROUP_HEADER)!r}", line=1)
    pulldown, pullup = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
        group = row[0].strip()
        if group not in _GROUP_NAMES:
            raise ParseError(
                f"group must be one of {_GROUP_NAMES}, got {group!r}", line=lineno
            )
        current = float(row[1])
        (pulldown if group == "pulldown_off" else pullup).append(current)
    count = len(pulldown) + len(pullup)
    return InputGroupMeasurements(
        pulldown_off_currents=tuple(pulldown),
        pullup_off_currents=tuple(pullup),
        total_combinations=total if total is not None else count,
    )


def load_group_measurements_csv(path):
    with open(path, encoding="utf-8") as fh:
        return parse_group_measurements_csv(fh.read())
