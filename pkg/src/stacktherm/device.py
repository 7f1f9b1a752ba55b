"""Single-transistor subthreshold leakage model.

Evaluates the threshold voltage of a short-channel MOSFET (body effect,
narrow-width, short-channel and drain-bias terms, plus a linear temperature
shift) and the off-state channel current it drives, and fits the three
empirical current parameters (DIBL slope, swing coefficient, offset
voltage) from measured (V_dd, T, I) grids.

All functions are pure; parameter containers are frozen dataclasses, so
everything here is safe to share across threads.
"""

import csv
import io
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.optimize import least_squares

from .errors import DomainError, FitError, ParseError
from .units import format_keyvalues, parse_quantity, read_keyvalues


@dataclass(frozen=True)
class PhysicalConstants:
    boltzmann_k: float = 1.380649e-23   # J/K
    electron_charge: float = 1.602177e-19  # C

    def __post_init__(self):
        if self.boltzmann_k <= 0 or self.electron_charge <= 0:
            raise DomainError("physical constants must be positive")


CONSTANTS = PhysicalConstants()


class DeviceKind(Enum):
    NMOS = "nmos"
    PMOS = "pmos"


@dataclass(frozen=True)
class ThresholdParams:
    """Inputs of the threshold-voltage expression.

    Characteristic lengths lt, ltw, lt0 are direct inputs; they are not
    derived from doping. kt1/tnom control the linear temperature shift
    V_th(T) = V_th(tnom) + kt1*(T/tnom - 1).
    """

    vth0ox: float          # V, long-channel threshold at zero body bias
    k1ox: float = 0.0      # V^(1/2), 1st-order body effect
    k2ox: float = 0.0      # 2nd-order body effect
    phi_s: float = 0.9     # V, surface potential
    nlx: float = 0.0       # m, lateral non-uniform doping
    k3: float = 0.0        # narrow-width coefficient
    k3b: float = 0.0       # 1/V, body dependence of k3
    tox: float = 4e-9      # m, gate oxide thickness
    weff_prime: float = 1e-6  # m
    w0: float = 2.5e-6     # m, narrow-width parameter
    dvt0w: float = 0.0
    dvt1w: float = 5.3e6
    dvt0: float = 0.0
    dvt1: float = 0.53
    dsub: float = 0.56
    eta0: float = 0.0      # drain-bias coefficient
    etab: float = 0.0      # 1/V, body dependence of eta0
    vbi: float = 1.0       # V, junction built-in voltage
    leff: float = 1.8e-7   # m
    lt: float = 1e-7       # m, short-channel characteristic length
    ltw: float = 1e-7      # m, narrow-width characteristic length
    lt0: float = 1e-7      # m, drain-bias characteristic length
    kt1: float = -0.11     # V, linear temperature coefficient
    tnom: float = 300.0    # K

    def __post_init__(self):
        if self.phi_s <= 0:
            raise DomainError("phi_s must be positive")
        if self.leff <= 0 or self.tox <= 0:
            raise DomainError("leff and tox must be positive")
        if min(self.lt, self.ltw, self.lt0) <= 0:
            raise DomainError("characteristic lengths must be positive")
        if self.weff_prime + self.w0 <= 0:
            raise DomainError("weff_prime + w0 must be positive")
        if self.tnom <= 0:
            raise DomainError("tnom must be positive")


@dataclass(frozen=True)
class DeviceParams:
    """One transistor: geometry/technology constants plus the three fitted
    current parameters (b, n_swing, voff)."""

    kind: DeviceKind
    mu0: float        # zero-bias mobility factor
    cox: float        # F/m^2, gate oxide capacitance per area
    w: float          # m
    l: float          # m
    b: float          # 1/V, drain-bias (DIBL) fit slope
    vdd0: float       # V, technology default supply
    n_swing: float    # subthreshold swing coefficient, >= 1
    voff: float       # V, empirical offset
    vth: ThresholdParams

    def __post_init__(self):
        if min(self.mu0, self.cox, self.w, self.l) <= 0:
            raise DomainError("mu0, cox, w, l must be positive")
        if self.vdd0 <= 0:
            raise DomainError("vdd0 must be positive")
        if self.n_swing < 1.0:
            raise DomainError("n_swing must be >= 1")


@dataclass(frozen=True)
class OperatingPoint:
    """Bias/temperature point. V_gs is 0 by contract (off state); vds
    defaults to vdd when left unset."""

    vdd: float
    temperature: float
    vbs_eff: float = 0.0
    vds: float | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise DomainError(f"temperature must be > 0 K, got {self.temperature}")
        if self.vdd < 0:
            raise DomainError(f"vdd must be >= 0, got {self.vdd}")

    @property
    def effective_vds(self):
        return self.vdd if self.vds is None else self.vds


def thermal_voltage(temperature, constants=CONSTANTS):
    """kT/q in volts."""
    if temperature <= 0:
        raise DomainError(f"temperature must be > 0 K, got {temperature}")
    return constants.boltzmann_k * temperature / constants.electron_charge


def threshold_voltage(params, op):
    """Threshold voltage at the given operating point.

    Sum of the zero-bias threshold plus body-effect, doping, narrow-width,
    short-channel and drain-bias corrections, then shifted linearly in
    temperature: V_th(T) = V_th(tnom) + kt1*(T/tnom - 1).
    """
    p = params
    vbs = op.vbs_eff
    sqrt_arg = p.phi_s - vbs
    if sqrt_arg < 0:
        raise DomainError(
            f"body bias out of model range: phi_s - vbs_eff = {sqrt_arg} < 0"
        )

    body = p.k1ox * math.sqrt(sqrt_arg) - p.k2ox * vbs
    doping = p.k1ox * (math.sqrt(1.0 + p.nlx / p.leff) - 1.0) * math.sqrt(p.phi_s)
    narrow = (p.k3 + p.k3b * vbs) * p.tox / (p.weff_prime + p.w0) * p.phi_s

    narrow_sc = (
        p.dvt0w
        * (
            math.exp(-p.dvt1w * p.weff_prime * p.leff / (2.0 * p.ltw))
            + 2.0 * math.exp(-p.dvt1w * p.weff_prime * p.leff / p.ltw)
        )
        * (p.vbi - p.phi_s)
    )
    short = (
        p.dvt0
        * (
            math.exp(-p.dvt1 * p.leff / (2.0 * p.lt))
            + 2.0 * math.exp(-p.dvt1 * p.leff / p.lt)
        )
        * (p.vbi - p.phi_s)
    )
    drain = (
        math.exp(-p.dsub * p.leff / (2.0 * p.lt0))
        + 2.0 * math.exp(-p.dsub * p.leff / p.lt0)
    ) * (p.eta0 + p.etab * vbs) * op.effective_vds

    vth_nom = p.vth0ox + body + doping + narrow - narrow_sc - short - drain
    return vth_nom + p.kt1 * (op.temperature / p.tnom - 1.0)


def device_leakage(params, op, constants=CONSTANTS):
    """Off-state channel current of a single transistor.

    I = mu0 * cox * (w + l) * exp(b*(vdd - vdd0)) * v_t^2
        * (1 - exp(-vdd/v_t)) * exp((-|v_th| - voff) / (n * v_t))

    The (w + l) prefactor is a sum, as modeled; reference fixtures absorb
    unit conventions into mu0/w/l (see shipped parameter files). Strictly
    positive for vdd > 0.
    """
    v_t = thermal_voltage(op.temperature, constants)
    vth = threshold_voltage(params.vth, op)
    prefactor = params.mu0 * params.cox * (params.w + params.l)
    dibl = math.exp(params.b * (op.vdd - params.vdd0))
    drive = v_t * v_t * (1.0 - math.exp(-op.vdd / v_t)) if op.vdd > 0 else 0.0
    gate = math.exp((-abs(vth) - params.voff) / (params.n_swing * v_t))
    return prefactor * dibl * drive * gate


@dataclass(frozen=True)
class Measurement:
    vdd: float
    temperature: float
    current: float


@dataclass(frozen=True)
class SubthresholdFit:
    b: float
    n_swing: float
    voff: float
    residual_norm: float  # 2-norm of log-current residuals


def fit_subthreshold_params(measurements, fixed, constants=CONSTANTS):
    """Least-squares fit of (b, n_swing, voff) in log-current space.

    ``fixed`` supplies every other device parameter; its own b/n_swing/voff
    are used as the initial guess. Requires >= 6 measurements spanning at
    least two supply voltages and two temperatures, all currents positive.
    n_swing is constrained >= 1.
    """
    meas = list(measurements)
    if any(m.current <= 0 for m in meas):
        raise DomainError("all measured currents must be positive")
    if len(meas) < 6:
        raise FitError(f"need at least 6 measurements, got {len(meas)}")
    vdds = {m.vdd for m in meas}
    temps = {m.temperature for m in meas}
    if len(vdds) < 2:
        raise FitError("measurements must span at least 2 distinct vdd values")
    if len(temps) < 2:
        raise FitError("measurements must span at least 2 distinct temperatures")

    # Everything except (b, n, voff) is independent of the fit variables,
    # so precompute per-point pieces of ln I.
    vdd = np.array([m.vdd for m in meas])
    v_t = np.array([thermal_voltage(m.temperature, constants) for m in meas])
    vth_abs = np.array(
        [
            abs(
                threshold_voltage(
                    fixed.vth, OperatingPoint(vdd=m.vdd, temperature=m.temperature)
                )
            )
            for m in meas
        ]
    )
    ln_meas = np.log([m.current for m in meas])
    ln_const = (
        math.log(fixed.mu0 * fixed.cox * (fixed.w + fixed.l))
        + 2.0 * np.log(v_t)
        + np.log(1.0 - np.exp(-vdd / v_t))
    )
    dv = vdd - fixed.vdd0

    def residuals(theta):
        b, n, voff = theta
        ln_model = ln_const + b * dv + (-vth_abs - voff) / (n * v_t)
        return ln_model - ln_meas

    x0 = np.array([fixed.b, max(fixed.n_swing, 1.0), fixed.voff])
    result = least_squares(
        residuals,
        x0,
        bounds=([-np.inf, 1.0, -np.inf], [np.inf, np.inf, np.inf]),
        method="trf",
        gtol=1e-10,
        xtol=1e-14,
        ftol=1e-14,
        max_nfev=10000,
    )
    if not result.success:
        raise FitError(f"subthreshold fit did not converge: {result.message}")
    b, n, voff = result.x
    return SubthresholdFit(
        b=float(b),
        n_swing=float(n),
        voff=float(voff),
        residual_norm=float(np.linalg.norm(result.fun)),
    )


# --- text I/O ---------------------------------------------------------------

_DEVICE_KEYS = ("mu0", "cox", "w", "l", "b", "vdd0", "n_swing", "voff")
_VTH_KEYS = (
    "vth0ox", "k1ox", "k2ox", "phi_s", "nlx", "k3", "k3b", "tox",
    "weff_prime", "w0", "dvt0w", "dvt1w", "dvt0", "dvt1", "dsub",
    "eta0", "etab", "vbi", "leff", "lt", "ltw", "lt0", "kt1", "tnom",
)


def parse_device_params(text):
    """Read DeviceParams from key = value text (SI or suffixed units)."""
    raw = read_keyvalues(text)
    values = {}
    kind = None
    for key, (value, lineno) in raw.items():
        if key == "kind":
            try:
                kind = DeviceKind(value.lower())
            except ValueError:
                raise ParseError(f"kind must be nmos or pmos, got {value!r}", lineno)
        elif key in _DEVICE_KEYS or key in _VTH_KEYS:
            values[key] = parse_quantity(value, line=lineno)
        else:
            raise ParseError(f"unknown device parameter {key!r}", lineno)
    if kind is None:
        raise ParseError("missing required key 'kind'")
    missing = [k for k in _DEVICE_KEYS + ("vth0ox",) if k not in values]
    if missing:
        raise ParseError(f"missing required keys: {', '.join(missing)}")
    vth = ThresholdParams(**{k: values[k] for k in _VTH_KEYS if k in values})
    return DeviceParams(
        kind=kind, vth=vth, **{k: values[k] for k in _DEVICE_KEYS}
    )


def serialize_device_params(params):
    pairs = [("kind", params.kind.value)]
    pairs += [(k, getattr(params, k)) for k in _DEVICE_KEYS]
    pairs += [(k, getattr(params.vth, k)) for k in _VTH_KEYS]
    return format_keyvalues(pairs)


def load_device_params(path):
    with open(path, encoding="utf-8") as fh:
        return parse_device_params(fh.read())


def with_fit(params, fit):
    """DeviceParams with the fitted (b, n_swing, voff) substituted in."""
    return replace(params, b=fit.b, n_swing=fit.n_swing, voff=fit.voff)


MEASUREMENT_HEADER = ("vdd_V", "temp_K", "current_A")


def parse_measurements_csv(text):
    """Read a fitting grid from CSV with header "vdd_V,temp_K,current_A"."""
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows or tuple(cell.strip() for cell in rows[0]) != MEASUREMENT_HEADER:
        raise ParseError(
            f"expected header {','.join(MEASUREMENT_HEADER)!r}", line=1
        )
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
        try:
            vdd, temp, current = (float(cell) for cell in row)
        except ValueError:
            raise ParseError(f"bad number in row {row!r}", line=lineno)
        if current <= 0:
            raise DomainError(f"line {lineno}: current must be positive")
        out.append(Measurement(vdd=vdd, temperature=temp, current=current))
    return out


def load_measurements_csv(path):
    with open(path, encoding="utf-8") as fh:
        return parse_measurements_csv(fh.read())
