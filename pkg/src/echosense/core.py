"""Domain types, physical constants, and unit conversions.

Conventions used throughout the package:

* All angular frequencies and rates are stored in rad/s internally.  The CLI
  and the JSON interfaces accept plain Hz (field suffix ``_hz``) and convert
  at the boundary, so a coupling quoted as ``g/(2*pi) = 3.91 kHz`` enters the
  library as ``2*pi*3910`` rad/s.
* Times are seconds, lengths are meters, fields are V/m.
* Bloch-vector components are normalized as ``2*<J>/N`` whenever a spin
  population is formed, so ``P_up = (1 - 2*<J>/N)/2``.  This keeps population
  conversions well defined for every ion number.
* dB comparisons are ``10*log10(reference/achieved)``; positive numbers mean
  better than the reference.

Electric-field conversion.  A drive of strength ``eta`` acting for a time T
produces the dimensionless displacement ``beta = eta*T``, and a physical
amplitude ``Zc = 2*z0*beta/sqrt(N)``.  The field that produces ``Zc`` through
the harmonic restoring force is ``eps = 2*m*omega_z*Zc/(q*T)``.  Eliminating
``Zc`` and ``T``:

    delta_eps = 2*m*omega_z/(q*T) * (2*z0*T*delta_eta/sqrt(N))
              = 4*m*omega_z*z0*delta_eta/(q*sqrt(N)),

i.e. the drive duration cancels and the field uncertainty is a fixed multiple
of ``delta_eta``.  ``efield_sensitivity_from_eta`` implements this reduction
(the T argument is validated but algebraically absent).

All types are immutable after construction and all functions are pure, so
everything in this module is safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

__all__ = [
    "HBAR",
    "AMU_KG",
    "ELEMENTARY_CHARGE",
    "DEFAULT_VOLT_TO_METER",
    "ConfigError",
    "NumericalError",
    "PhysicalConstants",
    "NoiseModel",
    "Segment",
    "Kick",
    "PulseSchedule",
    "Displacement",
    "ReadoutOnly",
    "ClassicalEField",
    "QuantumEField",
    "Custom",
    "ProtocolSpec",
    "SensitivityReport",
    "ground_state_length",
    "beta_from_displacement",
    "displacement_from_beta",
    "efield_sensitivity_from_eta",
    "voltage_to_displacement",
    "drive_force_from_displacement",
    "com_amplitude_from_force",
    "population_up",
    "db_below",
    "constants_to_json",
    "constants_from_json",
    "noise_model_to_json",
    "noise_model_from_json",
    "protocol_spec_to_json",
    "protocol_spec_from_json",
]

HBAR = 1.054571817e-34  # J s
AMU_KG = 1.66053906660e-27  # kg
ELEMENTARY_CHARGE = 1.602176634e-19  # C

# Electrode calibration, m per volt (measured lever arm of the drive electrode).
DEFAULT_VOLT_TO_METER = 12.9e-9

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Invalid physical parameters or configuration."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (leakage, non-convergence, vanishing signal)."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Trap and ion constants.

    Defaults are for a light alkaline-earth ion in a 1.59 MHz axial well
    (mass 9.012182 amu, single elementary charge).
    """

    hbar: float = HBAR
    ion_mass: float = 9.012182 * AMU_KG
    ion_charge: float = ELEMENTARY_CHARGE
    trap_freq: float = TWO_PI * 1.59e6  # rad/s

    def __post_init__(self) -> None:
        for name in ("hbar", "ion_mass", "ion_charge", "trap_freq"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"PhysicalConstants.{name} must be strictly positive")

    @property
    def z0(self) -> float:
        """Ground-state wavefunction size sqrt(hbar/(2 m omega_z)) in meters."""
        return math.sqrt(self.hbar / (2.0 * self.ion_mass * self.trap_freq))


@dataclass(frozen=True)
class NoiseModel:
    """Technical-noise parameters.

    sigma
        rms spread of the shot-to-shot oscillator detuning, rad/s.
    nbar
        mean thermal occupation of the oscillator mode.
    gamma
        effective spin depolarization rate while the spin-dependent drive is
        on, 1/s.
    excess_noise_factor
        multiplicative inflation of the measured noise standard deviation
        relative to projection noise (1.0 = none).
    """

    sigma: float = 0.0
    nbar: float = 0.0
    gamma: float = 0.0
    excess_noise_factor: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise ConfigError("NoiseModel.sigma must be >= 0")
        if self.nbar < 0.0:
            raise ConfigError("NoiseModel.nbar must be >= 0")
        if self.gamma < 0.0:
            raise ConfigError("NoiseModel.gamma must be >= 0")
        if self.excess_noise_factor < 1.0:
            raise ConfigError("NoiseModel.excess_noise_factor must be >= 1")


@dataclass(frozen=True)
class Segment:
    """A pulse-schedule segment with constant couplings.

    duration in seconds, spin-dependent coupling g and spin-independent drive
    eta in rad/s.
    """

    duration: float
    g: float = 0.0
    eta: float = 0.0

    def __post_init__(self) -> None:
        if self.duration < 0.0:
            raise ConfigError("Segment.duration must be >= 0")


@dataclass(frozen=True)
class Kick:
    """An instantaneous displacement of the oscillator by ``beta`` at ``time``."""

    time: float
    beta: float


@dataclass(frozen=True)
class PulseSchedule:
    """Piecewise-constant couplings plus instantaneous displacement kicks."""

    segments: tuple[Segment, ...]
    kicks: tuple[Kick, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "kicks", tuple(self.kicks))
        total = self.total_duration
        for kick in self.kicks:
            if not 0.0 <= kick.time <= total:
                raise ConfigError(
                    f"kick at t={kick.time} outside schedule [0, {total}]"
                )

    @property
    def total_duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    @property
    def odf_on_time(self) -> float:
        """Total time the spin-dependent coupling is switched on."""
        return sum(seg.duration for seg in self.segments if seg.g != 0.0)

    def scaled_drive(self, scale: float) -> "PulseSchedule":
        """Return a copy with every drive amplitude (eta and kick beta) scaled."""
        return PulseSchedule(
            segments=tuple(
                Segment(seg.duration, seg.g, seg.eta * scale) for seg in self.segments
            ),
            kicks=tuple(Kick(k.time, k.beta * scale) for k in self.kicks),
        )


@dataclass(frozen=True)
class Displacement:
    """Echo protocol: drive +g for tau, kick beta, drive -g for tau."""

    g: float
    tau: float
    beta: float = 0.0

    def __post_init__(self) -> None:
        if not self.tau > 0.0:
            raise ConfigError("Displacement.tau must be > 0")


@dataclass(frozen=True)
class ReadoutOnly:
    """Kick beta first, then a single readout drive of duration tau."""

    g: float
    tau: float
    beta: float = 0.0

    def __post_init__(self) -> None:
        if not self.tau > 0.0:
            raise ConfigError("ReadoutOnly.tau must be > 0")


@dataclass(frozen=True)
class ClassicalEField:
    """Constant drive eta for T with a single readout pulse of length tau at the end."""

    g: float
    tau: float
    T: float
    eta: float = 0.0

    def __post_init__(self) -> None:
        if not self.tau > 0.0:
            raise ConfigError("ClassicalEField.tau must be > 0")
        if self.tau > self.T:
            raise ConfigError("ClassicalEField requires tau <= T")


@dataclass(frozen=True)
class QuantumEField:
    """Constant drive eta for T with entangling pulses of length tau at both ends."""

    g: float
    tau: float
    T: float
    eta: float = 0.0

    def __post_init__(self) -> None:
        if not self.tau > 0.0:
            raise ConfigError("QuantumEField.tau must be > 0")
        if 2.0 * self.tau > self.T:
            raise ConfigError("QuantumEField requires 2*tau <= T")


@dataclass(frozen=True)
class Custom:
    """An arbitrary user-supplied pulse schedule."""

    schedule: PulseSchedule


Variant = Union[Displacement, ReadoutOnly, ClassicalEField, QuantumEField, Custom]


@dataclass(frozen=True)
class ProtocolSpec:
    """A named sensing protocol plus the ion number."""

    variant: Variant
    n_ions: int

    def __post_init__(self) -> None:
        if self.n_ions < 1:
            raise ConfigError("ProtocolSpec.n_ions must be >= 1")

    def schedule(self, drive_scale: float = 1.0) -> PulseSchedule:
        """Canonical pulse schedule for this protocol.

        Sign convention: the readout (final) spin-dependent pulse carries -g,
        the entangling (initial) pulse +g.  With this choice the response of
        the echo protocol to a kick is d<Jy>/dbeta = -sqrt(N)*g*tau at zero
        detuning, and a bare readout pulse gives the same sign.
        ``drive_scale`` multiplies every drive amplitude (kick beta and eta),
        which is the knob used for numerical slope evaluation.
        """
        v = self.variant
        if isinstance(v, Displacement):
            return PulseSchedule(
                segments=(Segment(v.tau, v.g, 0.0), Segment(v.tau, -v.g, 0.0)),
                kicks=(Kick(v.tau, v.beta * drive_scale),),
            )
        if isinstance(v, ReadoutOnly):
            return PulseSchedule(
                segments=(Segment(v.tau, -v.g, 0.0),),
                kicks=(Kick(0.0, v.beta * drive_scale),),
            )
        if isinstance(v, ClassicalEField):
            eta = v.eta * drive_scale
            return PulseSchedule(
                segments=(
                    Segment(v.T - v.tau, 0.0, eta),
                    Segment(v.tau, -v.g, eta),
                )
            )
        if isinstance(v, QuantumEField):
            eta = v.eta * drive_scale
            return PulseSchedule(
                segments=(
                    Segment(v.tau, v.g, eta),
                    Segment(v.T - 2.0 * v.tau, 0.0, eta),
                    Segment(v.tau, -v.g, eta),
                )
            )
        if isinstance(v, Custom):
            return v.schedule.scaled_drive(drive_scale)
        raise ConfigError(f"unknown protocol variant {type(v).__name__}")


@dataclass(frozen=True)
class SensitivityReport:
    """Outcome of a sensitivity evaluation.

    ``variance`` is the detuning-averaged second moment of Jy (inflated by the
    excess-noise factor), ``slope`` the averaged signal derivative per unit
    perturbation, ``delta_sq`` their ratio variance/slope**2.  ``sql`` and
    ``thermal_bound`` are the matching coherent-state and thermal references
    and ``db_below_sql = 10*log10(sql/delta_sq)``.  ``in_domain`` is False when
    any quadrature node with non-negligible weight fell outside the trusted
    domain of the closed-form moments (see moments.cos_power_guard).
    """

    variance: float
    slope: float
    delta_sq: float
    sql: float
    thermal_bound: float
    db_below_sql: float
    protocol: str = ""
    in_domain: bool = True

    def __post_init__(self) -> None:
        if not self.variance > 0.0:
            raise ConfigError("SensitivityReport.variance must be > 0")
        if not self.delta_sq > 0.0:
            raise ConfigError("SensitivityReport.delta_sq must be > 0")
        if not math.isfinite(self.db_below_sql):
            raise ConfigError("SensitivityReport.db_below_sql must be finite")


# ---------------------------------------------------------------------------
# unit conversions
# ---------------------------------------------------------------------------


def ground_state_length(constants: PhysicalConstants) -> float:
    """sqrt(hbar/(2 m omega_z)) in meters."""
    return constants.z0


def beta_from_displacement(zc: float, n_ions: int, constants: PhysicalConstants) -> float:
    """Dimensionless displacement beta = Zc*sqrt(N)/(2*z0) for amplitude Zc >= 0."""
    if zc < 0.0:
        raise ConfigError("displacement amplitude must be >= 0")
    return zc * math.sqrt(n_ions) / (2.0 * constants.z0)


def displacement_from_beta(beta: float, n_ions: int, constants: PhysicalConstants) -> float:
    """Physical amplitude Zc = 2*z0*beta/sqrt(N); exact inverse of beta_from_displacement."""
    return 2.0 * constants.z0 * beta / math.sqrt(n_ions)


def efield_sensitivity_from_eta(
    delta_eta: float, T: float, constants: PhysicalConstants, n_ions: int
) -> float:
    """Electric-field uncertainty (V/m) for a drive-strength uncertainty delta_eta.

    delta_eps = 4*m*omega_z*z0*delta_eta/(q*sqrt(N)); see the module docstring
    for the reduction.  T only enters validation: the drive duration cancels.
    """
    if not T > 0.0:
        raise ConfigError("drive duration T must be > 0")
    m, wz, q = constants.ion_mass, constants.trap_freq, constants.ion_charge
    return 4.0 * m * wz * constants.z0 * delta_eta / (q * math.sqrt(n_ions))


def voltage_to_displacement(volts: float, calibration: float = DEFAULT_VOLT_TO_METER) -> float:
    """Electrode voltage to crystal displacement via the measured calibration (m/V)."""
    if not calibration > 0.0:
        raise ConfigError("calibration must be > 0")
    return volts * calibration


def drive_force_from_displacement(z: float, constants: PhysicalConstants) -> float:
    """Force per ion (magnitude) that statically displaces the crystal by z: m*omega_z**2*z."""
    return constants.ion_mass * constants.trap_freq**2 * z


def com_amplitude_from_force(force: float, duration: float, constants: PhysicalConstants) -> float:
    """Zero-to-peak oscillator amplitude excited by a resonant force over ``duration``."""
    return force * duration / (2.0 * constants.ion_mass * constants.trap_freq)


def population_up(j_component: float, n_ions: int) -> float:
    """Bright fraction (1 - 2*<J>/N)/2 for a measured collective spin component."""
    return 0.5 * (1.0 - 2.0 * j_component / n_ions)


def db_below(reference: float, achieved: float) -> float:
    """10*log10(reference/achieved); positive when better than the reference."""
    if not (reference > 0.0 and achieved > 0.0):
        raise ConfigError("db_below needs strictly positive inputs")
    return 10.0 * math.log10(reference / achieved)


# ---------------------------------------------------------------------------
# JSON interfaces (frequencies in Hz, suffix _hz)
# ---------------------------------------------------------------------------


def constants_to_json(constants: PhysicalConstants) -> dict:
    return {
        "hbar": constants.hbar,
        "ion_mass": constants.ion_mass,
        "ion_charge": constants.ion_charge,
        "trap_freq_hz": constants.trap_freq / TWO_PI,
    }


def constants_from_json(obj: dict) -> PhysicalConstants:
    defaults = PhysicalConstants()
    return PhysicalConstants(
        hbar=obj.get("hbar", defaults.hbar),
        ion_mass=obj.get("ion_mass", defaults.ion_mass),
        ion_charge=obj.get("ion_charge", defaults.ion_charge),
        trap_freq=TWO_PI * obj["trap_freq_hz"]
        if "trap_freq_hz" in obj
        else defaults.trap_freq,
    )


def noise_model_to_json(noise: NoiseModel) -> dict:
    return {
        "sigma_hz": noise.sigma / TWO_PI,
        "nbar": noise.nbar,
        "gamma": noise.gamma,
        "excess_noise_factor": noise.excess_noise_factor,
    }


def noise_model_from_json(obj: dict) -> NoiseModel:
    return NoiseModel(
        sigma=TWO_PI * obj.get("sigma_hz", 0.0),
        nbar=obj.get("nbar", 0.0),
        gamma=obj.get("gamma", 0.0),
        excess_noise_factor=obj.get("excess_noise_factor", 1.0),
    )


_VARIANT_NAMES = {
    Displacement: "displacement",
    ReadoutOnly: "readout",
    ClassicalEField: "classical_efield",
    QuantumEField: "quantum_efield",
    Custom: "custom",
}


def protocol_spec_to_json(spec: ProtocolSpec) -> dict:
    v = spec.variant
    out: dict = {"variant": _VARIANT_NAMES[type(v)], "n_ions": spec.n_ions}
    if isinstance(v, (Displacement, ReadoutOnly)):
        out.update({"g_hz": v.g / TWO_PI, "tau": v.tau, "beta": v.beta})
    elif isinstance(v, (ClassicalEField, QuantumEField)):
        out.update(
            {"g_hz": v.g / TWO_PI, "tau": v.tau, "T": v.T, "eta_hz": v.eta / TWO_PI}
        )
    else:
        out["segments"] = [
            {"duration": s.duration, "g_hz": s.g / TWO_PI, "eta_hz": s.eta / TWO_PI}
            for s in v.schedule.segments
        ]
        out["kicks"] = [{"time": k.time, "beta": k.beta} for k in v.schedule.kicks]
    return out


def protocol_spec_from_json(obj: dict) -> ProtocolSpec:
    try:
        name = obj["variant"]
        n_ions = int(obj["n_ions"])
        if name == "displacement":
            variant: Variant = Displacement(
                g=TWO_PI * obj["g_hz"], tau=obj["tau"], beta=obj.get("beta", 0.0)
            )
        elif name == "readout":
            variant = ReadoutOnly(
                g=TWO_PI * obj["g_hz"], tau=obj["tau"], beta=obj.get("beta", 0.0)
            )
        elif name == "classical_efield":
            variant = ClassicalEField(
                g=TWO_PI * obj["g_hz"],
                tau=obj["tau"],
                T=obj["T"],
                eta=TWO_PI * obj.get("eta_hz", 0.0),
            )
        elif name == "quantum_efield":
            variant = QuantumEField(
                g=TWO_PI * obj["g_hz"],
                tau=obj["tau"],
                T=obj["T"],
                eta=TWO_PI * obj.get("eta_hz", 0.0),
            )
        elif name == "custom":
            variant = Custom(
                PulseSchedule(
                    segments=tuple(
                        Segment(
                            s["duration"],
                            TWO_PI * s.get("g_hz", 0.0),
                            TWO_PI * s.get("eta_hz", 0.0),
                        )
                        for s in obj.get("segments", [])
                    ),
                    kicks=tuple(
                        Kick(k["time"], k["beta"]) for k in obj.get("kicks", [])
                    ),
                )
            )
        else:
            raise ConfigError(f"unknown protocol variant {name!r}")
    except KeyError as exc:
        raise ConfigError(f"protocol spec missing field {exc}") from exc
    return ProtocolSpec(variant=variant, n_ions=n_ions)
