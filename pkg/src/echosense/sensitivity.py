"""Detuning-averaged sensitivities, perturbative expansions, bounds, optimization.

The full-numerics path averages the second moment of Jy and the signal slope
separately over the Gaussian detuning distribution (matching the estimator
built from many experimental trials), then forms

    delta_sq = <Jy^2>_av / (d<Jy>/d amplitude)_av**2 .

Averages use Gauss-Hermite quadrature rescaled to the detuning distribution;
node evaluations are independent and summed in fixed node order, so results
are deterministic regardless of any data-parallel execution of the nodes.

The perturbative expressions keep terms through second order in the detuning
spread sigma and lowest order in 1/N.  They are trustworthy for
2*sigma*tau < 0.5 (flagged via ``trusted``); at longer times only the
full-numerics path should be believed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import (
    ClassicalEField,
    ConfigError,
    Custom,
    Displacement,
    NoiseModel,
    NumericalError,
    ProtocolSpec,
    QuantumEField,
    ReadoutOnly,
    SensitivityReport,
    db_below,
)
from .kernels import (
    Kernels,
    kernels_classical_efield,
    kernels_displacement,
    kernels_generic,
    kernels_quantum_efield,
    kernels_readout,
)
from .moments import moments_at_detuning

__all__ = [
    "QuadratureRule",
    "gauss_hermite_rule",
    "averaged_sensitivity",
    "PerturbativeSensitivity",
    "perturbative_displacement",
    "perturbative_classical_efield",
    "perturbative_quantum_efield",
    "Bounds",
    "bounds",
    "optimize_tau",
    "snr_single_measurement",
    "SweepRow",
    "sweep_to_csv",
]

# quadrature nodes lighter than this cannot flip the domain flag
NEGLIGIBLE_WEIGHT = 1e-12

PERTURBATIVE_TRUST_LIMIT = 0.5  # on 2*sigma*tau


@dataclass(frozen=True)
class QuadratureRule:
    """Detuning nodes and probability weights for the disorder average."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.shape != weights.shape:
            raise ConfigError("nodes and weights must have equal length")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError("quadrature weights must sum to 1")
        if not np.allclose(nodes, -nodes[::-1], rtol=0.0, atol=1e-9 * (1.0 + np.abs(nodes).max())):
            raise ConfigError("quadrature nodes must be symmetric about 0")


def gauss_hermite_rule(sigma: float, n_nodes: int = 64) -> QuadratureRule:
    """Gauss-Hermite rule rescaled to a zero-mean normal with std sigma.

    Exact for polynomial integrands of degree < 2*n_nodes against the
    Gaussian; sigma = 0 collapses to the single node delta = 0.
    """
    if sigma < 0.0:
        raise ConfigError("sigma must be >= 0")
    if n_nodes < 2 or n_nodes % 2 != 0:
        raise ConfigError("n_nodes must be even and >= 2")
    if sigma == 0.0:
        return QuadratureRule(nodes=np.array([0.0]), weights=np.array([1.0]))
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    nodes = math.sqrt(2.0) * sigma * x
    weights = w / math.sqrt(math.pi)
    weights = weights / weights.sum()
    return QuadratureRule(nodes=nodes, weights=weights)


def _protocol_kernels(spec: ProtocolSpec, delta: np.ndarray) -> Kernels:
    """Unit-drive-amplitude kernels for the protocol, broadcast over delta."""
    v = spec.variant
    if isinstance(v, Displacement):
        return kernels_displacement(v.g, v.tau, delta, beta=1.0)
    if isinstance(v, ReadoutOnly):
        return kernels_readout(v.g, v.tau, delta, beta=1.0)
    if isinstance(v, ClassicalEField):
        return kernels_classical_efield(v.g, v.tau, v.T, delta, eta=1.0)
    if isinstance(v, QuantumEField):
        return kernels_quantum_efield(v.g, v.tau, v.T, delta, eta=1.0)
    if isinstance(v, Custom):
        triples = [kernels_generic(v.schedule, d) for d in np.atleast_1d(delta)]
        return Kernels(
            h=np.array([k.h for k in triples]),
            p=np.array([k.p for k in triples]),
            q=np.array([k.q for k in triples]),
            odf_on_time=v.schedule.odf_on_time,
        )
    raise ConfigError(f"unknown protocol variant {type(v).__name__}")


def _protocol_sql(spec: ProtocolSpec) -> tuple[str, float]:
    v = spec.variant
    if isinstance(v, (Displacement, ReadoutOnly)):
        return ("displacement" if isinstance(v, Displacement) else "readout", 0.25)
    if isinstance(v, ClassicalEField):
        return "classical_efield", 1.0 / (4.0 * v.T**2)
    if isinstance(v, QuantumEField):
        return "quantum_efield", 1.0 / (4.0 * v.T**2)
    # Custom: kick-only schedules estimate a displacement, drive-only schedules
    # a constant drive strength; a mixed schedule has no canonical reference
    has_kicks = any(k.beta != 0.0 for k in v.schedule.kicks)
    has_drive = any(seg.eta != 0.0 for seg in v.schedule.segments)
    if has_kicks and not has_drive:
        return "custom", 0.25
    if has_drive and not has_kicks:
        return "custom", 1.0 / (4.0 * v.schedule.total_duration**2)
    raise ConfigError(
        "custom schedule needs exactly one drive type (kicks or continuous eta) "
        "for a sensitivity reference"
    )


def averaged_sensitivity(
    spec: ProtocolSpec, noise: NoiseModel, rule: QuadratureRule
) -> SensitivityReport:
    """Full-numerics sensitivity of ``spec`` under ``noise``, averaged over ``rule``.

    Numerator and denominator are averaged separately before forming the
    ratio.  The excess-noise factor multiplies the noise standard deviation,
    i.e. the variance (and delta_sq) by its square.
    """
    kernels = _protocol_kernels(spec, rule.nodes)
    mom = moments_at_detuning(kernels, spec.n_ions, noise)
    jy_sq = np.atleast_1d(np.asarray(mom.jy_sq, dtype=float))
    slope = np.atleast_1d(np.asarray(mom.slope, dtype=float))
    in_domain = np.atleast_1d(np.asarray(mom.in_domain, dtype=bool))

    jy_sq_av = float(rule.weights @ jy_sq)
    slope_av = float(rule.weights @ slope)
    domain_ok = bool(np.all(in_domain[rule.weights > NEGLIGIBLE_WEIGHT]))
    if slope_av == 0.0:
        raise NumericalError("averaged signal slope vanished: no signal to estimate")

    variance = jy_sq_av * noise.excess_noise_factor**2
    delta_sq = variance / slope_av**2
    name, sql = _protocol_sql(spec)
    return SensitivityReport(
        variance=variance,
        slope=slope_av,
        delta_sq=delta_sq,
        sql=sql,
        thermal_bound=(2.0 * noise.nbar + 1.0) * sql,
        db_below_sql=db_below(sql, delta_sq),
        protocol=name,
        in_domain=domain_ok,
    )


@dataclass(frozen=True)
class PerturbativeSensitivity:
    """Perturbative sensitivity with each contribution separately retrievable.

    ``total`` includes the squared excess-noise factor; the individual terms
    are quoted without it.
    """

    total: float
    terms: dict[str, float]
    trusted: bool


def perturbative_displacement(g: float, tau: float, noise: NoiseModel) -> PerturbativeSensitivity:
    """(delta beta)^2 through second order in sigma for the echo protocol.

    terms: ideal e^{2 G tau}/(4 g^2 tau^2); signal_reduction
    sigma^2 e^{2 G tau}/(12 g^2); spin_phonon sigma^2 tau^2 (nbar + 1/2)/2;
    spin_spin g^2 sigma^2 tau^4/9.
    """
    gam, sig, nbar = noise.gamma, noise.sigma, noise.nbar
    terms = {
        "ideal": math.exp(2.0 * gam * tau) / (4.0 * g**2 * tau**2),
        "signal_reduction": sig**2 * math.exp(2.0 * gam * tau) / (12.0 * g**2),
        "spin_phonon": sig**2 * tau**2 * (nbar + 0.5) / 2.0,
        "spin_spin": g**2 * sig**2 * tau**4 / 9.0,
    }
    total = sum(terms.values()) * noise.excess_noise_factor**2
    return PerturbativeSensitivity(
        total=total,
        terms=terms,
        trusted=2.0 * sig * tau <= PERTURBATIVE_TRUST_LIMIT,
    )


def perturbative_classical_efield(
    g: float, tau: float, T: float, noise: NoiseModel
) -> PerturbativeSensitivity:
    """(delta eta)^2 for the classical (readout-only) drive-sensing protocol."""
    if tau > T:
        raise ConfigError("classical protocol requires tau <= T")
    gam, sig, nbar = noise.gamma, noise.sigma, noise.nbar
    span = 2.0 * T - tau
    terms = {
        "ideal": math.exp(gam * tau) / (g**2 * tau**2 * span**2),
        "ideal_spin_phonon": (2.0 * nbar + 1.0) / span**2,
        "signal_reduction": sig**2
        * math.exp(gam * tau)
        * (2.0 * T**2 - 2.0 * tau * T + tau**2)
        / (6.0 * g**2 * tau**2 * span**2),
        "spin_phonon": sig**2 * (nbar + 0.5) / 6.0,
        "spin_spin": g**2 * sig**2 * tau**4 / (36.0 * span**2),
    }
    total = sum(terms.values()) * noise.excess_noise_factor**2
    return PerturbativeSensitivity(
        total=total,
        terms=terms,
        trusted=2.0 * sig * tau <= PERTURBATIVE_TRUST_LIMIT,
    )


def perturbative_quantum_efield(
    g: float, tau: float, T: float, noise: NoiseModel
) -> PerturbativeSensitivity:
    """(delta eta)^2 for the entangle-drive-disentangle protocol.

    The ideal term 1/(4 g^2 tau^2 (T-tau)^2) is unbounded from below at
    Gamma = 0, so this protocol can beat both the coherent-state and thermal
    references; the sigma^2 (2 nbar + 1)/4 term is the large-T noise floor.
    """
    if 2.0 * tau > T:
        raise ConfigError("quantum protocol requires 2*tau <= T")
    gam, sig, nbar = noise.gamma, noise.sigma, noise.nbar
    span = T - tau
    terms = {
        "ideal": math.exp(2.0 * gam * tau) / (4.0 * g**2 * tau**2 * span**2),
        "signal_reduction": sig**2
        * math.exp(2.0 * gam * tau)
        * (2.0 * T**2 - tau * T + tau**2)
        / (24.0 * g**2 * tau**2 * span**2),
        "spin_phonon": sig**2 * (2.0 * nbar + 1.0) / 4.0,
        "spin_spin": g**2 * sig**2 * tau**2 * (3.0 * T - 4.0 * tau) ** 2 / (36.0 * span**2),
    }
    total = sum(terms.values()) * noise.excess_noise_factor**2
    return PerturbativeSensitivity(
        total=total,
        terms=terms,
        trusted=2.0 * sig * tau <= PERTURBATIVE_TRUST_LIMIT,
    )


@dataclass(frozen=True)
class Bounds:
    sql_beta: float
    sql_eta: float
    thermal_beta: float
    thermal_eta: float
    cramer_rao_beta: float


def bounds(T: float, nbar: float, g: float, tau: float) -> Bounds:
    """Reference sensitivities: coherent-state limits, thermal limits, and the
    quantum Cramer-Rao value 1/(4 + 4 g^2 tau^2) for displacement estimation."""
    if not T > 0.0:
        raise ConfigError("T must be > 0")
    return Bounds(
        sql_beta=0.25,
        sql_eta=1.0 / (4.0 * T**2),
        thermal_beta=(2.0 * nbar + 1.0) / 4.0,
        thermal_eta=(2.0 * nbar + 1.0) / (4.0 * T**2),
        cramer_rao_beta=1.0 / (4.0 + 4.0 * g**2 * tau**2),
    )


def snr_single_measurement(beta: float, g: float, tau: float, noise: NoiseModel) -> float:
    """Single-measurement signal-to-noise ratio of the echo displacement sensor.

    2 g tau beta e^{-G tau} / sqrt(1 + e^{-2 G tau} [(2 nbar + 1) g^2 sigma^2
    tau^4 + (4/9) g^4 sigma^2 tau^6]); equivalent to beta/sqrt(perturbative
    displacement sensitivity) with the signal-reduction term dropped.  The
    excess-noise factor divides the SNR.
    """
    gam, sig, nbar = noise.gamma, noise.sigma, noise.nbar
    depol = math.exp(-2.0 * gam * tau)
    noise_sq = 1.0 + depol * (
        (2.0 * nbar + 1.0) * g**2 * sig**2 * tau**4
        + (4.0 / 9.0) * g**4 * sig**2 * tau**6
    )
    return 2.0 * g * tau * beta * math.exp(-gam * tau) / (
        math.sqrt(noise_sq) * noise.excess_noise_factor
    )


@dataclass(frozen=True)
class SweepRow:
    """One protocol-time point of an optimized sensitivity sweep."""

    T: float
    tau_opt: float
    delta_sq: float
    db_below_sql: float
    protocol: str

    def __post_init__(self) -> None:
        cap = 0.5 * self.T if self.protocol.startswith("quantum") else self.T
        if not 0.0 < self.tau_opt <= cap * (1.0 + 1e-12):
            raise ConfigError(
                f"tau_opt={self.tau_opt} violates the {self.protocol} cap {cap}"
            )


def sweep_to_csv(rows: list[SweepRow]) -> str:
    """Render optimized-sweep rows as CSV (T_s, tau_opt_s, delta_sq,
    db_below_sql, protocol)."""
    lines = ["T_s,tau_opt_s,delta_sq,db_below_sql,protocol"]
    for row in rows:
        lines.append(
            f"{row.T:.12g},{row.tau_opt:.12g},{row.delta_sq:.12g},"
            f"{row.db_below_sql:.12g},{row.protocol}"
        )
    return "\n".join(lines) + "\n"


_FAMILIES = {
    "displacement": ("displacement", 1.0),
    "classical": ("classical", 1.0),
    "classical_efield": ("classical", 1.0),
    "quantum": ("quantum", 0.5),
    "quantum_efield": ("quantum", 0.5),
}


def _family_objective(
    family: str, T: float, g: float, noise: NoiseModel, rule: QuadratureRule, n_ions: int
) -> Callable[[float], float]:
    def objective(tau: float) -> float:
        if family == "displacement":
            variant: Union[Displacement, ClassicalEField, QuantumEField] = Displacement(
                g, tau, 0.0
            )
        elif family == "classical":
            variant = ClassicalEField(g, tau, T, 0.0)
        else:
            variant = QuantumEField(g, tau, T, 0.0)
        return averaged_sensitivity(ProtocolSpec(variant, n_ions), noise, rule).delta_sq

    return objective


def optimize_tau(
    family: str,
    T: float,
    g: float,
    noise: NoiseModel,
    rule: QuadratureRule,
    n_ions: int,
    tau_min: float | None = None,
    tau_max: float | None = None,
    coarse: int = 64,
    tol: float = 1e-7,
) -> tuple[float, float]:
    """Minimize the full-numerics delta_sq over the admissible drive time tau.

    A ``coarse``-point grid brackets the minimum, then golden-section search
    refines it to absolute tolerance ``tol`` seconds.  If the grid shows more
    than one local minimum a warning is emitted and the grid minimum is
    returned unrefined.  For the quantum family tau is capped at T/2, for the
    others at T (for "displacement", T simply bounds the scan).
    """
    if family not in _FAMILIES:
        raise ConfigError(f"unknown protocol family {family!r}")
    name, frac = _FAMILIES[family]
    if not T > 0.0:
        raise ConfigError("T must be > 0")
    if coarse < 8:
        raise ConfigError("coarse grid needs at least 8 points")
    hi = tau_max if tau_max is not None else frac * T
    lo = tau_min if tau_min is not None else hi / 256.0
    if not 0.0 < lo < hi:
        raise ConfigError("need 0 < tau_min < tau_max")

    objective = _family_objective(name, T, g, noise, rule, n_ions)
    grid = np.linspace(lo, hi, coarse)
    values = np.array([objective(t) for t in grid])
    i_best = int(np.argmin(values))

    interior_minima = 0
    for i in range(1, coarse - 1):
        if values[i] < values[i - 1] and values[i] < values[i + 1]:
            interior_minima += 1
    edge_minima = int(values[0] < values[1]) + int(values[-1] < values[-2])
    if interior_minima + edge_minima > 1:
        warnings.warn(
            f"delta_sq({family}) is not unimodal on the coarse grid; "
            "returning the grid minimum",
            RuntimeWarning,
            stacklevel=2,
        )
        return float(grid[i_best]), float(values[i_best])

    a = grid[max(i_best - 1, 0)]
    b = grid[min(i_best + 1, coarse - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = objective(x1), objective(x2)
    while b - a > tol:
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = objective(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = objective(x2)
    tau_opt = 0.5 * (a + b)
    return float(tau_opt), float(objective(tau_opt))
