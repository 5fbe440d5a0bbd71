"""Dynamical decoupling sequences and their error behaviour.

Two independent questions are simulated separately, mirroring how the
sequences are usually assessed:

* How do imperfect 180 pulses degrade a stored state?  memory_fidelity
  builds the cycle propagator from erroneous hard pulses (the compulse
  error model) with ideal free evolution in between, and reports the
  cardinal-averaged fidelity against the identity after the last
  complete cycle.  Sequence quality is only meaningful at cycle
  boundaries.

* How well does a pulse pattern refocus a time-varying offset?
  accumulated_phase integrates s(t) * delta(t) analytically, where
  s(t) is the toggling sign flipping at every (instantaneous) pulse
  and delta(t) is a polynomial offset profile, conveniently expressed
  in shifted Legendre polynomials on [0, T].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .compulse import catalog, composite_propagator, pulse_propagator
from .fid import cardinal_average_fidelity

__all__ = [
    "DDSequence",
    "udd_times",
    "build_sequence",
    "memory_fidelity",
    "accumulated_phase",
    "shifted_legendre",
    "SEQUENCE_KINDS",
]

SEQUENCE_KINDS = ("cpmg", "xy4", "xy8", "kdd20", "udd")

#: Five-phase inner cycle of the Knill-derived decoupling block (degrees).
KDD_BLOCK = (30.0, 0.0, 90.0, 0.0, 30.0)

#: Outer phase offsets applied to successive five-pulse blocks.
KDD_OFFSET_PATTERNS = {
    "xy4": (0.0, 90.0, 0.0, 90.0),
    "quad": (0.0, 90.0, 180.0, 270.0),
}


@dataclass(frozen=True)
class DDSequence:
    """One decoupling cycle: pulse times (fractions of T) and phases.

    ``composite`` optionally names a catalog composite pulse that
    replaces every plain 180 in simulations.
    """

    kind: str
    times: NDArray
    phases_deg: NDArray
    period_s: float = 1.0
    composite: str | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        phases = np.asarray(self.phases_deg, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("sequence needs at least one pulse")
        if times.size != phases.size:
            raise ValueError("one phase per pulse required")
        if np.any(times <= 0.0) or np.any(times >= 1.0) or np.any(np.diff(times) <= 0.0):
            raise ValueError("pulse times must be strictly increasing within (0, 1)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "phases_deg", phases)

    @property
    def n_pulses(self) -> int:
        return self.times.size


def udd_times(n: int, t_total: float) -> NDArray:
    """Uhrig pulse times t_j = T * sin^2(pi*j / (2n + 2)), j = 1..n."""
    if n < 1:
        raise ValueError("UDD needs at least one pulse")
    if t_total <= 0:
        raise ValueError("total period must be positive")
    j = np.arange(1, n + 1)
    return t_total * np.sin(np.pi * j / (2.0 * n + 2.0)) ** 2


def build_sequence(
    kind: str,
    n_pulses: int,
    period_s: float = 1.0,
    composite: str | None = None,
    kdd_offset_pattern: str = "xy4",
) -> DDSequence:
    """Construct one cycle of a standard decoupling sequence.

    cpmg   even spacing (odd multiples of T/2n), all phases x; n even.
    xy4    even spacing, phases cycling x, y; n a multiple of 4.
    xy8    even spacing, phases x,y,x,y,y,x,y,x; n a multiple of 8.
    kdd20  even spacing, the five-phase Knill block offset by the outer
           pattern (0, 90, 0, 90 by default); n a multiple of 20.
    udd    Uhrig spacing, all phases x; any n >= 1.
    """
    if kind not in SEQUENCE_KINDS:
        raise ValueError(f"unknown sequence kind {kind!r}; known: {SEQUENCE_KINDS}")
    if kind == "udd":
        times = udd_times(n_pulses, 1.0)
        phases = np.zeros(n_pulses)
    else:
        block = {"cpmg": 2, "xy4": 4, "xy8": 8, "kdd20": 20}[kind]
        if n_pulses < block or n_pulses % block != 0:
            raise ValueError(f"{kind} needs a positive multiple of {block} pulses")
        times = (2.0 * np.arange(1, n_pulses + 1) - 1.0) / (2.0 * n_pulses)
        if kind == "cpmg":
            phases = np.zeros(n_pulses)
        elif kind == "xy4":
            phases = np.tile([0.0, 90.0], n_pulses // 2)[:n_pulses]
        elif kind == "xy8":
            phases = np.tile([0.0, 90.0, 0.0, 90.0, 90.0, 0.0, 90.0, 0.0],
                             n_pulses // 8)
        else:
            offsets = KDD_OFFSET_PATTERNS[kdd_offset_pattern]
            phases = np.array([
                KDD_BLOCK[i % 5] + offsets[(i // 5) % len(offsets)]
                for i in range(n_pulses)
            ])
    if composite is not None:
        catalog(composite)  # validate the name early
    return DDSequence(kind=kind, times=times, phases_deg=phases % 360.0,
                      period_s=period_s, composite=composite)


def memory_fidelity(sequence: DDSequence, n_cycles: int, eps: float, f: float) -> float:
    """Cardinal-averaged fidelity vs identity after n_cycles complete cycles.

    Pulses carry the (eps, f) error model; free evolution between them
    is ideal, so only the pulse imperfections accumulate.
    """
    if n_cycles < 1:
        raise ValueError("need at least one complete cycle")
    cycle = np.eye(2, dtype=complex)
    for phase in sequence.phases_deg:
        if sequence.composite is None:
            u = pulse_propagator(180.0, phase, eps, f)
        else:
            base = catalog(sequence.composite)
            shifted = type(base)(base.name, base.flips_deg,
                                 tuple(p + phase for p in base.phases_deg),
                                 base.target, base.note)
            u = composite_propagator(shifted, eps, f)
        cycle = u @ cycle
    total = np.linalg.matrix_power(cycle, n_cycles)
    return cardinal_average_fidelity(np.eye(2, dtype=complex), total)


#: Shifted Legendre polynomials on [0, 1], ascending coefficients in x = t/T.
_SHIFTED_LEGENDRE = {
    0: (1.0,),
    1: (-1.0, 2.0),
    2: (1.0, -6.0, 6.0),
}


def shifted_legendre(index: int) -> tuple[float, ...]:
    """Coefficients (ascending) of the shifted Legendre polynomial P~_index."""
    try:
        return _SHIFTED_LEGENDRE[index]
    except KeyError:
        raise ValueError(f"shifted Legendre index {index} not tabulated (0..2)") from None


def accumulated_phase(
    offset_poly: int | Sequence[float],
    pulse_times: Sequence[float],
    t_total: float,
) -> float:
    """Net phase integral(0..T) s(t) * delta(t) dt with toggling sign s(t).

    ``offset_poly`` is either a shifted-Legendre index (0, 1, 2) or a
    coefficient list (ascending powers of t/T, offset in rad/s).  The
    sign starts at +1 and flips at each pulse time.  Integration is
    exact per interval via the polynomial antiderivative; for the
    constant offset with no pulses the result is T, which serves as the
    natural scale for residuals.
    """
    if t_total <= 0:
        raise ValueError("total period must be positive")
    if isinstance(offset_poly, (int, np.integer)):
        coeffs = shifted_legendre(int(offset_poly))
    else:
        coeffs = tuple(float(c) for c in offset_poly)
    # antiderivative of sum c_k x^k is sum c_k x^(k+1) / (k+1)
    anti = np.array([c / (k + 1.0) for k, c in enumerate(coeffs)])

    def primitive(x: float) -> float:
        powers = x ** np.arange(1, len(anti) + 1)
        return float(anti @ powers)

    edges = [0.0]
    for t in pulse_times:
        x = float(t) / t_total
        if not 0.0 < x < 1.0:
            raise ValueError(f"pulse time {t} outside (0, T)")
        edges.append(x)
    edges.append(1.0)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("pulse times must be strictly increasing")

    phase = 0.0
    sign = 1.0
    for a, b in zip(edges, edges[1:]):
        phase += sign * (primitive(b) - primitive(a))
        sign = -sign
    return phase * t_total
