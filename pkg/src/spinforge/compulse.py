"""Composite 180-degree pulses and the single-pulse error model.

A hard pulse of nominal flip angle theta and phase phi, with a
fractional strength error eps and an off-resonance fraction f (both
measured relative to the driving field omega_1), evolves under

    H = (1 + eps) * (cos(phi) Ix + sin(phi) Iy) + f * Iz

for the nominal duration theta / omega_1.  The nominal omega_1 drops
out of every fidelity, so it is fixed to 1 internally and only eps, f
and the flip angle matter.

The catalog holds the composite NOT-gate sequences quoted as explicit
phase lists: the two Tycko three-pulse sequences, the five-pulse Knill
pulse, and the nine-pulse sequence with phases built from
alpha = -arccos((4 - sqrt(10))/4).  All of them implement a 180x
rotation up to a global phase at zero error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .spinsys import SIGMA_X

__all__ = [
    "CompositePulse",
    "pulse_propagator",
    "catalog",
    "catalog_names",
    "composite_propagator",
    "error_map",
    "z_rotation_pair",
]


def pulse_propagator(flip_deg: float, phase_deg: float, eps: float, f: float) -> NDArray:
    """Single-spin propagator of one erroneous hard pulse (2x2, closed form).

    The rotation axis is n = ((1+eps) cos phi, (1+eps) sin phi, f) and
    the rotation angle is flip * |n| (the nominal duration times the
    actual field magnitude).  Only two complex numbers are needed:

        U = [[a, b], [-b*, a*]]
    """
    flip = math.radians(flip_deg)
    phi = math.radians(phase_deg)
    nx = (1.0 + eps) * math.cos(phi)
    ny = (1.0 + eps) * math.sin(phi)
    nz = f
    norm = math.sqrt(nx * nx + ny * ny + nz * nz)
    half = 0.5 * flip * norm
    c = math.cos(half)
    if norm == 0.0:
        return np.eye(2, dtype=complex)
    s = math.sin(half) / norm
    a = c - 1j * s * nz
    b = -1j * s * (nx - 1j * ny)
    return np.array([[a, b], [-b.conjugate(), a.conjugate()]], dtype=complex)


@dataclass(frozen=True)
class CompositePulse:
    """A named sequence of hard sub-pulses (flip angles and phases in degrees)."""

    name: str
    flips_deg: tuple[float, ...]
    phases_deg: tuple[float, ...]
    target: NDArray
    note: str = ""

    def __post_init__(self) -> None:
        if len(self.flips_deg) != len(self.phases_deg):
            raise ValueError("flip and phase lists must have equal length")
        object.__setattr__(self, "phases_deg",
                           tuple(p % 360.0 for p in self.phases_deg))


def _nine_pulse_phases() -> tuple[float, ...]:
    # alpha = -arccos((4 - sqrt(10))/4); beta = 2*alpha + arccos(-(1 + 2*cos(alpha))/2)
    cos_a = (4.0 - math.sqrt(10.0)) / 4.0
    alpha = -math.degrees(math.acos(cos_a))
    beta = 2.0 * alpha + math.degrees(math.acos(-(1.0 + 2.0 * cos_a) / 2.0))
    return (alpha, beta, beta, beta - 180.0, 2.0 * beta - 2.0 * alpha,
            beta - 180.0, beta, beta, alpha)


def _make_catalog() -> dict[str, CompositePulse]:
    x = SIGMA_X.copy()
    entries = [
        CompositePulse("plain180", (180.0,), (0.0,), x,
                       note="single uncorrected 180x"),
        CompositePulse("tycko_b1", (180.0,) * 3, (120.0, 240.0, 120.0), x,
                       note="corrects B1 strength errors"),
        CompositePulse("tycko_offres", (180.0,) * 3, (60.0, 120.0, 60.0), x,
                       note="corrects off-resonance errors"),
        CompositePulse("knill", (180.0,) * 5, (240.0, 210.0, 300.0, 210.0, 240.0), x,
                       note="five-pulse NOT gate, tolerant of both error types"),
        CompositePulse("nine", (180.0,) * 9, _nine_pulse_phases(), x,
                       note="nine-pulse NOT gate with exceptional dual tolerance"),
    ]
    return {p.name: p for p in entries}


_CATALOG = _make_catalog()


def catalog_names() -> tuple[str, ...]:
    return tuple(_CATALOG)


def catalog(name: str) -> CompositePulse:
    """Look up a composite pulse by name (see catalog_names())."""
    try:
        return _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown composite pulse {name!r}; "
                       f"known: {', '.join(_CATALOG)}") from None


def composite_propagator(pulse: CompositePulse, eps: float, f: float) -> NDArray:
    """Ordered product over sub-pulses; the first sub-pulse acts first."""
    u = np.eye(2, dtype=complex)
    for flip, phase in zip(pulse.flips_deg, pulse.phases_deg):
        u = pulse_propagator(flip, phase, eps, f) @ u
    return u


def error_map(
    pulse: CompositePulse | Callable[[float, float], NDArray],
    eps_values: NDArray,
    f_values: NDArray,
    target: NDArray | None = None,
) -> NDArray:
    """Infidelity grid over (eps, f); shape (len(eps_values), len(f_values)).

    ``pulse`` may be a catalog entry or any callable (eps, f) -> 2x2
    propagator; a callable needs an explicit target.
    """
    eps_values = np.atleast_1d(np.asarray(eps_values, dtype=float))
    f_values = np.atleast_1d(np.asarray(f_values, dtype=float))
    if eps_values.size == 0 or f_values.size == 0:
        raise ValueError("error grid needs at least one point along each axis")
    if isinstance(pulse, CompositePulse):
        goal = pulse.target if target is None else target
        evaluate = lambda e, fr: composite_propagator(pulse, e, fr)
    else:
        if target is None:
            raise ValueError("a callable evaluator needs an explicit target")
        goal = target
        evaluate = pulse
    goal_dag = goal.conj().T
    goal_norm = np.trace(goal_dag @ goal).real
    grid = np.empty((eps_values.size, f_values.size))
    for i, e in enumerate(eps_values):
        for j, fr in enumerate(f_values):
            v = evaluate(e, fr)
            fidelity = abs(np.trace(goal_dag @ v) / goal_norm) ** 2
            grid[i, j] = 1.0 - min(1.0, fidelity)
    return grid


def z_rotation_pair(phi1_deg: float, phi2_deg: float) -> NDArray:
    """Propagator of the pulse pair 180_{phi2} 180_{phi1} (phi1 first).

    Equals a z-rotation through 2*(phi2 - phi1) up to a global phase;
    with equal phases it is the identity times the spinor phase -1.
    """
    return pulse_propagator(180.0, phi2_deg, 0.0, 0.0) @ \
        pulse_propagator(180.0, phi1_deg, 0.0, 0.0)
