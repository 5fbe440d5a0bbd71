"""Walsh-function refocusing compiler.

Couplings in a weakly coupled spin system evolve under diagonal ZZ terms,
so flipping spins with 180° pulses toggles the sign of each term.  Giving
spin k a ±1 Walsh pattern W_{2^(k-1)} over 2^q time bins makes every
one-spin (shift) and two-spin (coupling) term follow its own nonzero
Walsh pattern, and the bin durations that realize a requested set of
coupling angles while refocusing everything else are found by a small
linear program.  Programs come out as delays plus ideal 180° delta
pulses; pairs of pulses with offset phases realize z-rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numpy.typing import NDArray

from . import fid
from .simplex import LPInfeasibleError, solve_lp
from .spinsys import SpinSystem, drift_diagonal, embed_single_spin, _mz_table

__all__ = [
    "RefocusError",
    "WalshPattern",
    "RefocusSchedule",
    "Delay",
    "Pulse180",
    "walsh",
    "walsh_product",
    "assign_patterns",
    "lp_schedule",
    "compile_program",
    "target_propagator",
    "verify_schedule",
]

AngleMap = Mapping[tuple[int, int], float]


class RefocusError(ValueError):
    """Invalid refocusing request (bad targets, infeasible schedule, ...)."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _sign_changes(values: NDArray) -> int:
    return int(np.count_nonzero(values[1:] != values[:-1]))


@dataclass(frozen=True, eq=False)
class WalshPattern:
    """A ±1 pattern over power-of-two bins; ``n`` counts its sign changes."""

    n: int
    size: int
    values: NDArray

    def __post_init__(self):
        if not _is_power_of_two(self.size):
            raise RefocusError(f"pattern length {self.size} is not a power of two")
        v = np.asarray(self.values, dtype=np.int8)
        if v.shape != (self.size,) or not np.all(np.abs(v) == 1):
            raise RefocusError("pattern values must be a ±1 vector of the stated length")
        object.__setattr__(self, "values", v)
        if _sign_changes(v) != self.n:
            raise RefocusError(
                f"pattern has {_sign_changes(v)} sign changes, expected {self.n}"
            )
        if self.n == 0:
            if not np.all(v == 1):
                raise RefocusError("a pattern with no sign changes must be all +1")
        elif int(np.sum(v == 1)) * 2 != self.size:
            raise RefocusError("a pattern with sign changes must be half +1, half -1")


def walsh(n: int, size: int) -> WalshPattern:
    """Sequency-ordered Walsh function W_n over ``size`` bins."""
    if not _is_power_of_two(size):
        raise RefocusError(f"Walsh length {size} is not a power of two")
    if not 0 <= n < size:
        raise RefocusError(f"Walsh index {n} out of range for length {size}")
    bits = max(size.bit_length() - 1, 0)
    gray = n ^ (n >> 1)
    mask = 0
    for b in range(bits):
        if gray & (1 << b):
            mask |= 1 << (bits - 1 - b)
    idx = np.arange(size)
    parity = np.zeros(size, dtype=np.int64)
    for b in range(bits):
        if mask & (1 << b):
            parity ^= (idx >> b) & 1
    values = np.where(parity == 0, 1, -1).astype(np.int8)
    return WalshPattern(n=n, size=size, values=values)


def walsh_product(m: int, n: int) -> int:
    """Index of the elementwise product W_m ∘ W_n, which is W_(m XOR n)."""
    if m < 0 or n < 0:
        raise RefocusError("Walsh indices must be nonnegative")
    k = m ^ n
    size = 1 << max(m, n, 1).bit_length()
    wm, wn, wk = walsh(m, size), walsh(n, size), walsh(k, size)
    if not np.array_equal(wm.values * wn.values, wk.values):
        raise RuntimeError("Walsh product law violated (internal error)")
    return k


def assign_patterns(q: int) -> dict[int, WalshPattern]:
    """Assign spin k the pattern W_(2^(k-1)) over 2^q bins.

    Powers of two XOR to distinct nonzero indices, so every shift and
    every coupling toggles along its own nonzero Walsh function and can
    be scheduled independently.
    """
    if q < 2:
        raise RefocusError(f"need at least 2 spins, got {q}")
    size = 1 << q
    return {k: walsh(1 << (k - 1), size) for k in range(1, q + 1)}


def _ordered_pair(pair: tuple[int, int], spins: set[int], what: str) -> tuple[int, int]:
    k, l = pair
    if k == l:
        raise RefocusError(f"{what} pair ({k},{l}) repeats a spin")
    if k not in spins or l not in spins:
        raise RefocusError(f"{what} pair ({k},{l}) names an unassigned spin")
    return (k, l) if k < l else (l, k)


@dataclass(frozen=True)
class RefocusSchedule:
    """Bin durations realizing target coupling angles under a pattern assignment."""

    assignment: dict[int, WalshPattern]
    durations_s: NDArray
    targets_rad: dict[tuple[int, int], float]
    couplings_hz: dict[tuple[int, int], float]
    z_angles_rad: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.durations_s, dtype=float)
        object.__setattr__(self, "durations_s", t)
        if np.any(t < 0):
            raise RefocusError("bin durations must be nonnegative")
        for pair, theta in self.targets_rad.items():
            j = self.couplings_hz[pair]
            s = self.assignment[pair[0]].values * self.assignment[pair[1]].values
            got = math.pi * j * float(s @ t)
            if abs(got - theta) > 1e-10 * max(1.0, abs(theta)):
                raise RefocusError(
                    f"schedule misses target for pair {pair}: {got} vs {theta}"
                )

    @property
    def total_time_s(self) -> float:
        return float(self.durations_s.sum())


def lp_schedule(
    targets: AngleMap,
    couplings: AngleMap,
    assignment: Mapping[int, WalshPattern],
    *,
    symmetric: bool = False,
    tol: float = 1e-9,
) -> RefocusSchedule:
    """Minimum-total-time bin durations for the requested coupling angles.

    Every coupled pair must accumulate its target ZZ angle (zero when
    unlisted) and every spin's shift must integrate to zero.  ``symmetric``
    additionally forces time-reversal-symmetric bin durations; that can be
    infeasible for some signed targets and then raises.
    """
    spins = set(assignment)
    sizes = {p.size for p in assignment.values()}
    if len(sizes) != 1:
        raise RefocusError("all assigned patterns must share one length")
    size = sizes.pop()

    cmap: dict[tuple[int, int], float] = {}
    for pair, j in couplings.items():
        key = _ordered_pair(pair, spins, "coupling")
        if key in cmap:
            raise RefocusError(f"coupling pair {key} listed twice")
        cmap[key] = float(j)
    tmap: dict[tuple[int, int], float] = {}
    for pair, theta in targets.items():
        key = _ordered_pair(pair, spins, "target")
        if key in tmap:
            raise RefocusError(f"target pair {key} listed twice")
        if cmap.get(key, 0.0) == 0.0:
            raise RefocusError(f"target pair {key} has no coupling to evolve under")
        tmap[key] = float(theta)

    rows: list[NDArray] = []
    rhs: list[float] = []
    labels: list[str] = []
    full_targets: dict[tuple[int, int], float] = {}
    for key in sorted(cmap):
        j = cmap[key]
        if j == 0.0:
            continue
        theta = tmap.get(key, 0.0)
        full_targets[key] = theta
        s = (assignment[key[0]].values * assignment[key[1]].values).astype(float)
        rows.append(s)
        rhs.append(theta / (math.pi * j))
        labels.append(f"coupling {key}")
    for k in sorted(spins):
        rows.append(assignment[k].values.astype(float))
        rhs.append(0.0)
        labels.append(f"shift spin {k}")
    if symmetric:
        for b in range(size // 2):
            row = np.zeros(size)
            row[b] = 1.0
            row[size - 1 - b] = -1.0
            rows.append(row)
            rhs.append(0.0)
            labels.append(f"symmetry bins ({b},{size - 1 - b})")

    try:
        sol = solve_lp(np.ones(size), np.array(rows), np.array(rhs), tol=tol)
    except LPInfeasibleError as e:
        bad = ", ".join(labels[i] for i in e.rows)
        raise RefocusError(f"no feasible schedule: cannot satisfy {bad}") from e
    t = sol.x.copy()
    t[t < tol * max(1.0, float(t.max(initial=0.0)))] = 0.0
    return RefocusSchedule(
        assignment=dict(assignment),
        durations_s=t,
        targets_rad=full_targets,
        couplings_hz=cmap,
    )


@dataclass(frozen=True)
class Delay:
    duration_s: float


@dataclass(frozen=True)
class Pulse180:
    spin: int
    phase_deg: float = 0.0


Instruction = Delay | Pulse180


def compile_program(
    schedule: RefocusSchedule,
    z_angles: Mapping[int, float] | None = None,
) -> tuple[Instruction, ...]:
    """Emit delays and ideal 180° pulses realizing the schedule.

    A spin is pulsed wherever its pattern changes sign across bins of
    nonzero duration, plus a trailing pulse when the pattern ends
    inverted.  A z-rotation by chi on a spin is realized by advancing the
    phase of its final pulse by chi/2 relative to the one before it; a
    spin that needs a z-rotation but no refocusing gets a back-to-back
    pulse pair.
    """
    z = dict(schedule.z_angles_rad)
    if z_angles:
        for k, chi in z_angles.items():
            if k not in schedule.assignment:
                raise RefocusError(f"z-rotation names unassigned spin {k}")
            z[k] = float(chi)

    spins = sorted(schedule.assignment)
    cur = {k: 1 for k in spins}
    events: list[Instruction] = []
    pulse_at: dict[int, list[int]] = {k: [] for k in spins}
    t = schedule.durations_s
    for b in range(schedule.assignment[spins[0]].size):
        if t[b] <= 0.0:
            continue
        for k in spins:
            s = int(schedule.assignment[k].values[b])
            if s != cur[k]:
                pulse_at[k].append(len(events))
                events.append(Pulse180(spin=k))
                cur[k] = s
        events.append(Delay(duration_s=float(t[b])))
    for k in spins:
        if cur[k] != 1:
            pulse_at[k].append(len(events))
            events.append(Pulse180(spin=k))

    for k in spins:
        if len(pulse_at[k]) % 2:
            raise RefocusError(f"internal: odd pulse count on spin {k}")
        chi = z.get(k, 0.0)
        if chi == 0.0:
            continue
        delta = math.degrees(chi) / 2.0
        if pulse_at[k]:
            i = pulse_at[k][-1]
            events[i] = Pulse180(spin=k, phase_deg=delta)
        else:
            events.append(Pulse180(spin=k, phase_deg=0.0))
            events.append(Pulse180(spin=k, phase_deg=delta))
    return tuple(events)


def target_propagator(
    system: SpinSystem,
    targets: AngleMap,
    z_angles: Mapping[int, float] | None = None,
) -> NDArray:
    """exp(-i (sum theta_kl 2Iz_k Iz_l + sum chi_k Iz_k)), a diagonal unitary."""
    mz = _mz_table(system.q)
    phase = np.zeros(system.dim)
    for (k, l), theta in targets.items():
        phase += theta * 2.0 * mz[:, k - 1] * mz[:, l - 1]
    for k, chi in (z_angles or {}).items():
        phase += chi * mz[:, k - 1]
    return np.diag(np.exp(-1j * phase))


def _pulse180_propagator(system: SpinSystem, pulse: Pulse180) -> NDArray:
    phi = math.radians(pulse.phase_deg)
    u2 = np.array(
        [
            [0.0, -1j * np.exp(-1j * phi)],
            [-1j * np.exp(1j * phi), 0.0],
        ]
    )
    return embed_single_spin(u2, system.q, pulse.spin)


def verify_schedule(
    system: SpinSystem,
    program: tuple[Instruction, ...],
    targets: AngleMap,
    z_angles: Mapping[int, float] | None = None,
) -> float:
    """Unitary infidelity of the compiled program against the ideal ZZ target.

    Delays evolve under the system's full drift (shifts and couplings);
    pulses are instantaneous.
    """
    dz = drift_diagonal(system)
    u = np.eye(system.dim, dtype=complex)
    for instr in program:
        if isinstance(instr, Delay):
            u = np.exp(-1j * dz * instr.duration_s)[:, None] * u
        elif isinstance(instr, Pulse180):
            u = _pulse180_propagator(system, instr) @ u
        else:
            raise RefocusError(f"unknown instruction {instr!r}")
    return fid.unitary_infidelity(target_propagator(system, targets, z_angles), u)
