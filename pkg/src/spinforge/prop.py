"""Piecewise-constant propagators and state evolution.

A pulse program is a list of n equal-duration steps.  During step j the
Hamiltonian is constant,

    H_j = H0 + sum_channels scaling * 2*pi*(ax_j*Fx + ay_j*Fy),

with the control amplitudes ax, ay in Hz and an optional per-channel RF
scaling factor (B1 inhomogeneity).  The step propagator is the exact
exponential V_j = exp(-i*H_j*tau) computed by Hermitian
eigendecomposition, and the sequence propagator is the time-ordered
product V = V_n ... V_2 V_1 (time runs right to left).

Phases are stored in radians everywhere inside the package; file and
CLI boundaries convert to degrees (see fileio).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .spinsys import (
    SpinSystem,
    drift_diagonal,
    require_hermitian,
    require_unitary,
    total_ops,
)

__all__ = [
    "ChannelControls",
    "PulseProgram",
    "EnsembleMember",
    "EnsembleSpec",
    "expm_step",
    "expm_hermitian",
    "step_hamiltonian",
    "sequence_propagator",
    "grawme_step",
    "evolve_state",
    "hadamard_all",
]

MODES = ("xy", "amp_phase", "phase_only")


@dataclass(frozen=True)
class ChannelControls:
    """Controls of one RF channel across all steps of a program.

    values layout by mode:
      xy         -> (n_steps, 2) columns (ax_hz, ay_hz)
      amp_phase  -> (n_steps, 2) columns (amp_hz, phase_rad), amp >= 0
      phase_only -> (n_steps,) phase_rad, with the fixed amplitude in
                    ``amp_hz``
    """

    species: str
    mode: str
    values: NDArray
    amp_hz: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown control mode {self.mode!r}")
        values = np.asarray(self.values, dtype=float)
        if self.mode == "phase_only":
            if values.ndim != 1:
                raise ValueError("phase_only controls must be a 1-d phase array")
            if self.amp_hz is None or self.amp_hz < 0:
                raise ValueError("phase_only mode needs a fixed amp_hz >= 0")
        else:
            if values.ndim != 2 or values.shape[1] != 2:
                raise ValueError(f"{self.mode} controls must have shape (n, 2)")
            if self.mode == "amp_phase" and np.any(values[:, 0] < 0):
                raise ValueError("amplitudes must be nonnegative in amp_phase mode")
        if not np.all(np.isfinite(values)):
            raise ValueError("control values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def xy(self) -> tuple[NDArray, NDArray]:
        """Per-step (ax_hz, ay_hz) arrays regardless of parameterization."""
        if self.mode == "xy":
            return self.values[:, 0].copy(), self.values[:, 1].copy()
        if self.mode == "amp_phase":
            amp, phase = self.values[:, 0], self.values[:, 1]
        else:
            amp = np.full(self.n_steps, float(self.amp_hz))
            phase = self.values
        return amp * np.cos(phase), amp * np.sin(phase)


@dataclass(frozen=True)
class PulseProgram:
    """Piecewise-constant control record shared by all channels."""

    tau_s: float
    channels: tuple[ChannelControls, ...]

    def __post_init__(self) -> None:
        if self.tau_s <= 0:
            raise ValueError("step duration tau_s must be positive")
        if not self.channels:
            raise ValueError("program needs at least one channel")
        steps = {ch.n_steps for ch in self.channels}
        if len(steps) != 1:
            raise ValueError(f"all channels must share n_steps, got {sorted(steps)}")
        if steps == {0}:
            raise ValueError("program needs at least one step")
        species = [ch.species for ch in self.channels]
        if len(set(species)) != len(species):
            raise ValueError("duplicate channel species in program")

    @property
    def n_steps(self) -> int:
        return self.channels[0].n_steps

    @property
    def duration_s(self) -> float:
        return self.tau_s * self.n_steps

    def channel(self, species: str) -> ChannelControls:
        for ch in self.channels:
            if ch.species == species:
                return ch
        raise KeyError(f"program has no channel for species {species!r}")

    def replace_phases(self, species: str, phases_rad: NDArray) -> "PulseProgram":
        """New program with the phase array of one phase_only channel swapped."""
        chans = []
        for ch in self.channels:
            if ch.species == species:
                if ch.mode != "phase_only":
                    raise ValueError("replace_phases requires a phase_only channel")
                ch = ChannelControls(ch.species, ch.mode, np.asarray(phases_rad, float),
                                     amp_hz=ch.amp_hz)
            chans.append(ch)
        return PulseProgram(tau_s=self.tau_s, channels=tuple(chans))


@dataclass(frozen=True)
class EnsembleMember:
    """One system variant: per-channel RF scalings, optional drift/target overrides.

    ``drift`` (a full Hamiltonian matrix, rad/s) replaces the system
    drift when set, which is how passive-spin members are represented;
    ``target`` carries the member-specific goal unitary in that case.
    """

    rf_scalings: Mapping[str, float] = field(default_factory=dict)
    drift: NDArray | None = None
    target: NDArray | None = None
    label: str = ""

    def scaling(self, species: str) -> float:
        return float(self.rf_scalings.get(species, 1.0))


NOMINAL_MEMBER = EnsembleMember(label="nominal")


@dataclass(frozen=True)
class EnsembleSpec:
    """Weighted list of ensemble members; weights must sum to 1."""

    members: tuple[EnsembleMember, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("ensemble must contain at least one member")
        if len(self.members) != len(self.weights):
            raise ValueError("one weight per member required")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("ensemble weights must sum to 1")

    @staticmethod
    def nominal() -> "EnsembleSpec":
        return EnsembleSpec(members=(NOMINAL_MEMBER,), weights=(1.0,))

    @staticmethod
    def b1_scalings(species: Sequence[str] | str,
                    scalings: Sequence[float] = (0.97, 1.00, 1.03)) -> "EnsembleSpec":
        """Equal-weight B1 ensemble; default scalings 97%, 100%, 103%."""
        if isinstance(species, str):
            species = (species,)
        members = tuple(
            EnsembleMember(rf_scalings={s: sc for s in species}, label=f"b1={sc:g}")
            for sc in scalings
        )
        w = 1.0 / len(members)
        return EnsembleSpec(members=members, weights=(w,) * len(members))


def expm_hermitian(h: NDArray, t: float) -> NDArray:
    """exp(-i*H*t) for Hermitian H via eigendecomposition, no validation."""
    # fast path: diagonal H (the drift, couple periods, z rotations)
    if np.count_nonzero(h - np.diag(np.diagonal(h))) == 0:
        return np.diag(np.exp(-1j * np.diagonal(h).real * t))
    vals, vecs = np.linalg.eigh(h)
    phases = np.exp(-1j * vals * t)
    return (vecs * phases) @ vecs.conj().T


def expm_step(h: NDArray, t: float) -> NDArray:
    """Exact step propagator U = exp(-i*H*t) for Hermitian H.

    Raises if H is not Hermitian; the result is checked unitary to 1e-10.
    """
    require_hermitian(h, what="step Hamiltonian")
    u = expm_hermitian(h, t)
    return require_unitary(u, what="step propagator")


def step_hamiltonian(
    system: SpinSystem,
    program: PulseProgram,
    j: int,
    member: EnsembleMember = NOMINAL_MEMBER,
) -> NDArray:
    """Hamiltonian of step j (0-based), rad/s, including RF scaling."""
    if not 0 <= j < program.n_steps:
        raise IndexError(f"step {j} out of range 0..{program.n_steps - 1}")
    if member.drift is not None:
        h = member.drift.astype(complex).copy()
    else:
        h = np.diag(drift_diagonal(system)).astype(complex)
    for ch in program.channels:
        ax, ay = ch.xy()
        if ax[j] == 0.0 and ay[j] == 0.0:
            continue
        f = total_ops(system, ch.species)
        scal = member.scaling(ch.species)
        h = h + scal * 2.0 * np.pi * (ax[j] * f.x + ay[j] * f.y)
    return h


def sequence_propagator(
    system: SpinSystem,
    program: PulseProgram,
    member: EnsembleMember = NOMINAL_MEMBER,
) -> NDArray:
    """Time-ordered product V = V_n ... V_2 V_1 of exact step propagators."""
    dim = member.drift.shape[0] if member.drift is not None else system.dim
    v = np.eye(dim, dtype=complex)
    for j in range(program.n_steps):
        h = step_hamiltonian(system, program, j, member)
        v = expm_hermitian(h, program.tau_s) @ v
    return v


def hadamard_all(q: int) -> NDArray:
    """Tensor power of the single-qubit Hadamard; maps Iz_k <-> Ix_k."""
    h1 = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    out = np.array([[1]], dtype=complex)
    for _ in range(q):
        out = np.kron(out, h1)
    return out


def grawme_step(system: SpinSystem, amp_hz: float, phase_rad: float, tau_s: float) -> NDArray:
    """Approximate phase-only step propagator built from diagonal exponentials.

    Uses the symmetric split

        V_x ~= exp(-i*H0*tau/2) exp(-i*2*pi*A*Fx*tau) exp(-i*H0*tau/2)

    with the middle rotation converted to a diagonal by the q-qubit
    Hadamard (H F_z H = F_x), so the step costs two fixed basis-change
    products W1, W2 plus diagonal phases:

        V ~= e^{-i*phi*Fz} * W1 * e^{-i*2*pi*A*tau*Fz} * W2 * e^{+i*phi*Fz}.

    Accurate to third order in tau per step.  Only defined for a
    homonuclear (single channel) system.
    """
    if len(system.channels) != 1:
        raise ValueError("grawme_step requires a homonuclear single-channel system")
    q = system.q
    h0_diag = drift_diagonal(system)
    fz_diag = _total_z_diag(q)

    had = hadamard_all(q)
    half_drift = np.exp(-1j * h0_diag * (tau_s / 2.0))
    w1 = half_drift[:, None] * had          # e^{-i H0 tau/2} @ Had
    w2 = had * half_drift[None, :]          # Had @ e^{-i H0 tau/2}
    mid = np.exp(-1j * 2.0 * np.pi * amp_hz * tau_s * fz_diag)
    core = w1 @ (mid[:, None] * w2)
    ph = np.exp(-1j * phase_rad * fz_diag)
    return ph[:, None] * core * ph.conj()[None, :]


def _total_z_diag(q: int) -> NDArray:
    """Diagonal of Fz = sum_k Iz_k for q spins."""
    states = np.arange(2 ** q)
    bits = (states[:, None] >> (q - 1 - np.arange(q))) & 1
    return np.sum(0.5 - bits, axis=1)


def evolve_state(rho: NDArray, u: NDArray) -> NDArray:
    """Conjugate a state (or any operator) by a propagator: U rho U^dag."""
    if rho.shape != u.shape:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs propagator {u.shape}")
    return u @ rho @ u.conj().T
