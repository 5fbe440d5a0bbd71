"""Pseudo-pure state preparation and diagnostics.

Spatial averaging drives a thermal spin state toward a pseudo-pure one
with pulses, coupling periods, and crusher gradients; temporal averaging
gets there by summing experiments with permuted populations.  States are
carried as explicit matrices with a normalization tag, since thermal
work is done on traceless deviation operators while purity diagnostics
need honest density matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .spinsys import (
    CoherenceOrderTable,
    SpinSystem,
    coherence_orders,
    embed_single_spin,
    single_spin_ops,
    _mz_table,
)

__all__ = [
    "DensityState",
    "PseudoPurity",
    "crush",
    "zero_quantum_amplitude",
    "single_spin_polarizations",
    "embed_deviation",
    "pps_two_spin_homonuclear",
    "pps_two_spin_heteronuclear",
    "pps_crotonic_chain",
    "temporal_cycle_states",
    "temporal_average",
    "pseudo_purity",
]

TRACE_TAG_TOL = 1e-12
PSD_TOL = 1e-10
ZQ_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DensityState:
    """A state matrix tagged as a true density matrix or a deviation part."""

    matrix: NDArray
    norm: Literal["density", "deviation"] = "density"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"state matrix must be square, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValueError("state matrix is not Hermitian")
        tr = complex(np.trace(m))
        if self.norm == "density":
            if abs(tr - 1.0) > 1e-8:
                raise ValueError(f"density matrix trace {tr} is not 1")
            if float(np.linalg.eigvalsh(m).min()) < -PSD_TOL:
                raise ValueError("density matrix has a negative eigenvalue")
        elif self.norm == "deviation":
            if abs(tr) > max(TRACE_TAG_TOL, 1e-12 * float(np.abs(m).max())):
                raise ValueError(f"deviation matrix trace {tr} is not 0")
        else:
            raise ValueError(f"unknown normalization tag {self.norm!r}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _as_state(rho: DensityState | NDArray, norm: str = "density") -> DensityState:
    if isinstance(rho, DensityState):
        return rho
    return DensityState(matrix=np.asarray(rho, dtype=complex), norm=norm)


def _survival_mask(orders: CoherenceOrderTable) -> NDArray:
    """True where every species' coherence order vanishes.

    Distinct species precess at incommensurate rates in a gradient, so an
    element only survives crushing if it is zero-quantum within each
    species separately.  Homonuclear zero-quantum terms therefore live.
    """
    mask: NDArray | None = None
    for table in orders.orders.values():
        this = table == 0
        mask = this if mask is None else (mask & this)
    if mask is None:
        raise ValueError("coherence order table has no species")
    return mask


def crush(rho: DensityState, orders: CoherenceOrderTable) -> DensityState:
    """Crusher gradient: zero every element with a nonzero per-species order."""
    state = _as_state(rho)
    mask = _survival_mask(orders)
    if mask.shape != state.matrix.shape:
        raise ValueError(
            f"order table dim {mask.shape[0]} does not match state dim {state.dim}"
        )
    return DensityState(matrix=np.where(mask, state.matrix, 0.0), norm=state.norm)


def zero_quantum_amplitude(rho: DensityState | NDArray, orders: CoherenceOrderTable) -> float:
    """Largest |element| that would survive a crush off the diagonal."""
    m = _as_state(rho, norm="deviation").matrix
    mask = _survival_mask(orders) & ~np.eye(m.shape[0], dtype=bool)
    return float(np.abs(np.where(mask, m, 0.0)).max())


def single_spin_polarizations(rho: DensityState | NDArray, system: SpinSystem) -> NDArray:
    """<Iz_k> normalized so unit polarization reads 1.0, per spin."""
    m = _as_state(rho, norm="deviation").matrix
    out = np.zeros(system.q)
    for k in range(1, system.q + 1):
        iz = single_spin_ops(system.q, k).z
        out[k - 1] = np.real(np.trace(m @ iz)) / (system.dim / 4.0)
    return out


def embed_deviation(state: DensityState, epsilon: float) -> DensityState:
    """Full density matrix E/N + epsilon * deviation for a polarization scale."""
    if state.norm != "deviation":
        raise ValueError("embed_deviation expects a deviation-normalized state")
    n = state.dim
    return DensityState(matrix=np.eye(n) / n + epsilon * state.matrix, norm="density")


def _pulse_propagator(
    system: SpinSystem, spins: Sequence[int], theta_rad: float, phi_rad: float
) -> NDArray:
    c, s = math.cos(theta_rad / 2.0), math.sin(theta_rad / 2.0)
    u2 = np.array(
        [
            [c, -1j * s * np.exp(-1j * phi_rad)],
            [-1j * s * np.exp(1j * phi_rad), c],
        ]
    )
    u = np.eye(system.dim, dtype=complex)
    for k in spins:
        u = embed_single_spin(u2, system.q, k) @ u
    return u


def _couple_propagator(system: SpinSystem, pair: tuple[int, int], t_s: float) -> NDArray:
    """Ideal isolated-coupling evolution exp(-i pi J t 2Iz_i Iz_j).

    Shifts and all other couplings are taken as refocused by implicit
    spin echoes during the period.
    """
    i, j = pair
    j_hz = system.j_hz(i, j)
    if j_hz == 0.0:
        raise ValueError(f"spins ({i},{j}) are not coupled; coupling period undefined")
    mz = _mz_table(system.q)
    phase = math.pi * j_hz * t_s * 2.0 * mz[:, i - 1] * mz[:, j - 1]
    return np.diag(np.exp(-1j * phase))


def _total_z_rotation(system: SpinSystem, angle_rad: float) -> NDArray:
    mz = _mz_table(system.q)
    return np.diag(np.exp(-1j * angle_rad * mz.sum(axis=1)))


class _Simulator:
    """Tiny helper that conjugates a deviation matrix through a sequence."""

    def __init__(self, system: SpinSystem):
        self.system = system
        self.orders = coherence_orders(system)
        mz = _mz_table(system.q)
        self.rho = np.diag(mz.sum(axis=1)).astype(complex)  # sum_k Iz_k

    def apply(self, u: NDArray) -> None:
        self.rho = u @ self.rho @ u.conj().T

    def pulse(self, spins: Sequence[int], theta_rad: float, phi_rad: float) -> None:
        self.apply(_pulse_propagator(self.system, spins, theta_rad, phi_rad))

    def couple_half(self, pair: tuple[int, int]) -> None:
        j_hz = self.system.j_hz(*pair)
        if j_hz == 0.0:
            raise ValueError(f"spins {pair} are not coupled; coupling period undefined")
        self.apply(_couple_propagator(self.system, pair, 1.0 / (2.0 * abs(j_hz))))

    def crush(self, check_zq: bool = False) -> None:
        if check_zq:
            zq = zero_quantum_amplitude(DensityState(self.rho, "deviation"), self.orders)
            if zq > ZQ_TOL:
                raise RuntimeError(
                    f"sequence generated zero-quantum amplitude {zq:.3e} before a crush"
                )
        state = crush(DensityState(self.rho, "deviation"), self.orders)
        self.rho = state.matrix

    def state(self) -> DensityState:
        return DensityState(matrix=self.rho, norm="deviation")


PHI_X = 0.0
PHI_MINUS_Y = -math.pi / 2.0


def pps_two_spin_homonuclear(system: SpinSystem, *, frame_z_rad: float = 0.0) -> DensityState:
    """Two-spin homonuclear pseudo-pure preparation by spatial averaging.

    Starting from Iz + Sz: 60x on spin 2, crush; 45x on spin 1, coupling
    evolution for 1/2J, 45(-y) on spin 1, crush.  Returns the deviation
    (Iz + Sz + 2IzSz)/2.  A global frame z-rotation just before the final
    crush (``frame_z_rad``) must not change the outcome.
    """
    if system.q != 2:
        raise ValueError(f"two-spin preparation needs 2 spins, got {system.q}")
    if len(system.channels) != 1:
        raise ValueError("homonuclear preparation needs a single species")
    sim = _Simulator(system)
    sim.pulse([2], math.pi / 3.0, PHI_X)
    sim.crush()
    sim.pulse([1], math.pi / 4.0, PHI_X)
    sim.couple_half((1, 2))
    sim.pulse([1], math.pi / 4.0, PHI_MINUS_Y)
    if frame_z_rad:
        sim.apply(_total_z_rotation(system, frame_z_rad))
    sim.crush()
    return sim.state()


def pps_two_spin_heteronuclear(system: SpinSystem, *, frame_z_rad: float = 0.0) -> DensityState:
    """Two-spin heteronuclear preparation, polarizations assumed equalized.

    45x on both spins, coupling evolution for 1/2J, 30(-y) on both,
    crush; returns sqrt(3/8) * (Iz + Sz + 2IzSz).  Heteronuclear crushing
    removes everything off-diagonal, so zero-quantum terms are no issue.
    """
    if system.q != 2:
        raise ValueError(f"two-spin preparation needs 2 spins, got {system.q}")
    if len(system.channels) != 2:
        raise ValueError("heteronuclear preparation needs two distinct species")
    sim = _Simulator(system)
    sim.pulse([1, 2], math.pi / 4.0, PHI_X)
    sim.couple_half((1, 2))
    sim.pulse([1, 2], math.pi / 6.0, PHI_MINUS_Y)
    if frame_z_rad:
        sim.apply(_total_z_rotation(system, frame_z_rad))
    sim.crush()
    return sim.state()


def pps_crotonic_chain(system: SpinSystem) -> DensityState:
    """Four-spin chain pseudo-pure preparation without zero-quantum leakage.

    Population adjustment (60, arccos(1/4), arccos(1/8) pulses on spins
    2..4, crush) sets polarizations 1, 1/2, 1/4, 1/8; five controlled
    transfer blocks (theta_x on the source spin, isolated 1/2J coupling,
    theta_-y on the source spin) with three more crushes then build the
    full pseudo-pure deviation |0000><0000| - E/16.  Every crush is
    checked to arrive with no surviving zero-quantum amplitude.
    """
    if system.q != 4:
        raise ValueError(f"chain preparation needs 4 spins, got {system.q}")
    if len(system.channels) != 1:
        raise ValueError("chain preparation needs a single species")
    for pair in [(1, 2), (2, 3), (3, 4)]:
        if system.j_hz(*pair) == 0.0:
            raise ValueError(f"chain preparation needs nearest-neighbour coupling {pair}")

    sim = _Simulator(system)
    sim.pulse([2], math.pi / 3.0, PHI_X)
    sim.pulse([3], math.acos(0.25), PHI_X)
    sim.pulse([4], math.acos(0.125), PHI_X)
    sim.crush(check_zq=True)

    def block(k: int, l: int, theta: float) -> None:
        sim.pulse([k], theta, PHI_X)
        sim.couple_half((k, l))
        sim.pulse([k], theta, PHI_MINUS_Y)

    block(1, 2, math.pi / 2.0)
    block(2, 3, math.pi / 2.0)
    block(3, 4, math.pi / 4.0)
    sim.crush(check_zq=True)
    block(2, 3, math.pi / 4.0)
    sim.crush(check_zq=True)
    block(1, 2, math.pi / 4.0)
    sim.crush(check_zq=True)
    return sim.state()


def temporal_cycle_states(state: DensityState) -> list[DensityState]:
    """The state plus its N-2 cyclic permutations of excited populations.

    Basis state 0 (the ground state) stays fixed; states 1..N-1 are
    cycled.  Averaging the returned list equalizes all excited
    populations, which is the temporal-averaging recipe.
    """
    n = state.dim
    out = []
    for r in range(n - 1):
        perm = np.concatenate(([0], 1 + (np.arange(n - 1) + r) % (n - 1)))
        out.append(DensityState(matrix=state.matrix[np.ix_(perm, perm)], norm=state.norm))
    return out


def temporal_average(states: Sequence[DensityState]) -> DensityState:
    """Uniform average of equally shaped, equally normalized states."""
    if len(states) == 0:
        raise ValueError("temporal average of an empty list")
    tags = {s.norm for s in states}
    if len(tags) != 1:
        raise ValueError("cannot average states with mixed normalization tags")
    dims = {s.dim for s in states}
    if len(dims) != 1:
        raise ValueError("cannot average states of different dimension")
    mean = np.mean([s.matrix for s in states], axis=0)
    return DensityState(matrix=mean, norm=tags.pop())


@dataclass(frozen=True)
class PseudoPurity:
    """Eigenvalue-spectrum pseudo-purity report."""

    is_pps: bool
    p: float
    target_index: int
    degenerate: bool
    eigenvalues: NDArray


def pseudo_purity(rho: DensityState | NDArray, tol: float = 1e-10) -> PseudoPurity:
    """Spectrum test: N-1 equal eigenvalues plus one raised.

    ``p`` solves lambda_max = p + (1 - p)/N, so a pure state gives 1 and
    the maximally mixed state gives 0 (reported with ``degenerate`` set,
    since no eigenvalue is then strictly larger).
    """
    state = _as_state(rho)
    if state.norm != "density":
        raise ValueError("pseudo_purity needs a density-normalized state")
    w, v = np.linalg.eigh(state.matrix)
    n = state.dim
    lam_max = float(w[-1])
    rest = w[:-1]
    rest_equal = float(rest[-1] - rest[0]) <= tol
    degenerate = float(lam_max - rest[-1]) <= tol
    p = (n * lam_max - 1.0) / (n - 1.0)
    target = int(np.argmax(np.abs(v[:, -1]) ** 2))
    return PseudoPurity(
        is_pps=bool(rest_equal),
        p=max(p, 0.0),
        target_index=target,
        degenerate=bool(degenerate),
        eigenvalues=w,
    )
