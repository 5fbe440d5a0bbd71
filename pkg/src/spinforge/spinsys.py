"""Spin systems, product operators, and drift Hamiltonians.

Conventions used throughout the package:

* Spins are numbered 1..q and spin 1 is the leftmost tensor factor.
* Basis states are labelled by bit strings; bit 0 is the |0> (m = +1/2)
  state of a spin, so ``|00...0>`` is the first computational basis state.
* Resonance offsets and scalar couplings are given in Hz at every
  interface.  Hamiltonians are returned in angular-frequency units
  (rad/s):

      H0 = sum_k 2*pi*nu_k * Iz_k  +  sum_{k<l} pi*J_kl * 2 Iz_k Iz_l

  The weak-coupling (Ising) form keeps H0 diagonal, which the rest of
  the package relies on (fast exponentials, phase-only control).
* Operators are plain complex numpy arrays.  Where a contract requires
  a Hermitian or unitary matrix the named check helpers below are used
  instead of carrying a tag around.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "ID2",
    "Spin",
    "SpinSystem",
    "SpinOps",
    "TotalOps",
    "CoherenceOrderTable",
    "DIM_CAP_QUBITS",
    "is_hermitian",
    "is_unitary",
    "require_hermitian",
    "require_unitary",
    "single_spin_ops",
    "embed_single_spin",
    "total_ops",
    "drift_diagonal",
    "drift_hamiltonian",
    "subsystem",
    "passive_ensemble",
    "coherence_orders",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

#: Largest supported register; 2^12 = 4096 keeps dense algebra tractable.
DIM_CAP_QUBITS = 12

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10


def is_hermitian(a: NDArray, tol: float = HERMITIAN_TOL) -> bool:
    """True if max |A - A^dag| element is at most ``tol``."""
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def is_unitary(u: NDArray, tol: float = UNITARY_TOL) -> bool:
    """True if max |U^dag U - 1| element is at most ``tol``."""
    n = u.shape[0]
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(n))) <= tol)


def require_hermitian(a: NDArray, tol: float = HERMITIAN_TOL, what: str = "operator") -> NDArray:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {a.shape}")
    if not is_hermitian(a, tol):
        dev = np.max(np.abs(a - a.conj().T))
        raise ValueError(f"{what} is not Hermitian (max deviation {dev:.3e} > {tol:.1e})")
    return a


def require_unitary(u: NDArray, tol: float = UNITARY_TOL, what: str = "operator") -> NDArray:
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {u.shape}")
    if not is_unitary(u, tol):
        dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
        raise ValueError(f"{what} is not unitary (max deviation {dev:.3e} > {tol:.1e})")
    return u


@dataclass(frozen=True)
class Spin:
    """One spin-1/2 nucleus: a label, a species tag, and its offset."""

    label: str
    species: str
    offset_hz: float


@dataclass(frozen=True)
class SpinSystem:
    """A register of coupled spins-1/2.

    Parameters
    ----------
    spins
        Ordered spins; position in this tuple fixes the 1-based index
        and the tensor-product slot.
    couplings
        Scalar couplings in Hz keyed by ``(i, j)`` with ``i < j``
        (1-based).  Stored once per unordered pair.
    """

    spins: tuple[Spin, ...]
    couplings: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        q = len(self.spins)
        if not 1 <= q <= DIM_CAP_QUBITS:
            raise ValueError(f"spin count {q} outside supported range 1..{DIM_CAP_QUBITS}")
        normalized: dict[tuple[int, int], float] = {}
        for (i, j), j_hz in dict(self.couplings).items():
            if i == j:
                raise ValueError(f"self-coupling ({i},{j}) is not allowed")
            if not (1 <= i <= q and 1 <= j <= q):
                raise ValueError(f"coupling ({i},{j}) references an unknown spin (q={q})")
            key = (i, j) if i < j else (j, i)
            if key in normalized:
                raise ValueError(f"duplicate coupling for pair {key}")
            normalized[key] = float(j_hz)
        object.__setattr__(self, "couplings", normalized)

    @property
    def q(self) -> int:
        return len(self.spins)

    @property
    def dim(self) -> int:
        return 2 ** self.q

    @property
    def channels(self) -> dict[str, tuple[int, ...]]:
        """Spin indices grouped by species, in order of first appearance."""
        out: dict[str, list[int]] = {}
        for k, spin in enumerate(self.spins, start=1):
            out.setdefault(spin.species, []).append(k)
        return {s: tuple(v) for s, v in out.items()}

    def j_hz(self, i: int, j: int) -> float:
        key = (i, j) if i < j else (j, i)
        return self.couplings.get(key, 0.0)

    @staticmethod
    def homonuclear(offsets_hz: Sequence[float],
                    couplings: Mapping[tuple[int, int], float] | None = None,
                    species: str = "1H") -> "SpinSystem":
        spins = tuple(Spin(label=f"{species}{k + 1}", species=species, offset_hz=float(v))
                      for k, v in enumerate(offsets_hz))
        return SpinSystem(spins=spins, couplings=dict(couplings or {}))


class SpinOps(NamedTuple):
    x: NDArray
    y: NDArray
    z: NDArray


class TotalOps(NamedTuple):
    x: NDArray
    y: NDArray


def embed_single_spin(op2: NDArray, q: int, k: int) -> NDArray:
    """Embed a 2x2 operator acting on spin ``k`` into the q-spin space."""
    if not 1 <= k <= q:
        raise ValueError(f"spin index {k} out of range 1..{q}")
    out = np.eye(2 ** (k - 1), dtype=complex)
    out = np.kron(out, op2)
    out = np.kron(out, np.eye(2 ** (q - k), dtype=complex))
    return out


def single_spin_ops(q: int, k: int) -> SpinOps:
    """Angular-momentum operators Ix, Iy, Iz of spin ``k`` in a q-spin register.

    Eigenvalues are +-1/2; the matrices are Hermitian by construction.
    """
    if not 1 <= q <= DIM_CAP_QUBITS:
        raise ValueError(f"spin count {q} outside supported range 1..{DIM_CAP_QUBITS}")
    ops = SpinOps(
        x=embed_single_spin(SIGMA_X / 2, q, k),
        y=embed_single_spin(SIGMA_Y / 2, q, k),
        z=embed_single_spin(SIGMA_Z / 2, q, k),
    )
    return ops


def total_ops(system: SpinSystem, channel: str) -> TotalOps:
    """Total angular momentum Fx, Fy of one RF channel (one species).

    Fx = sum of Ix over every spin of the channel's species; likewise Fy.
    """
    members = system.channels.get(channel)
    if members is None:
        raise ValueError(f"unknown channel {channel!r}; have {sorted(system.channels)}")
    fx = np.zeros((system.dim, system.dim), dtype=complex)
    fy = np.zeros_like(fx)
    for k in members:
        ops = single_spin_ops(system.q, k)
        fx += ops.x
        fy += ops.y
    return TotalOps(x=fx, y=fy)


def _mz_table(q: int) -> NDArray:
    """mz_table[s, k] = +1/2 if bit k of basis state s is 0 else -1/2.

    Column k corresponds to spin k+1 (spin 1 = most significant bit).
    """
    states = np.arange(2 ** q)
    bits = (states[:, None] >> (q - 1 - np.arange(q))) & 1
    return 0.5 - bits.astype(float)


def drift_diagonal(system: SpinSystem) -> NDArray:
    """Diagonal of the drift Hamiltonian H0, in rad/s."""
    mz = _mz_table(system.q)
    diag = np.zeros(system.dim)
    for k, spin in enumerate(system.spins, start=1):
        diag += 2.0 * np.pi * spin.offset_hz * mz[:, k - 1]
    for (i, j), j_hz in system.couplings.items():
        diag += np.pi * j_hz * 2.0 * mz[:, i - 1] * mz[:, j - 1]
    return diag


def drift_hamiltonian(system: SpinSystem) -> NDArray:
    """Dense drift Hamiltonian H0 (rad/s), diagonal in the computational basis.

    H0 = sum_k 2*pi*offset_hz(k)*Iz_k + sum_{k<l} pi*J_hz(k,l)*2*Iz_k*Iz_l.
    """
    return np.diag(drift_diagonal(system)).astype(complex)


def subsystem(system: SpinSystem, keep: Iterable[int]) -> SpinSystem:
    """Restrict to the spins in ``keep`` (1-based), reindexed in ascending order.

    Offsets and couplings among kept spins are retained; every coupling
    to a removed spin is dropped.
    """
    kept = sorted(set(keep))
    if not kept:
        raise ValueError("keep set must be nonempty")
    for k in kept:
        if not 1 <= k <= system.q:
            raise ValueError(f"spin index {k} out of range 1..{system.q}")
    remap = {old: new for new, old in enumerate(kept, start=1)}
    spins = tuple(system.spins[k - 1] for k in kept)
    couplings = {
        (remap[i], remap[j]): j_hz
        for (i, j), j_hz in system.couplings.items()
        if i in remap and j in remap
    }
    return SpinSystem(spins=spins, couplings=couplings)


def passive_ensemble(
    system: SpinSystem,
    active: Iterable[int],
    passive: Iterable[int],
    weights: Mapping[tuple[int, ...], float] | None = None,
) -> list[tuple[NDArray, float]]:
    """Effective active-subsystem Hamiltonians for each passive-spin state.

    Every computational state of the passive spins yields one drift
    Hamiltonian for the active subsystem: a passive spin p in state |0>
    shifts each coupled active spin a by +pi*J(a,p)*Iz_a, and by the
    opposite sign in state |1> (the coupling term pi*J*2*Iz_a*Iz_p with
    Iz_p replaced by its eigenvalue +-1/2).

    Parameters
    ----------
    weights
        Optional multiplicity per passive bit-tuple (first listed
        passive spin first).  Defaults to uniform.  Normalized so the
        returned weights sum to 1.

    Returns
    -------
    list of (Hamiltonian, weight)
        One entry per passive state, in binary order (first passive
        spin = most significant bit).
    """
    active = sorted(set(active))
    passive = sorted(set(passive))
    if set(active) & set(passive):
        raise ValueError("active and passive spin sets overlap")
    if set(active) | set(passive) != set(range(1, system.q + 1)):
        raise ValueError("active and passive sets must partition the spin set")

    sub = subsystem(system, active)
    base = drift_diagonal(sub)
    mz = _mz_table(sub.q)
    remap = {old: new for new, old in enumerate(active, start=1)}

    members: list[tuple[NDArray, float]] = []
    m = len(passive)
    raw_weights = []
    for state in range(2 ** m):
        bits = tuple((state >> (m - 1 - idx)) & 1 for idx in range(m))
        diag = base.copy()
        for idx, p in enumerate(passive):
            sign = +1.0 if bits[idx] == 0 else -1.0
            for a in active:
                j_hz = system.j_hz(a, p)
                if j_hz != 0.0:
                    diag = diag + sign * np.pi * j_hz * mz[:, remap[a] - 1]
        if weights is None:
            w = 1.0
        else:
            w = float(weights.get(bits, 0.0))
        raw_weights.append(w)
        members.append((np.diag(diag).astype(complex), w))

    total = sum(raw_weights)
    if total <= 0:
        raise ValueError("weights sum to zero; at least one passive state needs weight")
    return [(h, w / total) for (h, _), w in zip(members, raw_weights)]


@dataclass(frozen=True)
class CoherenceOrderTable:
    """Per-species coherence order of every density-matrix element.

    ``orders[s][r, c]`` is the difference in total magnetic quantum
    number between basis states r and c restricted to spins of species
    s, counting each spin as +-1 (twice the usual m).  Antisymmetric
    under transpose with zero diagonal.
    """

    orders: dict[str, NDArray]

    def species(self) -> tuple[str, ...]:
        return tuple(self.orders)


def coherence_orders(system: SpinSystem) -> CoherenceOrderTable:
    """Coherence order table of the system, one matrix per species."""
    mz = _mz_table(system.q)
    tables: dict[str, NDArray] = {}
    for species, members in system.channels.items():
        m_per_state = np.zeros(system.dim)
        for k in members:
            m_per_state += 2.0 * mz[:, k - 1]
        m_int = np.rint(m_per_state).astype(int)
        tables[species] = m_int[:, None] - m_int[None, :]
    return CoherenceOrderTable(orders=tables)
