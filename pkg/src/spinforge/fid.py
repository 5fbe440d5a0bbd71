"""Fidelity measures for gates and states.

Gate similarity is the normalized overlap

    F(U, V) = |tr(U^dag V) / tr(U^dag U)|^2,

insensitive to a global phase on either argument; the unnormalized form
Phi4 = |tr(U^dag V)|^2 is the raw objective used by the pulse
optimizer (F = Phi4 / 4^q for unitaries).  State-to-state comparisons
use <psi|rho|psi> for a pure comparator and the Uhlmann-Jozsa fidelity
for two mixed states, in both the textbook form

    F_classic = [tr sqrt(sqrt(rho) sigma sqrt(rho))]^2

and the equivalent, cheaper form summing the square roots of the
eigenvalues of the (non-Hermitian) product rho*sigma:

    F_fast = [sum_i sqrt(lambda_i(rho sigma))]^2.

All fidelities are clamped to [0, 1] after roundoff unless asked for
raw values (clamp=False).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .prop import EnsembleSpec, PulseProgram, sequence_propagator
from .spinsys import SpinSystem

__all__ = [
    "unitary_fidelity",
    "unitary_infidelity",
    "phi4",
    "state_fidelity",
    "uj_fidelity",
    "cardinal_average_fidelity",
    "ensemble_fidelity",
    "trace_overlap",
    "require_density",
    "CARDINAL_STATES",
]

#: Pure single-qubit states along +x, +y and +z.
CARDINAL_STATES = (
    np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0),
    np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2.0),
    np.array([1.0, 0.0], dtype=complex),
)

PSD_FLOOR = -1e-10
TRACE_TOL = 1e-8


def _clamp01(x: float, clamp: bool) -> float:
    return float(min(1.0, max(0.0, x))) if clamp else float(x)


def _check_dims(u: NDArray, v: NDArray) -> None:
    if u.shape != v.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"operator dimension mismatch: {u.shape} vs {v.shape}")


def unitary_fidelity(u: NDArray, v: NDArray, clamp: bool = True) -> float:
    """F = |tr(U^dag V) / tr(U^dag U)|^2, global-phase insensitive."""
    _check_dims(u, v)
    num = np.trace(u.conj().T @ v)
    den = np.trace(u.conj().T @ u).real
    return _clamp01(abs(num / den) ** 2, clamp)


def unitary_infidelity(u: NDArray, v: NDArray) -> float:
    """1 - F, the quantity the optimizers minimize."""
    return 1.0 - unitary_fidelity(u, v)


def phi4(u: NDArray, v: NDArray) -> float:
    """Phi4 = |<U|V>|^2 with <U|V> = tr(U^dag V); equals 4^q at V = U."""
    _check_dims(u, v)
    return float(abs(np.trace(u.conj().T @ v)) ** 2)


def require_density(rho: NDArray, what: str = "density matrix") -> NDArray:
    """Validate trace 1 (to 1e-8), Hermiticity, and PSD (floor -1e-10).

    Returns the eigenvalues as a byproduct for callers that need them.
    """
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{what} must be square, got {rho.shape}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValueError(f"{what} trace {tr:.12g} differs from 1 beyond {TRACE_TOL:.0e}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValueError(f"{what} is not Hermitian")
    vals = np.linalg.eigvalsh(rho)
    if vals.min() < PSD_FLOOR:
        raise ValueError(f"{what} has eigenvalue {vals.min():.3e} below PSD floor {PSD_FLOOR:.0e}")
    return vals


def state_fidelity(psi: NDArray, rho: NDArray, clamp: bool = True) -> float:
    """<psi|rho|psi> between a normalized pure target and a density matrix."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("target state is not normalized")
    require_density(rho)
    if rho.shape[0] != psi.size:
        raise ValueError("state and density matrix dimensions differ")
    val = np.real(psi.conj() @ rho @ psi)
    return _clamp01(val, clamp)


def _psd_sqrt(rho: NDArray) -> NDArray:
    vals, vecs = np.linalg.eigh(rho)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def uj_fidelity(rho: NDArray, sigma: NDArray, method: str = "fast", clamp: bool = True) -> float:
    """Uhlmann-Jozsa fidelity between two density matrices.

    method="classic" evaluates [tr sqrt(sqrt(rho) sigma sqrt(rho))]^2
    with two Hermitian eigendecompositions; method="fast" sums the
    square roots of the eigenvalues of rho @ sigma (a non-Hermitian
    matrix with provably real, nonnegative spectrum; tiny negative
    real parts from roundoff are clamped to zero).
    """
    _check_dims(rho, sigma)
    require_density(rho, "rho")
    require_density(sigma, "sigma")
    if method == "classic":
        root = _psd_sqrt(rho)
        inner = root @ sigma @ root
        inner = (inner + inner.conj().T) / 2.0
        vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
        f = float(np.sum(np.sqrt(vals)) ** 2)
    elif method == "fast":
        vals = scipy.linalg.eigvals(rho @ sigma)
        vals = np.clip(vals.real, 0.0, None)
        f = float(np.sum(np.sqrt(vals)) ** 2)
    else:
        raise ValueError(f"unknown method {method!r}; use 'classic' or 'fast'")
    return _clamp01(f, clamp)


def trace_overlap(rho: NDArray, sigma: NDArray) -> float:
    """tr(rho sigma), exposed for diagnostics only.

    This is not a fidelity: it does not reach 1 for identical mixed
    states (tr(rho^2) < 1).  It is only meaningful when comparing one
    density matrix against different unitary transformations of
    another, where the purity factor is common to all comparisons.
    """
    _check_dims(rho, sigma)
    return float(np.real(np.trace(rho @ sigma)))


def cardinal_average_fidelity(u_target: NDArray, v: NDArray, clamp: bool = True) -> float:
    """Mean fidelity over initial states along +x, +y, +z (single qubit).

    Each cardinal state is propagated by both operators and compared;
    for pure states this is |<psi|U^dag V|psi>|^2 averaged over the
    three states.
    """
    if u_target.shape != (2, 2) or v.shape != (2, 2):
        raise ValueError("cardinal average is defined for single-qubit operators")
    total = 0.0
    for psi in CARDINAL_STATES:
        a = u_target @ psi
        b = v @ psi
        total += abs(np.vdot(a, b)) ** 2
    return _clamp01(total / len(CARDINAL_STATES), clamp)


def ensemble_fidelity(
    system: SpinSystem,
    program: PulseProgram,
    target: NDArray | None,
    ensemble: EnsembleSpec,
) -> float:
    """Weighted mean unitary fidelity over ensemble members.

    Members may override the target (passive-spin ensembles compare
    each member's propagator against its own frame-shifted gate).
    """
    total = 0.0
    for member, weight in zip(ensemble.members, ensemble.weights):
        goal = member.target if member.target is not None else target
        if goal is None:
            raise ValueError("no target provided for ensemble member")
        v = sequence_propagator(system, program, member)
        total += weight * unitary_fidelity(goal, v)
    return total
