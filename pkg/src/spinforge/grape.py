"""Gradient-ascent pulse engineering.

The objective is the normalized propagator fidelity

    F = Phi4 / 4^q,    Phi4 = |tr(U_target^dag V)|^2,

averaged with weights over an ensemble (B1 scalings, passive-spin drift
members with their own frame-shifted targets) or over subsystems.  One
forward pass builds the partial products X_j = V_j...V_1, one backward
pass builds P_j = V_{j+1}^dag...V_n^dag U, and every gradient mode is
assembled from those: a first-order approximation, the exact derivative
evaluated in each step Hamiltonian's eigenbasis, and the exact
phase-only form that never exponentiates anything but diagonals.

Optimizers: steepest ascent and a BFGS quasi-Newton method, both with a
backtracking Armijo line search, hard amplitude clipping in xy mode, and
random restarts on stall.  All randomness flows from one seeded
generator, so runs are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .prop import (
    ChannelControls,
    EnsembleMember,
    EnsembleSpec,
    NOMINAL_MEMBER,
    PulseProgram,
)
from .spinsys import (
    SpinSystem,
    drift_diagonal,
    require_unitary,
    total_ops,
    _mz_table,
)

__all__ = [
    "GrapeError",
    "OptimizerOptions",
    "GrapeProblem",
    "GrapeResult",
    "forward_backward",
    "pack_controls",
    "unpack_controls",
    "objective",
    "grad_approx",
    "grad_exact",
    "grad_phase_only",
    "optimize",
    "subsystem_problem",
    "subsystem_objective",
]

GRADIENT_MODES = ("approx", "exact", "phase_only_exact")
ARMIJO_C1 = 1e-4
ARMIJO_CONTRACTION = 0.5
MAX_BACKTRACKS = 50
CURVATURE_FLOOR = 1e-10


class GrapeError(RuntimeError):
    """Optimization failure (non-finite objective, bad configuration)."""


@dataclass(frozen=True)
class OptimizerOptions:
    """Termination, search, and initialization settings."""

    goal_infidelity: float = 1e-4
    grad_tol: float = 1e-10
    max_iterations: int = 2000
    restarts: int = 5
    method: str = "bfgs"  # "bfgs" | "steepest"
    seed: int | None = None
    amp_cap_hz: float | None = None
    amp_penalty: float = 0.0  # quadratic penalty weight; 0 disables (default)

    def __post_init__(self):
        if not 0.0 < self.goal_infidelity < 1.0:
            raise ValueError("goal infidelity must lie in (0,1)")
        if self.method not in ("bfgs", "steepest"):
            raise ValueError(f"unknown optimizer method {self.method!r}")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("iteration and restart counts must be positive")
        if self.amp_cap_hz is not None and self.amp_cap_hz <= 0:
            raise ValueError("amplitude cap must be positive")
        if self.amp_penalty < 0:
            raise ValueError("amplitude penalty must be nonnegative")


class _Term:
    """One weighted fidelity contribution: a system, a drift, a target.

    Ensemble members and subsystem averaging both reduce to a list of
    these; every sweep below runs on one term at a time and the weighted
    results are accumulated in listed order (deterministic reduction).
    """

    def __init__(
        self,
        system: SpinSystem,
        drift: NDArray | None,
        scalings: Mapping[str, float],
        target: NDArray,
        weight: float,
        label: str,
    ):
        self.system = system
        self.dim = drift.shape[0] if drift is not None else system.dim
        if drift is None:
            drift = np.diag(drift_diagonal(system)).astype(complex)
        self.drift = drift
        self.scalings = dict(scalings)
        self.target = require_unitary(np.asarray(target, dtype=complex),
                                      what=f"target for {label}")
        if self.target.shape != (self.dim, self.dim):
            raise ValueError(
                f"target dim {self.target.shape} does not match system dim "
                f"{self.dim} for {label}"
            )
        self.weight = float(weight)
        self.label = label
        self.norm = float(self.dim) ** 2  # 4^q
        self._channel_ops: dict[str, tuple[NDArray, NDArray, NDArray]] = {}
        self._phase_cache: dict[tuple[str, float], tuple[NDArray, NDArray, NDArray]] = {}

    def scaling(self, species: str) -> float:
        return float(self.scalings.get(species, 1.0))

    def channel_ops(self, species: str) -> tuple[NDArray, NDArray, NDArray]:
        """(Fx, Fy, fz_diag) for one species, cached."""
        if species not in self._channel_ops:
            if species not in self.system.channels:
                raise ValueError(f"system has no channel for species {species!r}")
            ops = total_ops(self.system, species)
            mz = _mz_table(self.system.q)
            fz = np.zeros(self.dim)
            for k in self.system.channels[species]:
                fz += mz[:, k - 1]
            self._channel_ops[species] = (ops.x, ops.y, fz)
        return self._channel_ops[species]

    def phase_core(self, species: str, amp_hz: float) -> tuple[NDArray, NDArray, NDArray]:
        """Eigendecomposition of the fixed-phase step Hamiltonian H^x.

        Returns (lam, Q, Vx(tau=None placeholder)) -- Vx is built by the
        caller from lam and Q for its tau; here we cache (lam, Q, fz).
        """
        key = (species, float(amp_hz))
        if key not in self._phase_cache:
            fx, _, fz = self.channel_ops(species)
            hx = self.drift + self.scaling(species) * 2.0 * np.pi * amp_hz * fx
            lam, q = np.linalg.eigh(hx)
            self._phase_cache[key] = (lam, q, fz)
        return self._phase_cache[key]


def _build_terms(
    system: SpinSystem,
    target: NDArray | None,
    ensemble: EnsembleSpec,
    label_prefix: str = "",
) -> list[_Term]:
    terms = []
    for i, (member, weight) in enumerate(zip(ensemble.members, ensemble.weights)):
        goal = member.target if member.target is not None else target
        if goal is None:
            raise ValueError(f"no target for ensemble member {i}")
        label = member.label or f"member {i}"
        terms.append(
            _Term(system, member.drift, member.rf_scalings, goal,
                  weight, label_prefix + label)
        )
    return terms


@dataclass(frozen=True, eq=False)
class GrapeProblem:
    """A pulse-engineering task: what to hit, with what knobs, how well."""

    system: SpinSystem
    target: NDArray | None
    template: PulseProgram
    ensemble: EnsembleSpec | None = None
    gradient_mode: str = "exact"
    options: OptimizerOptions = field(default_factory=OptimizerOptions)
    _terms: tuple[_Term, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")
        if self.template.n_steps * self.template.tau_s <= 0:
            raise ValueError("program template must have positive total duration")
        if self.gradient_mode == "phase_only_exact":
            chans = self.template.channels
            if len(chans) != 1 or chans[0].mode != "phase_only":
                raise ValueError(
                    "phase_only_exact mode needs exactly one phase_only channel"
                )
        if not self._terms:
            ens = self.ensemble if self.ensemble is not None else EnsembleSpec(
                members=(NOMINAL_MEMBER,), weights=(1.0,)
            )
            terms = _build_terms(self.system, self.target, ens)
            total = sum(t.weight for t in terms)
            if total <= 0:
                raise ValueError("ensemble weights must have positive sum")
            for t in terms:
                t.weight /= total
            object.__setattr__(self, "_terms", tuple(terms))

    @property
    def terms(self) -> tuple[_Term, ...]:
        return self._terms


def subsystem_problem(
    systems: Sequence[SpinSystem],
    targets: Sequence[NDArray],
    weights: Sequence[float],
    template: PulseProgram,
    ensemble: EnsembleSpec | None = None,
    gradient_mode: str = "exact",
    options: OptimizerOptions | None = None,
) -> GrapeProblem:
    """Average the fidelity over reduced subsystems instead of one system.

    Each subsystem gets the full ensemble (RF scalings only -- members
    with drift or target overrides are tied to one dimension and are
    rejected here).  Weights are normalized to sum 1.
    """
    if len(systems) != len(targets) or len(systems) != len(weights):
        raise ValueError(
            f"got {len(systems)} systems, {len(targets)} targets, "
            f"{len(weights)} weights; counts must match"
        )
    if ensemble is not None:
        for m in ensemble.members:
            if m.drift is not None or m.target is not None:
                raise ValueError(
                    "subsystem averaging only supports RF-scaling ensembles"
                )
    terms: list[_Term] = []
    for i, (sys_i, tgt_i, w_i) in enumerate(zip(systems, targets, weights)):
        ens = ensemble if ensemble is not None else EnsembleSpec(
            members=(NOMINAL_MEMBER,), weights=(1.0,)
        )
        sub = _build_terms(sys_i, tgt_i, ens, label_prefix=f"subsystem {i} / ")
        for t in sub:
            t.weight *= float(w_i)
        terms.extend(sub)
    total = sum(t.weight for t in terms)
    if total <= 0:
        raise ValueError("subsystem weights must have positive sum")
    for t in terms:
        t.weight /= total
    problem = GrapeProblem(
        system=systems[0],
        target=None,
        template=template,
        ensemble=None,
        gradient_mode=gradient_mode,
        options=options if options is not None else OptimizerOptions(),
        _terms=tuple(terms),
    )
    return problem


def subsystem_objective(
    systems: Sequence[SpinSystem],
    targets: Sequence[NDArray],
    weights: Sequence[float],
    program: PulseProgram,
    ensemble: EnsembleSpec | None = None,
) -> float:
    """Weighted mean of per-subsystem ensemble fidelities for a program."""
    problem = subsystem_problem(systems, targets, weights, program, ensemble)
    return objective(problem, program)


# ---------------------------------------------------------------------------
# sweeps

def _term_step_hamiltonian(term: _Term, program: PulseProgram, j: int) -> NDArray:
    h = term.drift
    for ch in program.channels:
        ax, ay = ch.xy()
        if ax[j] == 0.0 and ay[j] == 0.0:
            continue
        fx, fy, _ = term.channel_ops(ch.species)
        s = term.scaling(ch.species)
        h = h + s * 2.0 * np.pi * (ax[j] * fx + ay[j] * fy)
    return h


def _term_sweep(term: _Term, program: PulseProgram):
    """Eigendecompose every step, build V_j, X_j, P_j, and c = tr(U^dag V).

    Returns (eigs, x_list, p_list, c) with x_list[j] = X_j (X_0 = 1) and
    p_list[j] = P_j (P_n = U), both of length n+1.
    """
    n = program.n_steps
    tau = program.tau_s
    dim = term.dim
    eigs = []
    v_list = []
    x_list = [np.eye(dim, dtype=complex)]
    for j in range(n):
        h = _term_step_hamiltonian(term, program, j)
        lam, q = np.linalg.eigh(h)
        v = (q * np.exp(-1j * lam * tau)) @ q.conj().T
        eigs.append((lam, q))
        v_list.append(v)
        x_list.append(v @ x_list[-1])
    p_list = [None] * (n + 1)
    p_list[n] = term.target
    for j in range(n - 1, -1, -1):
        p_list[j] = v_list[j].conj().T @ p_list[j + 1]
    c = complex(np.vdot(p_list[n], x_list[n]))  # tr(U^dag X_n)
    if not np.isfinite(c.real) or not np.isfinite(c.imag):
        raise GrapeError(f"non-finite objective for {term.label}")
    return eigs, x_list, p_list, c


def _phase_sweep(term: _Term, program: PulseProgram):
    """Phase-only sweep: V_j from one cached eigensystem plus diagonal scalings."""
    ch = program.channels[0]
    lam, q, fz = term.phase_core(ch.species, float(ch.amp_hz))
    tau = program.tau_s
    vx = (q * np.exp(-1j * lam * tau)) @ q.conj().T
    phases = ch.values
    n = program.n_steps
    dim = term.dim
    ph = np.exp(-1j * np.outer(phases, fz))  # (n, dim)
    x_list = [np.eye(dim, dtype=complex)]
    v_list = []
    for j in range(n):
        v = ph[j][:, None] * vx * ph[j].conj()[None, :]
        v_list.append(v)
        x_list.append(v @ x_list[-1])
    p_list = [None] * (n + 1)
    p_list[n] = term.target
    for j in range(n - 1, -1, -1):
        p_list[j] = v_list[j].conj().T @ p_list[j + 1]
    c = complex(np.vdot(p_list[n], x_list[n]))
    if not np.isfinite(c.real) or not np.isfinite(c.imag):
        raise GrapeError(f"non-finite objective for {term.label}")
    return fz, x_list, p_list, c


def forward_backward(
    system: SpinSystem,
    program: PulseProgram,
    target: NDArray,
    member: EnsembleMember = NOMINAL_MEMBER,
) -> tuple[NDArray, NDArray, float]:
    """Partial products X_j = V_j...V_1 and P_j = V_{j+1}^dag...V_n^dag U.

    Returns (X, P, Phi4) where X[j-1] holds X_j and P[j-1] holds P_j for
    j = 1..n (so P[-1] is the target U itself), and
    Phi4 = <P_j|X_j><X_j|P_j>, the same number for every j.
    """
    goal = member.target if member.target is not None else target
    term = _Term(system, member.drift, member.rf_scalings, goal, 1.0, "member")
    _, x_list, p_list, c = _term_sweep(term, program)
    x = np.stack(x_list[1:])
    p = np.stack(p_list[1:])
    return x, p, float(abs(c) ** 2)


# ---------------------------------------------------------------------------
# parameter packing

def pack_controls(program: PulseProgram) -> NDArray:
    """Flatten all channel values into one parameter vector.

    Channel order follows the program; xy and amp_phase channels
    contribute their (n,2) values row-major, phase_only channels their n
    phases.
    """
    return np.concatenate([ch.values.ravel() for ch in program.channels])


def unpack_controls(template: PulseProgram, x: NDArray) -> PulseProgram:
    """Rebuild a program from a packed parameter vector."""
    x = np.asarray(x, dtype=float)
    chans = []
    pos = 0
    for ch in template.channels:
        size = ch.values.size
        vals = x[pos : pos + size].reshape(ch.values.shape)
        pos += size
        chans.append(replace(ch, values=vals))
    if pos != x.size:
        raise ValueError(f"parameter vector length {x.size}, expected {pos}")
    return PulseProgram(tau_s=template.tau_s, channels=tuple(chans))


def _as_program(problem: GrapeProblem, controls) -> PulseProgram:
    if isinstance(controls, PulseProgram):
        return controls
    return unpack_controls(problem.template, controls)


def _dh_for_step(term: _Term, ch: ChannelControls, j: int) -> list[NDArray]:
    """d(step Hamiltonian)/d(parameter) for each of this channel's step-j knobs."""
    fx, fy, _ = term.channel_ops(ch.species)
    s = term.scaling(ch.species) * 2.0 * np.pi
    if ch.mode == "xy":
        return [s * fx, s * fy]
    if ch.mode == "amp_phase":
        amp, phase = ch.values[j]
        cos, sin = math.cos(phase), math.sin(phase)
        return [s * (cos * fx + sin * fy), s * amp * (-sin * fx + cos * fy)]
    amp = float(ch.amp_hz)
    phase = ch.values[j]
    cos, sin = math.cos(phase), math.sin(phase)
    return [s * amp * (-sin * fx + cos * fy)]


def _channel_slices(program: PulseProgram) -> list[tuple[ChannelControls, int, int]]:
    """(channel, offset, params_per_step) for the packed layout."""
    out = []
    pos = 0
    for ch in program.channels:
        per = 1 if ch.mode == "phase_only" else 2
        out.append((ch, pos, per))
        pos += ch.values.size
    return out


# ---------------------------------------------------------------------------
# objective and gradients

def objective(problem: GrapeProblem, controls) -> float:
    """Weighted ensemble/subsystem average of Phi4 / 4^q."""
    program = _as_program(problem, controls)
    total = 0.0
    for term in problem.terms:
        if problem.gradient_mode == "phase_only_exact":
            _, _, _, c = _phase_sweep(term, program)
        else:
            _, _, _, c = _term_sweep(term, program)
        total += term.weight * abs(c) ** 2 / term.norm
    return total


def grad_approx(problem: GrapeProblem, controls) -> NDArray:
    """First-order gradient: dPhi4/da ~ -2 Re(<P_j|i tau dH X_j> <X_j|P_j>).

    Exact only when each dH commutes with its step Hamiltonian; the error
    vanishes linearly as tau -> 0.  One forward and one backward sweep.
    """
    program = _as_program(problem, controls)
    tau = program.tau_s
    grad = np.zeros(pack_controls(program).size)
    for term in problem.terms:
        _, x_list, p_list, c = _term_sweep(term, program)
        scale = term.weight / term.norm
        for j in range(program.n_steps):
            w = x_list[j + 1] @ p_list[j + 1].conj().T  # X_j P_j^dag
            for ch, offset, per in _channel_slices(program):
                for k, dh in enumerate(_dh_for_step(term, ch, j)):
                    t = np.sum(dh * w.T)  # tr(dH X_j P_j^dag)
                    d_phi4 = -2.0 * np.real(1j * tau * t * np.conj(c))
                    grad[offset + j * per + k] += scale * d_phi4
    return grad


def grad_exact(problem: GrapeProblem, controls) -> NDArray:
    """Exact gradient via the eigenbasis divided-difference formula.

    In the eigenbasis of H_j (eigenvalues lam, A = -i tau H_j with
    ξ_l = -i tau lam_l), the derivative of V_j = e^A along B = -i tau dH
    has elements B_lm (e^{ξ_l}-e^{ξ_m})/(ξ_l-ξ_m), with the diagonal
    limit B_ll e^{ξ_l}; the sinc form below evaluates both branches
    without a degeneracy special case.
    """
    program = _as_program(problem, controls)
    tau = program.tau_s
    grad = np.zeros(pack_controls(program).size)
    for term in problem.terms:
        eigs, x_list, p_list, c = _term_sweep(term, program)
        scale = term.weight / term.norm
        for j in range(program.n_steps):
            lam, q = eigs[j]
            theta = -tau * lam
            half = np.exp(0.5j * theta)
            diff = theta[:, None] - theta[None, :]
            r = np.outer(half, half) * np.sinc(diff / (2.0 * np.pi))
            k_mat = (q.conj().T @ x_list[j]) @ (p_list[j + 1].conj().T @ q)
            for ch, offset, per in _channel_slices(program):
                for k, dh in enumerate(_dh_for_step(term, ch, j)):
                    b = q.conj().T @ (-1j * tau * dh) @ q
                    dc = np.sum((b * r) * k_mat.T)
                    grad[offset + j * per + k] += scale * 2.0 * np.real(np.conj(c) * dc)
    return grad


def grad_phase_only(problem: GrapeProblem, controls) -> NDArray:
    """Exact phase-only gradient from dV_j/dphi_j = i [V_j, F_z].

    With g_j = tr(P_j^dag F_z X_j) (and g_0 = tr(P_0^dag F_z)), the
    derivative of c along phi_j is i (g_{j-1} - g_j); only diagonal
    phase scalings and one cached eigensystem are ever used.
    """
    program = _as_program(problem, controls)
    chans = program.channels
    if len(chans) != 1 or chans[0].mode != "phase_only":
        raise GrapeError(
            "phase-only gradient needs exactly one phase_only channel"
        )
    n = program.n_steps
    grad = np.zeros(n)
    for term in problem.terms:
        if np.count_nonzero(term.drift - np.diag(np.diagonal(term.drift))):
            raise GrapeError(
                f"phase-only identity needs a diagonal drift ({term.label})"
            )
        fz, x_list, p_list, c = _phase_sweep(term, program)
        g = np.empty(n + 1, dtype=complex)
        for j in range(n + 1):
            g[j] = np.vdot(p_list[j], fz[:, None] * x_list[j])
        d = 1j * (g[:-1] - g[1:])
        grad += (term.weight / term.norm) * 2.0 * np.real(np.conj(c) * d)
    return grad


def _gradient(problem: GrapeProblem, program: PulseProgram) -> NDArray:
    if problem.gradient_mode == "approx":
        return grad_approx(problem, program)
    if problem.gradient_mode == "exact":
        return grad_exact(problem, program)
    return grad_phase_only(problem, program)


# ---------------------------------------------------------------------------
# optimizers

def _xy_param_mask(template: PulseProgram) -> NDArray:
    mask = np.zeros(pack_controls(template).size, dtype=bool)
    for ch, offset, per in _channel_slices(template):
        if ch.mode == "xy":
            mask[offset : offset + ch.values.size] = True
    return mask


def _project(template: PulseProgram, x: NDArray, cap: float | None) -> NDArray:
    """Clip xy amplitudes to the cap (per-step vector norm), leave phases alone."""
    if cap is None:
        return x
    x = x.copy()
    for ch, offset, per in _channel_slices(template):
        if ch.mode != "xy":
            continue
        vals = x[offset : offset + ch.values.size].reshape(-1, 2)
        norms = np.hypot(vals[:, 0], vals[:, 1])
        over = norms > cap
        if np.any(over):
            vals[over] *= (cap / norms[over])[:, None]
        x[offset : offset + ch.values.size] = vals.ravel()
    return x


def _xy_scale(template: PulseProgram, cap: float | None) -> float:
    """Natural amplitude unit: the cap, or the quarter-turn amplitude.

    With no cap the amplitude that turns a spin 90 degrees over the full
    program, 1/(4*n*tau) Hz, sets the scale.
    """
    if cap is not None:
        return float(cap)
    return 1.0 / (4.0 * template.n_steps * template.tau_s)


def _param_scales(template: PulseProgram, cap: float | None) -> NDArray:
    """Per-parameter magnitude units so the optimizer sees O(1) numbers.

    Hz-valued amplitude knobs and radian-valued phase knobs differ by
    many orders of magnitude; quasi-Newton steps only behave when both
    are expressed in their natural units.
    """
    scales = np.ones(pack_controls(template).size)
    xy = _xy_scale(template, cap)
    for ch, offset, per in _channel_slices(template):
        if ch.mode == "xy":
            scales[offset : offset + ch.values.size] = xy
    return scales


def _random_start(
    template: PulseProgram, rng: np.random.Generator, cap: float | None
) -> NDArray:
    """Random initialization: uniform phases, small Gaussian xy amplitudes."""
    parts = []
    sigma = 0.1 * _xy_scale(template, cap)
    for ch in template.channels:
        if ch.mode == "phase_only":
            parts.append(rng.uniform(0.0, 2.0 * np.pi, ch.n_steps))
        elif ch.mode == "xy":
            parts.append(rng.normal(0.0, sigma, ch.values.size))
        else:
            raise GrapeError(
                "optimize supports xy and phase_only channels; convert "
                "amp_phase templates first"
            )
    return np.concatenate(parts)


def _penalty_and_grad(
    template: PulseProgram, x: NDArray, options: OptimizerOptions
) -> tuple[float, NDArray]:
    if options.amp_penalty == 0.0 or options.amp_cap_hz is None:
        return 0.0, np.zeros_like(x)
    mask = _xy_param_mask(template)
    rel = x[mask] / options.amp_cap_hz
    pen = options.amp_penalty * float(rel @ rel)
    g = np.zeros_like(x)
    g[mask] = options.amp_penalty * 2.0 * rel / options.amp_cap_hz
    return pen, g


@dataclass(frozen=True, eq=False)
class GrapeResult:
    """Outcome of an optimization run."""

    program: PulseProgram
    x: NDArray
    fidelity: float
    converged: bool
    iterations: int
    total_iterations: int
    starts_used: int
    trace: tuple[float, ...]
    member_fidelities: tuple[tuple[str, float], ...]
    method: str

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


def _member_fidelities(problem: GrapeProblem, program: PulseProgram):
    out = []
    for term in problem.terms:
        if problem.gradient_mode == "phase_only_exact":
            _, _, _, c = _phase_sweep(term, program)
        else:
            _, _, _, c = _term_sweep(term, program)
        out.append((term.label, float(abs(c) ** 2 / term.norm)))
    return tuple(out)


def optimize(problem: GrapeProblem) -> GrapeResult:
    """Maximize the ensemble-averaged fidelity from random starts.

    Runs up to ``options.restarts`` starts; each start iterates steepest
    ascent or BFGS with a backtracking Armijo line search until the goal
    infidelity, the gradient tolerance, the iteration cap, or a failed
    line search (which triggers the next start).  Deterministic for a
    fixed seed.  The best start wins.
    """
    options = problem.options
    template = problem.template
    rng = np.random.default_rng(options.seed)
    cap = options.amp_cap_hz
    scales = _param_scales(template, cap)

    # the search runs in scaled coordinates u = x / scales so every
    # parameter is O(1); gradients transform with the same factor
    def value(u: NDArray) -> float:
        x = u * scales
        f = objective(problem, unpack_controls(template, x))
        pen, _ = _penalty_and_grad(template, x, options)
        return f - pen

    def value_and_grad(u: NDArray) -> tuple[float, NDArray]:
        x = u * scales
        program = unpack_controls(template, x)
        f = objective(problem, program)
        g = _gradient(problem, program)
        pen, pen_g = _penalty_and_grad(template, x, options)
        return f - pen, (g - pen_g) * scales

    def project(u: NDArray) -> NDArray:
        return _project(template, u * scales, cap) / scales

    best: dict | None = None
    total_iterations = 0
    starts_used = 0
    for start in range(options.restarts):
        starts_used = start + 1
        u = project(_random_start(template, rng, cap) / scales)
        f, g = value_and_grad(u)
        trace = [f]
        h_inv = None
        iters = 0
        while iters < options.max_iterations:
            if 1.0 - f <= options.goal_infidelity or np.max(np.abs(g)) <= options.grad_tol:
                break
            if options.method == "bfgs":
                if h_inv is None:
                    h_inv = np.eye(u.size) / max(1.0, float(np.max(np.abs(g))))
                p = h_inv @ g
                if p @ g <= 0.0:  # not an ascent direction; reset
                    h_inv = np.eye(u.size) / max(1.0, float(np.max(np.abs(g))))
                    p = h_inv @ g
                alpha0 = 1.0
            else:
                p = g
                alpha0 = 1.0 / max(float(np.max(np.abs(g))), 1e-300)
            alpha = alpha0
            accepted = False
            for _ in range(MAX_BACKTRACKS):
                u_new = project(u + alpha * p)
                f_new = value(u_new)
                # predicted gain along the realized (possibly clipped) step
                pred = float(g @ (u_new - u))
                if pred > 0.0 and f_new >= f + ARMIJO_C1 * pred:
                    accepted = True
                    break
                alpha *= ARMIJO_CONTRACTION
            if not accepted:
                break  # line search stalled; try the next restart
            _, g_new = value_and_grad(u_new)
            if options.method == "bfgs":
                s = u_new - u
                y = -(g_new - g)  # gradient change of the minimized -f
                sy = float(s @ y)
                if sy > CURVATURE_FLOOR * float(np.linalg.norm(s) * np.linalg.norm(y)):
                    rho = 1.0 / sy
                    i_mat = np.eye(u.size)
                    left = i_mat - rho * np.outer(s, y)
                    h_inv = left @ h_inv @ left.T + rho * np.outer(s, s)
            u, f, g = u_new, f_new, g_new
            iters += 1
            trace.append(f)
        total_iterations += iters
        if best is None or f > best["f"]:
            best = {"x": u * scales, "f": f, "iters": iters, "trace": trace}
        if 1.0 - best["f"] <= options.goal_infidelity:
            break

    assert best is not None
    program = unpack_controls(template, best["x"])
    return GrapeResult(
        program=program,
        x=best["x"],
        fidelity=best["f"],
        converged=bool(1.0 - best["f"] <= options.goal_infidelity),
        iterations=best["iters"],
        total_iterations=total_iterations,
        starts_used=starts_used,
        trace=tuple(best["trace"]),
        member_fidelities=_member_fidelities(problem, program),
        method=options.method,
    )
