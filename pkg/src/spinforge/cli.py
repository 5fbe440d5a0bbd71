"""The ``spinforge`` command-line driver.

Subcommands: grape, compulse, dd, refocus, pps, fid.  Every run prints
its seed and the full resolved configuration (suppress with --quiet),
and identical seeds and flags produce byte-identical artifacts.  The
driver itself is single-threaded; --threads is accepted for interface
stability and currently ignored.

Angles are degrees at this boundary (file formats included), amplitudes
Hz, durations seconds.  Grid syntax ``E:N`` means N points spanning
[-E, +E] along both error axes.
"""

from __future__ import annotations

import argparse
import dataclasses
import re
import sys

import numpy as np
from numpy.typing import NDArray

from . import __version__, fileio
from .compulse import catalog, catalog_names, composite_propagator, error_map
from .ddsim import build_sequence, memory_fidelity, accumulated_phase, udd_times
from .fid import unitary_fidelity, uj_fidelity
from .grape import GrapeProblem, GrapeError, OptimizerOptions, optimize
from .pps import (
    DensityState,
    embed_deviation,
    pps_crotonic_chain,
    pps_two_spin_heteronuclear,
    pps_two_spin_homonuclear,
    pseudo_purity,
    temporal_average,
    temporal_cycle_states,
)
from .prop import ChannelControls, EnsembleSpec, PulseProgram
from .refocus import (
    RefocusError,
    assign_patterns,
    compile_program,
    lp_schedule,
    verify_schedule,
)
from .simplex import LPError
from .spinsys import SpinSystem, embed_single_spin, _mz_table

__all__ = ["main", "named_gate", "parse_grid", "parse_targets"]

_SQRT_HALF = 1.0 / np.sqrt(2.0)

#: 2x2 building blocks; rotations follow exp(-i*theta*I_phi).
_GATES_2 = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "hadamard": _SQRT_HALF * np.array([[1, 1], [1, -1]], dtype=complex),
}


def _rotation_2(axis: str, angle_deg: float) -> NDArray:
    half = np.radians(angle_deg) / 2.0
    return np.cos(half) * np.eye(2, dtype=complex) \
        - 1j * np.sin(half) * _GATES_2[axis]


for _axis in ("x", "y", "z"):
    for _deg in (90, 180):
        _GATES_2[f"{_axis}{_deg}"] = _rotation_2(_axis, float(_deg))
_GATES_2["h"] = _GATES_2["hadamard"]

_NAME_RE = re.compile(r"^([a-z0-9]+)(?:\((\d+(?:,\d+)*)\))?$")


def named_gate(name: str, q: int) -> NDArray:
    """Resolve a gate name to its dense unitary on q spins.

    Single-spin gates (x, y, z, hadamard, x90, x180, y90, y180, z90,
    z180) take an optional spin index, e.g. ``x90(2)``; without one they
    act on spin 1 with identity elsewhere.  ``cnot(c,t)`` and
    ``cz(c,t)`` take control and target indices (defaulting to (1,2) on
    a 2-spin register).  ``identity`` is the full identity.  Spin 1 is
    the leftmost tensor factor.
    """
    m = _NAME_RE.match(name.strip().lower().replace(" ", ""))
    if not m:
        raise ValueError(f"cannot parse gate name {name!r}")
    base, argstr = m.group(1), m.group(2)
    args = tuple(int(a) for a in argstr.split(",")) if argstr else ()
    dim = 2 ** q
    if base == "identity":
        if args:
            raise ValueError("identity takes no spin arguments")
        return np.eye(dim, dtype=complex)
    if base in _GATES_2:
        if len(args) > 1:
            raise ValueError(f"{base} takes at most one spin index")
        k = args[0] if args else 1
        if not 1 <= k <= q:
            raise ValueError(f"spin index {k} out of range 1..{q}")
        return embed_single_spin(_GATES_2[base], q, k)
    if base in ("cnot", "cz"):
        if not args:
            if q != 2:
                raise ValueError(f"{base} needs explicit (control,target) for q={q}")
            c, t = 1, 2
        elif len(args) == 2:
            c, t = args
        else:
            raise ValueError(f"{base} takes exactly two spin indices")
        if c == t:
            raise ValueError("control and target must differ")
        for k in (c, t):
            if not 1 <= k <= q:
                raise ValueError(f"spin index {k} out of range 1..{q}")
        p0 = embed_single_spin(np.diag([1.0, 0.0]).astype(complex), q, c)
        p1 = embed_single_spin(np.diag([0.0, 1.0]).astype(complex), q, c)
        flip = _GATES_2["x"] if base == "cnot" else _GATES_2["z"]
        return p0 + p1 @ embed_single_spin(flip, q, t)
    known = sorted(set(_GATES_2) | {"identity", "cnot", "cz"})
    raise ValueError(f"unknown gate {base!r}; known: {', '.join(known)}")


def _load_target(spec: str, q: int) -> NDArray:
    """A named gate, or a dense complex matrix file if the name has a path feel."""
    if "/" in spec or spec.endswith(".mat") or spec.endswith(".txt"):
        return fileio.load_matrix(spec)
    return named_gate(spec, q)


def parse_grid(spec: str) -> NDArray:
    """``E:N`` -> N evenly spaced points over [-E, +E]."""
    parts = spec.split(":")
    if len(parts) != 2:
        raise ValueError(f"grid spec must look like '0.1:41', got {spec!r}")
    extent = float(parts[0])
    n = int(parts[1])
    if extent <= 0 or n < 1:
        raise ValueError("grid needs a positive extent and at least one point")
    return np.linspace(-extent, extent, n)


def parse_targets(spec: str) -> dict[tuple[int, int], float]:
    """``"1,2:90deg;3,4:90deg"`` -> {(1,2): pi/2, (3,4): pi/2} (radians)."""
    out: dict[tuple[int, int], float] = {}
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ValueError(f"target {chunk!r} missing ':'")
        pair_part, angle_part = chunk.split(":", 1)
        pair = pair_part.split(",")
        if len(pair) != 2:
            raise ValueError(f"target pair {pair_part!r} must be 'i,j'")
        i, j = int(pair[0]), int(pair[1])
        angle_part = angle_part.strip()
        if not angle_part.endswith("deg"):
            raise ValueError(f"angle {angle_part!r} must end in 'deg'")
        theta = np.radians(float(angle_part[: -len("deg")]))
        key = (i, j) if i < j else (j, i)
        if key in out:
            raise ValueError(f"duplicate target for pair {key}")
        out[key] = theta
    if not out:
        raise ValueError("no coupling targets given")
    return out


def _parse_z_angles(spec: str) -> dict[int, float]:
    """``"1:45deg;3:-30deg"`` -> {1: pi/4, 3: -pi/6} (radians)."""
    out: dict[int, float] = {}
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        spin_part, angle_part = chunk.split(":", 1)
        angle_part = angle_part.strip()
        if not angle_part.endswith("deg"):
            raise ValueError(f"angle {angle_part!r} must end in 'deg'")
        k = int(spin_part)
        if k in out:
            raise ValueError(f"duplicate z angle for spin {k}")
        out[k] = np.radians(float(angle_part[: -len("deg")]))
    return out


def _echo_config(args: argparse.Namespace) -> None:
    if args.quiet:
        return
    print(f"seed: {args.seed}")
    skip = {"func", "quiet"}
    for key in sorted(vars(args)):
        if key in skip:
            continue
        print(f"config {key}={getattr(args, key)}")


def _fmt(x: float) -> str:
    return fileio.format_value(float(x), 12)


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_grape(args: argparse.Namespace) -> int:
    system = fileio.load_spin_system(args.system)
    channels = system.channels
    if args.channel is not None:
        if args.channel not in channels:
            raise ValueError(
                f"system has no channel {args.channel!r}; "
                f"available: {', '.join(channels)}"
            )
        species = args.channel
    elif len(channels) == 1:
        species = next(iter(channels))
    else:
        raise ValueError(
            f"system has channels {', '.join(channels)}; pick one with --channel"
        )
    if args.steps < 1:
        raise ValueError("--steps must be at least 1")
    if args.tau <= 0:
        raise ValueError("--tau must be positive")

    if args.mode == "phase_only":
        if args.amp is None:
            raise ValueError("phase_only mode needs --amp (fixed amplitude, Hz)")
        template = PulseProgram(tau_s=args.tau, channels=(
            ChannelControls(species, "phase_only", np.zeros(args.steps),
                            amp_hz=args.amp),))
        cap = None
        default_gradient = "phase_only_exact"
    else:
        template = PulseProgram(tau_s=args.tau, channels=(
            ChannelControls(species, "xy", np.zeros((args.steps, 2))),))
        cap = args.amp  # optional hard amplitude cap
        default_gradient = "exact"
    gradient = {None: default_gradient, "exact": "exact", "approx": "approx",
                "phase-only": "phase_only_exact"}[args.gradient]

    ensemble = None
    if args.ensemble is not None and args.ensemble != "none":
        if not args.ensemble.startswith("b1:"):
            raise ValueError(
                f"ensemble spec {args.ensemble!r} must be 'b1:<s1,s2,...>' or 'none'"
            )
        scalings = tuple(float(s) for s in args.ensemble[3:].split(","))
        if not scalings:
            raise ValueError("empty B1 scaling list")
        ensemble = EnsembleSpec.b1_scalings(species, scalings)

    target = _load_target(args.target, system.q)
    options = OptimizerOptions(
        goal_infidelity=args.goal,
        max_iterations=args.max_iter,
        restarts=args.restarts,
        method=args.method,
        seed=args.seed,
        amp_cap_hz=cap,
    )
    problem = GrapeProblem(system, target, template, ensemble=ensemble,
                           gradient_mode=gradient, options=options)
    result = optimize(problem)

    print(f"fidelity {_fmt(result.fidelity)}")
    print(f"infidelity {_fmt(result.infidelity)}")
    print(f"iterations {result.iterations}")
    print(f"total_iterations {result.total_iterations}")
    print(f"starts {result.starts_used}")
    print(f"converged {'yes' if result.converged else 'no'}")
    for label, f in result.member_fidelities:
        print(f"member {label}: {_fmt(f)}")
    if args.out:
        fileio.save_pulse_program(args.out, result.program)
        print(f"wrote {args.out}")
    return 0


def _cmd_compulse(args: argparse.Namespace) -> int:
    pulse = catalog(args.pulse)
    axis = parse_grid(args.grid)
    grid = error_map(pulse, axis, axis)
    rows = []
    for i, eps in enumerate(axis):
        for j, f in enumerate(axis):
            infid = grid[i, j]
            rows.append((eps, f, infid))
    if args.out:
        fileio.save_csv(args.out, ("eps", "f", "infidelity"), rows, seed=args.seed)
        print(f"wrote {args.out} ({len(rows)} rows)")
    else:
        center = abs(axis).argmin()
        print(f"infidelity at grid center ({_fmt(axis[center])}, "
              f"{_fmt(axis[center])}): {_fmt(grid[center, center])}")
    worst = float(grid.max())
    print(f"worst infidelity on grid: {_fmt(worst)}")
    return 0


def _cmd_dd(args: argparse.Namespace) -> int:
    if args.phase_test is not None:
        kind, _, n_str = args.phase_test.partition(":")
        if not n_str:
            raise ValueError("--phase-test needs '<kind>:<n>', e.g. udd:4")
        n = int(n_str)
        t_total = 1.0
        if kind == "udd":
            times = udd_times(n, t_total)
        elif kind == "periodic":
            times = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n) * t_total
        else:
            raise ValueError(f"unknown phase-test kind {kind!r} (udd or periodic)")
        if args.offset.startswith("legendre:"):
            offset = int(args.offset.split(":", 1)[1])
        elif args.offset.startswith("poly:"):
            offset = [float(c) for c in args.offset.split(":", 1)[1].split(",")]
        else:
            raise ValueError(
                f"offset spec {args.offset!r} must be 'legendre:<k>' or 'poly:<c0,c1,...>'"
            )
        phase = accumulated_phase(offset, times, t_total)
        scale = accumulated_phase([1.0], (), t_total)  # constant offset, no pulses
        print(f"pulses {' '.join(_fmt(t) for t in times)}")
        print(f"accumulated_phase {_fmt(phase)}")
        print(f"scale {_fmt(scale)}")
        print(f"residual_fraction {_fmt(abs(phase) / scale)}")
        return 0

    block = {"cpmg": 2, "xy4": 4, "xy8": 8, "kdd20": 20}
    if args.sequence not in block:
        raise ValueError(
            f"--sequence must be one of {', '.join(block)} (udd via --phase-test)"
        )
    per_cycle = block[args.sequence]
    if args.echoes < per_cycle or args.echoes % per_cycle != 0:
        raise ValueError(
            f"{args.sequence} needs a positive multiple of {per_cycle} echoes"
        )
    sequence = build_sequence(args.sequence, per_cycle, composite=args.composite)
    n_cycles = args.echoes // per_cycle
    axis = parse_grid(args.grid)
    rows = []
    for eps in axis:
        for f in axis:
            fidelity = memory_fidelity(sequence, n_cycles, eps, f)
            rows.append((eps, f, 1.0 - fidelity))
    if args.out:
        fileio.save_csv(args.out, ("eps", "f", "infidelity"), rows, seed=args.seed)
        print(f"wrote {args.out} ({len(rows)} rows)")
    worst = max(r[2] for r in rows)
    print(f"echoes {args.echoes} cycles {n_cycles}")
    print(f"worst infidelity on grid: {_fmt(worst)}")
    return 0


def _cmd_refocus(args: argparse.Namespace) -> int:
    system = fileio.load_spin_system(args.system)
    targets = parse_targets(args.targets)
    z_angles = _parse_z_angles(args.z) if args.z else None
    assignment = assign_patterns(system.q)
    # every nonzero coupling constrains the LP, targeted or not
    schedule = lp_schedule(targets, dict(system.couplings), assignment,
                           symmetric=args.symmetric)
    if z_angles:
        schedule = dataclasses.replace(schedule, z_angles_rad=z_angles)
    program = compile_program(schedule)
    infidelity = verify_schedule(system, program, targets, z_angles)
    n_pulses = sum(1 for ins in program if hasattr(ins, "spin"))
    print(f"total_time_s {_fmt(schedule.total_time_s)}")
    print(f"instructions {len(program)} pulses {n_pulses}")
    print(f"verify_infidelity {_fmt(infidelity)}")
    if args.out:
        fileio.save_refocus_program(args.out, program)
        print(f"wrote {args.out}")
    return 0


def _cmd_pps(args: argparse.Namespace) -> int:
    system = fileio.load_spin_system(args.system)
    eps = args.epsilon
    if args.method == "two-spin-homo":
        state = pps_two_spin_homonuclear(system)
    elif args.method == "two-spin-hetero":
        state = pps_two_spin_heteronuclear(system)
    elif args.method == "crotonic":
        state = pps_crotonic_chain(system)
    else:
        # temporal averaging of the thermal state and its population cycles
        mz_sum = _mz_table(system.q).sum(axis=1)
        thermal = DensityState(np.eye(system.dim) / system.dim
                               + eps * np.diag(mz_sum), norm="density")
        state = temporal_average(temporal_cycle_states(thermal))
    if state.norm == "deviation":
        density = embed_deviation(state, eps)
    else:
        density = state
    report = pseudo_purity(density)
    if args.report != "spectrum":
        raise ValueError(f"unknown report {args.report!r} (only 'spectrum')")
    print(f"epsilon {_fmt(eps)}")
    print("eigenvalues " + " ".join(_fmt(v) for v in report.eigenvalues))
    print(f"is_pps {'yes' if report.is_pps else 'no'}")
    print(f"degenerate {'yes' if report.degenerate else 'no'}")
    print(f"p {_fmt(report.p)}")
    print(f"target_index {report.target_index}")
    return 0


def _cmd_fid(args: argparse.Namespace) -> int:
    if args.uj is not None:
        rho = fileio.load_matrix(args.uj[0])
        sigma = fileio.load_matrix(args.uj[1])
        value = uj_fidelity(rho, sigma, method=args.method)
        print(f"uj_fidelity {_fmt(value)}")
        return 0
    if args.unitary is not None:
        u = fileio.load_matrix(args.unitary[0])
        v = fileio.load_matrix(args.unitary[1])
        value = unitary_fidelity(u, v)
        print(f"unitary_fidelity {_fmt(value)}")
        return 0
    raise ValueError("fid needs --uj A B or --unitary A B")


# ---------------------------------------------------------------------------
# parser

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0,
                     help="RNG seed; equal seeds give byte-identical outputs")
    sub.add_argument("--threads", type=int, default=1,
                     help="accepted for interface stability; single-threaded")
    sub.add_argument("--out", default=None, help="output artifact path")
    sub.add_argument("--quiet", action="store_true",
                     help="suppress the seed/config echo")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinforge",
        description="Coherent control toolkit for coupled spin-1/2 systems.",
    )
    parser.add_argument("--version", action="version",
                        version=f"spinforge {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("grape", help="optimize a shaped pulse")
    p.add_argument("--system", required=True, help="spin-system file")
    p.add_argument("--target", required=True,
                   help="named gate (e.g. x90, cnot(1,2)) or matrix file")
    p.add_argument("--mode", choices=("phase_only", "xy"), default="phase_only")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--tau", type=float, required=True, help="step length, s")
    p.add_argument("--amp", type=float, default=None,
                   help="fixed amplitude (phase_only) or amplitude cap (xy), Hz")
    p.add_argument("--channel", default=None,
                   help="species to drive (defaults to the only channel)")
    p.add_argument("--ensemble", default=None,
                   help="'b1:0.97,1.0,1.03' averages over B1 scalings")
    p.add_argument("--gradient", choices=("exact", "approx", "phase-only"),
                   default=None, help="gradient mode (default: exact form)")
    p.add_argument("--goal", type=float, default=1e-4, help="goal infidelity")
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--method", choices=("bfgs", "steepest"), default="bfgs")
    _add_common(p)
    p.set_defaults(func=_cmd_grape)

    p = subs.add_parser("compulse", help="composite-pulse error maps")
    p.add_argument("--pulse", required=True,
                   help=f"catalog pulse: {', '.join(catalog_names())}")
    p.add_argument("--grid", default="0.1:41",
                   help="error grid 'E:N' over [-E, +E] in eps and f")
    _add_common(p)
    p.set_defaults(func=_cmd_compulse)

    p = subs.add_parser("dd", help="dynamical decoupling simulations")
    p.add_argument("--sequence", default=None,
                   help="cpmg, xy4, xy8, or kdd20")
    p.add_argument("--echoes", type=int, default=180,
                   help="total number of 180 pulses (whole cycles)")
    p.add_argument("--composite", default=None,
                   help="replace each 180 by this catalog composite pulse")
    p.add_argument("--grid", default="0.1:41",
                   help="error grid 'E:N' over [-E, +E] in eps and f")
    p.add_argument("--phase-test", default=None,
                   help="accumulated-phase test, e.g. udd:4 or periodic:4")
    p.add_argument("--offset", default="legendre:0",
                   help="offset profile: legendre:<k> or poly:<c0,c1,...>")
    _add_common(p)
    p.set_defaults(func=_cmd_dd)

    p = subs.add_parser("refocus", help="compile Walsh refocusing programs")
    p.add_argument("--system", required=True, help="spin-system file")
    p.add_argument("--targets", required=True,
                   help="coupling targets '1,2:90deg;3,4:90deg'")
    p.add_argument("--z", default=None,
                   help="per-spin z rotations '1:45deg;3:-30deg'")
    p.add_argument("--symmetric", action="store_true",
                   help="force a time-symmetric schedule")
    _add_common(p)
    p.set_defaults(func=_cmd_refocus)

    p = subs.add_parser("pps", help="pseudo-pure state preparation")
    p.add_argument("--system", required=True, help="spin-system file")
    p.add_argument("--method", required=True,
                   choices=("two-spin-homo", "two-spin-hetero", "crotonic",
                            "temporal"))
    p.add_argument("--report", default="spectrum", help="report kind")
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="thermal polarization scale for the embedded spectrum")
    _add_common(p)
    p.set_defaults(func=_cmd_pps)

    p = subs.add_parser("fid", help="fidelity between stored matrices")
    p.add_argument("--uj", nargs=2, metavar=("RHO", "SIGMA"), default=None,
                   help="Uhlmann fidelity between two density-matrix files")
    p.add_argument("--unitary", nargs=2, metavar=("U", "V"), default=None,
                   help="unitary gate fidelity between two matrix files")
    p.add_argument("--method", choices=("fast", "classic"), default="fast",
                   help="Uhlmann evaluation method")
    _add_common(p)
    p.set_defaults(func=_cmd_fid)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    _echo_config(args)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, LPError, RefocusError,
            GrapeError) as exc:
        print(f"spinforge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
