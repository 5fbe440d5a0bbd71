"""Text file formats: spin systems, pulse shapes, matrices, programs, CSV.

All formats are plain line-oriented text.  Angles cross these interfaces
in degrees and are converted to radians at the boundary; amplitudes stay
in Hz and durations in seconds.  Pulse-shape values are written with 9
significant digits and round-trip value-exactly at that precision;
matrices and refocusing programs are written with full double precision
(17 significant digits), which round-trips exactly.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import __version__
from .prop import ChannelControls, MODES, PulseProgram
from .refocus import Delay, Instruction, Pulse180
from .spinsys import Spin, SpinSystem

__all__ = [
    "FileFormatError",
    "load_spin_system",
    "save_spin_system",
    "load_pulse_program",
    "save_pulse_program",
    "load_matrix",
    "save_matrix",
    "load_refocus_program",
    "save_refocus_program",
    "save_csv",
    "format_value",
]

SHAPE_DIGITS = 9
EXACT_DIGITS = 17


class FileFormatError(ValueError):
    """Parse or validation failure; message carries path and line number."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


def format_value(x: float, digits: int = SHAPE_DIGITS) -> str:
    """Shortest '%.{digits}g' form; normalizes negative zero."""
    if x == 0.0:
        x = 0.0  # drop the sign of -0.0
    return f"{x:.{digits}g}"


def _data_lines(path) -> Iterable[tuple[int, str]]:
    """(1-based line number, stripped content) for non-blank non-comment lines."""
    text = Path(path).read_text()
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield num, line


# ---------------------------------------------------------------------------
# spin-system files

def load_spin_system(path) -> SpinSystem:
    """Parse a spin-system file.

    Layout: a ``[spins]`` section with lines ``index species offset_hz``,
    then an optional ``[couplings]`` section with lines ``i j J_hz``.
    ``#`` starts a comment; blank lines are ignored.  Spin indices must
    form 1..q; couplings must reference known spins and appear once per
    pair.
    """
    spins: dict[int, tuple[str, float]] = {}
    couplings: dict[tuple[int, int], float] = {}
    coupling_lines: dict[tuple[int, int], int] = {}
    section = None
    for num, line in _data_lines(path):
        if line.startswith("["):
            if line == "[spins]":
                section = "spins"
            elif line == "[couplings]":
                section = "couplings"
            else:
                raise FileFormatError(path, num, f"unknown section {line!r}")
            continue
        if section is None:
            raise FileFormatError(path, num, "data before any section header")
        parts = line.split()
        if section == "spins":
            if len(parts) != 3:
                raise FileFormatError(
                    path, num, f"expected 'index species offset_hz', got {line!r}"
                )
            try:
                idx = int(parts[0])
                offset = float(parts[2])
            except ValueError as exc:
                raise FileFormatError(path, num, str(exc)) from exc
            if idx in spins:
                raise FileFormatError(path, num, f"duplicate spin index {idx}")
            spins[idx] = (parts[1], offset)
        else:
            if len(parts) != 3:
                raise FileFormatError(
                    path, num, f"expected 'i j J_hz', got {line!r}"
                )
            try:
                i, j = int(parts[0]), int(parts[1])
                j_hz = float(parts[2])
            except ValueError as exc:
                raise FileFormatError(path, num, str(exc)) from exc
            if i == j:
                raise FileFormatError(path, num, f"self-coupling ({i},{j})")
            key = (i, j) if i < j else (j, i)
            if key in couplings:
                first = coupling_lines[key]
                raise FileFormatError(
                    path, num, f"duplicate coupling for pair {key} (first at line {first})"
                )
            couplings[key] = j_hz
            coupling_lines[key] = num
    if not spins:
        raise FileFormatError(path, None, "no [spins] section or no spins defined")
    q = len(spins)
    missing = sorted(set(range(1, q + 1)) - set(spins))
    if missing:
        raise FileFormatError(
            path, None, f"spin indices must form 1..{q}; missing {missing}"
        )
    for (i, j), _ in couplings.items():
        if not (1 <= i <= q and 1 <= j <= q):
            raise FileFormatError(
                path, coupling_lines[(i, j)],
                f"coupling ({i},{j}) references an unknown spin (q={q})"
            )
    ordered = tuple(
        Spin(label=f"{spins[k][0]}{k}", species=spins[k][0], offset_hz=spins[k][1])
        for k in range(1, q + 1)
    )
    return SpinSystem(spins=ordered, couplings=couplings)


def save_spin_system(path, system: SpinSystem) -> None:
    lines = ["[spins]"]
    for k, spin in enumerate(system.spins, start=1):
        lines.append(f"{k} {spin.species} {format_value(spin.offset_hz, EXACT_DIGITS)}")
    if system.couplings:
        lines.append("[couplings]")
        for (i, j), j_hz in sorted(system.couplings.items()):
            lines.append(f"{i} {j} {format_value(j_hz, EXACT_DIGITS)}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# pulse-shape files

def save_pulse_program(path, program: PulseProgram) -> None:
    """Write a pulse shape.

    Header: ``# nsteps=N``, ``# tau_s=...`` and one ``# channel=...``
    line per channel; then one row per step holding every channel's
    columns in header order (``ax_hz ay_hz``, ``amp_hz phase_deg`` or
    ``phase_deg`` depending on mode).  9 significant digits.
    """
    lines = [f"# nsteps={program.n_steps}",
             f"# tau_s={format_value(program.tau_s)}"]
    for ch in program.channels:
        head = f"# channel={ch.species} mode={ch.mode}"
        if ch.mode == "phase_only":
            head += f" amp_hz={format_value(float(ch.amp_hz))}"
        lines.append(head)
    for row in range(program.n_steps):
        cols = []
        for ch in program.channels:
            if ch.mode == "xy":
                cols += [format_value(ch.values[row, 0]),
                         format_value(ch.values[row, 1])]
            elif ch.mode == "amp_phase":
                cols += [format_value(ch.values[row, 0]),
                         format_value(math.degrees(ch.values[row, 1]))]
            else:
                cols.append(format_value(math.degrees(ch.values[row])))
        lines.append(" ".join(cols))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_channel_header(path, num: int, line: str) -> tuple[str, str, float | None]:
    fields = dict(
        part.split("=", 1) for part in line.split() if "=" in part
    )
    if "channel" not in fields or "mode" not in fields:
        raise FileFormatError(path, num, f"bad channel header {line!r}")
    mode = fields["mode"]
    if mode not in MODES:
        raise FileFormatError(path, num, f"unknown control mode {mode!r}")
    amp = None
    if mode == "phase_only":
        if "amp_hz" not in fields:
            raise FileFormatError(path, num, "phase_only channel needs amp_hz=")
        try:
            amp = float(fields["amp_hz"])
        except ValueError as exc:
            raise FileFormatError(path, num, str(exc)) from exc
    return fields["channel"], mode, amp


def load_pulse_program(path) -> PulseProgram:
    """Read a pulse shape written by save_pulse_program."""
    text = Path(path).read_text()
    nsteps = None
    tau_s = None
    headers: list[tuple[str, str, float | None]] = []
    rows: list[tuple[int, list[str]]] = []
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("nsteps="):
                nsteps = int(body.split("=", 1)[1])
            elif body.startswith("tau_s="):
                tau_s = float(body.split("=", 1)[1])
            elif body.startswith("channel="):
                headers.append(_parse_channel_header(path, num, body))
            continue
        rows.append((num, line.split()))
    if nsteps is None or tau_s is None:
        raise FileFormatError(path, None, "missing nsteps= or tau_s= header")
    if not headers:
        raise FileFormatError(path, None, "no channel headers")
    if len(rows) != nsteps:
        raise FileFormatError(
            path, None, f"expected {nsteps} data rows, found {len(rows)}"
        )
    widths = [1 if mode == "phase_only" else 2 for _, mode, _ in headers]
    total = sum(widths)
    data = np.empty((nsteps, total))
    for r, (num, parts) in enumerate(rows):
        if len(parts) != total:
            raise FileFormatError(
                path, num, f"expected {total} columns, got {len(parts)}"
            )
        try:
            data[r] = [float(p) for p in parts]
        except ValueError as exc:
            raise FileFormatError(path, num, str(exc)) from exc
    chans = []
    col = 0
    for (species, mode, amp), width in zip(headers, widths):
        block = data[:, col : col + width]
        col += width
        if mode == "xy":
            values = block.copy()
        elif mode == "amp_phase":
            values = np.column_stack([block[:, 0], np.radians(block[:, 1])])
        else:
            values = np.radians(block[:, 0])
        chans.append(ChannelControls(species, mode, values, amp_hz=amp))
    return PulseProgram(tau_s=tau_s, channels=tuple(chans))


# ---------------------------------------------------------------------------
# dense complex matrices

def save_matrix(path, m: NDArray) -> None:
    """One row per line, entries as whitespace-separated ``re,im`` pairs."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {m.shape}")
    lines = []
    for row in m:
        lines.append(" ".join(
            f"{format_value(z.real, EXACT_DIGITS)},{format_value(z.imag, EXACT_DIGITS)}"
            for z in row
        ))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path) -> NDArray:
    rows = []
    width = None
    for num, line in _data_lines(path):
        entries = []
        for part in line.split():
            pieces = part.split(",")
            if len(pieces) != 2:
                raise FileFormatError(
                    path, num, f"expected 're,im' pair, got {part!r}"
                )
            try:
                entries.append(complex(float(pieces[0]), float(pieces[1])))
            except ValueError as exc:
                raise FileFormatError(path, num, str(exc)) from exc
        if width is None:
            width = len(entries)
        elif len(entries) != width:
            raise FileFormatError(
                path, num, f"ragged row: {len(entries)} entries, expected {width}"
            )
        rows.append(entries)
    if not rows:
        raise FileFormatError(path, None, "empty matrix file")
    return np.array(rows, dtype=complex)


# ---------------------------------------------------------------------------
# refocusing programs

def save_refocus_program(path, program: Sequence[Instruction]) -> None:
    """Lines ``delay <seconds>`` and ``pulse180 spin=<k> phase_deg=<phi>``."""
    lines = []
    for ins in program:
        if isinstance(ins, Delay):
            lines.append(f"delay {format_value(ins.duration_s, EXACT_DIGITS)}")
        elif isinstance(ins, Pulse180):
            lines.append(
                f"pulse180 spin={ins.spin} "
                f"phase_deg={format_value(ins.phase_deg, EXACT_DIGITS)}"
            )
        else:
            raise ValueError(f"unknown instruction {ins!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_refocus_program(path) -> tuple[Instruction, ...]:
    out: list[Instruction] = []
    for num, line in _data_lines(path):
        parts = line.split()
        try:
            if parts[0] == "delay" and len(parts) == 2:
                out.append(Delay(float(parts[1])))
                continue
            if parts[0] == "pulse180" and len(parts) == 3:
                fields = dict(p.split("=", 1) for p in parts[1:])
                out.append(Pulse180(int(fields["spin"]),
                                    float(fields["phase_deg"])))
                continue
        except (ValueError, KeyError) as exc:
            raise FileFormatError(path, num, str(exc)) from exc
        raise FileFormatError(path, num, f"unrecognized instruction {line!r}")
    return tuple(out)


# ---------------------------------------------------------------------------
# CSV reports

def save_csv(path, columns: Sequence[str], rows: Iterable[Sequence[float]],
             seed: int | None = None) -> None:
    """CSV with a provenance header line and 9-significant-digit values."""
    seed_part = f" seed={seed}" if seed is not None else ""
    lines = [f"# spinforge {__version__}{seed_part}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
