"""Pulse timelines: XY8 blocks and the full measurement sequences.

Timing convention: ``tau`` is the half-spacing of the decoupling unit
``tau - pi - 2tau - pi - tau``, so consecutive pi pulses are ``2 tau`` apart
and an N-pulse block lasts ``2 N tau``.  Rotations are instantaneous.

Nuclear initialization uses two conditional blocks (a single block controlled
by the electron cannot polarize a mixed nucleus):

    reset(prep) . R(pi/2, Y) . XY8 . R(pi/2, final_phase) . XY8 . reset(up)

With the default ``final_phase = pi`` (-X) and the reference parameters at
tau = 1.569 us, an electron prepared in |up> leaves the nucleus in |down>.
The readout is the element-wise reverse with the trailing reset replaced by
a readout marker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

from .system import Branch, check_branch

X = 0.0
Y = math.pi / 2
MINUS_X = math.pi
MINUS_Y = 3 * math.pi / 2
XY8_PHASES = (X, Y, X, Y, Y, X, Y, X)

PI_TOL = 1e-9


@dataclass(frozen=True)
class ElectronRotation:
    phase: float  # equatorial axis angle from +X (rad)
    angle: float  # rotation angle (rad)

    @property
    def is_pi(self) -> bool:
        return abs(math.remainder(self.angle - math.pi, 2 * math.pi)) < PI_TOL


@dataclass(frozen=True)
class Delay:
    duration: float  # us


@dataclass(frozen=True)
class ElectronReset:
    target: Branch


@dataclass(frozen=True)
class ReadoutMarker:
    pass


PulseElement = Union[ElectronRotation, Delay, ElectronReset, ReadoutMarker]


@dataclass(frozen=True)
class PulseProgram:
    elements: tuple = ()
    name: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def __add__(self, other: "PulseProgram") -> "PulseProgram":
        name = "+".join(n for n in (self.name, other.name) if n)
        return PulseProgram(self.elements + other.elements, name, {**self.params, **other.params})

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    @property
    def duration(self) -> float:
        return math.fsum(e.duration for e in self.elements if isinstance(e, Delay))

    @property
    def n_rotations(self) -> int:
        return sum(isinstance(e, ElectronRotation) for e in self.elements)

    @property
    def n_pi_pulses(self) -> int:
        return sum(isinstance(e, ElectronRotation) and e.is_pi for e in self.elements)

    def reversed(self) -> "PulseProgram":
        return PulseProgram(tuple(reversed(self.elements)), self.name + "~rev", dict(self.params))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "elements": [element_to_dict(e) for e in self.elements],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PulseProgram":
        return cls(tuple(element_from_dict(d) for d in doc["elements"]), doc.get("name", ""),
                   dict(doc.get("params", {})))


def element_to_dict(e: PulseElement) -> dict:
    if isinstance(e, ElectronRotation):
        return {"type": "rotation", "phase_rad": e.phase, "angle_rad": e.angle, "duration_us": 0.0}
    if isinstance(e, Delay):
        return {"type": "delay", "duration_us": e.duration}
    if isinstance(e, ElectronReset):
        return {"type": "reset", "target": e.target, "duration_us": 0.0}
    if isinstance(e, ReadoutMarker):
        return {"type": "readout", "duration_us": 0.0}
    raise TypeError(f"not a pulse element: {e!r}")


def element_from_dict(d: dict) -> PulseElement:
    kind = d.get("type")
    if kind == "rotation":
        return ElectronRotation(float(d["phase_rad"]), float(d["angle_rad"]))
    if kind == "delay":
        return Delay(float(d["duration_us"]))
    if kind == "reset":
        return ElectronReset(check_branch(d["target"]))
    if kind == "readout":
        return ReadoutMarker()
    raise ValueError(f"unknown pulse element type {kind!r}")


def pi_pulse(phase: float) -> ElectronRotation:
    return ElectronRotation(phase, math.pi)


def half_pi(phase: float) -> ElectronRotation:
    return ElectronRotation(phase, math.pi / 2)


def _check_n_pulses(n_pulses: int, allow_zero: bool = False) -> None:
    if isinstance(n_pulses, bool) or int(n_pulses) != n_pulses:
        raise ValueError(f"n_pulses must be an integer, got {n_pulses!r}")
    if n_pulses == 0 and allow_zero:
        return
    if n_pulses <= 0 or n_pulses % 8:
        raise ValueError(f"n_pulses must be a positive multiple of 8, got {n_pulses}")


def _check_tau(tau: float) -> None:
    if not (tau >= 0 and math.isfinite(tau)):
        raise ValueError(f"tau must be a non-negative finite time, got {tau}")


def build_xy8_block(n_pulses: int, tau: float) -> PulseProgram:
    _check_n_pulses(n_pulses)
    _check_tau(tau)
    els: list[PulseElement] = [Delay(tau)]
    for i in range(n_pulses):
        els.append(pi_pulse(XY8_PHASES[i % 8]))
        els.append(Delay(tau if i == n_pulses - 1 else 2 * tau))
    return PulseProgram(tuple(els), f"xy8-{n_pulses}", {"n_pulses": n_pulses, "tau_us": tau})


def build_spectroscopy(n_pulses: int, tau: float) -> PulseProgram:
    block = build_xy8_block(n_pulses, tau)
    els = (ElectronReset("up"), half_pi(X), *block.elements, half_pi(X), ReadoutMarker())
    return PulseProgram(els, "spectroscopy", {"n_pulses": n_pulses, "tau_us": tau})


def build_nuclear_init(tau: float, n_pulses: int, electron_prep: Branch,
                       final_phase: float = MINUS_X) -> PulseProgram:
    check_branch(electron_prep)
    block = build_xy8_block(n_pulses, tau).elements
    els = (ElectronReset(electron_prep), half_pi(Y), *block, half_pi(final_phase), *block,
           ElectronReset("up"))
    return PulseProgram(els, "init_nuc", {"tau_init_us": tau, "n_init": n_pulses,
                                          "electron_prep": electron_prep, "final_phase_rad": final_phase})


def build_nuclear_readout(tau: float, n_pulses: int, final_phase: float = MINUS_X) -> PulseProgram:
    init = build_nuclear_init(tau, n_pulses, "up", final_phase)
    rev = list(reversed(init.elements))
    assert isinstance(rev[-1], ElectronReset)
    rev[-1] = ReadoutMarker()
    return PulseProgram(tuple(rev), "read_nuc", {"tau_init_us": tau, "n_init": n_pulses,
                                                 "final_phase_rad": final_phase})


def build_rabi(n_prime: int, tau_prime: float, tau_init: float, n_init: int = 16,
               electron_prep: Branch = "up", final_phase: float = MINUS_X) -> PulseProgram:
    _check_n_pulses(n_prime, allow_zero=True)
    middle = build_xy8_block(n_prime, tau_prime) if n_prime else PulseProgram()
    prog = (build_nuclear_init(tau_init, n_init, electron_prep, final_phase) + middle
            + build_nuclear_readout(tau_init, n_init, final_phase))
    return PulseProgram(prog.elements, "rabi", {"n_prime": n_prime, "tau_prime_us": tau_prime,
                                                "tau_init_us": tau_init, "n_init": n_init})


def build_ramsey(t_wait: float, branch: Branch, tau_prime: float, tau_init: float, n_init: int = 16,
                 n_half: int = 8, final_phase: float = MINUS_X) -> PulseProgram:
    if not (t_wait >= 0 and math.isfinite(t_wait)):
        raise ValueError(f"free precession time must be non-negative, got {t_wait}")
    check_branch(branch)
    half = build_xy8_block(n_half, tau_prime).elements
    els = (*build_nuclear_init(tau_init, n_init, "up", final_phase).elements, *half,
           ElectronReset(branch), Delay(t_wait), *half,
           *build_nuclear_readout(tau_init, n_init, final_phase).elements)
    return PulseProgram(els, "ramsey", {"t_wait_us": t_wait, "branch": branch, "tau_prime_us": tau_prime,
                                        "tau_init_us": tau_init, "n_init": n_init})


def build_echo(t_total: float, tau_prime: float, tau_init: float, n_init: int = 16, n_half: int = 8,
               final_phase: float = MINUS_X) -> PulseProgram:
    if not (t_total >= 0 and math.isfinite(t_total)):
        raise ValueError(f"total precession time must be non-negative, got {t_total}")
    half = build_xy8_block(n_half, tau_prime).elements
    flip = build_xy8_block(2 * n_half, tau_prime).elements
    els = (*build_nuclear_init(tau_init, n_init, "up", final_phase).elements, *half,
           Delay(t_total / 2), *flip, Delay(t_total / 2), *half,
           *build_nuclear_readout(tau_init, n_init, final_phase).elements)
    return PulseProgram(els, "echo", {"t_total_us": t_total, "tau_prime_us": tau_prime,
                                      "tau_init_us": tau_init, "n_init": n_init})


@dataclass(frozen=True)
class ProgramDiagnostics:
    ok: bool
    duration: float
    n_rotations: int
    n_pi_pulses: int
    errors: tuple[tuple[int, str], ...] = ()


def validate_program(p: PulseProgram) -> ProgramDiagnostics:
    """Check delays and marker placement; report duration and pulse counts.

    A readout marker may only be followed by an electron reset (the optical
    readout pumps the electron) or by the end of the program.
    """
    errors: list[tuple[int, str]] = []
    els = p.elements
    for i, e in enumerate(els):
        if isinstance(e, Delay):
            if not math.isfinite(e.duration) or e.duration < 0:
                errors.append((i, f"delay duration must be finite and >= 0, got {e.duration}"))
        elif isinstance(e, ElectronRotation):
            if not (math.isfinite(e.angle) and math.isfinite(e.phase)):
                errors.append((i, "rotation angle and phase must be finite"))
        elif isinstance(e, ElectronReset):
            if e.target not in ("up", "down"):
                errors.append((i, f"reset target must be 'up' or 'down', got {e.target!r}"))
        elif isinstance(e, ReadoutMarker):
            nxt = els[i + 1] if i + 1 < len(els) else None
            if nxt is not None and not isinstance(nxt, (ElectronReset, ReadoutMarker)):
                errors.append((i, "readout marker must end the program or precede an electron reset"))
        else:
            errors.append((i, f"unknown element {e!r}"))
    ok = not errors
    duration = p.duration if ok else float("nan")
    return ProgramDiagnostics(ok, duration, p.n_rotations, p.n_pi_pulses, tuple(errors))
