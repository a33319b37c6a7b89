"""Timing searches and measurement curves built on the dynamics engine."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lombscargle

from . import engine
from .engine import ConditionalGate
from .program import (MINUS_X, X, build_echo, build_nuclear_init, build_nuclear_readout, build_rabi,
                      build_ramsey, build_xy8_block)
from .system import Branch, SystemModel, check_branch, ramsey_frequencies

TAU_INIT = 1.569  # us, initialization / readout spacing
TAU_GATE = 1.578  # us, spacing used for nuclear rotations
TAU_ALTERNATIVE = 1.586  # us, second initialization candidate
N_INIT = 16


@dataclass(frozen=True)
class ScanPoint:
    tau: float
    fidelity_up: float
    fidelity_down: float
    final_phase: float

    @property
    def worst(self) -> float:
        return min(self.fidelity_up, self.fidelity_down)


@dataclass(frozen=True)
class DesignReport:
    tau_opt: float
    fidelity_up: float
    fidelity_down: float
    gate: ConditionalGate
    scan: tuple[ScanPoint, ...]
    final_phase: float = MINUS_X

    def __post_init__(self):
        taus = [p.tau for p in self.scan]
        if taus and not (min(taus) - 1e-12 <= self.tau_opt <= max(taus) + 1e-12):
            raise ValueError("tau_opt lies outside the scanned window")

    @property
    def fidelity(self) -> float:
        return min(self.fidelity_up, self.fidelity_down)


@dataclass(frozen=True)
class SinusoidFit:
    offset: float
    amplitude: float
    frequency: float  # cycles per unit of x
    phase: float
    rms: float

    def __call__(self, x) -> np.ndarray:
        return self.offset + self.amplitude * np.cos(2 * np.pi * self.frequency * np.asarray(x) + self.phase)


def _map(fn, items, threads: int | None):
    items = list(items)
    if not threads or threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _prepared_target(prep: Branch) -> float:
    # nuclear <sigma_z> the sequence aims for
    return -1.0 if prep == "up" else 1.0


def init_fidelity(tau: float, n_pulses: int, system: SystemModel, electron_prep: Branch,
                  final_phase: float = MINUS_X, spin: str | None = None) -> float:
    """Population overlap of the post-init nuclear state with its target.

    Prep ``up`` targets |down>_nuc and prep ``down`` targets |up>_nuc.  All
    spins in ``system`` take part in the evolution and start maximally mixed.
    """
    check_branch(electron_prep)
    if system.n_spins == 0:
        raise ValueError("system has no nuclear spins")
    spin = system.labels[0] if spin is None else spin
    prog = build_nuclear_init(tau, n_pulses, electron_prep, final_phase)
    rho = engine.evolve_density(prog, engine.initial_density(system), system).rho
    z = engine.nuclear_bloch(rho, system, spin).z
    f = (1 + _prepared_target(electron_prep) * z) / 2
    return float(min(max(f, 0.0), 1.0))


def _scan_point(tau, n_pulses, system, final_phases, spin) -> ScanPoint:
    best = None
    for fp in final_phases:
        p = ScanPoint(float(tau), init_fidelity(tau, n_pulses, system, "up", fp, spin),
                      init_fidelity(tau, n_pulses, system, "down", fp, spin), float(fp))
        if best is None or p.worst > best.worst:
            best = p
    return best


def scan_init_tau(window: tuple[float, float], steps: int, n_pulses: int, system: SystemModel,
                  final_phases=(MINUS_X, X), spin: str | None = None, threads: int | None = None,
                  refine: bool = True) -> DesignReport:
    """Grid search of the init spacing maximizing min(F_up, F_down).

    Each tau is tried with every phase in ``final_phases`` for the closing
    pi/2 of the init sequence; the best one is kept.  Ties go to the lowest
    tau.  The winner is refined with a parabola through its neighbours.
    """
    lo, hi = (float(v) for v in window)
    if not (lo > 0 and hi >= lo and math.isfinite(hi)):
        raise ValueError(f"window must be positive with lo <= hi, got {window}")
    if lo == hi:
        taus = np.array([lo])
    else:
        if steps < 3:
            raise ValueError("steps must be >= 3")
        taus = np.linspace(lo, hi, steps)
    scan = _map(lambda t: _scan_point(t, n_pulses, system, final_phases, spin), taus, threads)
    worst = np.array([p.worst for p in scan])
    i = int(np.argmax(worst))  # first maximum = lowest tau
    best = scan[i]
    if refine and 0 < i < len(scan) - 1 and scan[i - 1].final_phase == scan[i + 1].final_phase == best.final_phase:
        h = taus[1] - taus[0]
        y0, y1, y2 = worst[i - 1], worst[i], worst[i + 1]
        curv = y0 - 2 * y1 + y2
        if curv < 0:
            t = taus[i] + 0.5 * h * (y0 - y2) / curv
            cand = _scan_point(t, n_pulses, system, (best.final_phase,), spin)
            if cand.worst > best.worst:
                best = cand
    gate = engine.effective_gate(engine.conditional_unitaries(
        build_xy8_block(n_pulses, best.tau), system, spin or system.labels[0]))
    return DesignReport(best.tau, best.fidelity_up, best.fidelity_down, gate, tuple(scan), best.final_phase)


def rabi_curve(n_prime_list, tau_prime: float, tau_init: float, system: SystemModel, n_init: int = N_INIT,
               final_phase: float = MINUS_X, threads: int | None = None) -> list[tuple[int, float]]:
    """Electron P(down) after init, n' gate pulses at ``tau_prime``, and readout."""
    ns = [int(n) for n in n_prime_list]
    vals = _map(lambda n: engine.readout(build_rabi(n, tau_prime, tau_init, n_init, "up", final_phase), system),
                ns, threads)
    return list(zip(ns, vals))


def _check_times(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-D sequence")
    if np.any(t < 0) or np.any(np.diff(t) < 0) or not np.all(np.isfinite(t)):
        raise ValueError("time grid must be sorted, finite and non-negative")
    return t


def ramsey_curve(t_grid, branch: Branch, system: SystemModel, tau_prime: float = TAU_GATE,
                 tau_init: float = TAU_INIT, n_init: int = N_INIT, final_phase: float = MINUS_X,
                 threads: int | None = None) -> list[tuple[float, float]]:
    """Nuclear Ramsey fringe: pi/2 gate, free precession with the electron in ``branch``, pi/2 gate."""
    check_branch(branch)
    ts = _check_times(t_grid)
    vals = _map(lambda t: engine.readout(
        build_ramsey(t, branch, tau_prime, tau_init, n_init, final_phase=final_phase), system), ts, threads)
    return [(float(t), v) for t, v in zip(ts, vals)]


def echo_half_time(t_total: float, system: SystemModel, synchronize: bool) -> float:
    if not synchronize:
        return t_total / 2
    f_up, _ = ramsey_frequencies(system.f_larmor, system.spins[0].hyperfine)
    return round(t_total / 2 * f_up) / f_up


def echo_curve(t_grid, system: SystemModel, tau_prime: float = TAU_GATE, tau_init: float = TAU_INIT,
               n_init: int = N_INIT, final_phase: float = MINUS_X, synchronize: bool = False,
               threads: int | None = None) -> list[tuple[float, float]]:
    """Nuclear spin echo versus total free precession time.

    The refocusing block is a 16-pulse conditional rotation, which is close
    to but not exactly a pi rotation about an axis normal to the precession
    axis, so a small T-dependent ripple remains.  ``synchronize`` snaps each
    half wait to whole precession periods of the first spin, which makes the
    closed-system signal exactly T-independent.
    """
    ts = _check_times(t_grid)

    def one(t):
        half = echo_half_time(t, system, synchronize)
        return engine.readout(build_echo(2 * half, tau_prime, tau_init, n_init, final_phase=final_phase), system)

    vals = _map(one, ts, threads)
    return [(float(t), v) for t, v in zip(ts, vals)]


def fit_sinusoid(x, y, frequency_guess: float | None = None, max_frequency: float | None = None) -> SinusoidFit:
    """Least-squares fit of offset + amplitude * cos(2 pi f x + phase).

    The frequency is seeded by the Lomb-Scargle periodogram peak unless a
    guess is supplied.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 5:
        raise ValueError("need at least 5 matching samples for a sinusoid fit")
    offset0 = float(np.mean(y))
    if frequency_guess is None:
        span = float(np.ptp(x))
        if span <= 0:
            raise ValueError("x values must span a non-zero range")
        dx = np.diff(np.sort(x))
        f_max = max_frequency or 0.5 / float(np.min(dx[dx > 0]))
        freqs = np.linspace(0.25 / span, f_max, max(2000, int(40 * span * f_max)))
        power = lombscargle(x, y - offset0, 2 * np.pi * freqs)
        frequency_guess = float(freqs[int(np.argmax(power))])
    # linear solve for amplitude and phase at the seed frequency
    w = 2 * np.pi * frequency_guess
    basis = np.column_stack([np.ones_like(x), np.cos(w * x), np.sin(w * x)])
    c, *_ = np.linalg.lstsq(basis, y, rcond=None)
    p0 = [c[0], math.hypot(c[1], c[2]), frequency_guess, math.atan2(-c[2], c[1])]

    def resid(p):
        return p[0] + p[1] * np.cos(2 * np.pi * p[2] * x + p[3]) - y

    res = least_squares(resid, p0, x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    off, amp, freq, ph = res.x
    if amp < 0:
        amp, ph = -amp, ph + math.pi
    ph = math.remainder(ph, 2 * math.pi)
    rms = float(np.sqrt(np.mean(res.fun**2)))
    return SinusoidFit(float(off), float(amp), float(freq), float(ph), rms)


def window_amplitudes(t, y, frequency: float, window: float) -> list[tuple[float, float]]:
    """Oscillation amplitude in consecutive windows, by linear least squares at a fixed frequency."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = []
    edges = np.arange(t.min(), t.max() + window, window)
    w = 2 * np.pi * frequency
    for a, b in zip(edges[:-1], edges[1:]):
        m = (t >= a) & (t < b) if b < t.max() else (t >= a)
        if m.sum() < 3:
            continue
        basis = np.column_stack([np.ones(m.sum()), np.cos(w * t[m]), np.sin(w * t[m])])
        c, *_ = np.linalg.lstsq(basis, y[m], rcond=None)
        out.append((float(a), float(math.hypot(c[1], c[2]))))
    return out


def readout_after_init(tau: float, n_pulses: int, system: SystemModel, electron_prep: Branch = "up",
                       final_phase: float = MINUS_X) -> float:
    """Electron P(down) for init immediately followed by readout."""
    prog = (build_nuclear_init(tau, n_pulses, electron_prep, final_phase)
            + build_nuclear_readout(tau, n_pulses, final_phase))
    return engine.readout(prog, system)
