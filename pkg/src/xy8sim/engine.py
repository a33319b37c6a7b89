"""Register dynamics under pulse programs.

Two independent routes:

* the conditional-unitary (toggling-frame) path, valid for blocks made only
  of pi pulses and delays, built from closed-form 2x2 precessions;
* a brute-force joint density-matrix evolution that diagonalizes the full
  electron + nuclei Hamiltonian for every delay.

The second is the oracle for the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import algebra
from .algebra import ID2, SX, SY, SZ, AxisAngle, BlochVector
from .program import Delay, ElectronReset, ElectronRotation, PulseProgram, ReadoutMarker
from .system import BRANCHES, Branch, SystemModel, check_branch, conditional_field

P_UP = np.diag([1, 0]).astype(complex)
P_DOWN = np.diag([0, 1]).astype(complex)
DEFAULT_SAMPLES_PER_DELAY = 50


class FastPathError(ValueError):
    """Program is not expressible on the conditional-unitary path."""


class GateError(ValueError):
    """Branch rotation angles disagree; no single conditional-rotation summary exists."""


@dataclass(frozen=True)
class ConditionalPair:
    """Nuclear propagators conditioned on the electron's initial branch.

    ``electron_phase`` is arg(c_up / c_down), the relative phase the pulses
    imprint on the electron branches; ``flipped`` is True for an odd number
    of pi pulses.  Both unitaries are in SU(2).
    """

    v_up: np.ndarray
    v_dn: np.ndarray
    electron_phase: float = 0.0
    flipped: bool = False

    def branch(self, b: Branch) -> np.ndarray:
        return self.v_up if b == "up" else self.v_dn


@dataclass(frozen=True)
class ConditionalGate:
    n_up: tuple[float, float, float]
    n_dn: tuple[float, float, float]
    phi: float
    phi_dn: float

    @property
    def axes_dot(self) -> float:
        return float(np.dot(self.n_up, self.n_dn))


@dataclass(frozen=True)
class TrajectoryPoint:
    time: float
    branch: Branch
    bloch: BlochVector


@dataclass(frozen=True)
class Trajectory:
    initial_branch: Branch
    points: tuple[TrajectoryPoint, ...]

    @property
    def final(self) -> BlochVector:
        return self.points[-1].bloch

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.points])


@dataclass(frozen=True)
class EvolutionResult:
    rho: np.ndarray
    readouts: tuple[float, ...]


@dataclass(frozen=True)
class ReadoutSample:
    init_counts: int
    read_counts: int
    p_down_estimate: float
    sigma: float


# --- fast conditional-unitary path ------------------------------------------

def _pi_block_check(block: PulseProgram) -> None:
    for i, e in enumerate(block.elements):
        if isinstance(e, Delay):
            continue
        if isinstance(e, ElectronRotation) and e.is_pi:
            continue
        raise FastPathError(f"element {i} ({e!r}) is not a pi pulse or delay; use evolve_density")


def _branch_phase(phase: float, in_up: bool) -> complex:
    # pi pulse about (cos p, sin p, 0): |up> -> -i e^{ip} |down>, |down> -> -i e^{-ip} |up>
    return -1j * np.exp(1j * phase if in_up else -1j * phase)


def conditional_unitaries(block: PulseProgram, system: SystemModel, spin: str) -> ConditionalPair:
    _pi_block_check(block)
    fields = {b: conditional_field(system, spin, b) for b in BRANCHES}
    v = {"up": ID2.copy(), "down": ID2.copy()}
    c = {"up": 1 + 0j, "down": 1 + 0j}
    # current electron branch of the chain that started in `start`
    cur = {"up": "up", "down": "down"}
    for e in block.elements:
        if isinstance(e, Delay):
            if e.duration == 0:
                continue
            for start in BRANCHES:
                v[start] = algebra.precession(fields[cur[start]], e.duration) @ v[start]
        else:
            for start in BRANCHES:
                c[start] *= _branch_phase(e.phase, cur[start] == "up")
                cur[start] = "down" if cur[start] == "up" else "up"
    return ConditionalPair(v["up"], v["down"], float(np.angle(c["up"] / c["down"])), cur["up"] == "down")


def xy8_pairs_batch(taus, n_pulses: int, field_up, field_dn) -> tuple[np.ndarray, np.ndarray]:
    """Conditional unitaries of XY8(n_pulses, tau) for an array of tau; shapes (T, 2, 2).

    Equivalent to :func:`conditional_unitaries` on ``build_xy8_block`` (the XY8
    phase pattern imprints no relative electron phase) but vectorized over tau.
    """
    taus = np.asarray(taus, dtype=float)
    u_up_1 = algebra.precession_batch(field_up, taus)
    u_dn_1 = algebra.precession_batch(field_dn, taus)
    u_up_2 = u_up_1 @ u_up_1
    u_dn_2 = u_dn_1 @ u_dn_1
    v_up, v_dn = u_up_1, u_dn_1
    for i in range(n_pulses):
        last = i == n_pulses - 1
        # after pulse i+1 the up-started chain is in `down` when i is even
        a_up = (u_dn_1 if last else u_dn_2) if i % 2 == 0 else (u_up_1 if last else u_up_2)
        a_dn = (u_up_1 if last else u_up_2) if i % 2 == 0 else (u_dn_1 if last else u_dn_2)
        v_up = a_up @ v_up
        v_dn = a_dn @ v_dn
    return v_up, v_dn


def effective_gate(pair: ConditionalPair, tol: float = 1e-6) -> ConditionalGate:
    aa_up = algebra.axis_angle_from_su2(pair.v_up)
    aa_dn = algebra.axis_angle_from_su2(pair.v_dn)
    if abs(aa_up.angle - aa_dn.angle) > tol:
        raise GateError(f"branch rotation angles differ: up {aa_up.angle!r}, down {aa_dn.angle!r}")
    return ConditionalGate(aa_up.axis, aa_dn.axis, aa_up.angle, aa_dn.angle)


def dd_signal(pair: ConditionalPair) -> float:
    """Electron coherence factor Re Tr(v_up v_dn^dag) / 2 for an unpolarized nucleus."""
    return float(np.real(np.trace(pair.v_up @ pair.v_dn.conj().T))) / 2


def dd_signal_closed_form(gate: ConditionalGate) -> float:
    return 1.0 - (1.0 - gate.axes_dot) * math.sin(gate.phi / 2) ** 2


def _rotation_2x2(e: ElectronRotation) -> np.ndarray:
    axis = (math.cos(e.phase), math.sin(e.phase), 0.0)
    return algebra.su2_from_axis_angle(axis, e.angle)


def _split_fast_program(program: PulseProgram):
    els = list(program.elements)
    start = "up"
    if els and isinstance(els[0], ElectronReset):
        start = els.pop(0).target
    if not els or not isinstance(els[-1], ReadoutMarker):
        raise FastPathError("fast-path program must end with a readout marker")
    els.pop()
    delay_idx = [i for i, e in enumerate(els) if isinstance(e, Delay)]
    if not delay_idx:
        return start, els, PulseProgram(), []
    lo, hi = delay_idx[0], delay_idx[-1]
    pre, block, post = els[:lo], els[lo:hi + 1], els[hi + 1:]
    for e in pre + post:
        if not isinstance(e, ElectronRotation):
            raise FastPathError(f"unexpected element {e!r} outside the decoupling block")
    block_prog = PulseProgram(tuple(block))
    _pi_block_check(block_prog)
    return start, pre, block_prog, post


def fast_electron_readout(program: PulseProgram, system: SystemModel, spins=None) -> float:
    """Electron P(down) at the final marker via conditional unitaries, nuclei unpolarized.

    Accepts ``[reset] . rotations . (pi pulses and delays) . rotations . marker``.
    """
    start, pre, block, post = _split_fast_program(program)
    rho = np.diag([1, 0] if start == "up" else [0, 1]).astype(complex)
    for e in pre:
        r = _rotation_2x2(e)
        rho = r @ rho @ r.conj().T
    labels = system.labels if spins is None else list(spins)
    if block.elements:
        pairs = [conditional_unitaries(block, system, s) for s in labels]
        # multi-spin factorization: independent nuclei multiply the coherence
        coh = float(np.prod([dd_signal(p) for p in pairs])) if pairs else 1.0
        ref = _electron_only_pair(block)
        factor = coh * np.exp(1j * ref.electron_phase)
        new = np.zeros((2, 2), dtype=complex)
        if ref.flipped:
            new[1, 1], new[0, 0] = rho[0, 0], rho[1, 1]
            new[1, 0] = rho[0, 1] * factor
            new[0, 1] = np.conj(new[1, 0])
        else:
            new[0, 0], new[1, 1] = rho[0, 0], rho[1, 1]
            new[0, 1] = rho[0, 1] * factor
            new[1, 0] = np.conj(new[0, 1])
        rho = new
    for e in post:
        r = _rotation_2x2(e)
        rho = r @ rho @ r.conj().T
    return float(np.real(rho[1, 1]))


def _electron_only_pair(block: PulseProgram) -> ConditionalPair:
    c = {"up": 1 + 0j, "down": 1 + 0j}
    cur = {"up": "up", "down": "down"}
    for e in block.elements:
        if isinstance(e, ElectronRotation):
            for start in BRANCHES:
                c[start] *= _branch_phase(e.phase, cur[start] == "up")
                cur[start] = "down" if cur[start] == "up" else "up"
    return ConditionalPair(ID2, ID2, float(np.angle(c["up"] / c["down"])), cur["up"] == "down")


# --- brute-force joint evolution --------------------------------------------

def _embed(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    ops = [ID2] * n_sites
    ops[site] = op
    return reduce(np.kron, ops)


def joint_hamiltonian(system: SystemModel, electron_detuning: float = 0.0,
                      nuclear_detuning: float = 0.0) -> np.ndarray:
    """H / (2 pi) in MHz on electron (x) nuclei, electron rotating frame."""
    n = 1 + system.n_spins
    s_z = _embed(SZ / 2, 0, n)
    h = electron_detuning * s_z
    for j, spin in enumerate(system.spins, start=1):
        i_x = _embed(SX / 2, j, n)
        i_z = _embed(SZ / 2, j, n)
        hf = spin.hyperfine
        h = h + (system.f_larmor + nuclear_detuning) * i_z + s_z @ (hf.a_par * i_z + hf.a_perp * i_x)
    return h


class _DelayPropagator:
    def __init__(self, h: np.ndarray):
        self.evals, self.evecs = np.linalg.eigh(h)
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, t: float) -> np.ndarray:
        u = self._cache.get(t)
        if u is None:
            phases = np.exp(-2j * math.pi * self.evals * t)
            u = (self.evecs * phases) @ self.evecs.conj().T
            self._cache[t] = u
        return u


def evolve_density(program: PulseProgram, rho0, system: SystemModel, electron_detuning: float = 0.0,
                   nuclear_detuning: float = 0.0) -> EvolutionResult:
    """Exact closed-system evolution of the joint density matrix.

    Resets trace out the electron and re-prepare it; each readout marker
    records the electron P(down) at that instant.
    """
    dim = 2 ** (1 + system.n_spins)
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (dim, dim):
        raise ValueError(f"rho0 has shape {rho.shape}, system needs ({dim}, {dim})")
    delay = _DelayPropagator(joint_hamiltonian(system, electron_detuning, nuclear_detuning))
    nuc_dim = dim // 2
    proj_down = np.kron(P_DOWN, np.eye(nuc_dim))
    rot_cache: dict[tuple[float, float], np.ndarray] = {}
    readouts = []
    for e in program.elements:
        if isinstance(e, Delay):
            if e.duration:
                u = delay(e.duration)
                rho = u @ rho @ u.conj().T
        elif isinstance(e, ElectronRotation):
            key = (e.phase, e.angle)
            u = rot_cache.get(key)
            if u is None:
                gen = math.cos(e.phase) * SX + math.sin(e.phase) * SY
                w, vecs = np.linalg.eigh(gen)
                r = (vecs * np.exp(-0.5j * e.angle * w)) @ vecs.conj().T
                u = rot_cache[key] = np.kron(r, np.eye(nuc_dim))
            rho = u @ rho @ u.conj().T
        elif isinstance(e, ElectronReset):
            nuc = rho.reshape(2, nuc_dim, 2, nuc_dim).trace(axis1=0, axis2=2)
            rho = np.kron(P_UP if e.target == "up" else P_DOWN, nuc)
        elif isinstance(e, ReadoutMarker):
            readouts.append(float(np.real(np.trace(proj_down @ rho))))
        else:
            raise TypeError(f"unknown pulse element {e!r}")
    return EvolutionResult(rho, tuple(readouts))


def initial_density(system: SystemModel, electron: Branch = "up", nuclei=None) -> np.ndarray:
    """Joint density matrix; nuclei default to maximally mixed.

    ``nuclei`` may give one 2x2 density matrix (or Bloch vector) per spin.
    """
    e = P_UP if check_branch(electron) == "up" else P_DOWN
    if nuclei is None:
        nuc = np.eye(2 ** system.n_spins, dtype=complex) / 2 ** system.n_spins
    else:
        mats = []
        for r in nuclei:
            r = np.asarray(r)
            mats.append(algebra.density_from_bloch(r) if r.shape == (3,) else r.astype(complex))
        nuc = reduce(np.kron, mats) if mats else np.ones((1, 1), dtype=complex)
    return np.kron(e, nuc)


def nuclear_bloch(rho: np.ndarray, system: SystemModel, spin: str) -> BlochVector:
    dims = (2,) * (1 + system.n_spins)
    k = 1 + system.labels.index(spin)
    return algebra.bloch_from_density(algebra.partial_trace(rho, dims, k))


def readout(program: PulseProgram, system: SystemModel, electron: Branch = "up", nuclei=None) -> float:
    """Electron P(down) recorded at the last readout marker (oracle path)."""
    res = evolve_density(program, initial_density(system, electron, nuclei), system)
    if not res.readouts:
        raise ValueError("program has no readout marker")
    return res.readouts[-1]


# --- trajectories ------------------------------------------------------------

def bloch_trace(program: PulseProgram, system: SystemModel, spin: str | None = None,
                initial=(0.0, 0.0, -1.0), samples_per_delay: int = DEFAULT_SAMPLES_PER_DELAY
                ) -> dict[Branch, Trajectory]:
    """Nuclear Bloch-vector trajectories for each initial electron branch.

    ``initial`` is a pure-state Bloch vector (default |down>_nuc).  Samples
    are taken at ``samples_per_delay`` evenly spaced points inside every delay,
    the last coinciding with the following pulse boundary.
    """
    _pi_block_check(PulseProgram(tuple(e for e in program.elements
                                       if not isinstance(e, (ElectronReset, ReadoutMarker)))))
    if samples_per_delay < 1:
        raise ValueError("samples_per_delay must be >= 1")
    spin = system.labels[0] if spin is None else spin
    fields = {b: conditional_field(system, spin, b) for b in BRANCHES}
    r0 = np.asarray(initial, dtype=float)
    if abs(np.linalg.norm(r0) - 1) > 1e-9:
        raise ValueError("initial nuclear state must be a pure-state Bloch vector")
    rho0 = algebra.density_from_bloch(r0)
    w, vecs = np.linalg.eigh(rho0)
    psi0 = vecs[:, np.argmax(w)]
    out = {}
    for start in BRANCHES:
        cur = start
        psi = psi0.copy()
        t = 0.0
        pts = [TrajectoryPoint(0.0, cur, algebra.bloch_from_state(psi))]
        for e in program.elements:
            if isinstance(e, Delay):
                if e.duration == 0:
                    continue
                steps = np.arange(1, samples_per_delay + 1) * (e.duration / samples_per_delay)
                us = algebra.precession_batch(fields[cur], steps)
                for dt, u in zip(steps, us):
                    pts.append(TrajectoryPoint(t + dt, cur, algebra.bloch_from_state(u @ psi)))
                psi = algebra.precession(fields[cur], e.duration) @ psi
                t += e.duration
            elif isinstance(e, ElectronRotation):
                cur = "down" if cur == "up" else "up"
        out[start] = Trajectory(start, tuple(pts))
    return out


# --- readout statistics -------------------------------------------------------

def spin_projection(p_down: float) -> float:
    """<sigma_z> = 1 - 2 P(down)."""
    if not (0.0 <= p_down <= 1.0):
        raise ValueError(f"population must lie in [0, 1], got {p_down}")
    return 1.0 - 2.0 * p_down


def photon_readout_mc(p_down: float, mean_bright_counts: float, shots: int, seed: int | None = None,
                      rng: np.random.Generator | None = None) -> ReadoutSample:
    """Simulated ratio-of-fluorescence population estimate.

    Before initialization the electron sits in |down>, so the init window is
    always bright; the readout window is bright with probability p_down.
    Estimate = total read counts / total init counts, with Poisson error
    propagated through the ratio.
    """
    if not (0.0 <= p_down <= 1.0):
        raise ValueError(f"population must lie in [0, 1], got {p_down}")
    if mean_bright_counts <= 0:
        raise ValueError("mean_bright_counts must be positive")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed) if rng is None else rng
    init = int(rng.poisson(mean_bright_counts, size=shots).sum())
    read = int(rng.poisson(mean_bright_counts * p_down, size=shots).sum())
    if init == 0:
        return ReadoutSample(init, read, float("nan"), float("inf"))
    est = read / init
    # one-count floor so an empty readout window still carries an error bar
    sigma = math.sqrt(max(read, 1) / init**2 + read**2 / init**3)
    return ReadoutSample(init, read, est, sigma)


# --- quasi-static noise -------------------------------------------------------

def quasistatic_dephasing_scan(program: PulseProgram, system: SystemModel, detuning_sigma: float,
                               samples: int, seed: int | None = None, rho0=None,
                               target: str = "electron") -> np.ndarray:
    """Readouts averaged over Gaussian static detunings (MHz, standard deviation).

    ``target='electron'`` adds a static electron z detuning during delays;
    ``target='nuclear'`` shifts the nuclear Larmor frequency instead.
    Returns the averaged P(down) for every readout marker.
    """
    if detuning_sigma < 0:
        raise ValueError("detuning_sigma must be non-negative")
    if target not in ("electron", "nuclear"):
        raise ValueError(f"target must be 'electron' or 'nuclear', got {target!r}")
    rho0 = initial_density(system) if rho0 is None else rho0
    if detuning_sigma == 0:
        return np.array(evolve_density(program, rho0, system).readouts)
    rng = np.random.default_rng(seed)
    acc = None
    for d in rng.normal(0.0, detuning_sigma, size=samples):
        kw = {"electron_detuning": d} if target == "electron" else {"nuclear_detuning": d}
        r = np.array(evolve_density(program, rho0, system, **kw).readouts)
        acc = r if acc is None else acc + r
    return acc / samples
