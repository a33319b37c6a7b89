"""Electron-nuclear register model in the electron rotating frame.

Frequencies are in MHz, times in microseconds, fields in tesla.  The nuclear
spin precesses about the conditional field

    f_up   = (+A_perp/2, 0, f_L + A_par/2)
    f_down = (-A_perp/2, 0, f_L - A_par/2)

depending on the electron branch (|up> <-> m_s = +1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import brentq

Branch = Literal["up", "down"]
BRANCHES: tuple[Branch, Branch] = ("up", "down")

GYROMAGNETIC_13C = 10.7084  # MHz/T
REFERENCE_B_FIELD = 0.13  # T
REFERENCE_ELECTRON_SPLITTING = 3.42  # GHz
REFERENCE_A_PAR = 0.11  # MHz
REFERENCE_A_PERP = 0.33  # MHz
# Larmor frequency implied by the k=4 resonance at tau' = 1.578 us (see larmor_from_resonance)
REFERENCE_F_LARMOR = 1.4158  # MHz
# Placeholder for the weaker, partially addressed second spin.  Model-dependent.
PARASITIC_A_PAR = 0.05
PARASITIC_A_PERP = 0.15


def check_branch(branch: str) -> Branch:
    if branch not in BRANCHES:
        raise ValueError(f"electron branch must be 'up' or 'down', got {branch!r}")
    return branch  # type: ignore[return-value]


@dataclass(frozen=True)
class HyperfineCoupling:
    a_par: float
    a_perp: float

    def __post_init__(self):
        if not (math.isfinite(self.a_par) and math.isfinite(self.a_perp)):
            raise ValueError("hyperfine couplings must be finite")
        if self.a_perp < 0:
            raise ValueError(f"a_perp must be >= 0 (sign is absorbed in the x axis), got {self.a_perp}")


@dataclass(frozen=True)
class NuclearSpinModel:
    label: str
    hyperfine: HyperfineCoupling


@dataclass(frozen=True)
class SystemModel:
    f_larmor: float
    spins: tuple[NuclearSpinModel, ...] = ()
    electron_splitting: float = REFERENCE_ELECTRON_SPLITTING
    b_field: float | None = None
    gyromagnetic: float = GYROMAGNETIC_13C
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not (self.f_larmor > 0 and math.isfinite(self.f_larmor)):
            raise ValueError(f"f_larmor must be positive, got {self.f_larmor}")
        object.__setattr__(self, "spins", tuple(self.spins))
        labels = [s.label for s in self.spins]
        if len(set(labels)) != len(labels):
            raise ValueError(f"nuclear spin labels must be unique, got {labels}")

    @classmethod
    def from_field(cls, b_field: float, spins=(), gyromagnetic: float = GYROMAGNETIC_13C, **kw):
        f = larmor_frequency(b_field, gyromagnetic)
        note = f"f_larmor defaulted to gyromagnetic*b_field = {gyromagnetic}*{b_field} = {f:.6g} MHz"
        return cls(f_larmor=f, spins=tuple(spins), b_field=b_field, gyromagnetic=gyromagnetic,
                   notes=(note,), **kw)

    @property
    def n_spins(self) -> int:
        return len(self.spins)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.spins]

    @property
    def reference_f_larmor(self) -> float | None:
        """gyromagnetic * b_field when a field is known."""
        if self.b_field is None:
            return None
        return larmor_frequency(self.b_field, self.gyromagnetic)

    def spin(self, label: str) -> NuclearSpinModel:
        for s in self.spins:
            if s.label == label:
                return s
        raise KeyError(f"unknown nuclear spin label {label!r}; known: {self.labels}")

    def with_spins(self, spins) -> "SystemModel":
        return SystemModel(self.f_larmor, tuple(spins), self.electron_splitting, self.b_field,
                           self.gyromagnetic, self.notes)

    def with_f_larmor(self, f_larmor: float) -> "SystemModel":
        return SystemModel(f_larmor, self.spins, self.electron_splitting, self.b_field,
                           self.gyromagnetic, self.notes)


def reference_system(parasitic: bool = False, f_larmor: float = REFERENCE_F_LARMOR) -> SystemModel:
    """Target 13C spin with the reported couplings; optionally add the placeholder second spin."""
    spins = [NuclearSpinModel("target", HyperfineCoupling(REFERENCE_A_PAR, REFERENCE_A_PERP))]
    if parasitic:
        spins.append(NuclearSpinModel("parasitic", HyperfineCoupling(PARASITIC_A_PAR, PARASITIC_A_PERP)))
    return SystemModel(f_larmor=f_larmor, spins=tuple(spins), b_field=REFERENCE_B_FIELD)


def larmor_frequency(b_field: float, gyromagnetic: float = GYROMAGNETIC_13C) -> float:
    if b_field < 0:
        raise ValueError(f"magnetic field must be non-negative, got {b_field}")
    return b_field * gyromagnetic


def _field(f_larmor: float, hf: HyperfineCoupling, branch: Branch) -> np.ndarray:
    sign = 1.0 if branch == "up" else -1.0
    return np.array([sign * hf.a_perp / 2, 0.0, f_larmor + sign * hf.a_par / 2])


def conditional_field(system: SystemModel, spin: str, branch: Branch) -> np.ndarray:
    """Precession frequency vector (MHz) of ``spin`` while the electron is in ``branch``."""
    check_branch(branch)
    return _field(system.f_larmor, system.spin(spin).hyperfine, branch)


def resonance_tau(k: int, f_larmor: float, a_perp: float) -> float:
    """Inter-pulse half-spacing (us) of the k-th dynamical-decoupling resonance."""
    if f_larmor <= 0:
        raise ValueError(f"f_larmor must be positive, got {f_larmor}")
    if k < 0:
        raise ValueError(f"resonance order must be non-negative, got {k}")
    return (2 * k + 1) / (4 * f_larmor) * (1 - a_perp**2 / (8 * f_larmor**2))


def larmor_from_resonance(tau: float, k: int, a_perp: float) -> float:
    """Invert :func:`resonance_tau` for f_L given a measured resonance position."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    guess = (2 * k + 1) / (4 * tau)
    # resonance_tau is strictly decreasing in f_L above a_perp/sqrt(8)*sqrt(3)
    lo = max(guess * 0.5, a_perp * 0.7 + 1e-9)
    return brentq(lambda f: resonance_tau(k, f, a_perp) - tau, lo, guess * 2, xtol=1e-15, rtol=1e-15)


def ramsey_frequencies(f_larmor: float, hf: HyperfineCoupling) -> tuple[float, float]:
    """Free precession frequencies (f_up, f_down) of the nucleus for each electron branch."""
    if f_larmor <= 0:
        raise ValueError(f"f_larmor must be positive, got {f_larmor}")
    f_up = math.sqrt((f_larmor + hf.a_par / 2) ** 2 + (hf.a_perp / 2) ** 2)
    f_down = math.sqrt((f_larmor - hf.a_par / 2) ** 2 + (hf.a_perp / 2) ** 2)
    return f_up, f_down
