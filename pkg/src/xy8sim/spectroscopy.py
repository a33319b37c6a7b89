"""XY8 spectra over tau grids, dip detection and hyperfine parameter fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import find_peaks

from .system import HyperfineCoupling, NuclearSpinModel, SystemModel

log = logging.getLogger(__name__)


class NonIdentifiableError(RuntimeError):
    """The fit could not improve on a flat spectrum inside the search box."""


@dataclass(frozen=True)
class SpectrumPoint:
    tau: float
    signal: float
    sigma: float | None = None


@dataclass(frozen=True)
class Dip:
    tau_center: float
    depth: float


@dataclass(frozen=True)
class FitBounds:
    a_par: tuple[float, float]
    a_perp: tuple[float, float]
    f_larmor: tuple[float, float]

    def __post_init__(self):
        for name in ("a_par", "a_perp", "f_larmor"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"bounds for {name} must be finite with lo <= hi, got {(lo, hi)}")
        if self.a_perp[0] < 0 or self.f_larmor[0] <= 0:
            raise ValueError("a_perp bounds must be >= 0 and f_larmor bounds > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.a_par, self.a_perp, self.f_larmor], dtype=float)


@dataclass(frozen=True)
class FitResult:
    a_par: float
    a_perp: float
    f_larmor: float
    residual: float
    iterations: int
    flat_residual: float = float("nan")
    alias_candidates: int = 1
    tie_break: str = "lowest residual"
    evaluations: int = 0
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "a_par_mhz": self.a_par,
            "a_perp_mhz": self.a_perp,
            "f_larmor_mhz": self.f_larmor,
            "residual": self.residual,
            "flat_residual": self.flat_residual,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "alias_candidates": self.alias_candidates,
            "tie_break": self.tie_break,
            "notes": list(self.notes),
        }


def _check_grid(taus) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("tau grid must be a non-empty 1-D sequence")
    if np.any(taus <= 0) or not np.all(np.isfinite(taus)):
        raise ValueError("tau grid values must be positive and finite")
    if np.any(np.diff(taus) < 0):
        raise ValueError("tau grid must be sorted ascending")
    return taus


def _qmul(a, b):
    """Product of SU(2) elements stored as quaternions (w, x, y, z), U = w - i v.sigma."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + bw * ax + (ay * bz - az * by),
            aw * by + bw * ay + (az * bx - ax * bz),
            aw * bz + bw * az + (ax * by - ay * bx))


def _qprecession(fx, fz, t):
    w = np.hypot(fx, fz)
    half = np.pi * w * t
    s = np.sin(half)
    safe = np.where(w > 0, w, 1.0)
    return (np.cos(half), s * fx / safe, np.zeros_like(half), s * fz / safe)


def _qpow(q, k: int):
    result = None
    base = q
    while k:
        if k & 1:
            result = base if result is None else _qmul(result, base)
        k >>= 1
        if k:
            base = _qmul(base, base)
    return result


def xy8_coherence(taus, n_pulses: int, f_larmor, a_par, a_perp) -> np.ndarray:
    """Re Tr(v_up v_dn^dag)/2 for one spin; broadcasts over taus and parameter arrays.

    The block is (unit cell)^(n/2) with cell = U(tau) U'(2 tau) U(tau).
    """
    if n_pulses <= 0 or n_pulses % 8:
        raise ValueError(f"n_pulses must be a positive multiple of 8, got {n_pulses}")
    t = np.asarray(taus, dtype=float)
    f_l = np.asarray(f_larmor, dtype=float)
    ap = np.asarray(a_par, dtype=float)
    ax = np.asarray(a_perp, dtype=float)
    cells = []
    for sign in (1.0, -1.0):
        mine = _qprecession(sign * ax / 2, f_l + sign * ap / 2, t)
        other = _qprecession(-sign * ax / 2, f_l - sign * ap / 2, 2 * t)
        cells.append(_qpow(_qmul(_qmul(mine, other), mine), n_pulses // 2))
    up, dn = cells
    return up[0] * dn[0] + up[1] * dn[1] + up[2] * dn[2] + up[3] * dn[3]


def coherence_factor(taus, n_pulses: int, f_larmor: float, couplings) -> np.ndarray:
    """Product over spins of the single-spin coherence factors (independent nuclei)."""
    taus = np.asarray(taus, dtype=float)
    m = np.ones(taus.shape)
    for hf in couplings:
        m = m * xy8_coherence(taus, n_pulses, f_larmor, hf.a_par, hf.a_perp)
    return m


def spectrum_p_down(taus, n_pulses: int, f_larmor: float, couplings) -> np.ndarray:
    """P(down) after init . pi/2(X) . XY8 . pi/2(X) with unpolarized nuclei."""
    return (1 + coherence_factor(taus, n_pulses, f_larmor, couplings)) / 2


def simulate_spectrum(tau_grid, system: SystemModel, n_pulses: int) -> list[SpectrumPoint]:
    taus = _check_grid(tau_grid)
    if n_pulses <= 0 or n_pulses % 8:
        raise ValueError(f"n_pulses must be a positive multiple of 8, got {n_pulses}")
    p = spectrum_p_down(taus, n_pulses, system.f_larmor, [s.hyperfine for s in system.spins])
    return [SpectrumPoint(float(t), float(v)) for t, v in zip(taus, p)]


def _arrays(points):
    pts = list(points)
    taus = np.array([p.tau for p in pts], dtype=float)
    y = np.array([p.signal for p in pts], dtype=float)
    sig = [p.sigma for p in pts]
    if all(s is not None for s in sig) and pts:
        s = np.array(sig, dtype=float)
        if np.any(s <= 0):
            raise ValueError("sigma values must be positive when supplied")
        w = 1.0 / s**2
    else:
        w = np.ones_like(y)
    return taus, y, w


def find_dips(points, prominence: float = 0.05) -> list[Dip]:
    """Local minima with at least ``prominence`` depth, centers refined by a parabola."""
    taus, y, _ = _arrays(points)
    if taus.size < 3:
        raise ValueError("dip detection needs at least 3 points")
    _check_grid(taus)
    if not np.all(np.isfinite(y)):
        raise ValueError("spectrum contains non-finite values")
    idx, props = find_peaks(-y, prominence=prominence)
    dips = []
    for i, prom in zip(idx, props["prominences"]):
        center = taus[i]
        if 0 < i < taus.size - 1:
            x3, y3 = taus[i - 1:i + 2], y[i - 1:i + 2]
            a, b, _ = np.polyfit(x3 - taus[i], y3, 2)
            if a > 0:
                shift = -b / (2 * a)
                if abs(shift) <= max(taus[i + 1] - taus[i], taus[i] - taus[i - 1]):
                    center = taus[i] + shift
        dips.append(Dip(float(center), float(prom)))
    return dips


def _objective_factory(taus, y, w, n_pulses, fixed):
    fixed = list(fixed)

    def objective(p) -> float:
        a_par, a_perp, f_l = p
        couplings = [HyperfineCoupling(a_par, max(a_perp, 0.0))] + fixed
        model = spectrum_p_down(taus, n_pulses, f_l, couplings)
        return float(np.sum(w * (model - y) ** 2))

    return objective


def _grid_residuals(grid, taus, y, w, n_pulses, fixed, chunk: int = 200_000) -> np.ndarray:
    """Weighted residuals for every parameter triple on ``grid`` (shape (3, ...))."""
    params = grid.reshape(3, -1)
    out = np.empty(params.shape[1])
    rows = max(1, chunk // taus.size)
    for start in range(0, params.shape[1], rows):
        a_par, a_perp, f_l = (c[start:start + rows, None] for c in params)
        m = xy8_coherence(taus[None, :], n_pulses, f_l, a_par, a_perp)
        for hf in fixed:
            m = m * xy8_coherence(taus[None, :], n_pulses, f_l, hf.a_par, hf.a_perp)
        out[start:start + rows] = np.sum(w * ((1 + m) / 2 - y) ** 2, axis=1)
    return out.reshape(grid.shape[1:])


def fit_hyperfine(points, bounds: FitBounds, n_pulses: int, reference_f_larmor: float | None = None,
                  fixed_spins=(), grid_per_axis: int = 20, top_candidates: int = 4,
                  rel_tol: float = 1e-8) -> FitResult:
    """Least-squares fit of {A_par, A_perp, f_L} for one spin to a P(down) spectrum.

    Coarse grid over the box, then bounded Nelder-Mead from the best few
    distinct grid minima.  Solutions whose residuals agree to within 1e-6
    (relative) are treated as aliases; the one with f_L closest to
    ``reference_f_larmor`` wins when it is given.
    """
    taus, y, w = _arrays(points)
    _check_grid(taus)
    if taus.size < 3:
        raise ValueError("fit needs at least 3 spectrum points")
    fixed = [s.hyperfine if isinstance(s, NuclearSpinModel) else s for s in fixed_spins]
    objective = _objective_factory(taus, y, w, n_pulses, fixed)

    flat = float(np.sum(w * (y - np.sum(w * y) / np.sum(w)) ** 2))
    box = bounds.as_array()
    axes = [np.linspace(lo, hi, grid_per_axis) if hi > lo else np.array([lo]) for lo, hi in box]
    grid = np.array(np.meshgrid(*axes, indexing="ij"))
    vals = _grid_residuals(grid, taus, y, w, n_pulses, fixed)
    n_eval = vals.size

    # distinct seeds: best grid points that are local minima of the coarse grid
    order = np.argsort(vals, axis=None)
    seeds = []
    for flat_idx in order:
        idx = np.unravel_index(flat_idx, vals.shape)
        lo = tuple(max(i - 1, 0) for i in idx)
        hi = tuple(i + 2 for i in idx)
        if vals[idx] <= vals[tuple(slice(a, b) for a, b in zip(lo, hi))].min():
            seeds.append(grid[(slice(None),) + idx])
        if len(seeds) >= top_candidates:
            break

    scale = np.where(box[:, 1] > box[:, 0], box[:, 1] - box[:, 0], 1.0)
    results = []
    iters = 0
    step = scale / max(grid_per_axis - 1, 1)
    for seed in seeds:
        simplex = [seed]
        for i in range(3):
            v = seed.copy()
            # step inward from whichever bound is closer
            v[i] += step[i] if seed[i] + step[i] <= box[i, 1] else -step[i]
            simplex.append(v)
        f0 = objective(seed)
        res = minimize(objective, seed, method="Nelder-Mead", bounds=list(map(tuple, box)),
                       options={"initial_simplex": simplex, "xatol": 1e-12, "fatol": rel_tol * max(f0, 1e-300),
                                "maxiter": 4000, "maxfev": 8000, "adaptive": False})
        n_eval += res.nfev
        iters += res.nit
        results.append((float(res.fun), np.asarray(res.x, dtype=float)))

    best = min(r for r, _ in results)
    if not best < (1 - 1e-3) * flat:
        raise NonIdentifiableError(
            f"fit residual {best:.6g} does not improve on the flat spectrum ({flat:.6g}); "
            "no dip inside the search bounds")
    equivalent = [(r, x) for r, x in results if r <= best * (1 + 1e-6) + 1e-15]
    # collapse duplicates converging to the same optimum
    distinct = []
    for r, x in equivalent:
        if not any(np.allclose(x, x2, rtol=0, atol=1e-6 * scale.max()) for _, x2 in distinct):
            distinct.append((r, x))
    if reference_f_larmor is not None and len(distinct) > 1:
        r, x = min(distinct, key=lambda rx: abs(rx[1][2] - reference_f_larmor))
        tie = f"f_larmor closest to reference {reference_f_larmor:.6g} MHz among {len(distinct)} aliases"
    else:
        r, x = min(distinct, key=lambda rx: rx[0])
        tie = "lowest residual"
    log.debug("fit: best residual %.3g (flat %.3g) from %d seeds", r, flat, len(seeds))
    return FitResult(float(x[0]), float(x[1]), float(x[2]), float(r), iters, flat, len(distinct), tie, n_eval)


def spectrum_with_noise(points, sigma: float, seed: int | None = None) -> list[SpectrumPoint]:
    """Add Gaussian noise of standard deviation ``sigma`` to a simulated spectrum."""
    rng = np.random.default_rng(seed)
    pts = list(points)
    noise = rng.normal(0.0, sigma, size=len(pts))
    return [SpectrumPoint(p.tau, float(p.signal + n), sigma if sigma > 0 else None) for p, n in zip(pts, noise)]
