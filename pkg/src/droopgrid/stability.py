"""Eigenvalue analysis, eigenloci sweeps and droop-gain stability boundaries."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import models
from .config import MicrogridConfig
from .equilibrium import Equilibrium, EquilibriumError, find_equilibrium
from .linearize import GAMMA_COND_LIMIT, linearize_analytic
from .models import ModelKind

log = logging.getLogger(__name__)

EPS_MARGIN = 1e-6
DEFAULT_BRACKET = (1e-5, 1e-1)
DEFAULT_KQ = 1.5e-4


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenSet:
    """Spectrum of a linearized model.

    ``eigenvalues`` holds all n eigenvalues; the last entry is the exact zero
    produced by the common-angle (frame rotation) symmetry and is excluded
    from ``spectral_abscissa``.
    """
    eigenvalues: np.ndarray
    spectral_abscissa: float
    kind: ModelKind
    gains: tuple
    equilibrium: Equilibrium | None = None
    deflation_residual: float = 0.0

    @property
    def nontrivial(self) -> np.ndarray:
        return self.eigenvalues[:-1]

    def is_stable(self, margin: float = EPS_MARGIN) -> bool:
        return self.spectral_abscissa < -margin


def _householder(v):
    """Orthogonal symmetric H with H @ e1 parallel to v."""
    v = v / np.linalg.norm(v)
    e1 = np.zeros_like(v)
    e1[0] = 1.0
    w = v + np.copysign(1.0, v[0]) * e1
    return np.eye(v.size) - 2.0 * np.outer(w, w) / (w @ w)


def deflated_eigenvalues(gamma, a, null_vec):
    """Eigenvalues of the pencil (A, Gamma) with the known null direction removed.

    Returns ``(eigs, residual)``, where ``residual`` measures how far
    ``null_vec`` is from an exact null vector of ``Gamma^-1 A``.
    """
    Q = _householder(null_vec)
    cond = np.linalg.cond(gamma)
    if cond <= GAMMA_COND_LIMIT:
        M = np.linalg.solve(gamma, a)
        B = Q @ M @ Q
        scale = max(np.linalg.norm(M), 1.0)
        resid = np.linalg.norm(B[1:, 0]) / scale
        eigs = np.linalg.eigvals(B[1:, 1:])
    else:
        # left transform maps Gamma @ v to e1 so both pencils stay block triangular
        Z = _householder(gamma @ null_vec)
        Ab, Gb = Z @ a @ Q, Z @ gamma @ Q
        resid = np.linalg.norm(Ab[:, 0]) / max(np.linalg.norm(a), 1.0)
        eigs = scipy.linalg.eigvals(Ab[1:, 1:], Gb[1:, 1:])
    if not np.all(np.isfinite(eigs)):
        raise EigenSolverError("eigensolver returned non-finite eigenvalues")
    return eigs, float(resid)


def _sort(eigs):
    return eigs[np.lexsort((eigs.imag, -eigs.real))]


def eigen(kind, cfg: MicrogridConfig | None, eq: Equilibrium) -> EigenSet:
    kind = ModelKind.parse(kind)
    lin = linearize_analytic(kind, cfg, eq)
    null = models.rotational_mode(kind, eq.x_star)
    eigs, resid = deflated_eigenvalues(lin.gamma, lin.a, null)
    eigs = _sort(eigs)
    c = eq.cfg
    return EigenSet(
        eigenvalues=np.append(eigs, 0.0 + 0.0j),
        spectral_abscissa=float(eigs.real.max()),
        kind=kind,
        gains=(c.inverter_i.k_p, c.inverter_i.k_q),
        equilibrium=eq,
        deflation_residual=resid,
    )


def analyze(kind, cfg: MicrogridConfig, guess=None) -> EigenSet:
    """Equilibrium plus spectrum in one call."""
    eq = find_equilibrium(kind, cfg, guess)
    return eigen(kind, cfg, eq)


class Eigenloci(list):
    """List of :class:`EigenSet` along a k_p sweep.

    ``truncated_at`` is the first k_p whose equilibrium could not be found
    (the sweep stops there) and ``reason`` the solver message.
    """
    truncated_at: float | None = None
    reason: str | None = None


def eigenloci_sweep(kind, cfg_base: MicrogridConfig, k_p_range, n_steps: int,
                    k_q_fixed: float = DEFAULT_KQ, spacing: str = "linear") -> Eigenloci:
    lo, hi = map(float, k_p_range)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if n_steps > 1 and not lo < hi:
        raise ValueError("k_p range must satisfy lo < hi")
    if n_steps == 1:
        grid = np.array([lo])
    elif spacing == "log":
        grid = np.geomspace(lo, hi, n_steps)
    else:
        grid = np.linspace(lo, hi, n_steps)
    out = Eigenloci()
    prev = None
    for kp in grid:
        cfg = cfg_base.with_gains(kp, k_q_fixed)
        try:
            eq = find_equilibrium(kind, cfg, prev, allow_fallback=prev is None)
        except EquilibriumError as exc:
            out.truncated_at, out.reason = float(kp), str(exc)
            log.warning("eigenloci sweep truncated at k_p=%.3e: %s", kp, exc)
            break
        out.append(eigen(kind, cfg, eq))
        prev = eq
    return out


# ---------------------------------------------------------------------------
# stability boundary

CROSSING = "crossing"
UNBOUNDED = "unbounded"
EQUILIBRIUM_LOSS = "equilibrium_loss"
UNSTABLE_AT_LOWER = "unstable_at_lower"


@dataclass(frozen=True)
class BoundaryPoint:
    k_q: float
    k_p_crit: float  # nan unless status is CROSSING or EQUILIBRIUM_LOSS
    status: str
    k_p_stable: float = float("nan")  # largest k_p verified stable
    k_p_unstable: float = float("nan")  # smallest k_p verified unstable/lost
    evaluations: int = 0


@dataclass(frozen=True)
class StabilityBoundary:
    points: list
    kind: ModelKind
    rx_preset: str | None
    bisection_tolerance: float
    k_p_bracket: tuple = field(default=DEFAULT_BRACKET)

    @property
    def k_q(self) -> np.ndarray:
        return np.array([p.k_q for p in self.points])

    @property
    def k_p_crit(self) -> np.ndarray:
        return np.array([p.k_p_crit for p in self.points])


def _evaluate(kind, cfg, guess, margin):
    """(stable?, equilibrium) or (None, None) when the equilibrium is lost.

    With a warm start only Newton is tried: failing to continue the branch
    is what "equilibrium loss" means here.
    """
    try:
        eq = find_equilibrium(kind, cfg, guess, allow_fallback=guess is None)
    except EquilibriumError:
        return None, None
    es = eigen(kind, cfg, eq)
    return es.spectral_abscissa < -margin, eq


def critical_gain(kind, cfg_base: MicrogridConfig, k_q: float, k_p_bracket=DEFAULT_BRACKET,
                  rel_tol: float = 1e-3, margin: float = EPS_MARGIN, scan_ratio: float = 1.25) -> BoundaryPoint:
    """Smallest k_p (for fixed k_q) at which the model loses stability.

    The equilibrium is continued upward from the bracket's lower end on a
    geometric scan, then the first stable/unstable interval is bisected
    until its width is below ``rel_tol`` times its upper end.
    """
    kind = ModelKind.parse(kind)
    lo, hi = map(float, k_p_bracket)
    n_eval = 1
    stable, eq = _evaluate(kind, cfg_base.with_gains(lo, k_q), None, margin)
    if not stable:
        return BoundaryPoint(k_q, float("nan"), UNSTABLE_AT_LOWER, k_p_unstable=lo, evaluations=n_eval)

    k_s, eq_s = lo, eq
    k_u = None
    lost = False
    k = lo
    while k < hi:
        k = min(k * scan_ratio, hi)
        n_eval += 1
        stable, eq = _evaluate(kind, cfg_base.with_gains(k, k_q), eq_s, margin)
        if stable:
            k_s, eq_s = k, eq
        else:
            k_u, lost = k, stable is None
            break
    if k_u is None:
        return BoundaryPoint(k_q, float("nan"), UNBOUNDED, k_p_stable=k_s, evaluations=n_eval)

    while k_u - k_s > rel_tol * k_u:
        mid = 0.5 * (k_s + k_u)
        n_eval += 1
        stable, eq = _evaluate(kind, cfg_base.with_gains(mid, k_q), eq_s, margin)
        if stable:
            k_s, eq_s = mid, eq
        else:
            k_u, lost = mid, stable is None
    status = EQUILIBRIUM_LOSS if lost else CROSSING
    return BoundaryPoint(k_q, 0.5 * (k_s + k_u), status, k_s, k_u, n_eval)


def _row(args):
    return critical_gain(*args)


def stability_boundary(kind, cfg_base: MicrogridConfig, k_q_grid, k_p_bracket=DEFAULT_BRACKET,
                       rel_tol: float = 1e-3, margin: float = EPS_MARGIN,
                       rx_preset: str | None = None, workers: int | None = None) -> StabilityBoundary:
    """Critical k_p along a k_q grid (equal gains on both inverters).

    Rows are independent, so ``workers > 1`` evaluates them in parallel.
    """
    kind = ModelKind.parse(kind)
    grid = np.sort(np.asarray(k_q_grid, dtype=float))
    jobs = [(kind, cfg_base, float(kq), tuple(k_p_bracket), rel_tol, margin) for kq in grid]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_row, jobs))
    else:
        points = [_row(j) for j in jobs]
    return StabilityBoundary(points, kind, rx_preset, rel_tol, tuple(k_p_bracket))


# ---------------------------------------------------------------------------
# reduced-model verdicts against the detailed boundary

DEFAULT_KQ_GRID = tuple(np.geomspace(1.5e-5, 1.5e-3, 9))

GOOD = "Good"
ACCEPTABLE = "Acceptable"
UNACCEPTABLE = "Unacceptable"


def effective_critical(point: BoundaryPoint) -> float:
    """k_p_crit with unbounded -> inf and unstable-at-lower -> 0."""
    if point.status == UNBOUNDED:
        return np.inf
    if point.status == UNSTABLE_AT_LOWER:
        return 0.0
    return point.k_p_crit


def relative_excess(reference: StabilityBoundary, candidate: StabilityBoundary) -> np.ndarray:
    """Per-k_q relative amount by which ``candidate`` extends past ``reference``."""
    if not np.array_equal(reference.k_q, candidate.k_q):
        raise ValueError("boundaries must share the k_q grid")
    out = np.empty(len(reference.points))
    for j, (p_ref, p_can) in enumerate(zip(reference.points, candidate.points)):
        r, c = effective_critical(p_ref), effective_critical(p_can)
        if c <= r:  # includes inf/inf and 0/0
            out[j] = 0.0 if c == r else c / r - 1.0
        elif r == 0.0 or np.isinf(c):
            out[j] = np.inf
        else:
            out[j] = c / r - 1.0
    return out


@dataclass(frozen=True)
class Verdict:
    kind: ModelKind
    label: str
    excess: np.ndarray
    n_exceed: int
    n_points: int


def classify(reference: StabilityBoundary, candidate: StabilityBoundary,
             max_excess: float = 0.10, max_fraction: float = 0.5, slack: float | None = None) -> Verdict:
    """Good / Acceptable / Unacceptable verdict for a reduced model.

    Good: never extends past the reference. Acceptable: extends past it on
    fewer than ``max_fraction`` of the grid points, each time by less than
    ``max_excess``. Unacceptable otherwise. Excesses below ``slack``
    (default: twice the bisection tolerance) count as agreement.
    """
    if slack is None:
        slack = 2.0 * max(reference.bisection_tolerance, candidate.bisection_tolerance)
    excess = relative_excess(reference, candidate)
    over = excess > slack
    n = int(over.sum())
    if n == 0:
        label = GOOD
    elif n < max_fraction * excess.size and np.all(excess[over] < max_excess):
        label = ACCEPTABLE
    else:
        label = UNACCEPTABLE
    return Verdict(candidate.kind, label, excess, n, excess.size)


@dataclass(frozen=True)
class Comparison:
    boundaries: dict  # ModelKind -> StabilityBoundary
    verdicts: dict  # reduced ModelKind -> Verdict
    rx_preset: str | None


def compare_models(cfg_base: MicrogridConfig, k_q_grid=DEFAULT_KQ_GRID, k_p_bracket=DEFAULT_BRACKET,
                   rel_tol: float = 1e-3, max_excess: float = 0.10, max_fraction: float = 0.5,
                   rx_preset: str | None = None, workers: int | None = None) -> Comparison:
    bounds = {kind: stability_boundary(kind, cfg_base, k_q_grid, k_p_bracket, rel_tol,
                                       rx_preset=rx_preset, workers=workers)
              for kind in models.ALL_KINDS}
    ref = bounds[ModelKind.DETAILED]
    verdicts = {kind: classify(ref, bounds[kind], max_excess, max_fraction)
                for kind in models.ALL_KINDS if kind is not ModelKind.DETAILED}
    return Comparison(bounds, verdicts, rx_preset)
