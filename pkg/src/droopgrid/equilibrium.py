"""Steady operating points, with the synchronous frequency solved as an unknown."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import models
from .config import MicrogridConfig
from .frames import J
from .models import ModelKind

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
ACCEPT_TOL = 1e-8
MAX_ITER = 100


class EquilibriumError(RuntimeError):
    def __init__(self, msg, best_residual=np.inf, x=None):
        super().__init__(f"{msg} (best residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.x = x


@dataclass(frozen=True)
class Equilibrium:
    kind: ModelKind
    x_star: np.ndarray
    omega0: float
    residual_norm: float
    cfg: MicrogridConfig  # copy of the input config with omega0 set to the solution
    angle_reference: str = "delta_i"
    iterations: int = 0

    def __getitem__(self, label: str) -> float:
        return float(self.x_star[self.kind.index(label)])


def _pack(x, omega0):
    z = np.array(x, dtype=float)
    z[0] = omega0
    return z


def _unpack(z):
    x = np.array(z, dtype=float)
    omega0 = x[0]
    x[0] = 0.0
    return x, omega0


def _residual(f, z, cfg):
    x, w0 = _unpack(z)
    if not (np.isfinite(w0) and w0 > 0):
        # trial step left the physical range; the line search rejects it
        return np.full(z.size, np.inf)
    return f(x, cfg.with_omega0(w0))


def _fd_jacobian(f, z, cfg, f0):
    n = z.size
    jac = np.empty((n, n))
    eps = np.sqrt(np.finfo(float).eps)
    for j in range(n):
        h = eps * (1.0 + abs(z[j]))
        zp = z.copy()
        zp[j] += h
        jac[:, j] = (_residual(f, zp, cfg) - f0) / h
    return jac


def newton(f, z0, cfg, tol=NEWTON_TOL, max_iter=MAX_ITER):
    """Damped Newton on the pinned system. Returns (z, residual_inf, iterations)."""
    z = np.array(z0, dtype=float)
    try:
        r = _residual(f, z, cfg)
    except np.linalg.LinAlgError:
        return z, np.inf, 0
    if not np.all(np.isfinite(r)):
        return z, np.inf, 0
    norm = np.linalg.norm(r, np.inf)
    best = (z, norm)
    it = 0
    for it in range(1, max_iter + 1):
        if norm < tol:
            break
        jac = _fd_jacobian(f, z, cfg, r)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        lam = 1.0
        improved = False
        while lam > 1e-6:
            zt = z + lam * step
            try:
                rt = _residual(f, zt, cfg)
            except np.linalg.LinAlgError:
                rt = None
            if rt is not None and np.all(np.isfinite(rt)):
                nt = np.linalg.norm(rt, np.inf)
                if nt < norm or (lam == 1.0 and nt < 1.5 * norm and norm > 1.0):
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            break
        z, r, norm = zt, rt, nt
        if norm < best[1]:
            best = (z, norm)
        # roundoff floor: steps no longer move the iterate
        if norm < ACCEPT_TOL and np.linalg.norm(lam * step, np.inf) <= 1e-13 * (1 + np.linalg.norm(z, np.inf)):
            break
    z, norm = best
    return z, norm, it


def _reframe(kind, x, omega0):
    """Rotate a state so that delta_i = 0 (synchronous states rotate with it)."""
    x = np.array(x, dtype=float)
    shift = x[0]
    rot = models._rot(-shift)
    x[0:2] -= shift
    for s in (models.line_slice(kind), *models.load_slices(kind)):
        if s is not None:
            x[s] = rot @ x[s]
    return x


def settle_by_simulation(kind, cfg, x0, t_chunk=0.5, max_chunks=40, tol=1e-6):
    """Integrate until the (re-framed) state derivative is below ``tol``."""
    kind = ModelKind.parse(kind)
    f = models.rhs_function(kind)
    x = np.array(x0, dtype=float)
    w0 = cfg.omega0
    for _ in range(max_chunks):
        c = cfg.with_omega0(w0)
        try:
            with np.errstate(all="ignore"):
                sol = solve_ivp(lambda t, y: f(y, c), (0.0, t_chunk), x, method="LSODA",
                                rtol=1e-8, atol=1e-8)
        except (ValueError, OverflowError, np.linalg.LinAlgError) as exc:
            raise EquilibriumError(f"fallback integration failed: {exc}", x=x) from None
        if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
            raise EquilibriumError("fallback integration failed", x=x)
        x = sol.y[:, -1]
        w0 = float(np.mean(x[models.OMEGA]))
        x = _reframe(kind, x, w0)
        if np.any(x[models.VOLT] <= 0) or w0 <= 0:
            raise EquilibriumError("fallback integration collapsed voltage or frequency", x=x)
        if np.linalg.norm(f(x, cfg.with_omega0(w0)), np.inf) < tol:
            break
    return x, w0


def lift_to_detailed(eq5: "Equilibrium") -> np.ndarray:
    """Detailed-model steady state consistent with an EM 5th-order equilibrium."""
    cfg = eq5.cfg
    w0 = eq5.omega0
    x5 = eq5.x_star
    x = np.zeros(ModelKind.DETAILED.n_states)
    x[0:6] = x5[0:6]
    x[22:28] = x5[6:12]
    li, lk = models.load_slices(ModelKind.DETAILED)
    loads = (x[li], x[lk])
    for r, inv in enumerate(cfg.inverters):
        vo = np.array([x[4 + r], 0.0])
        io = models._rot(x[r]).T @ (models.SIGNS[r] * x[22:24] + loads[r])
        il = io - w0 * inv.C_f * (J @ vo)
        x[models.VO[r]] = vo
        x[models.IL[r]] = il
        x[models.PHI[r]] = il / inv.K_IV
        x[models.GAMMA[r]] = (vo + inv.R_f * il - 2.0 * w0 * inv.L_f * (J @ il)) / inv.K_IC
    return x


def find_equilibrium(kind, cfg: MicrogridConfig, guess=None, *, allow_fallback=True) -> Equilibrium:
    """Solve f(x) = 0 with delta_i pinned to zero and omega0 as an unknown.

    ``guess`` may be a state vector or an :class:`Equilibrium` (warm start);
    the default is the cold start (nominal frequency/voltage, zero currents).
    """
    kind = ModelKind.parse(kind)
    f = models.rhs_function(kind)
    if isinstance(guess, Equilibrium):
        x0, w0 = guess.x_star, guess.omega0
    elif guess is None:
        x0, w0 = models.cold_start(kind, cfg), cfg.inverter_i.omega_n
    else:
        x0 = np.asarray(guess, dtype=float)
        if x0.shape != (kind.n_states,):
            raise ValueError(f"guess must have shape ({kind.n_states},)")
        w0 = float(np.mean(x0[models.OMEGA]))
    x0 = _reframe(kind, x0, w0)

    z, norm, its = newton(f, _pack(x0, w0), cfg)
    best = (z, norm)
    if norm >= ACCEPT_TOL and kind is ModelKind.DETAILED and not isinstance(guess, Equilibrium):
        try:
            seed = lift_to_detailed(find_equilibrium(ModelKind.EM5, cfg, allow_fallback=allow_fallback))
            z2, n2, its = newton(f, _pack(seed, float(np.mean(seed[models.OMEGA]))), cfg)
            if n2 < best[1]:
                best = (z2, n2)
        except EquilibriumError:
            pass
    if best[1] >= ACCEPT_TOL and allow_fallback:
        log.info("Newton stalled for %s (residual %.2e); integrating", kind.value, best[1])
        try:
            xs, ws = settle_by_simulation(kind, cfg.with_omega0(w0), x0)
            z3, n3, its = newton(f, _pack(xs, ws), cfg)
            if n3 < best[1]:
                best = (z3, n3)
        except EquilibriumError:
            pass
    z, norm = best
    x, w0 = _unpack(z)
    if norm >= ACCEPT_TOL:
        raise EquilibriumError(f"no {kind.value} equilibrium found", norm, x)
    if np.any(x[models.VOLT] <= 0) or w0 <= 0:
        raise EquilibriumError("converged to a nonphysical point (V <= 0)", norm, x)
    return Equilibrium(kind, x, float(w0), float(norm), cfg.with_omega0(w0), iterations=its)
