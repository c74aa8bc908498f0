"""Small-signal models ``Gamma dx/dt = A x`` at an equilibrium.

The analytic path assembles Gamma and A block by block from closed-form
partial derivatives of the nonlinear equations. Droop rows are divided by the
droop gains (``tau/k_p`` on the mass diagonal, ``-1/k_p`` on the frequency
state) whenever the gains are positive, matching the usual presentation of
these models; with a zero gain the unscaled rows are kept. ``Gamma^-1 A`` is
the same either way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .config import MicrogridConfig
from .equilibrium import Equilibrium
from .frames import E, J
from .models import SIGNS, ModelKind

GAMMA_COND_LIMIT = 1e8


class SingularGammaError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LinearModel:
    gamma: np.ndarray
    a: np.ndarray
    state_labels: list
    kind: ModelKind
    equilibrium: Equilibrium

    @property
    def gamma_condition(self) -> float:
        return float(np.linalg.cond(self.gamma))

    def state_matrix(self) -> np.ndarray:
        """``Gamma^-1 A``."""
        return np.linalg.solve(self.gamma, self.a)


def _rot(d):
    return models._rot(d)


def _drot(d):
    return -J @ _rot(d)


# ---------------------------------------------------------------------------
# power gradients (rows: inverter i, inverter k; columns: state vector)

def _detailed_power_gradients(x):
    n = x.size
    dP, dQ = np.zeros((2, n)), np.zeros((2, n))
    I_ik = x[22:24]
    loads = models.load_slices(ModelKind.DETAILED)
    for r in range(2):
        T, dT = _rot(x[r]), _drot(x[r])
        vo = x[models.VO[r]]
        m = SIGNS[r] * I_ik + x[loads[r]]
        u, du = T @ vo, dT @ vo
        dP[r, r] = m @ du
        dQ[r, r] = m @ (J @ du)
        dP[r, models.VO[r]] = T.T @ m
        dQ[r, models.VO[r]] = (J @ T).T @ m
        dP[r, 22:24] = SIGNS[r] * u
        dQ[r, 22:24] = SIGNS[r] * (J @ u)
        dP[r, loads[r]] = u
        dQ[r, loads[r]] = J @ u
    return dP, dQ


def _source_terms(x, r):
    d, V = x[r], x[4 + r]
    c, s = math.cos(d), math.sin(d)
    u = np.array([V * c, V * s])
    du_dd = np.array([-V * s, V * c])
    du_dv = np.array([c, s])
    return u, du_dd, du_dv


def _load_power_gradients(x, kind, dP, dQ):
    loads = models.load_slices(kind)
    for r in range(2):
        u, du_dd, du_dv = _source_terms(x, r)
        Il = x[loads[r]]
        dP[r, r] += Il @ du_dd
        dQ[r, r] += Il @ (J @ du_dd)
        dP[r, 4 + r] += Il @ du_dv
        dQ[r, 4 + r] += Il @ (J @ du_dv)
        dP[r, loads[r]] += u
        dQ[r, loads[r]] += J @ u


def _em5_power_gradients(x):
    kind = ModelKind.EM5
    dP, dQ = np.zeros((2, kind.n_states)), np.zeros((2, kind.n_states))
    _load_power_gradients(x, kind, dP, dQ)
    I_ik = x[6:8]
    for r in range(2):
        u, du_dd, du_dv = _source_terms(x, r)
        m = SIGNS[r] * I_ik
        dP[r, r] += m @ du_dd
        dQ[r, r] += m @ (J @ du_dd)
        dP[r, 4 + r] += m @ du_dv
        dQ[r, 4 + r] += m @ (J @ du_dv)
        dP[r, 6:8] += SIGNS[r] * u
        dQ[r, 6:8] += SIGNS[r] * (J @ u)
    return dP, dQ


def static_flow_gradients(Va, Vb, d, G, B):
    """Partials of the a->b zero-order flow w.r.t. (delta_a, delta_b, V_a, V_b)."""
    cd, sd = math.cos(d), math.sin(d)
    p_da = G * Va * Vb * sd + B * Va * Vb * cd
    q_da = B * Va * Vb * sd - G * Va * Vb * cd
    p = (p_da, -p_da, 2 * G * Va - G * Vb * cd + B * Vb * sd, -G * Va * cd + B * Va * sd)
    q = (q_da, -q_da, 2 * B * Va - B * Vb * cd - G * Vb * sd, -B * Va * cd - G * Va * sd)
    return p, q


def _conv3_power_gradients(x, cfg):
    kind = ModelKind.CONV3
    dP, dQ = np.zeros((2, kind.n_states)), np.zeros((2, kind.n_states))
    _load_power_gradients(x, kind, dP, dQ)
    w0 = cfg.omega0
    G, B = cfg.line.conductance(w0), cfg.line.susceptance(w0)
    for r in range(2):
        o = 1 - r
        p, q = static_flow_gradients(x[4 + r], x[4 + o], x[r] - x[o], G, B)
        for j, col in enumerate((r, o, 4 + r, 4 + o)):
            dP[r, col] += p[j]
            dQ[r, col] += q[j]
    return dP, dQ


def power_gradients(kind, x, cfg: MicrogridConfig):
    """Analytic gradients of the injected (P, Q) w.r.t. the state.

    For the high-fidelity model these are the partials at frozen rates; the
    rate dependence is returned separately by :func:`hf3_rate_gradients`.
    """
    kind = ModelKind.parse(kind)
    x = np.asarray(x, dtype=float)
    if kind is ModelKind.DETAILED:
        return _detailed_power_gradients(x)
    if kind is ModelKind.EM5:
        return _em5_power_gradients(x)
    return _conv3_power_gradients(x, cfg)


def hf3_rate_gradients(x, cfg: MicrogridConfig, g1=None, b1=None):
    """d(P, Q)/d(ddelta_i, ddelta_k) and d(P, Q)/d(dV_i, dV_k) as 2x2 blocks."""
    ci, ck = models.hf3_taylor_terms(np.asarray(x, dtype=float), cfg, g1, b1)
    Pw = np.array([[ci.pda, ci.pdb], [ck.pdb, ck.pda]])
    Qw = np.array([[ci.qda, ci.qdb], [ck.qdb, ck.qda]])
    Pv = np.array([[ci.pVa, ci.pVb], [ck.pVb, ck.pVa]])
    Qv = np.array([[ci.qVa, ci.qVb], [ck.qVb, ck.qVa]])
    return Pw, Qw, Pv, Qv


# ---------------------------------------------------------------------------
# assembly

def _droop_rows(cfg, x, gamma, a, dP, dQ):
    for r, inv in enumerate(cfg.inverters):
        a[r, 2 + r] = 1.0
        gamma[r, r] = 1.0
        gamma[2 + r, 2 + r] = inv.tau
        gamma[4 + r, 4 + r] = inv.tau
        a[2 + r, :] = -inv.k_p * dP[r]
        a[2 + r, 2 + r] -= 1.0
        a[4 + r, :] = -inv.k_q * dQ[r]
        a[4 + r, 4 + r] -= 1.0


def _rl_block(R, L, w0):
    return -R * np.eye(2) + w0 * L * J


def _assemble_detailed(x, cfg):
    n = x.size
    gamma, a = np.zeros((n, n)), np.zeros((n, n))
    w0 = cfg.omega0
    dP, dQ = _detailed_power_gradients(x)
    _droop_rows(cfg, x, gamma, a, dP, dQ)
    I2 = np.eye(2)
    I_ik = x[22:24]
    LN = slice(22, 24)
    loads = models.load_slices(ModelKind.DETAILED)
    for r, inv in enumerate(cfg.inverters):
        PHI, GAM, IL, VO, LD = models.PHI[r], models.GAMMA[r], models.IL[r], models.VO[r], loads[r]
        w = x[2 + r]
        T, dT = _rot(x[r]), _drot(x[r])
        vo, il = x[VO], x[IL]
        m = SIGNS[r] * I_ik + x[LD]

        gamma[PHI, PHI] = I2
        a[PHI, 4 + r] = E
        a[PHI, VO] = -I2

        gamma[GAM, GAM] = I2
        a[GAM, 4 + r] = inv.K_PV * E
        a[GAM, VO] = -inv.K_PV * I2
        a[GAM, PHI] = inv.K_IV * I2
        a[GAM, IL] = -I2

        # feed-forward in the current controller doubles the filter's w L J term
        gamma[IL, IL] = inv.L_f * I2
        a[IL, 2 + r] = 2.0 * inv.L_f * (J @ il)
        a[IL, 4 + r] = inv.K_PC * inv.K_PV * E
        a[IL, PHI] = inv.K_PC * inv.K_IV * I2
        a[IL, GAM] = inv.K_IC * I2
        a[IL, IL] = 2.0 * w * inv.L_f * J - (inv.R_f + inv.K_PC) * I2
        a[IL, VO] = -(inv.K_PC * inv.K_PV + 1.0) * I2

        gamma[VO, VO] = inv.C_f * I2
        a[VO, 2 + r] = inv.C_f * (J @ vo)
        a[VO, VO] = w * inv.C_f * J
        a[VO, IL] = I2
        a[VO, r] = -(dT.T @ m)
        a[VO, LN] = -SIGNS[r] * T.T
        a[VO, LD] = -T.T

        load = cfg.loads[r]
        gamma[LD, LD] = load.L_l * I2
        a[LD, r] = dT @ vo
        a[LD, VO] = T
        a[LD, LD] = _rl_block(load.R_l, load.L_l, w0)

        a[LN, r] = SIGNS[r] * (dT @ vo)
        a[LN, VO] = SIGNS[r] * T
    gamma[LN, LN] = cfg.line.L_ik * I2
    a[LN, LN] = _rl_block(cfg.line.R_ik, cfg.line.L_ik, w0)
    return gamma, a


def _assemble_reduced(x, cfg, kind, taylor=None):
    n = x.size
    gamma, a = np.zeros((n, n)), np.zeros((n, n))
    w0 = cfg.omega0
    I2 = np.eye(2)
    dP, dQ = power_gradients(kind, x, cfg)
    _droop_rows(cfg, x, gamma, a, dP, dQ)
    loads = models.load_slices(kind)
    for r in range(2):
        _, du_dd, du_dv = _source_terms(x, r)
        LD = loads[r]
        load = cfg.loads[r]
        gamma[LD, LD] = load.L_l * I2
        a[LD, r] = du_dd
        a[LD, 4 + r] = du_dv
        a[LD, LD] = _rl_block(load.R_l, load.L_l, w0)
    if kind is ModelKind.EM5:
        LN = models.line_slice(kind)
        gamma[LN, LN] = cfg.line.L_ik * I2
        a[LN, LN] = _rl_block(cfg.line.R_ik, cfg.line.L_ik, w0)
        for r in range(2):
            _, du_dd, du_dv = _source_terms(x, r)
            a[LN, r] = SIGNS[r] * du_dd
            a[LN, 4 + r] = SIGNS[r] * du_dv
    elif kind is ModelKind.HF3:
        g1, b1 = taylor if taylor is not None else (None, None)
        Pw, Qw, Pv, Qv = hf3_rate_gradients(x, cfg, g1, b1)
        for r, inv in enumerate(cfg.inverters):
            # ddelta = omega - omega0 enters through the mass matrix
            gamma[2 + r, 0:2] += inv.k_p * Pw[r]
            gamma[2 + r, 4:6] += inv.k_p * Pv[r]
            gamma[4 + r, 0:2] += inv.k_q * Qw[r]
            gamma[4 + r, 4:6] += inv.k_q * Qv[r]
    return gamma, a


def _scale_droop_rows(cfg, gamma, a):
    gains = [inv.k_p for inv in cfg.inverters] + [inv.k_q for inv in cfg.inverters]
    if all(g > 0 for g in gains):
        s = np.ones(gamma.shape[0])
        s[2:6] = 1.0 / np.array(gains)
        gamma = s[:, None] * gamma
        a = s[:, None] * a
    return gamma, a


def linearize_analytic(kind, cfg: MicrogridConfig | None, eq: Equilibrium, *, taylor=None) -> LinearModel:
    """Assemble (Gamma, A) analytically at ``eq``.

    ``taylor=(G', B')`` overrides the high-fidelity line coefficients.
    """
    kind = ModelKind.parse(kind)
    if eq.kind is not kind:
        raise ValueError(f"equilibrium is for {eq.kind.value}, not {kind.value}")
    cfg = (cfg or eq.cfg).with_omega0(eq.omega0)
    x = np.asarray(eq.x_star, dtype=float)
    if kind is ModelKind.DETAILED:
        gamma, a = _assemble_detailed(x, cfg)
    else:
        gamma, a = _assemble_reduced(x, cfg, kind, taylor)
    gamma, a = _scale_droop_rows(cfg, gamma, a)
    cond = np.linalg.cond(gamma)
    if not np.isfinite(cond):
        raise SingularGammaError(f"singular mass matrix for {kind.value} (condition {cond:.3e})")
    return LinearModel(gamma, a, kind.labels, kind, eq)


def central_difference_jacobian(f, x, rel_step=None):
    """``J_ij = [f_i(x + h_j e_j) - f_i(x - h_j e_j)] / (2 h_j)``."""
    x = np.asarray(x, dtype=float)
    base = np.finfo(float).eps ** (1.0 / 3.0) if rel_step is None else rel_step
    n = x.size
    f0 = np.asarray(f(x))
    jac = np.empty((f0.size, n))
    for j in range(n):
        h = base * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return jac


def linearize_numeric(kind, cfg: MicrogridConfig | None, eq: Equilibrium, rel_step=None) -> np.ndarray:
    """Central-difference Jacobian of the explicit right-hand side at ``eq``."""
    kind = ModelKind.parse(kind)
    cfg = (cfg or eq.cfg).with_omega0(eq.omega0)
    f = models.rhs_function(kind)
    return central_difference_jacobian(lambda y: f(y, cfg), eq.x_star, rel_step)


def relative_frobenius(a, b) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
