"""Nonlinear dynamics of the four average models of the two-inverter microgrid.

All right-hand sides take a flat state vector laid out per :class:`ModelKind`
and return dx/dt. DQ quantities live in the synchronous frame rotating at
``cfg.omega0``; the line current ``I_ik`` flows from bus i to bus k, so bus k
sees ``-I_ik``.
"""
from __future__ import annotations

import enum
import math
from typing import NamedTuple

import numpy as np

from .config import LineParams, MicrogridConfig
from .frames import J

SIGNS = (1.0, -1.0)  # orientation of I_ik as seen from bus i and bus k


class SingularMassMatrixError(np.linalg.LinAlgError):
    def __init__(self, msg, cond=np.inf):
        super().__init__(msg)
        self.cond = cond


def _pair(name):
    return [f"{name}_d", f"{name}_q"]


_REDUCED_HEAD = ["delta_i", "delta_k", "omega_i", "omega_k", "V_i", "V_k"]

_LABELS = {
    "detailed": _REDUCED_HEAD
    + _pair("phi_i") + _pair("phi_k") + _pair("gamma_i") + _pair("gamma_k")
    + _pair("il_i") + _pair("il_k") + _pair("vo_i") + _pair("vo_k")
    + ["I_D_ik", "I_Q_ik", "I_D_li", "I_Q_li", "I_D_lk", "I_Q_lk"],
    "em5": _REDUCED_HEAD + ["I_D_ik", "I_Q_ik", "I_D_li", "I_Q_li", "I_D_lk", "I_Q_lk"],
    "conv3": _REDUCED_HEAD + ["I_D_li", "I_Q_li", "I_D_lk", "I_Q_lk"],
    "hf3": _REDUCED_HEAD + ["I_D_li", "I_Q_li", "I_D_lk", "I_Q_lk"],
}


class ModelKind(str, enum.Enum):
    DETAILED = "detailed"
    EM5 = "em5"
    CONV3 = "conv3"
    HF3 = "hf3"

    @property
    def labels(self) -> list[str]:
        return list(_LABELS[self.value])

    @property
    def n_states(self) -> int:
        return len(_LABELS[self.value])

    def index(self, label: str) -> int:
        return _LABELS[self.value].index(label)

    @classmethod
    def parse(cls, name) -> "ModelKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown model {name!r}; choose from {[k.value for k in cls]}") from None


ALL_KINDS = (ModelKind.DETAILED, ModelKind.EM5, ModelKind.CONV3, ModelKind.HF3)

# slices shared by all layouts
DELTA = slice(0, 2)
OMEGA = slice(2, 4)
VOLT = slice(4, 6)

# detailed layout
PHI = (slice(6, 8), slice(8, 10))
GAMMA = (slice(10, 12), slice(12, 14))
IL = (slice(14, 16), slice(16, 18))
VO = (slice(18, 20), slice(20, 22))


def line_slice(kind: ModelKind) -> slice | None:
    return {ModelKind.DETAILED: slice(22, 24), ModelKind.EM5: slice(6, 8)}.get(kind)


def load_slices(kind: ModelKind) -> tuple[slice, slice]:
    start = {ModelKind.DETAILED: 24, ModelKind.EM5: 8}.get(kind, 6)
    return slice(start, start + 2), slice(start + 2, start + 4)


class PowerPair(NamedTuple):
    P: float
    Q: float


class StaticFlow(NamedTuple):
    current: complex
    P_ik: float
    Q_ik: float
    P_ki: float
    Q_ki: float


def _check_dim(x, kind: ModelKind) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (kind.n_states,):
        raise ValueError(f"{kind.value} state must have shape ({kind.n_states},), got {x.shape}")
    return x


def _rot(delta):
    c, s = math.cos(delta), math.sin(delta)
    return np.array([[c, -s], [s, c]])


def bus_voltage_dq(delta: float, V: float) -> np.ndarray:
    """Voltage-source output ``rot(delta) e V`` in the synchronous frame."""
    return np.array([V * math.cos(delta), V * math.sin(delta)])


def load_power(delta: float, v, I_load) -> PowerPair:
    """Power drawn by an RL load.

    ``v`` is either the local dq output voltage (detailed model) or a scalar
    magnitude ``V`` for the voltage-source models, where ``v_odq = e V``.
    """
    if np.ndim(v) == 0:
        u = bus_voltage_dq(delta, float(v))
    else:
        u = _rot(delta) @ np.asarray(v, dtype=float)
    I = np.asarray(I_load, dtype=float)
    return PowerPair(float(I @ u), float(I @ (J @ u)))


def static_line_flow(delta_i, delta_k, V_i, V_k, line: LineParams, omega0: float) -> StaticFlow:
    """Quasi-stationary (zero-order) line current phasor and power flows."""
    z = complex(line.R_ik, omega0 * line.L_ik)
    current = (V_i * np.exp(1j * delta_i) - V_k * np.exp(1j * delta_k)) / z
    G, B = line.conductance(omega0), line.susceptance(omega0)
    p_ik, q_ik = _p0q0(V_i, V_k, delta_i - delta_k, G, B)
    p_ki, q_ki = _p0q0(V_k, V_i, delta_k - delta_i, G, B)
    return StaticFlow(complex(current), p_ik, q_ik, p_ki, q_ki)


def _p0q0(Va, Vb, d, G, B):
    cd, sd = math.cos(d), math.sin(d)
    p = G * Va * Va - G * Va * Vb * cd + B * Va * Vb * sd
    q = B * Va * Va - B * Va * Vb * cd - G * Va * Vb * sd
    return p, q


class TaylorCoefficients(NamedTuple):
    """Linear dependence of the a->b first-order flow on the rates of change.

    ``P1 = P0 + pVa*dVa + pVb*dVb + pda*ddelta_a + pdb*ddelta_b`` (same for Q).
    """
    pVa: float
    pVb: float
    pda: float
    pdb: float
    qVa: float
    qVb: float
    qda: float
    qdb: float


def taylor_coefficients(Va, Vb, d, G1, B1) -> TaylorCoefficients:
    cd, sd = math.cos(d), math.sin(d)
    return TaylorCoefficients(
        pVa=-G1 * Va,
        pVb=G1 * Va * cd - B1 * Va * sd,
        pda=-B1 * Va * Va,
        pdb=G1 * Va * Vb * sd + B1 * Va * Vb * cd,
        qVa=-B1 * Va,
        qVb=G1 * Va * sd + B1 * Va * cd,
        qda=G1 * Va * Va,
        qdb=-G1 * Va * Vb * cd + B1 * Va * Vb * sd,
    )


def taylor_line_power(delta_i, delta_k, V_i, V_k, ddelta_i, ddelta_k, dV_i, dV_k,
                      line: LineParams, omega0: float) -> PowerPair:
    """First-order (Taylor-corrected) i->k line power flow."""
    G, B = line.conductance(omega0), line.susceptance(omega0)
    G1, B1 = line.sub_conductance(omega0), line.sub_susceptance(omega0)
    d = delta_i - delta_k
    p0, q0 = _p0q0(V_i, V_k, d, G, B)
    c = taylor_coefficients(V_i, V_k, d, G1, B1)
    p = p0 + c.pVa * dV_i + c.pVb * dV_k + c.pda * ddelta_i + c.pdb * ddelta_k
    q = q0 + c.qVa * dV_i + c.qVb * dV_k + c.qda * ddelta_i + c.qdb * ddelta_k
    return PowerPair(p, q)


def _load_rhs(cfg: MicrogridConfig, I_l, u, r):
    load = cfg.loads[r]
    w0 = cfg.omega0
    # L dI/dt = (-R + w0 L J) I + u
    return np.array([
        -load.R_l * I_l[0] + w0 * load.L_l * I_l[1] + u[0],
        -load.R_l * I_l[1] - w0 * load.L_l * I_l[0] + u[1],
    ]) / load.L_l


def _droop_rhs(cfg, x, P, Q):
    out = np.empty(6)
    out[0:2] = x[OMEGA] - cfg.omega0
    for r, inv in enumerate(cfg.inverters):
        out[2 + r] = (-x[2 + r] + inv.omega_n - inv.k_p * P[r]) / inv.tau
        out[4 + r] = (-x[4 + r] + inv.V_n - inv.k_q * Q[r]) / inv.tau
    return out


# ---------------------------------------------------------------------------
# detailed average model

def detailed_output_currents(x, cfg: MicrogridConfig):
    """Local-frame inverter output currents ``i_odq`` for both inverters."""
    I_ik = x[22:24]
    li, lk = load_slices(ModelKind.DETAILED)
    loads = (x[li], x[lk])
    return [_rot(x[r]).T @ (SIGNS[r] * I_ik + loads[r]) for r in range(2)]


def detailed_powers(x, cfg: MicrogridConfig):
    """Injected (P, Q) per inverter, evaluated as ``i_o . v_o`` and ``i_o J v_o``."""
    x = _check_dim(x, ModelKind.DETAILED)
    io = detailed_output_currents(x, cfg)
    P = np.array([io[r] @ x[VO[r]] for r in range(2)])
    Q = np.array([io[r] @ (J @ x[VO[r]]) for r in range(2)])
    return P, Q


def detailed_powers_synchronous(x, cfg: MicrogridConfig):
    """Same powers evaluated from DQ currents: ``(I_ik + I_l)^T rot(delta) v_o``."""
    x = _check_dim(x, ModelKind.DETAILED)
    I_ik = x[22:24]
    li, lk = load_slices(ModelKind.DETAILED)
    loads = (x[li], x[lk])
    P, Q = np.empty(2), np.empty(2)
    for r in range(2):
        m = SIGNS[r] * I_ik + loads[r]
        u = _rot(x[r]) @ x[VO[r]]
        P[r], Q[r] = m @ u, m @ (J @ u)
    return P, Q


def detailed_rhs(x, cfg: MicrogridConfig) -> np.ndarray:
    # scalar arithmetic: this is the inner loop of every detailed simulation
    x = _check_dim(x, ModelKind.DETAILED)
    w0 = cfg.omega0
    dx = np.empty(28)
    Id, Iq = x[22], x[23]
    D = [0.0, 0.0]  # bus capacitor voltages in DQ
    Qv = [0.0, 0.0]
    for r, inv in enumerate(cfg.inverters):
        o = 6 + 2 * r
        phd, phq = x[o], x[o + 1]
        gd, gq = x[o + 4], x[o + 5]
        ild, ilq = x[o + 8], x[o + 9]
        vd, vq = x[o + 12], x[o + 13]
        ll = 24 + 2 * r
        ld, lq = x[ll], x[ll + 1]
        c, s = math.cos(x[r]), math.sin(x[r])
        sg = SIGNS[r]
        md, mq = sg * Id + ld, sg * Iq + lq
        # local-frame output current rot(delta)^T m
        iod, ioq = c * md + s * mq, -s * md + c * mq
        P = iod * vd + ioq * vq
        Q = iod * vq - ioq * vd
        w, V = x[2 + r], x[4 + r]
        ed, eq = V - vd, -vq
        ird = inv.K_PV * ed + inv.K_IV * phd
        irq = inv.K_PV * eq + inv.K_IV * phq
        wl = w * inv.L_f
        vcd = inv.K_PC * (ird - ild) + inv.K_IC * gd + wl * ilq
        vcq = inv.K_PC * (irq - ilq) + inv.K_IC * gq - wl * ild
        dx[o], dx[o + 1] = ed, eq
        dx[o + 4], dx[o + 5] = ird - ild, irq - ilq
        dx[o + 8] = (wl * ilq - inv.R_f * ild + vcd - vd) / inv.L_f
        dx[o + 9] = (-wl * ild - inv.R_f * ilq + vcq - vq) / inv.L_f
        wc = w * inv.C_f
        dx[o + 12] = (wc * vq + ild - iod) / inv.C_f
        dx[o + 13] = (-wc * vd + ilq - ioq) / inv.C_f
        ud, uq = c * vd - s * vq, s * vd + c * vq
        load = cfg.loads[r]
        dx[ll] = (-load.R_l * ld + w0 * load.L_l * lq + ud) / load.L_l
        dx[ll + 1] = (-load.R_l * lq - w0 * load.L_l * ld + uq) / load.L_l
        D[r] = (ud, uq)
        dx[r] = w - w0
        dx[2 + r] = (-w + inv.omega_n - inv.k_p * P) / inv.tau
        dx[4 + r] = (-V + inv.V_n - inv.k_q * Q) / inv.tau
    line = cfg.line
    dx[22] = (-line.R_ik * Id + w0 * line.L_ik * Iq + D[0][0] - D[1][0]) / line.L_ik
    dx[23] = (-line.R_ik * Iq - w0 * line.L_ik * Id + D[0][1] - D[1][1]) / line.L_ik
    return dx


# ---------------------------------------------------------------------------
# voltage-source reduced models

def _sources(x):
    return bus_voltage_dq(x[0], x[4]), bus_voltage_dq(x[1], x[5])


def _load_powers(x, u, kind):
    li, lk = load_slices(kind)
    I_l = (x[li], x[lk])
    P = np.array([I_l[r] @ u[r] for r in range(2)])
    Q = np.array([I_l[r] @ (J @ u[r]) for r in range(2)])
    return P, Q, I_l


def em5_powers(x, cfg: MicrogridConfig):
    x = _check_dim(x, ModelKind.EM5)
    u = _sources(x)
    P, Q, _ = _load_powers(x, u, ModelKind.EM5)
    I_ik = x[6:8]
    for r in range(2):
        P[r] += SIGNS[r] * (I_ik @ u[r])
        Q[r] += SIGNS[r] * (I_ik @ (J @ u[r]))
    return P, Q


def em5_rhs(x, cfg: MicrogridConfig) -> np.ndarray:
    x = _check_dim(x, ModelKind.EM5)
    u = _sources(x)
    P, Q, I_l = _load_powers(x, u, ModelKind.EM5)
    I_ik = x[6:8]
    for r in range(2):
        P[r] += SIGNS[r] * (I_ik @ u[r])
        Q[r] += SIGNS[r] * (I_ik @ (J @ u[r]))
    dx = np.empty_like(x)
    dx[0:6] = _droop_rhs(cfg, x, P, Q)
    line = cfg.line
    dx[6:8] = (-line.R_ik * I_ik + cfg.omega0 * line.L_ik * (J @ I_ik) + u[0] - u[1]) / line.L_ik
    dx[8:10] = _load_rhs(cfg, I_l[0], u[0], 0)
    dx[10:12] = _load_rhs(cfg, I_l[1], u[1], 1)
    return dx


def conv3_powers(x, cfg: MicrogridConfig):
    x = _check_dim(x, ModelKind.CONV3)
    u = _sources(x)
    P, Q, _ = _load_powers(x, u, ModelKind.CONV3)
    flow = static_line_flow(x[0], x[1], x[4], x[5], cfg.line, cfg.omega0)
    P += (flow.P_ik, flow.P_ki)
    Q += (flow.Q_ik, flow.Q_ki)
    return P, Q


def conv3_rhs(x, cfg: MicrogridConfig) -> np.ndarray:
    x = _check_dim(x, ModelKind.CONV3)
    u = _sources(x)
    P, Q, I_l = _load_powers(x, u, ModelKind.CONV3)
    flow = static_line_flow(x[0], x[1], x[4], x[5], cfg.line, cfg.omega0)
    P += (flow.P_ik, flow.P_ki)
    Q += (flow.Q_ik, flow.Q_ki)
    dx = np.empty_like(x)
    dx[0:6] = _droop_rhs(cfg, x, P, Q)
    dx[6:8] = _load_rhs(cfg, I_l[0], u[0], 0)
    dx[8:10] = _load_rhs(cfg, I_l[1], u[1], 1)
    return dx


def hf3_taylor_terms(x, cfg: MicrogridConfig, g1=None, b1=None):
    """Per-bus Taylor coefficient sets, oriented for the bus-i and bus-k flows.

    Returns ``(c_i, c_k)`` where ``c_i`` describes P1_ik in terms of
    (V_i, V_k, delta_i, delta_k) rates and ``c_k`` describes P1_ki in terms of
    (V_k, V_i, delta_k, delta_i) rates.
    """
    w0 = cfg.omega0
    G1 = cfg.line.sub_conductance(w0) if g1 is None else g1
    B1 = cfg.line.sub_susceptance(w0) if b1 is None else b1
    d = x[0] - x[1]
    return (taylor_coefficients(x[4], x[5], d, G1, B1),
            taylor_coefficients(x[5], x[4], -d, G1, B1))


def hf3_mass_system(x, cfg: MicrogridConfig, g1=None, b1=None):
    """Voltage-rate mass matrix ``M`` and rhs ``b`` with ``M @ dV = b``.

    Also returns the powers' rate-independent parts so callers can finish the
    evaluation once ``dV`` is known.
    """
    u = _sources(x)
    P, Q, I_l = _load_powers(x, u, ModelKind.HF3)
    flow = static_line_flow(x[0], x[1], x[4], x[5], cfg.line, cfg.omega0)
    P += (flow.P_ik, flow.P_ki)
    Q += (flow.Q_ik, flow.Q_ki)
    ci, ck = hf3_taylor_terms(x, cfg, g1, b1)
    dd = x[OMEGA] - cfg.omega0
    # rate-of-angle contributions are explicit
    P += (ci.pda * dd[0] + ci.pdb * dd[1], ck.pda * dd[1] + ck.pdb * dd[0])
    Q += (ci.qda * dd[0] + ci.qdb * dd[1], ck.qda * dd[1] + ck.qdb * dd[0])
    CQ = np.array([[ci.qVa, ci.qVb], [ck.qVb, ck.qVa]])
    CP = np.array([[ci.pVa, ci.pVb], [ck.pVb, ck.pVa]])
    inv = cfg.inverters
    tau = np.array([inv[0].tau, inv[1].tau])
    kq = np.array([inv[0].k_q, inv[1].k_q])
    Vn = np.array([inv[0].V_n, inv[1].V_n])
    M = np.diag(tau) + kq[:, None] * CQ
    b = -x[VOLT] + Vn - kq * Q
    return M, b, P, Q, CP, CQ, I_l, u


def hf3_rhs(x, cfg: MicrogridConfig, g1=None, b1=None) -> np.ndarray:
    """High-fidelity third-order dynamics in explicit form.

    The Taylor-corrected flows depend on dV/dt, so the voltage equations form a
    2x2 linear system that is solved at every evaluation. ``g1``/``b1``
    override the line's G' and B' (``0, 0`` recovers the conventional model).
    """
    x = _check_dim(x, ModelKind.HF3)
    M, b, P, Q, CP, _, I_l, u = hf3_mass_system(x, cfg, g1, b1)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    scale = abs(M[0, 0] * M[1, 1]) + abs(M[0, 1] * M[1, 0])
    if scale == 0.0 or abs(det) <= 1e-12 * scale:
        raise SingularMassMatrixError(
            "high-fidelity mass matrix is singular; Taylor line model breaks down",
            cond=float(np.linalg.cond(M)),
        )
    dV = np.array([M[1, 1] * b[0] - M[0, 1] * b[1], M[0, 0] * b[1] - M[1, 0] * b[0]]) / det
    P = P + CP @ dV
    dx = np.empty_like(x)
    dx[0:2] = x[OMEGA] - cfg.omega0
    for r, inv in enumerate(cfg.inverters):
        dx[2 + r] = (-x[2 + r] + inv.omega_n - inv.k_p * P[r]) / inv.tau
    dx[4:6] = dV
    dx[6:8] = _load_rhs(cfg, I_l[0], u[0], 0)
    dx[8:10] = _load_rhs(cfg, I_l[1], u[1], 1)
    return dx


def hf3_powers(x, cfg: MicrogridConfig):
    x = _check_dim(x, ModelKind.HF3)
    dx = hf3_rhs(x, cfg)
    M, b, P, Q, CP, CQ, _, _ = hf3_mass_system(x, cfg)
    return P + CP @ dx[4:6], Q + CQ @ dx[4:6]


_RHS = {
    ModelKind.DETAILED: detailed_rhs,
    ModelKind.EM5: em5_rhs,
    ModelKind.CONV3: conv3_rhs,
    ModelKind.HF3: hf3_rhs,
}

_POWERS = {
    ModelKind.DETAILED: detailed_powers,
    ModelKind.EM5: em5_powers,
    ModelKind.CONV3: conv3_powers,
    ModelKind.HF3: hf3_powers,
}


def rhs(kind, x, cfg: MicrogridConfig) -> np.ndarray:
    return _RHS[ModelKind.parse(kind)](x, cfg)


def rhs_function(kind):
    return _RHS[ModelKind.parse(kind)]


def injected_powers(kind, x, cfg: MicrogridConfig):
    """(P, Q) arrays ``[inverter i, inverter k]`` seen by the droop controllers."""
    return _POWERS[ModelKind.parse(kind)](x, cfg)


def cold_start(kind, cfg: MicrogridConfig) -> np.ndarray:
    """delta = 0, omega = omega_n, V = V_n and zero currents.

    In the detailed model the capacitor voltage also starts at ``e V_n``.
    """
    kind = ModelKind.parse(kind)
    x = np.zeros(kind.n_states)
    for r, inv in enumerate(cfg.inverters):
        x[2 + r] = inv.omega_n
        x[4 + r] = inv.V_n
        if kind is ModelKind.DETAILED:
            x[VO[r].start] = inv.V_n
    return x


def rotational_mode(kind, x) -> np.ndarray:
    """Tangent of the equilibrium family generated by a common angle shift.

    Shifting both deltas by c and rotating every synchronous-frame current by
    rot(c) maps solutions to solutions, so this vector spans a structural
    null direction of every linearization.
    """
    kind = ModelKind.parse(kind)
    x = np.asarray(x, dtype=float)
    v = np.zeros(kind.n_states)
    v[0:2] = 1.0
    sl = [line_slice(kind), *load_slices(kind)]
    for s in sl:
        if s is not None:
            v[s] = -J @ x[s]
    return v
