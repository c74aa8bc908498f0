"""Nonlinear time-domain simulation of the four average models."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import models
from .config import MicrogridConfig, preset_config
from .models import ModelKind

DIVERGENCE_FACTOR = 1e6
INIT_SOURCES = ("cold-start", "equilibrium-perturbed", "explicit")

COMPLETED = "completed"
DIVERGED = "diverged"


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimOptions:
    t_end: float = 1.0
    rel_tol: float = 1e-6
    abs_tol: float = 1e-6
    max_step: float = np.inf
    init: str = "cold-start"
    sample_rate: float = 1000.0  # Hz

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2], got {v!r}")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.init not in INIT_SOURCES:
            raise ValueError(f"init must be one of {INIT_SOURCES}")
        if self.sample_rate < 1000.0:
            raise ValueError("sample_rate must be at least 1000 Hz")


@dataclass(frozen=True)
class Trajectory:
    kind: ModelKind
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n)
    cfg: MicrogridConfig
    status: str = COMPLETED
    message: str = ""
    _channels: dict = field(default_factory=dict, repr=False, compare=False)

    def _power(self):
        if "P" not in self._channels:
            P = np.empty((self.times.size, 2))
            for j, x in enumerate(self.states):
                P[j] = models.injected_powers(self.kind, x, self.cfg)[0]
            self._channels["P"] = P
        return self._channels["P"]

    @property
    def f_i(self):
        return self.states[:, 2] / (2.0 * np.pi)

    @property
    def f_k(self):
        return self.states[:, 3] / (2.0 * np.pi)

    @property
    def V_i(self):
        return self.states[:, 4]

    @property
    def V_k(self):
        return self.states[:, 5]

    @property
    def P_i(self):
        return self._power()[:, 0]

    @property
    def P_k(self):
        return self._power()[:, 1]

    @property
    def diverged(self) -> bool:
        return self.status == DIVERGED

    def channels(self) -> np.ndarray:
        """Columns t, f_i, f_k, V_i, V_k, P_i, P_k."""
        return np.column_stack([self.times, self.f_i, self.f_k, self.V_i, self.V_k, self.P_i, self.P_k])


def _nominal_scale(kind, cfg):
    """Per-state magnitude used for the divergence test (angles are excluded)."""
    scale = np.full(kind.n_states, max(inv.V_n for inv in cfg.inverters))
    scale[models.OMEGA] = [inv.omega_n for inv in cfg.inverters]
    scale[models.DELTA] = np.inf
    return scale


def simulate(kind, cfg: MicrogridConfig, x0, opts: SimOptions | None = None) -> Trajectory:
    """Integrate a model from ``x0`` with an adaptive RK4(5) scheme.

    Runs that blow up (state beyond 1e6 times nominal, step-size underflow or
    a non-finite state) end early with ``status == "diverged"``.
    """
    kind = ModelKind.parse(kind)
    opts = opts or SimOptions()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (kind.n_states,):
        raise ValueError(f"x0 must have shape ({kind.n_states},) for {kind.value}")
    f = models.rhs_function(kind)
    limit = DIVERGENCE_FACTOR * _nominal_scale(kind, cfg)

    def fun(t, y):
        if not np.all(np.isfinite(y)):
            return np.zeros_like(y)
        try:
            return f(y, cfg)
        except models.SingularMassMatrixError:
            return np.full_like(y, np.nan)

    def blowup(t, y):
        if not np.all(np.isfinite(y)):
            return -1.0
        return float(np.min(limit - np.abs(y)))
    blowup.terminal = True

    n = int(round(opts.t_end * opts.sample_rate))
    t_eval = np.linspace(0.0, opts.t_end, n + 1)
    with np.errstate(all="ignore"):
        sol = solve_ivp(fun, (0.0, opts.t_end), x0, method="RK45", t_eval=t_eval,
                        rtol=opts.rel_tol, atol=opts.abs_tol, max_step=opts.max_step,
                        events=blowup)
    times, states = sol.t, sol.y.T
    ok = np.all(np.isfinite(states), axis=1)
    if not ok.all():
        first = int(np.argmin(ok))
        times, states = times[:first], states[:first]
    status, message = COMPLETED, sol.message
    if sol.status == 1:
        status, message = DIVERGED, "state exceeded 1e6 x nominal"
    elif sol.status == -1:
        status, message = DIVERGED, f"integration stopped (probable finite-time blow-up): {sol.message}"
    elif not ok.all():
        status, message = DIVERGED, "non-finite state"
    return Trajectory(kind, times, states, cfg, status, message)


def scenario(preset: str, gains=(None, None)) -> tuple[MicrogridConfig, dict]:
    """Default configuration for a line preset plus the cold-start state of every model."""
    k_p, k_q = gains
    cfg = preset_config(preset, k_p, k_q)
    return cfg, {kind: models.cold_start(kind, cfg) for kind in models.ALL_KINDS}


def perturbed_start(eq, rel: float = 1e-3, seed: int = 0) -> np.ndarray:
    """Equilibrium state with a deterministic relative perturbation of size ``rel``."""
    rng = np.random.default_rng(seed)
    x = eq.x_star
    scale = np.maximum(np.abs(x), 1.0)
    return x + rel * scale * rng.uniform(-1.0, 1.0, x.size)


def invariant_channels(traj: Trajectory, eq) -> np.ndarray:
    """Normalized deviation from ``eq`` in rotation-invariant channels.

    Columns: omega_i, omega_k, V_i, V_k and delta_i - delta_k. A common drift
    of both angles (the neutral frame-rotation mode) does not show up here.
    """
    x = traj.states
    xs = eq.x_star
    return np.column_stack([
        (x[:, models.OMEGA] - xs[models.OMEGA]) / eq.omega0,
        (x[:, models.VOLT] - xs[models.VOLT]) / xs[models.VOLT],
        (x[:, 0] - x[:, 1]) - (xs[0] - xs[1]),
    ])


def invariant_deviation(traj: Trajectory, eq) -> np.ndarray:
    return np.linalg.norm(invariant_channels(traj, eq), axis=1)


def fit_dominant_rate(times, channels, t_start: float = 0.05, cap: float | None = None,
                      floor: float = 1e-7, max_samples: int = 400, delays: int = 16,
                      rank_tol: float = 1e-8) -> float:
    """Largest modal growth rate (1/s) visible in sampled multichannel data.

    Delay-embedded snapshots are fitted with a linear one-step map (matrix
    pencil / Hankel DMD); its eigenvalues give continuous-time poles and the
    real part of the pole contributing most at the end of the window is
    returned. Selecting by contribution rather than by real part keeps
    weakly excited harmonics (2 lambda, 3 lambda) of a growing mode out. Only samples after ``t_start`` whose
    deviation norm lies in ``[floor, cap]`` are used, so stiff start-up
    transients, the round-off floor and nonlinear saturation are excluded.
    """
    times = np.asarray(times, dtype=float)
    y = np.asarray(channels, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    dev = np.linalg.norm(y, axis=1)
    ok = times >= times[0] + t_start
    ok &= dev > floor * max(dev.max(), 1e-300)
    if cap is not None:
        # stop at the first sample above cap (keep a contiguous window)
        over = np.nonzero(ok & (dev > cap))[0]
        if over.size:
            ok[over[0]:] = False
    idx = np.nonzero(ok)[0]
    if idx.size < 3 * delays:
        raise SimulationError("too few samples in the fitting window")
    idx = idx[: np.argmax(np.diff(np.append(idx, -1)) != 1) + 1]  # contiguous run
    stride = max(1, idx.size // max_samples)
    idx = idx[::stride]
    if idx.size < 3 * delays:
        raise SimulationError("too few samples in the fitting window")
    dt = times[idx[1]] - times[idx[0]]
    z = y[idx] / np.abs(y[idx]).max(axis=0).clip(1e-300)
    n_snap = idx.size - delays + 1
    H = np.vstack([z[d:d + n_snap].T for d in range(delays)])
    H0, H1 = H[:, :-1], H[:, 1:]
    U, s, Vt = np.linalg.svd(H0, full_matrices=False)
    r = int(np.sum(s > rank_tol * s[0]))
    U, s, Vt = U[:, :r], s[:r], Vt[:r]
    At = U.T @ H1 @ Vt.T / s
    mu, W = np.linalg.eig(At)
    # contribution of each mode at the end of the window
    b = np.linalg.lstsq(W, U.T @ H0[:, 0], rcond=None)[0]
    weight = np.abs(b) * np.abs(mu) ** (n_snap - 1)
    lam = np.log(mu[np.argmax(weight)].astype(complex)) / dt
    return float(lam.real)


SETTLED = "settled"
UNDETERMINED = "undetermined"


def classify_response(traj: Trajectory, eq, settle_ratio: float = 0.1) -> str:
    """'settled', 'diverged' or 'undetermined' relative to the start deviation."""
    if traj.diverged:
        return DIVERGED
    dev = invariant_deviation(traj, eq)
    if dev[-1] < settle_ratio * dev[0]:
        return SETTLED
    if dev[-1] > dev[0]:
        return DIVERGED
    return UNDETERMINED
