import numpy as np
import pytest

from droopgrid import models
from droopgrid.config import preset_config
from droopgrid.equilibrium import (
    Equilibrium, EquilibriumError, find_equilibrium, lift_to_detailed, settle_by_simulation,
)
from droopgrid.models import ModelKind

from conftest import KINDS, PRESETS


@pytest.mark.parametrize("kind", KINDS)
def test_zero_gains_give_nominal_point(kind):
    eq = find_equilibrium(kind, preset_config("rx-eq1", 0.0, 0.0))
    inv = eq.cfg.inverter_i
    assert eq.omega0 == pytest.approx(inv.omega_n, abs=1e-9)
    assert eq["V_i"] == pytest.approx(inv.V_n, abs=1e-8)
    assert eq["V_k"] == pytest.approx(inv.V_n, abs=1e-8)


@pytest.mark.parametrize("preset", PRESETS)
@pytest.mark.parametrize("kind", KINDS)
def test_equilibrium_invariants(equilibrium_of, preset, kind):
    eq = equilibrium_of(preset, kind)
    assert eq.residual_norm < 1e-8
    assert eq["delta_i"] == 0.0 and eq.angle_reference == "delta_i"
    assert abs(eq["omega_i"] - eq.omega0) < 1e-9 and abs(eq["omega_k"] - eq.omega0) < 1e-9
    assert np.linalg.norm(models.rhs(kind, eq.x_star, eq.cfg), np.inf) < 1e-8
    P, Q = models.injected_powers(kind, eq.x_star, eq.cfg)
    for r, inv in enumerate(eq.cfg.inverters):
        assert eq.omega0 == pytest.approx(inv.omega_n - inv.k_p * P[r], rel=1e-8)
        assert eq.x_star[4 + r] == pytest.approx(inv.V_n - inv.k_q * Q[r], rel=1e-8)
    assert P[0] == pytest.approx(P[1], rel=1e-6)


@pytest.mark.parametrize("preset", PRESETS)
def test_detailed_and_em5_coincide(equilibrium_of, preset):
    d, e = equilibrium_of(preset, "detailed"), equilibrium_of(preset, "em5")
    assert d.omega0 == pytest.approx(e.omega0, rel=1e-6)
    shared = np.r_[d.x_star[0:6], d.x_star[22:28]]
    np.testing.assert_allclose(shared, e.x_star, rtol=1e-6, atol=1e-6 * np.abs(e.x_star).max())


@pytest.mark.parametrize("preset", PRESETS)
def test_conv3_and_hf3_share_equilibria(equilibrium_of, preset):
    a, b = equilibrium_of(preset, "conv3"), equilibrium_of(preset, "hf3")
    np.testing.assert_allclose(a.x_star, b.x_star, rtol=1e-8, atol=1e-8)


def test_lift_is_an_exact_detailed_equilibrium(equilibrium_of):
    e = equilibrium_of("rx-ll1", "em5")
    x = lift_to_detailed(e)
    assert np.linalg.norm(models.detailed_rhs(x, e.cfg), np.inf) < 1e-7


def test_rotational_invariance_of_zeros(equilibrium_of):
    eq = equilibrium_of("rx-gg1", "em5")
    x = eq.x_star.copy()
    c = 0.9
    x[0:2] += c
    R = models._rot(c)
    for s in (models.line_slice(ModelKind.EM5), *models.load_slices(ModelKind.EM5)):
        x[s] = R @ x[s]
    assert np.linalg.norm(models.em5_rhs(x, eq.cfg), np.inf) < 1e-8
    # pinning removes the family: re-solving from the shifted point returns the pinned one
    again = find_equilibrium("em5", eq.cfg, x)
    np.testing.assert_allclose(again.x_star, eq.x_star, atol=1e-7)


def test_warm_start_from_equilibrium(equilibrium_of):
    eq = equilibrium_of("rx-eq1", "detailed")
    nxt = find_equilibrium("detailed", preset_config("rx-eq1", 7e-5), eq)
    assert isinstance(nxt, Equilibrium)
    assert nxt.iterations <= 5
    assert nxt.omega0 < eq.omega0


def test_settle_by_simulation_reaches_neighbourhood():
    cfg = preset_config("rx-eq1")
    x, w0 = settle_by_simulation("conv3", cfg, models.cold_start("conv3", cfg))
    ref = find_equilibrium("conv3", cfg)
    assert abs(w0 - ref.omega0) < 1e-4
    np.testing.assert_allclose(x, ref.x_star, atol=1e-3)


def test_failure_reports_best_residual():
    cfg = preset_config("rx-eq1")
    with pytest.raises(EquilibriumError) as err:
        find_equilibrium("em5", cfg, np.full(12, np.nan), allow_fallback=False)
    assert np.isinf(err.value.best_residual) or err.value.best_residual > 1e-8


def test_guess_shape_checked():
    with pytest.raises(ValueError):
        find_equilibrium("em5", preset_config("rx-eq1"), np.zeros(3))
