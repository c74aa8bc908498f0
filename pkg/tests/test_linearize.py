import numpy as np
import pytest

from droopgrid import linearize, models
from droopgrid.config import preset_config
from droopgrid.equilibrium import find_equilibrium
from droopgrid.linearize import (
    central_difference_jacobian, linearize_analytic, linearize_numeric, power_gradients,
    relative_frobenius,
)
from droopgrid.models import ModelKind

from conftest import KINDS, PRESETS


def test_central_difference_on_linear_system():
    M = np.random.default_rng(3).normal(size=(6, 6))
    np.testing.assert_allclose(central_difference_jacobian(lambda x: M @ x, np.ones(6)), M, atol=1e-9)


@pytest.mark.parametrize("preset", PRESETS)
@pytest.mark.parametrize("kind", KINDS)
def test_analytic_matches_numeric(equilibrium_of, preset, kind):
    eq = equilibrium_of(preset, kind)
    lin = linearize_analytic(kind, None, eq)
    assert lin.a.shape == (eq.kind.n_states,) * 2
    assert lin.state_labels == eq.kind.labels
    assert relative_frobenius(lin.state_matrix(), linearize_numeric(kind, None, eq)) < 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_analytic_matches_numeric_at_high_gain(kind):
    eq = find_equilibrium(kind, preset_config("rx-gg1", 3e-3, 4e-4))
    lin = linearize_analytic(kind, None, eq)
    assert relative_frobenius(lin.state_matrix(), linearize_numeric(kind, None, eq)) < 1e-6


def test_numeric_step_halving_converges(equilibrium_of):
    eq = equilibrium_of("rx-eq1", "detailed")
    h = np.finfo(float).eps ** (1 / 3)
    a = linearize_numeric("detailed", None, eq, h)
    b = linearize_numeric("detailed", None, eq, h / 2)
    assert relative_frobenius(a, b) < 1e-7


def test_em5_gamma_is_diagonal_with_table_values(equilibrium_of):
    eq = equilibrium_of("rx-eq1", "em5")
    lin = linearize_analytic("em5", None, eq)
    inv, cfg = eq.cfg.inverter_i, eq.cfg
    expected = [1, 1, inv.tau / inv.k_p, inv.tau / inv.k_p, inv.tau / inv.k_q, inv.tau / inv.k_q,
                cfg.line.L_ik, cfg.line.L_ik, cfg.load_i.L_l, cfg.load_i.L_l, cfg.load_k.L_l, cfg.load_k.L_l]
    np.testing.assert_allclose(lin.gamma, np.diag(expected), rtol=1e-15)


@pytest.mark.parametrize("preset", PRESETS)
def test_conv3_and_hf3_share_a(equilibrium_of, preset):
    a3 = linearize_analytic("conv3", None, equilibrium_of(preset, "conv3"))
    ah = linearize_analytic("hf3", None, equilibrium_of(preset, "hf3"))
    np.testing.assert_allclose(ah.a, a3.a, rtol=1e-9, atol=1e-9 * np.abs(a3.a).max())
    assert not np.allclose(ah.gamma, a3.gamma)


@pytest.mark.parametrize("preset", PRESETS)
def test_hf3_without_taylor_terms_is_conv3(equilibrium_of, preset):
    eq3 = equilibrium_of(preset, "conv3")
    eqh = equilibrium_of(preset, "hf3")
    lh = linearize_analytic("hf3", None, eqh, taylor=(0.0, 0.0))
    l3 = linearize_analytic("conv3", None, eq3)
    g3 = l3.gamma
    assert np.count_nonzero(lh.gamma - np.diag(np.diag(lh.gamma))) == 0
    np.testing.assert_allclose(lh.gamma, g3, rtol=1e-12)
    m3 = l3.state_matrix()
    np.testing.assert_allclose(lh.state_matrix(), m3, rtol=1e-12, atol=1e-12 * np.abs(m3).max())


def test_power_gradients_match_finite_differences(equilibrium_of):
    for kind in ("detailed", "em5", "conv3"):
        eq = equilibrium_of("rx-ll1", kind)
        dP, dQ = power_gradients(kind, eq.x_star, eq.cfg)
        fP = central_difference_jacobian(lambda x: models.injected_powers(kind, x, eq.cfg)[0], eq.x_star)
        fQ = central_difference_jacobian(lambda x: models.injected_powers(kind, x, eq.cfg)[1], eq.x_star)
        assert relative_frobenius(dP, fP) < 1e-7
        assert relative_frobenius(dQ, fQ) < 1e-7


def test_static_flow_gradients():
    G, B = 2.0, 3.0
    z = np.array([0.07, 0.02, 310.0, 300.0])  # delta_a, delta_b, V_a, V_b
    g = np.array(linearize.static_flow_gradients(z[2], z[3], z[0] - z[1], G, B))

    def flows(v):
        return np.array(models._p0q0(v[2], v[3], v[0] - v[1], G, B))
    np.testing.assert_allclose(g, central_difference_jacobian(flows, z), rtol=1e-7)


def test_rotational_mode_is_in_kernel(equilibrium_of):
    for kind in KINDS:
        eq = equilibrium_of("rx-eq1", kind)
        M = linearize_analytic(kind, None, eq).state_matrix()
        v = models.rotational_mode(kind, eq.x_star)
        assert np.linalg.norm(M @ v) < 1e-8 * np.linalg.norm(M) * np.linalg.norm(v)


def test_zero_gain_linearization_is_available():
    eq = find_equilibrium("em5", preset_config("rx-eq1", 0.0, 0.0))
    lin = linearize_analytic("em5", None, eq)
    assert relative_frobenius(lin.state_matrix(), linearize_numeric("em5", None, eq)) < 1e-6


def test_kind_mismatch_rejected(equilibrium_of):
    with pytest.raises(ValueError):
        linearize_analytic(ModelKind.CONV3, None, equilibrium_of("rx-eq1", "em5"))
