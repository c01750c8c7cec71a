import math

import numpy as np
import pytest

from qndlink.elements import (
    OpaParams,
    PhysicalOpaParams,
    beam_splitter,
    homodyne_feedforward,
    opa_channel,
    opa_from_physical,
    opa_noise_variances,
    pure_loss,
    qnd_gate,
)
from qndlink.gstate import apply_channel, apply_symplectic, make_state, omega
from qndlink.oracle import integrate_opa_moments


def _is_symplectic(s):
    om = omega(s.shape[0] // 2)
    return np.allclose(s @ om @ s.T, om, atol=1e-12)


def test_qnd_gate_identity_and_shape():
    assert np.array_equal(qnd_gate(0.0), np.eye(4))
    s = qnd_gate(1.7)
    assert _is_symplectic(s)
    # nondemolished variables: x of mode 1, p of mode 2
    assert s[0, 0] == 1.0 and s[3, 3] == 1.0
    assert s[1, 3] == -1.7 and s[2, 0] == 1.7


def test_qnd_gains_compose_additively():
    g1, g2 = 0.8, -1.3
    assert np.allclose(qnd_gate(g1) @ qnd_gate(g2), qnd_gate(g1 + g2), atol=0)


def test_qnd_negative_gain_is_first_class():
    s = qnd_gate(-0.6)
    assert _is_symplectic(s)
    assert s[2, 0] == -0.6


@pytest.mark.parametrize("g_and_eta,want", [
    ((1.0, 0.5), (1.0, 1.0)),
    ((2.0, 0.7), (1.4133902894748602, 0.7361206187536647)),
])
def test_opa_noise_variances_values(g_and_eta, want):
    got = opa_noise_variances(OpaParams(*g_and_eta))
    assert got[0] == pytest.approx(want[0], abs=1e-12)
    assert got[1] == pytest.approx(want[1], abs=1e-12)


def test_opa_noise_variances_continuous_at_singularities():
    # eta -> 1
    lim = ((2.0 - 1.0) / math.log(2.0), (1.0 - 0.5) / math.log(2.0))
    got = opa_noise_variances(OpaParams(2.0, 1.0 - 1e-9))
    assert abs(got[0] - lim[0]) < 1e-6 and abs(got[1] - lim[1]) < 1e-6
    # G -> 1
    got = opa_noise_variances(OpaParams(1.0 + 1e-9, 0.5))
    assert abs(got[0] - 1.0) < 1e-6 and abs(got[1] - 1.0) < 1e-6
    # eta G -> 1 (x branch limit -ln(eta)/(1 - eta))
    eta = 0.5
    lim_x = -math.log(eta) / (1.0 - eta)
    got = opa_noise_variances(OpaParams((1.0 + 1e-9) / eta, eta))
    assert abs(got[0] - lim_x) < 1e-6


def test_opa_noise_variances_squeeze_limit():
    assert opa_noise_variances(OpaParams(0.0, 0.7)) == (0.0, math.inf)


def test_opa_noise_state_is_physical():
    rng = np.random.default_rng(2)
    for _ in range(50):
        vx, vp = opa_noise_variances(OpaParams(rng.uniform(0.05, 20.0), rng.uniform(0.05, 0.999)))
        assert vx * vp >= 1.0 - 1e-12


def test_opa_channel_structure():
    assert np.allclose(opa_channel(OpaParams(1.0, 1.0)).X, np.eye(2))
    ch = opa_channel(OpaParams(4.0, 1.0))
    assert np.allclose(ch.X, np.diag([2.0, 0.5]))
    assert np.allclose(ch.Y, np.zeros((2, 2)))
    ch = opa_channel(OpaParams(2.0, 0.7))
    assert np.allclose(ch.X, np.diag([math.sqrt(1.4), math.sqrt(0.35)]))
    assert ch.Y[0, 0] == pytest.approx(0.3 * 1.4133902894748602)
    assert ch.Y[1, 1] == pytest.approx(0.3 * 0.7361206187536647)
    assert ch.is_cp()


def test_lossy_opa_is_not_invertible():
    ch = opa_channel(OpaParams(2.0, 0.8))
    inv = opa_channel(OpaParams(0.5, 1.0))
    comp = inv.compose_after(ch)
    assert np.abs(comp.Y).max() > 0.05  # leftover added noise


def test_opa_from_physical():
    assert opa_from_physical(PhysicalOpaParams(0.0, 0.0, 5.0)) == OpaParams(1.0, 1.0)
    p = opa_from_physical(PhysicalOpaParams(0.5, 0.0, 1.0))
    assert p.G == pytest.approx(math.e) and p.eta == 1.0
    p = opa_from_physical(PhysicalOpaParams(0.3, 0.2, 2.0))
    assert p.G == pytest.approx(3.3201169227365472, abs=1e-12)
    assert p.eta == pytest.approx(0.6703200460356393, abs=1e-12)


def test_two_opa_concatenation_matches_two_segment_langevin():
    # composing the effective channels must equal integrating the physical
    # dynamics through both segments
    ch1 = opa_channel(OpaParams(1.8, 0.85))
    ch2 = opa_channel(OpaParams(0.6, 0.9))
    comp = ch2.compose_after(ch1)
    out = apply_channel(make_state("vacuum", 1), comp, [0])
    seg1 = integrate_opa_moments(math.log(1.8) / 2, -math.log(0.85), 1.0, steps=800).final()
    seg2 = integrate_opa_moments(math.log(0.6) / 2, -math.log(0.9), 1.0,
                                 init=seg1, steps=800).final()
    assert abs(out.cm[0, 0] - seg2[0]) < 1e-8
    assert abs(out.cm[1, 1] - seg2[1]) < 1e-8


def test_pure_loss_examples():
    assert np.allclose(pure_loss(1.0).X, np.eye(2))
    th = make_state("thermal", 1, nbar=1.0)
    out = apply_channel(th, pure_loss(0.5), [0])
    assert np.allclose(out.cm, 2.0 * np.eye(2))
    with pytest.raises(ValueError):
        pure_loss(0.0)


def test_beam_splitter_examples():
    assert np.allclose(beam_splitter(1.0), np.eye(4))
    assert _is_symplectic(beam_splitter(0.5))
    out = apply_symplectic(make_state("vacuum", 2), beam_splitter(0.5), [0, 1])
    assert np.allclose(out.cm, np.eye(4), atol=1e-15)


def test_all_unitary_elements_symplectic():
    for s in (qnd_gate(2.3), qnd_gate(-0.4), beam_splitter(0.37)):
        assert _is_symplectic(s)


def test_feedforward_gain_zero_is_partial_trace():
    st = apply_symplectic(make_state("vacuum", 2), qnd_gate(1.0), [0, 1])
    out = homodyne_feedforward(st, (1, "p"), [(0, "p", 0.0)])
    assert np.allclose(out.cm, np.diag([1.0, 2.0]))


def test_feedforward_two_targets_bilinear_bookkeeping():
    st = make_state("vacuum", 3)
    st = apply_symplectic(st, qnd_gate(0.9), [0, 2])
    st = apply_symplectic(st, qnd_gate(-0.4), [1, 2])
    lam, mu = 0.7, -1.1
    out = homodyne_feedforward(st, (2, "x"), [(0, "x", lam), (1, "x", mu)])
    m_var = st.cm[4, 4]
    c0 = st.cm[0, 4]
    c1 = st.cm[2, 4]
    assert out.cm[0, 0] == pytest.approx(st.cm[0, 0] + 2 * lam * c0 + lam**2 * m_var, rel=1e-12)
    assert out.cm[2, 2] == pytest.approx(st.cm[2, 2] + 2 * mu * c1 + mu**2 * m_var, rel=1e-12)
    assert out.cm[0, 2] == pytest.approx(
        st.cm[0, 2] + lam * c1 + mu * c0 + lam * mu * m_var, rel=1e-12)


def test_feedforward_rejects_measured_target_overlap():
    st = make_state("vacuum", 2)
    with pytest.raises(ValueError):
        homodyne_feedforward(st, (0, "x"), [(0, "x", 1.0)])


def test_parameter_domain_errors():
    with pytest.raises(ValueError):
        OpaParams(2.0, 0.0)
    with pytest.raises(ValueError):
        OpaParams(2.0, 1.5)
    with pytest.raises(ValueError):
        OpaParams(-1.0, 0.5)
    with pytest.raises(ValueError):
        PhysicalOpaParams(0.1, -0.2, 1.0)
    with pytest.raises(ValueError):
        beam_splitter(1.2)
