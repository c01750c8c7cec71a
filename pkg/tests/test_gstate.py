import numpy as np
import pytest

from qndlink.elements import OpaParams, beam_splitter, homodyne_feedforward, opa_channel, pure_loss, qnd_gate
from qndlink.gstate import (
    ContractViolation,
    GaussianChannel,
    GaussianState,
    apply_channel,
    apply_symplectic,
    assert_physical,
    homodyne_condition,
    make_state,
    partial_trace,
    symplectic_eigenvalues,
)


def test_make_vacuum():
    s = make_state("vacuum", 2)
    assert np.array_equal(s.cm, np.eye(4))
    assert np.array_equal(s.mean, np.zeros(4))


def test_make_thermal():
    s = make_state("thermal", 1, nbar=1.0)
    assert np.array_equal(s.cm, 3.0 * np.eye(2))


def test_make_squeezed():
    s = make_state("squeezed", 1, s=0.25)
    assert np.array_equal(s.cm, np.diag([0.25, 4.0]))


def test_make_state_rejects_bad_parameters():
    with pytest.raises(ValueError):
        make_state("thermal", 1, nbar=-0.5)
    with pytest.raises(ValueError):
        make_state("squeezed", 1, s=0.0)
    with pytest.raises(ValueError):
        make_state("coherent", 1)


def test_apply_symplectic_identity():
    s = make_state("vacuum", 2)
    out = apply_symplectic(s, np.eye(4), [0, 1])
    assert np.array_equal(out.cm, s.cm)


def test_qnd_on_vacuum_matches_output_cm():
    out = apply_symplectic(make_state("vacuum", 2), qnd_gate(1.0), [0, 1])
    want = np.array([
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 2.0, 0.0, -1.0],
        [1.0, 0.0, 2.0, 0.0],
        [0.0, -1.0, 0.0, 1.0],
    ])
    assert np.allclose(out.cm, want, atol=0)


def test_gate_matrix_matches_noiseless_output_form():
    # the ideal-gate congruence of the identity reproduces the two-mode
    # output covariance with zero excess noise
    from qndlink.metrics import output_cm

    g = 1.7
    out = apply_symplectic(make_state("vacuum", 2), qnd_gate(g), [0, 1])
    assert np.allclose(out.cm, output_cm(g, 0.0), atol=1e-15)


def test_apply_symplectic_rejects_non_symplectic():
    s = make_state("vacuum", 2)
    with pytest.raises(ContractViolation):
        apply_symplectic(s, np.diag([2.0, 2.0, 1.0, 1.0]), [0, 1])


def test_pure_loss_identity_and_fixed_point():
    s = make_state("vacuum", 1)
    assert np.allclose(apply_channel(s, pure_loss(1.0), [0]).cm, np.eye(2))
    assert np.allclose(apply_channel(s, pure_loss(0.5), [0]).cm, np.eye(2))


def test_opa_g1_eta_half_is_pure_loss_fixed_point():
    s = make_state("vacuum", 1)
    out = apply_channel(s, opa_channel(OpaParams(1.0, 0.5)), [0])
    assert np.allclose(out.cm, np.eye(2), atol=1e-14)


def test_opa_channel_on_vacuum_example():
    out = apply_channel(make_state("vacuum", 1), opa_channel(OpaParams(2.0, 0.7)), [0])
    assert out.cm[0, 0] == pytest.approx(1.8240170868424581, abs=1e-12)
    assert out.cm[1, 1] == pytest.approx(0.5708361856260995, abs=1e-12)


def test_apply_channel_rejects_cp_violation():
    bad = GaussianChannel(np.diag([2.0, 2.0]), np.zeros((2, 2)))
    with pytest.raises(ContractViolation):
        apply_channel(make_state("vacuum", 1), bad, [0])


def test_partial_trace_examples():
    s = make_state("vacuum", 3)
    assert np.allclose(partial_trace(s, [0, 2]).cm, np.eye(4))
    out = apply_symplectic(make_state("vacuum", 2), qnd_gate(1.0), [0, 1])
    a = partial_trace(out, [0])
    assert np.allclose(a.cm, np.diag([1.0, 2.0]))
    one = make_state("squeezed", 1, s=0.5)
    assert np.allclose(partial_trace(one, [0]).cm, one.cm)
    with pytest.raises(ValueError):
        partial_trace(s, [])


def test_homodyne_product_state_leaves_rest_untouched():
    s = make_state("squeezed", 2, s=0.3)
    cond, (mu, var) = homodyne_condition(s, 1, "x", 0.7)
    assert np.allclose(cond.cm, np.diag([0.3, 1 / 0.3]))
    assert mu == 0.0
    assert var == pytest.approx(0.3)


def test_homodyne_after_qnd_removes_back_action():
    out = apply_symplectic(make_state("vacuum", 2), qnd_gate(1.3), [0, 1])
    # p_A carries 1 + g^2 before the measurement, 1 after conditioning on p_B
    assert out.cm[1, 1] == pytest.approx(1 + 1.3**2)
    cond, _ = homodyne_condition(out, 1, "p", 0.0)
    assert cond.cm[1, 1] == pytest.approx(1.0, abs=1e-12)


def test_homodyne_zero_variance_direction():
    cm = np.array([
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 2.0, 0.0, 0.0],
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 3.0],
    ])  # x1 and x2 perfectly correlated
    s = GaussianState(2, np.zeros(4), cm)
    cond, _ = homodyne_condition(s, 0, "x", 0.4)
    assert cond.cm[0, 0] == pytest.approx(0.0, abs=1e-15)
    again, (_mu, var) = homodyne_condition(cond, 0, "x", 0.0)
    assert var == 0.0  # zero-variance outcome density, pseudo-inverse path


def test_conditional_mean_linear_in_outcome():
    out = apply_symplectic(make_state("vacuum", 2), qnd_gate(0.8), [0, 1])
    c0, _ = homodyne_condition(out, 1, "x", 0.0)
    c1, _ = homodyne_condition(out, 1, "x", 1.0)
    c2, _ = homodyne_condition(out, 1, "x", 2.0)
    assert np.allclose(c2.mean - c1.mean, c1.mean - c0.mean)
    assert np.allclose(c1.cm, c0.cm)


def _random_two_mode_state(rng):
    st = make_state("thermal", 2, nbar=rng.uniform(0.0, 1.0))
    for _ in range(3):
        st = apply_symplectic(st, qnd_gate(rng.uniform(-1.5, 1.5)),
                              [0, 1] if rng.random() < 0.5 else [1, 0])
        st = apply_symplectic(st, beam_splitter(rng.uniform(0.2, 0.8)), [0, 1])
    st.mean = rng.normal(size=4)
    return st


def test_condition_then_average_equals_feedforward():
    # outcome-averaged conditional state (including the displaced mean's
    # spread) must equal the couple-then-trace construction
    rng = np.random.default_rng(11)
    for _ in range(120):
        st = _random_two_mode_state(rng)
        lam = rng.uniform(-2.0, 2.0)
        quad = "x" if rng.random() < 0.5 else "p"
        ff = homodyne_feedforward(st, (1, quad), [(0, quad, lam)])
        cond, (mu, var) = homodyne_condition(st, 1, quad, 0.0)
        cond1, _ = homodyne_condition(st, 1, quad, 1.0)
        sensitivity = cond1.mean - cond.mean
        e = np.zeros(2)
        e[0 if quad == "x" else 1] = lam
        k = sensitivity + e
        cm_avg = cond.cm + var * np.outer(k, k)
        assert np.abs(cm_avg - ff.cm).max() < 1e-10


def test_physicality_preserved_and_purity_monotone():
    rng = np.random.default_rng(3)
    for _ in range(40):
        st = _random_two_mode_state(rng)
        assert_physical(st)
        nu_in = symplectic_eigenvalues(st.cm)
        ch = opa_channel(OpaParams(rng.uniform(0.5, 2.0), rng.uniform(0.5, 0.99)))
        out = apply_channel(st, ch, [int(rng.integers(0, 2))])
        assert_physical(out)
        assert symplectic_eigenvalues(out.cm).min() >= 1.0 - 1e-9
        out2 = apply_channel(st, pure_loss(rng.uniform(0.2, 1.0)), [0])
        assert symplectic_eigenvalues(out2.cm).min() >= 1.0 - 1e-9


def test_assert_physical_rejects_garbage():
    bad = GaussianState(1, np.zeros(2), np.diag([0.1, 0.1]))
    with pytest.raises(ContractViolation):
        assert_physical(bad)
