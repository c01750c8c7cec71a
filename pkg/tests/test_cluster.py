import math

import numpy as np
import pytest

from qndlink.cluster import ClusterSpec, build_cluster, fuse, nullifiers, vlf_check
from qndlink.elements import OpaParams, qnd_gate
from qndlink.gstate import apply_symplectic, make_state
from qndlink.linform import commutator_check
from qndlink.protocols import EbParams


def eb_limit_params(g, T, G2, g_A=1e-4, G1=1e8):
    """Entanglement-based gains in the squeezing-based-equivalent regime."""
    G3 = (1 - T) / (T * G2)
    g_0 = math.sqrt(g * G2 / (1 - T))
    return EbParams(g, g_A, g_0, OpaParams(G1, 1.0), OpaParams(G2, 1.0),
                    OpaParams(G3, 1.0), T)


def test_single_pair_is_plain_qnd():
    spec = ClusterSpec(1, (1.3,), (), 1.0)
    cl = build_cluster(spec)
    want = apply_symplectic(make_state("vacuum", 2), qnd_gate(1.3), [0, 1])
    assert np.allclose(cl.state.cm, want.cm, atol=0)
    assert nullifiers(cl).nodes == []


def test_vacuum_inputs_nullifier_variance():
    rep = nullifiers(build_cluster(ClusterSpec.uniform(2, 1.0, 1.0)))
    node = rep.node(1)
    assert node.var_x == 1.0 and node.var_p == 1.0
    assert node.threshold == 2.0 and node.entangled


def test_infinite_squeezing_surrogate():
    rep = nullifiers(build_cluster(ClusterSpec.uniform(2, 1.0, 1e-9)))
    assert rep.node(1).var_x == pytest.approx(1e-9, rel=1e-12)
    assert rep.node(1).var_p == pytest.approx(1e-9, rel=1e-12)


def test_unmerged_nullifiers_reduce_to_inputs_exactly():
    spec = ClusterSpec(4, (1.0, 0.8, 1.2, 0.9), (1.1, 0.7, 1.3), 0.5)
    cl = build_cluster(spec)
    for node in nullifiers(cl):
        assert set(node.form_x.coeffs) == {(f"A{node.node + 1}", "x")}
        assert set(node.form_p.coeffs) == {(f"B{node.node}", "p")}
        assert node.form_x.coeffs[(f"A{node.node + 1}", "x")] == 1.0


def test_nullifier_threshold_check_example():
    # S = 1, g = 1, T = 0.95 merged-edge variance 1.1 < 2
    eb = eb_limit_params(1.0, 0.95, 0.25)
    merged, rep = fuse(ClusterSpec.uniform(1, 1.0, 1.0), ClusterSpec.uniform(1, 1.0, 1.0), eb)
    edge = rep.node(1)
    assert edge.var_x == pytest.approx(1.1, abs=1e-9)
    assert edge.var_p == pytest.approx(1.1, abs=1e-9)
    assert edge.entangled


def test_fusion_lossless_adds_zero_noise():
    eb = eb_limit_params(1.0, 1.0 - 1e-12, 0.5)
    merged, rep = fuse(ClusterSpec.uniform(2, 1.0, 0.5), ClusterSpec.uniform(2, 1.0, 0.5), eb)
    assert rep.node(2).var_x == pytest.approx(0.5, abs=1e-9)
    assert rep.node(2).var_p == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("T,S", [(0.75, 0.5), (0.9, 1.0), (0.6, 0.25)])
def test_fusion_edge_variance_formula(T, S):
    eb = eb_limit_params(1.0, T, 0.25)
    merged, rep = fuse(ClusterSpec.uniform(2, 1.0, S), ClusterSpec.uniform(2, 1.0, S), eb)
    edge = rep.node(2)
    want = S + 2 * (1 - T)
    assert edge.var_x == pytest.approx(want, abs=1e-10)
    assert edge.var_p == pytest.approx(want, abs=1e-10)
    assert edge.threshold == 2.0


def test_fusion_preserves_non_edge_nodes():
    spec_a = ClusterSpec.uniform(3, 1.0, 0.5)
    spec_b = ClusterSpec.uniform(2, 1.0, 0.5)
    before_a = nullifiers(build_cluster(spec_a))
    before_b = nullifiers(build_cluster(spec_b))
    eb = eb_limit_params(1.0, 0.8, 0.25)
    merged, rep = fuse(spec_a, spec_b, eb)
    assert len(rep.nodes) == 4
    for k in (1, 2):
        assert rep.node(k).var_x == before_a.node(k).var_x
        assert rep.node(k).var_p == before_a.node(k).var_p
    assert rep.node(4).var_x == before_b.node(1).var_x
    assert rep.node(4).var_p == before_b.node(1).var_p


def test_fusion_entanglement_boundary():
    # Var = S + 2g(1-T) crosses 2g exactly at T = S/(2g)
    S = 1.0
    for T, want in ((0.5 + 1e-6, True), (0.5 - 1e-6, False)):
        eb = eb_limit_params(1.0, T, 0.25)
        merged, rep = fuse(ClusterSpec.uniform(1, 1.0, S), ClusterSpec.uniform(1, 1.0, S), eb)
        assert rep.node(1).entangled is want
        assert vlf_check(rep)[1] is want


def test_vlf_strict_inequality_at_boundary():
    from qndlink.cluster import NodeNullifier, NullifierReport
    from qndlink.linform import LinearForm

    node = NodeNullifier(1, 2.0, 1.0, 2.0, False, LinearForm(), LinearForm())
    assert vlf_check(NullifierReport([node]))[1] is False


def test_all_nullifier_pairs_commute():
    eb = eb_limit_params(1.0, 0.75, 0.25)
    merged, rep = fuse(ClusterSpec.uniform(2, 1.0, 0.5), ClusterSpec.uniform(2, 1.0, 0.5), eb)
    forms = [(n.node, n.form_x, n.form_p) for n in rep]
    for i, fx, fp in forms:
        for j, gx, gp in forms:
            c_xp = commutator_check(fx, gp)
            c_xx = commutator_check(fx, gx)
            if i == j == 2:  # merged node: analytic zero, floats to ~1 ulp
                assert abs(c_xp) < 1e-14
            else:
                assert c_xp == 0.0
            assert abs(c_xx) < 1e-14


def test_sum_form_criterion_implied_by_individual_conditions():
    rng = np.random.default_rng(21)
    for _ in range(50):
        S = rng.uniform(0.2, 1.0)
        T = rng.uniform(0.55, 0.999)
        eb = eb_limit_params(1.0, T, 0.25)
        merged, rep = fuse(ClusterSpec.uniform(1, 1.0, S), ClusterSpec.uniform(1, 1.0, S), eb)
        for node in rep:
            if node.entangled:
                assert node.var_x + node.var_p < 2.0 * node.threshold


def test_heterogeneous_squeezing_and_gains():
    spec = ClusterSpec(3, (1.0, 0.7, 1.4), (0.9, 1.2), (0.9, 0.5, 0.3))
    rep = nullifiers(build_cluster(spec))
    assert rep.node(1).var_x == pytest.approx(0.5)   # <x^2> of the pair-2 A mode
    assert rep.node(1).var_p == pytest.approx(0.9)   # <p^2> of the pair-1 B mode
    assert rep.node(1).threshold == pytest.approx(1.8)
    assert rep.node(2).threshold == pytest.approx(2.4)


def test_spec_validation():
    with pytest.raises(ValueError):
        ClusterSpec(0)
    with pytest.raises(ValueError):
        ClusterSpec(2, (1.0,), (1.0,))
    with pytest.raises(ValueError):
        ClusterSpec(2, (1.0, 1.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        ClusterSpec(1, (1.0,), (), squeezing=1.5)


def test_fuse_rejects_conflicting_link_gain():
    eb = eb_limit_params(1.0, 0.8, 0.25)
    with pytest.raises(ValueError):
        fuse(ClusterSpec.uniform(1), ClusterSpec.uniform(1), eb, link_gain=2.0)
