"""QND cluster states: construction, nullifiers, and type-II fusion.

A cluster couples 2n modes {A_k, B_k} pairwise (gain g_k) and then links
B_k to A_(k+1) (gain g_(k,k+1)).  Inputs are squeezed: A modes in x,
B modes in p, with the equal-variance convention <x_A^2> = <p_B^2> = S.
Fusion consumes two mediator modes through the entanglement-based
nonlocal gate, merging two distant clusters into one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import elements
from .gstate import apply_channel, apply_symplectic, product_state
from .linform import LinearForm, ModeRegistry
from .protocols import EbParams

CM_CHECK_TOL = 1e-10


@dataclass(frozen=True)
class ClusterSpec:
    """Topology and inputs of one linear QND cluster of n_pairs pairs."""

    n_pairs: int
    pair_gains: tuple
    link_gains: tuple
    squeezing: tuple  # per-pair input variance S

    def __init__(self, n_pairs, pair_gains=None, link_gains=None, squeezing=1.0):
        if n_pairs < 1:
            raise ValueError("a cluster needs at least one pair")
        pair_gains = tuple(pair_gains) if pair_gains is not None else (1.0,) * n_pairs
        link_gains = tuple(link_gains) if link_gains is not None else (1.0,) * (n_pairs - 1)
        if len(pair_gains) != n_pairs:
            raise ValueError(f"expected {n_pairs} pair gains, got {len(pair_gains)}")
        if len(link_gains) != n_pairs - 1:
            raise ValueError(f"expected {n_pairs - 1} link gains, got {len(link_gains)}")
        try:
            squeezing = tuple(squeezing)
        except TypeError:
            squeezing = (float(squeezing),) * n_pairs
        if len(squeezing) != n_pairs:
            raise ValueError(f"expected {n_pairs} squeezing values, got {len(squeezing)}")
        if any(not (0 < s <= 1) for s in squeezing):
            raise ValueError("input squeezing values must lie in (0, 1]")
        object.__setattr__(self, "n_pairs", n_pairs)
        object.__setattr__(self, "pair_gains", pair_gains)
        object.__setattr__(self, "link_gains", link_gains)
        object.__setattr__(self, "squeezing", squeezing)

    @classmethod
    def uniform(cls, n_pairs, gain=1.0, squeezing=1.0):
        return cls(n_pairs, (gain,) * n_pairs, (gain,) * (n_pairs - 1), squeezing)


@dataclass
class NodeNullifier:
    node: int           # 1-based node index k, linking B_k to A_(k+1)
    var_x: float
    var_p: float
    threshold: float    # 2 |g_(k,k+1)|
    entangled: bool
    form_x: LinearForm
    form_p: LinearForm


@dataclass
class NullifierReport:
    nodes: list

    def __iter__(self):
        return iter(self.nodes)

    def node(self, k):
        for n in self.nodes:
            if n.node == k:
                return n
        raise KeyError(f"no nullifier node {k}")


class ClusterState:
    """Built cluster in both engines: per-mode forms plus covariance state.

    cm_error_scale records the largest covariance entry seen while the
    state was built; rounding in the covariance engine is bounded by a
    small multiple of machine epsilon times that scale, which matters when
    a strongly anti-squeezed resource quadrature cancels out of the
    outputs (the linear-form engine keeps full precision there).
    """

    def __init__(self, mode_names, registry, forms, state, pair_gains, link_gains,
                 cm_error_scale=1.0):
        self.mode_names = list(mode_names)   # A1, B1, A2, B2, ...
        self.registry = registry
        self.forms = forms                   # name -> [x form, p form]
        self.state = state
        self.pair_gains = list(pair_gains)
        self.link_gains = list(link_gains)
        self.cm_error_scale = cm_error_scale
        self.index = {name: i for i, name in enumerate(self.mode_names)}

    @property
    def n_pairs(self):
        return len(self.pair_gains)

    def output_variance_cm(self, combo):
        """Variance of sum c_j q_j over output modes from the covariance engine."""
        v = np.zeros(2 * self.state.n_modes)
        for (name, quad), c in combo:
            v[2 * self.index[name] + (0 if quad == "x" else 1)] = c
        return float(v @ self.state.cm @ v)


def _input_variances(spec):
    per_mode = []
    for k in range(spec.n_pairs):
        s = spec.squeezing[k]
        per_mode.append((s, 1.0 / s))          # A_k: squeezed in x
        per_mode.append((1.0 / s, s))          # B_k: squeezed in p
    return per_mode


def _apply_qnd(forms, state, index, first, second, g):
    xf, pf = forms[first]
    xs, ps = forms[second]
    pf.add_scaled(ps, -g)
    xs.add_scaled(xf, g)
    return apply_symplectic(state, elements.qnd_gate(g), [index[first], index[second]])


def build_cluster(spec: ClusterSpec) -> ClusterState:
    """Run the pair-then-link QND circuit on squeezed inputs."""
    names = []
    for k in range(1, spec.n_pairs + 1):
        names.extend((f"A{k}", f"B{k}"))
    registry = ModeRegistry()
    forms = {}
    for name, (vx, vp) in zip(names, _input_variances(spec)):
        registry.new_source(name, vx, vp)
        forms[name] = [registry.x(name), registry.p(name)]
    state = product_state(_input_variances(spec))
    index = {name: i for i, name in enumerate(names)}

    peak = 1.0
    for k in range(1, spec.n_pairs + 1):
        state = _apply_qnd(forms, state, index, f"A{k}", f"B{k}", spec.pair_gains[k - 1])
        peak = max(peak, float(np.abs(state.cm).max()))
    for k in range(1, spec.n_pairs):
        state = _apply_qnd(forms, state, index, f"B{k}", f"A{k + 1}", spec.link_gains[k - 1])
        peak = max(peak, float(np.abs(state.cm).max()))

    return ClusterState(names, registry, forms, state, spec.pair_gains, spec.link_gains,
                        cm_error_scale=peak)


def nullifiers(cluster: ClusterState) -> NullifierReport:
    """Per-node nullifier variances, linform values cross-checked against the CM.

    Node k: n_x = x'_(A_(k+1)) - g_(k,k+1) x'_(B_k) and
    n_p = p'_(B_k) + g_(k,k+1) p'_(A_(k+1)).
    """
    nodes = []
    for k in range(1, cluster.n_pairs):
        g = cluster.link_gains[k - 1]
        fx = cluster.forms[f"A{k + 1}"][0].copy().add_scaled(cluster.forms[f"B{k}"][0], -g)
        fp = cluster.forms[f"B{k}"][1].copy().add_scaled(cluster.forms[f"A{k + 1}"][1], g)
        var_x = cluster.registry.variance(fx)
        var_p = cluster.registry.variance(fp)

        cm_x = cluster.output_variance_cm([((f"A{k + 1}", "x"), 1.0), ((f"B{k}", "x"), -g)])
        cm_p = cluster.output_variance_cm([((f"B{k}", "p"), 1.0), ((f"A{k + 1}", "p"), g)])
        tol = CM_CHECK_TOL * max(1.0, abs(var_x), abs(var_p)) \
            + 256.0 * np.finfo(float).eps * cluster.cm_error_scale
        for lin, cm in ((var_x, cm_x), (var_p, cm_p)):
            if abs(lin - cm) > tol:
                raise AssertionError(
                    f"engine disagreement on nullifier node {k}: {lin!r} vs {cm!r}")

        thr = 2.0 * abs(g)
        nodes.append(NodeNullifier(k, var_x, var_p, thr,
                                   var_x < thr and var_p < thr, fx, fp))
    return NullifierReport(nodes)


def vlf_check(report: NullifierReport):
    """Strict-inequality entanglement verdict per node (boundary fails)."""
    return {n.node: (n.var_x < n.threshold and n.var_p < n.threshold) for n in report}


def fuse(spec_a: ClusterSpec, spec_b: ClusterSpec, eb: EbParams, link_gain=None):
    """Type-II fusion: merge two clusters through the entanglement-based gate.

    Cluster A carries the two mediators as its tail: pair gate g_M on
    (M1, M2), link gate g_A on (B_n, M1), both fixed by ``eb``.  M2 travels
    through the amplifier-assisted loss channel to cluster B, the gate of
    gain ``eb.g`` is completed by homodynes and displacements, and both
    mediators are consumed.  Returns (merged ClusterState, NullifierReport).
    """
    if link_gain is not None and link_gain != eb.g:
        raise ValueError(
            f"merged link gain {link_gain} conflicts with the nonlocal gate gain {eb.g}")
    n = spec_a.n_pairs
    m = spec_b.n_pairs

    names = []
    for k in range(1, n + 1):
        names.extend((f"A{k}", f"B{k}"))
    names.extend(("M1", "M2"))
    for k in range(n + 1, n + m + 1):
        names.extend((f"A{k}", f"B{k}"))

    variances = _input_variances(spec_a) + [(1.0, 1.0), (1.0, 1.0)] + _input_variances(spec_b)
    registry = ModeRegistry()
    forms = {}
    for name, (vx, vp) in zip(names, variances):
        registry.new_source(name, vx, vp)
        forms[name] = [registry.x(name), registry.p(name)]
    state = product_state(variances)
    index = {name: i for i, name in enumerate(names)}
    peak = [1.0]

    def track():
        peak[0] = max(peak[0], float(np.abs(state.cm).max()))

    def qnd(first, second, g):
        nonlocal state
        state = _apply_qnd(forms, state, index, first, second, g)
        track()

    def opa(mode, params, label):
        nonlocal state
        if params.is_identity:
            return
        xf, pf = forms[mode]
        forms[mode] = [xf * math.sqrt(params.eta * params.G),
                       pf * math.sqrt(params.eta / params.G)]
        if params.eta < 1.0:
            nx, npv = elements.opa_noise_variances(params)
            registry.new_source(label, nx, npv)
            w = math.sqrt(1.0 - params.eta)
            forms[mode][0].add_scaled(registry.x(label), w)
            forms[mode][1].add_scaled(registry.p(label), w)
        state = apply_channel(state, elements.opa_channel(params), [index[mode]])
        track()

    def loss(mode, T, label):
        nonlocal state
        if T == 1.0:
            return
        xf, pf = forms[mode]
        rt = math.sqrt(T)
        forms[mode] = [xf * rt, pf * rt]
        registry.vacuum(label)
        w = math.sqrt(1.0 - T)
        forms[mode][0].add_scaled(registry.x(label), w)
        forms[mode][1].add_scaled(registry.p(label), w)
        state = apply_channel(state, elements.pure_loss(T), [index[mode]])
        track()

    # cluster A with its mediator tail: offline squeezers, pair gates, links
    opa("M1", eb.opa1, "n1")
    opa("M2", eb.opa2, "n2")
    for k in range(1, n + 1):
        qnd(f"A{k}", f"B{k}", spec_a.pair_gains[k - 1])
    qnd("M1", "M2", eb.g_M)
    for k in range(1, n):
        qnd(f"B{k}", f"A{k + 1}", spec_a.link_gains[k - 1])
    qnd(f"B{n}", "M1", eb.g_A)

    # cluster B stands alone until the mediator arrives
    for k in range(n + 1, n + m + 1):
        qnd(f"A{k}", f"B{k}", spec_b.pair_gains[k - n - 1])
    for k in range(n + 1, n + m):
        qnd(f"B{k}", f"A{k + 1}", spec_b.link_gains[k - n - 1])

    # transmit M2, couple it to the edge of cluster B, measure, displace
    opa("M2", eb.opa3, "n3")
    loss("M2", eb.T, "ch")
    qnd("M2", f"A{n + 1}", eb.g_B)

    k3 = math.sqrt(eb.opa3.eta * eb.opa3.G * eb.T)
    measured_p = forms["M2"][1].copy()
    forms[f"B{n}"][1].add_scaled(measured_p, eb.g_0 * k3)
    measured_x = forms["M1"][0].copy()
    forms[f"A{n + 1}"][0].add_scaled(measured_x, eb.g / eb.g_A)

    state = elements.homodyne_feedforward(
        state, (index["M2"], "p"), [(index[f"B{n}"], "p", eb.g_0 * k3)])
    track()
    shift = {name: (i if i < index["M2"] else i - 1) for name, i in index.items()}
    del shift["M2"]
    state = elements.homodyne_feedforward(
        state, (shift["M1"], "x"), [(shift[f"A{n + 1}"], "x", eb.g / eb.g_A)])
    track()

    merged_names = [nm for nm in names if nm not in ("M1", "M2")]
    merged_forms = {nm: forms[nm] for nm in merged_names}
    merged = ClusterState(
        merged_names, registry, merged_forms, state,
        list(spec_a.pair_gains) + list(spec_b.pair_gains),
        list(spec_a.link_gains) + [eb.g] + list(spec_b.link_gains),
        cm_error_scale=peak[0])
    return merged, nullifiers(merged)
