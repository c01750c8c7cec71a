"""Catalog of physical elements used by the protocols, in both engines.

The amplifier model is a pure squeeze of gain G followed by a beam-splitter
coupling of transmissivity eta to a squeezed-thermal noise mode.  The noise
variances are ratios of logarithms with three removable singularities
(G = 1, eta*G = 1, eta = 1); series limits are substituted inside a guard
band so the channel is continuous everywhere in parameter space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gstate import GaussianChannel, apply_symplectic, partial_trace

SINGULARITY_GUARD = 1e-8

# Requested offline gains at or below this floor are treated as the exact
# infinite-squeezing limit G -> 0 (the noise-mode x-variance decays only as
# 1/|ln G|, so no positive floor reaches the limit values numerically).
SQUEEZE_LIMIT_FLOOR = 1e-9


@dataclass(frozen=True)
class OpaParams:
    """Effective amplifier: gain G > 0, efficiency 0 < eta <= 1."""

    G: float
    eta: float

    def __post_init__(self):
        if self.G < 0:
            raise ValueError(f"amplifier gain must be positive, got {self.G}")
        if not (0 < self.eta <= 1):
            raise ValueError(f"efficiency must be in (0, 1], got {self.eta}")

    @property
    def is_identity(self):
        return self.G == 1.0 and self.eta == 1.0

    @property
    def is_squeeze_limit(self):
        return self.G <= SQUEEZE_LIMIT_FLOOR


IDENTITY_OPA = OpaParams(1.0, 1.0)


@dataclass(frozen=True)
class PhysicalOpaParams:
    """Waveguide parameters: squeezing rate chi, loss rate gamma, time t."""

    chi: float
    gamma: float
    t: float

    def __post_init__(self):
        if self.gamma < 0 or self.t < 0:
            raise ValueError("loss rate and interaction time must be >= 0")


@dataclass(frozen=True)
class ChannelParams:
    T: float

    def __post_init__(self):
        if not (0 < self.T <= 1):
            raise ValueError(f"transmissivity must be in (0, 1], got {self.T}")


def opa_from_physical(p: PhysicalOpaParams) -> OpaParams:
    """G = exp(2 chi t), eta = exp(-gamma t)."""
    return OpaParams(math.exp(2.0 * p.chi * p.t), math.exp(-p.gamma * p.t))


def opa_noise_variances(p: OpaParams):
    """Quadrature variances of the squeezed-thermal noise mode.

    x: (1 - eta G)/(1 - eta) * ln(eta)/ln(eta G)
    p: (1 - eta/G)/(1 - eta) * ln(eta)/ln(eta/G)

    Removable singularities: at eta = 1 the limits are (G - 1)/ln G and
    (1 - 1/G)/ln G; at eta G = 1 the x-variance is -ln(eta)/(1 - eta); at
    G = 1 both variances are 1 (pure loss).  G = 0 is the infinite
    position-squeezing limit: x-variance 0, p-variance unbounded.
    """
    G, eta = p.G, p.eta
    if G == 0.0:
        return 0.0, math.inf
    if abs(G - 1.0) < SINGULARITY_GUARD:
        return 1.0, 1.0
    if 1.0 - eta < SINGULARITY_GUARD:
        lg = math.log(G)
        return (G - 1.0) / lg, (1.0 - 1.0 / G) / lg

    ln_eta = math.log(eta)
    # x branch
    zg = eta * G
    if abs(math.log(zg)) < SINGULARITY_GUARD:
        x_var = -ln_eta / (1.0 - eta)
    else:
        x_var = (1.0 - zg) / (1.0 - eta) * ln_eta / math.log(zg)
    # p branch
    zs = eta / G
    if abs(math.log(zs)) < SINGULARITY_GUARD:
        p_var = -ln_eta / (1.0 - eta)
    else:
        p_var = (1.0 - zs) / (1.0 - eta) * ln_eta / math.log(zs)
    return x_var, p_var


def opa_channel(p: OpaParams) -> GaussianChannel:
    """Single-mode channel X = diag(sqrt(eta G), sqrt(eta/G)), Y = (1-eta) diag(noise)."""
    if p.G == 0.0:
        raise ValueError("the G -> 0 squeezing limit is not representable as a CP channel; "
                         "protocol builders handle it as an idealized element")
    x_var, p_var = opa_noise_variances(p)
    X = np.diag([math.sqrt(p.eta * p.G), math.sqrt(p.eta / p.G)])
    Y = (1.0 - p.eta) * np.diag([x_var, p_var])
    ch = GaussianChannel(X, Y)
    if not ch.is_cp():
        raise RuntimeError(f"internal error: OPA channel failed CP self-check at {p}")
    return ch


def pure_loss(T) -> GaussianChannel:
    """Loss channel of transmissivity T with a vacuum environment."""
    if not (0 < T <= 1):
        raise ValueError(f"transmissivity must be in (0, 1], got {T}")
    rt = math.sqrt(T)
    return GaussianChannel(rt * np.eye(2), (1.0 - T) * np.eye(2))


def qnd_gate(g):
    """4x4 symplectic of the two-mode QND coupling at gain g (sign allowed).

    x1' = x1, p1' = p1 - g p2, x2' = x2 + g x1, p2' = p2 in interleaved
    (x1, p1, x2, p2) ordering; the generator is additive so composition of
    gains is a gain sum.
    """
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, -g],
        [g, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def beam_splitter(tau):
    """Two-mode rotation of transmissivity tau (balanced at tau = 1/2)."""
    if not (0 <= tau <= 1):
        raise ValueError(f"transmissivity must be in [0, 1], got {tau}")
    c = math.sqrt(tau)
    s = math.sqrt(1.0 - tau)
    return np.array([
        [c, 0.0, s, 0.0],
        [0.0, c, 0.0, s],
        [-s, 0.0, c, 0.0],
        [0.0, -s, 0.0, c],
    ])


def homodyne_feedforward(state, measured, targets):
    """Measure one quadrature, feed the outcome forward, discard the mode.

    measured: (mode, quadrature); targets: iterable of (mode, quadrature,
    gain) receiving gain * measured_quadrature.  Implemented as the
    couple-then-trace unitary (each coupling is a QND-type shear), which is
    the exact outcome-free average of condition + displacement; the
    equivalence with the conditional route is a tested property, not an
    assumption here.
    """
    m_mode, m_quad = measured
    out = state
    for t_mode, t_quad, gain in targets:
        if t_mode == m_mode:
            raise ValueError("measured mode cannot also be a feed-forward target")
        if t_quad != m_quad:
            raise ValueError("feed-forward couples like quadratures only (x->x or p->p)")
        if m_quad == "x":
            # x_t += gain * x_m: QND with the measured mode as the nondemolished input
            out = apply_symplectic(out, qnd_gate(gain), [m_mode, t_mode])
        else:
            # p_t += gain * p_m, realized as QND(-gain) on (target, measured)
            out = apply_symplectic(out, qnd_gate(-gain), [t_mode, m_mode])
    keep = [m for m in range(out.n_modes) if m != m_mode]
    return partial_trace(out, keep)
