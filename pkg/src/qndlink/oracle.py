"""Independent verification engines.

Moment-ODE integration of the amplifier Langevin dynamics with a vacuum
bath (<x_in(t) x_in(t')> = delta(t - t')), giving second moments that must
land on the squeezed-thermal channel closed form, and a seeded Monte-Carlo
sampler that drives protocol realizations through the sampled-outcome plus
explicit-displacement route the deterministic engines never take.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GENERATOR_ID = "numpy-pcg64"
_SHARD = 1 << 17


@dataclass
class MomentTrajectory:
    times: np.ndarray
    x2: np.ndarray
    p2: np.ndarray
    mean_x: np.ndarray
    mean_p: np.ndarray
    accuracy_warning: bool = False

    def final(self):
        return self.x2[-1], self.p2[-1], self.mean_x[-1], self.mean_p[-1]


def integrate_opa_moments(chi, gamma, t_final, init=(1.0, 1.0, 0.0, 0.0), steps=400):
    """Fixed-step RK4 for the amplifier moment equations.

    d<x^2>/dt = (2 chi - gamma) <x^2> + gamma
    d<p^2>/dt = -(2 chi + gamma) <p^2> + gamma
    d m_x /dt = (chi - gamma/2) m_x,   d m_p /dt = -(chi + gamma/2) m_p

    The final moments must match the effective-channel closed form
    eta G <x^2>_0 + (1 - eta) <x_n^2> with (G, eta) from the physical map.
    """
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    if gamma < 0:
        raise ValueError("loss rate must be >= 0")
    steps = int(steps)
    if steps < 10:
        raise ValueError("need at least 10 integration steps")

    rates = (2.0 * chi - gamma, -(2.0 * chi + gamma), chi - gamma / 2.0, -(chi + gamma / 2.0))
    drives = (gamma, gamma, 0.0, 0.0)

    h = t_final / steps
    warn = h * max(abs(r) for r in rates) > 0.1

    def deriv(y):
        return np.array([rates[i] * y[i] + drives[i] for i in range(4)])

    y = np.array(init, dtype=float)
    times = np.empty(steps + 1)
    traj = np.empty((steps + 1, 4))
    times[0] = 0.0
    traj[0] = y
    for k in range(steps):
        k1 = deriv(y)
        k2 = deriv(y + 0.5 * h * k1)
        k3 = deriv(y + 0.5 * h * k2)
        k4 = deriv(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        times[k + 1] = (k + 1) * h
        traj[k + 1] = y
    if np.any(traj[:, :2] <= 0.0):
        raise ArithmeticError("second moments left the positive cone; check parameters")
    return MomentTrajectory(times, traj[:, 0], traj[:, 1], traj[:, 2], traj[:, 3],
                            accuracy_warning=warn)


@dataclass
class McEstimate:
    xi_x: float
    xi_p: float
    se_x: float
    se_p: float
    n_samples: int
    seed: int
    generator: str = GENERATOR_ID

    def within(self, xi_x_ref, xi_p_ref, n_sigma=4.0):
        return (abs(self.xi_x - xi_x_ref) <= n_sigma * self.se_x
                and abs(self.xi_p - xi_p_ref) <= n_sigma * self.se_p)


def _form_vector(form, columns):
    v = np.zeros(len(columns))
    for key, c in form.coeffs.items():
        v[columns[key]] = c
    return v


def mc_estimate(realization, n_samples, seed) -> McEstimate:
    """Monte-Carlo excess-noise estimate through sampled homodyne outcomes.

    Samples every source as an independent Gaussian, evaluates the
    pre-measurement output forms, draws each homodyne outcome from its
    sampled quadrature, applies the feed-forward displacements explicitly,
    and returns empirical variances of the residual noise with standard
    errors (Gaussian var(s^2) = 2 sigma^4/(n-1)).  Sharded accumulation of
    moments keeps the reduction exact and the draw reproducible per seed.
    """
    n_samples = int(n_samples)
    if n_samples < 10_000:
        raise ValueError("need at least 1e4 samples")

    reg = realization.registry
    columns = {}
    scales = []
    for label in reg.labels():
        src = reg.source(label)
        for quad, var in (("x", src.x_var), ("p", src.p_var)):
            if not math.isfinite(var):
                raise ValueError(f"cannot sample unbounded source {label!r}")
            columns[(label, quad)] = len(scales)
            scales.append(math.sqrt(var))
    scales = np.array(scales)

    pre = realization.pre_ff_forms
    v_xb = _form_vector(pre["x_B"], columns)
    v_pa = _form_vector(pre["p_A"], columns)
    ff_vectors = [(_form_vector(step.measured_form, columns), step.targets)
                  for step in realization.feedforwards]

    g = realization.g
    ix_a, ix_b = columns[("A", "x")], columns[("B", "x")]
    ip_a, ip_b = columns[("A", "p")], columns[("B", "p")]

    sums = np.zeros(2)
    sqsums = np.zeros(2)
    seeds = np.random.SeedSequence(seed).spawn(-(-n_samples // _SHARD))
    done = 0
    for shard_seed in seeds:
        count = min(_SHARD, n_samples - done)
        rng = np.random.Generator(np.random.PCG64(shard_seed))
        samples = rng.standard_normal((count, len(scales))) * scales
        x_b = samples @ v_xb
        p_a = samples @ v_pa
        for vec, targets in ff_vectors:
            outcome = samples @ vec
            for target_name, gain in targets:
                if target_name == "x_B":
                    x_b = x_b + gain * outcome
                elif target_name == "p_A":
                    p_a = p_a + gain * outcome
        noise_x = x_b - (samples[:, ix_b] + g * samples[:, ix_a])
        noise_p = p_a - (samples[:, ip_a] - g * samples[:, ip_b])
        sums += (noise_x.sum(), noise_p.sum())
        sqsums += ((noise_x * noise_x).sum(), (noise_p * noise_p).sum())
        done += count

    n = float(n_samples)
    var = (sqsums - sums * sums / n) / (n - 1.0)
    se = var * math.sqrt(2.0 / (n - 1.0))
    return McEstimate(float(var[0]), float(var[1]), float(se[0]), float(se[1]),
                      n_samples, seed)
