"""Entanglement quantification for the two-mode gate output.

Logarithmic negativity from the smallest partially-transposed symplectic
eigenvalue of a 4x4 covariance matrix, and from the closed form in the
symmetric-noise configuration; natural logarithm throughout (log2 values
are offered separately for data files).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gstate import assert_physical, GaussianState


@dataclass
class EntanglementReport:
    E_N: float
    d_minus_tilde: float
    delta_tilde: float
    xi: float = math.nan


def _det2(m):
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


def log_negativity_cm(cm) -> EntanglementReport:
    """E_N = max(0, -ln d-) for a physical two-mode covariance matrix.

    delta~ = I_A + I_B - 2 I_AB with I_k the 2x2 block determinants, and
    d- = sqrt((delta~ - sqrt(delta~^2 - 4 det cm))/2).  Block determinants
    are evaluated in closed form.
    """
    cm = np.asarray(cm, dtype=float)
    if cm.shape != (4, 4):
        raise ValueError("log_negativity_cm expects a 4x4 covariance matrix")
    assert_physical(GaussianState(2, np.zeros(4), cm))
    i_a = _det2(cm[:2, :2])
    i_b = _det2(cm[2:, 2:])
    i_ab = _det2(cm[:2, 2:])
    det = np.linalg.det(cm)
    delta = i_a + i_b - 2.0 * i_ab
    disc = delta * delta - 4.0 * det
    if disc < 0.0:
        if disc < -1e-9 * max(1.0, delta * delta):
            raise ValueError("negative discriminant: covariance matrix outside the model")
        disc = 0.0
    d_minus_sq = (delta - math.sqrt(disc)) / 2.0
    d_minus = math.sqrt(max(d_minus_sq, 0.0))
    e_n = max(0.0, -math.log(d_minus)) if d_minus > 0.0 else math.inf
    return EntanglementReport(E_N=e_n, d_minus_tilde=d_minus, delta_tilde=delta)


def output_cm(g, xi_x, xi_p=None):
    """Gate-output covariance matrix for vacuum inputs and given excess noise."""
    if xi_p is None:
        xi_p = xi_x
    return np.array([
        [1.0, 0.0, g, 0.0],
        [0.0, 1.0 + g * g + xi_p, 0.0, -g],
        [g, 0.0, 1.0 + g * g + xi_x, 0.0],
        [0.0, -g, 0.0, 1.0],
    ])


def log_negativity_closed(g, xi):
    """Closed form -(1/2) ln(1 + 2g^2 + xi - 2g sqrt(1 + g^2 + xi)), clipped at 0.

    Valid for symmetric excess noise; vanishes for xi >= 2g.
    """
    if g <= 0:
        raise ValueError("gain must be positive")
    if xi < 0:
        raise ValueError("excess noise must be >= 0")
    if xi >= 2.0 * g:
        return 0.0
    arg = 1.0 + 2.0 * g * g + xi - 2.0 * g * math.sqrt(1.0 + g * g + xi)
    return max(0.0, -0.5 * math.log(arg))


def max_tolerable_noise(g):
    """Excess noise at which the output entanglement vanishes: 2g."""
    if g <= 0:
        raise ValueError("gain must be positive")
    return 2.0 * g


def asymptotics(scheme, g):
    """Small-loss expansion E_N ~ E_N0 - gamma_s (1 - T).

    E_N0 is the lossless value; the squeezing-based slope is
    g (1 - g/sqrt(1+g^2)) / (1 + 2g^2 - 2g sqrt(1+g^2)) and the
    geometric-phase slope is half of it.
    """
    if g <= 0:
        raise ValueError("gain must be positive")
    e_n0 = log_negativity_closed(g, 0.0)
    root = math.sqrt(1.0 + g * g)
    gamma_sb = g * (1.0 - g / root) / (1.0 + 2.0 * g * g - 2.0 * g * root)
    if scheme == "sb":
        return e_n0, gamma_sb
    if scheme == "gp":
        return e_n0, gamma_sb / 2.0
    raise ValueError("asymptotics are stated for the 'sb' and 'gp' schemes")


def entanglement_ratio(scheme, case, g, T, eta):
    """Optimized lossy-amplifier E_N over the ideal-amplifier optimum at (g, T)."""
    from .optimize import analytic_optimum_ideal, optimize_gains

    base_scheme = "gp" if scheme == "gp" else "sb"  # eb/bm are sb-equivalent
    _, xi_ideal = analytic_optimum_ideal(base_scheme, g, T)
    e_ideal = log_negativity_closed(g, xi_ideal)
    if e_ideal <= 0.0:
        raise ValueError(f"ideal E_N vanishes at g={g}, T={T}: ratio undefined")
    if eta == 1.0:
        return 1.0
    res = optimize_gains(scheme, g, T, eta, case)
    return res.E_N / e_ideal
