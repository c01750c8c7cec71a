"""Covariance-matrix Gaussian-state engine (Schroedinger picture).

Shot-noise normalization: vacuum CM = identity, [x, p] = 2i, symplectic
form Omega built from [[0, 1], [-1, 0]] blocks.  Quadrature ordering is
interleaved (x1, p1, x2, p2, ...).  All operations are pure: the input
state is never modified and a new state is returned, so states are safe to
share across parallel sweep workers.

Physicality (cm + i Omega >= 0) is not re-verified inside every operation;
``assert_physical`` runs the eigenvalue check on demand.  Map-level
contracts (symplectic, complete positivity) are checked at the point of
application and raise ``ContractViolation``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMPLECTIC_TOL = 1e-10
CP_TOL = 1e-9
PHYSICALITY_TOL = 1e-9


class ContractViolation(RuntimeError):
    """A matrix handed to the engine breaks its declared contract."""


def omega(n_modes):
    """Symplectic form for n interleaved modes."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass
class GaussianState:
    n_modes: int
    mean: np.ndarray
    cm: np.ndarray

    def copy(self):
        return GaussianState(self.n_modes, self.mean.copy(), self.cm.copy())

    def x_index(self, mode):
        return 2 * mode

    def p_index(self, mode):
        return 2 * mode + 1


@dataclass
class GaussianChannel:
    """(X, Y) pair acting on k modes as cm -> X cm X^T + Y, mean -> X mean."""

    X: np.ndarray
    Y: np.ndarray

    def n_modes(self):
        return self.X.shape[0] // 2

    def is_cp(self, tol=CP_TOL):
        k = self.n_modes()
        om = omega(k)
        test = self.Y + 1j * om - 1j * (self.X @ om @ self.X.T)
        eigs = np.linalg.eigvalsh(test)
        return eigs.min() >= -tol

    def compose_after(self, first):
        """Channel equal to applying ``first`` then ``self``."""
        return GaussianChannel(self.X @ first.X, self.X @ first.Y @ self.X.T + self.Y)


def make_state(kind, n_modes, nbar=None, s=None):
    """Product Gaussian state: 'vacuum', 'thermal' (nbar) or 'squeezed' (s).

    Thermal: per-mode cm (2 nbar + 1) I.  Squeezed: per-mode cm diag(s, 1/s),
    a minimum-uncertainty state squeezed in x for s < 1.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    if kind == "vacuum":
        per = np.eye(2)
    elif kind == "thermal":
        if nbar is None or nbar < 0:
            raise ValueError("thermal state needs nbar >= 0")
        per = (2.0 * nbar + 1.0) * np.eye(2)
    elif kind == "squeezed":
        if s is None or s <= 0:
            raise ValueError("squeezed state needs s > 0")
        per = np.diag([s, 1.0 / s])
    else:
        raise ValueError(f"unknown state kind {kind!r}")
    cm = np.kron(np.eye(n_modes), per)
    return GaussianState(n_modes, np.zeros(2 * n_modes), cm)


def product_state(per_mode_variances):
    """State with given ((x_var, p_var), ...) per mode, zero mean.

    No physicality screening: idealized intermediates (e.g. a mediator
    squeezed to exactly zero variance) are legitimate computational devices
    here; validate the final state with ``assert_physical`` where required.
    """
    n = len(per_mode_variances)
    cm = np.zeros((2 * n, 2 * n))
    for m, (vx, vp) in enumerate(per_mode_variances):
        cm[2 * m, 2 * m] = vx
        cm[2 * m + 1, 2 * m + 1] = vp
    return GaussianState(n, np.zeros(2 * n), cm)


def assert_physical(state, tol=PHYSICALITY_TOL):
    """Check symmetry and cm + i Omega >= 0 up to tol; raise on violation."""
    cm = state.cm
    if not np.allclose(cm, cm.T, atol=1e-12):
        raise ContractViolation("covariance matrix not symmetric within 1e-12")
    eigs = np.linalg.eigvalsh(cm + 1j * omega(state.n_modes))
    if eigs.min() < -tol:
        raise ContractViolation(f"unphysical covariance matrix: min eig {eigs.min():.3e}")
    return True


def symplectic_eigenvalues(cm):
    """Symplectic spectrum of a covariance matrix (one value per mode)."""
    n = cm.shape[0] // 2
    eigs = np.abs(np.linalg.eigvals(1j * omega(n) @ cm))
    return np.sort(eigs)[::2]


def _embed(matrix, mode_list, n_modes):
    """Embed a 2k x 2k matrix acting on mode_list into the 2n x 2n identity."""
    full = np.eye(2 * n_modes)
    idx = []
    for m in mode_list:
        idx.extend((2 * m, 2 * m + 1))
    idx = np.array(idx)
    full[np.ix_(idx, idx)] = matrix
    return full, idx


def apply_symplectic(state, s_matrix, mode_list):
    """Congruence cm -> S cm S^T (and mean -> S mean) on the selected modes."""
    s_matrix = np.asarray(s_matrix, dtype=float)
    k = len(mode_list)
    if s_matrix.shape != (2 * k, 2 * k):
        raise ValueError("symplectic block size does not match mode_list")
    om = omega(k)
    if not np.allclose(s_matrix @ om @ s_matrix.T, om, atol=SYMPLECTIC_TOL):
        raise ContractViolation("matrix is not symplectic within 1e-10")
    full, _ = _embed(s_matrix, mode_list, state.n_modes)
    return GaussianState(state.n_modes, full @ state.mean, full @ state.cm @ full.T)


def apply_channel(state, channel, mode_list):
    """cm -> X cm X^T + Y on the embedded modes; channel must be CP."""
    if not channel.is_cp():
        raise ContractViolation("channel violates complete positivity within 1e-9")
    n = state.n_modes
    full_x, idx = _embed(channel.X, mode_list, n)
    full_y = np.zeros((2 * n, 2 * n))
    full_y[np.ix_(idx, idx)] = channel.Y
    return GaussianState(n, full_x @ state.mean, full_x @ state.cm @ full_x.T + full_y)


def partial_trace(state, keep_modes):
    """Discard all modes not in keep_modes."""
    if not keep_modes:
        raise ValueError("keep_modes must be a nonempty subset")
    idx = []
    for m in keep_modes:
        idx.extend((2 * m, 2 * m + 1))
    idx = np.array(idx)
    return GaussianState(len(keep_modes), state.mean[idx], state.cm[np.ix_(idx, idx)])


def homodyne_condition(state, mode, quadrature, outcome):
    """Condition on a homodyne outcome for one quadrature of one mode.

    Standard Gaussian conditioning through the Schur complement with the
    Moore-Penrose pseudo-inverse restricted to the measured direction, so a
    zero-variance measured quadrature of an idealized state is handled.
    Returns (conditional state with the mode removed, (outcome_mean,
    outcome_var)); the conditional cm is outcome-independent and the
    conditional mean is linear in the outcome.
    """
    if quadrature not in ("x", "p"):
        raise ValueError("quadrature must be 'x' or 'p'")
    q_idx = 2 * mode + (0 if quadrature == "x" else 1)
    n = state.n_modes
    keep = [m for m in range(n) if m != mode]
    keep_idx = []
    for m in keep:
        keep_idx.extend((2 * m, 2 * m + 1))
    keep_idx = np.array(keep_idx, dtype=int)

    b_var = state.cm[q_idx, q_idx]
    cross = state.cm[np.ix_(keep_idx, [q_idx])]  # (2(n-1), 1)
    out_mean = state.mean[q_idx]

    if b_var > 0.0:
        gain = cross / b_var
    else:
        gain = np.zeros_like(cross)  # pseudo-inverse of the singular direction

    cm_a = state.cm[np.ix_(keep_idx, keep_idx)] - gain @ cross.T
    mean_a = state.mean[keep_idx] + (gain[:, 0] * (outcome - out_mean))
    return GaussianState(n - 1, mean_a, cm_a), (out_mean, b_var)
