"""Nonlocal continuous-variable QND gates mediated by lossy optical links.

Two independent engines back every computation: an exact linear-form
(Heisenberg) engine and a covariance-matrix (Schroedinger) engine, plus a
moment-ODE / Monte-Carlo oracle pair for verification.  Shot-noise units
throughout: vacuum variance 1, [x, p] = 2i.
"""

__version__ = "0.1.0"

from .linform import LinearForm, ModeRegistry, SourceMode, commutator_check
from .gstate import ContractViolation, GaussianChannel, GaussianState
from .elements import ChannelParams, OpaParams, PhysicalOpaParams
from .protocols import (
    BmParams,
    EbParams,
    GpParams,
    NoiseBudget,
    ProtocolRealization,
    SbParams,
    build_bm,
    build_eb,
    build_gp,
    build_sb,
    closed_form_noise,
    verify_gate_shape,
)
from .metrics import (
    EntanglementReport,
    asymptotics,
    entanglement_ratio,
    log_negativity_closed,
    log_negativity_cm,
    max_tolerable_noise,
)
from .optimize import (
    OptimizationFailure,
    OptResult,
    analytic_optimum_ideal,
    max_loss,
    optimize_gains,
    threshold_eta_gp,
)
from .cluster import ClusterSpec, ClusterState, NullifierReport, build_cluster, fuse, nullifiers, vlf_check
from .oracle import McEstimate, MomentTrajectory, integrate_opa_moments, mc_estimate
