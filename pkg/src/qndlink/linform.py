"""Exact Heisenberg-picture engine: quadratures as linear forms over sources.

Every optical mode entering a computation is a *source*: an independent
zero-mean Gaussian with known x/p variances (shot-noise units, vacuum = 1).
Quadratures evolve as linear forms over source quadratures; variances are
exact coefficient bookkeeping, so two forms built through different gate
orderings agree to the last bit when the algebra says they should.

Coefficients are plain doubles (no symbolic rationals); terms whose
coefficient cancels to exactly 0.0 are pruned, which keeps commutator sums
and variance sums free of spurious 0*inf products for idealized sources.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_QUADS = ("x", "p")


@dataclass(frozen=True)
class SourceMode:
    """Independent Gaussian source with quadrature variances in shot-noise units."""

    label: str
    x_var: float
    p_var: float


class LinearForm:
    """A quadrature as sum_k c_k * q_k + offset over registered sources.

    Supports exact addition, subtraction and scalar scaling.  The constant
    offset carries displacement feed-forward; all protocol inputs here are
    zero-mean so offsets stay 0 unless a displacement is applied explicitly.
    """

    __slots__ = ("coeffs", "offset")

    def __init__(self, coeffs=None, offset=0.0):
        self.coeffs = dict(coeffs) if coeffs else {}
        self.offset = float(offset)

    def copy(self):
        return LinearForm(self.coeffs, self.offset)

    def coefficient(self, label, quad):
        return self.coeffs.get((label, quad), 0.0)

    def add_scaled(self, other, factor):
        """In-place self += factor * other, pruning exact-zero coefficients."""
        for key, c in other.coeffs.items():
            new = self.coeffs.get(key, 0.0) + factor * c
            if new == 0.0:
                self.coeffs.pop(key, None)
            else:
                self.coeffs[key] = new
        self.offset += factor * other.offset
        return self

    def __add__(self, other):
        return self.copy().add_scaled(other, 1.0)

    def __sub__(self, other):
        return self.copy().add_scaled(other, -1.0)

    def __mul__(self, factor):
        out = LinearForm()
        out.offset = self.offset * factor
        for key, c in self.coeffs.items():
            v = c * factor
            if v != 0.0:
                out.coeffs[key] = v
        return out

    __rmul__ = __mul__

    def sources(self):
        return {label for (label, _q) in self.coeffs}

    def __repr__(self):
        terms = " + ".join(f"{c:.6g}*{q}_{label}" for (label, q), c in sorted(self.coeffs.items()))
        return f"LinearForm({terms or '0'}{f' + {self.offset:.6g}' if self.offset else ''})"


class ModeRegistry:
    """Append-only context of sources; forms reference sources by label.

    Immutable once a protocol realization is built, so registries can be
    shared read-only across parallel sweep workers.
    """

    def __init__(self):
        self._sources: dict[str, SourceMode] = {}

    def new_source(self, label, x_var, p_var):
        """Register an independent source and return it.

        Variances may be 0 (perfectly squeezed idealization) or math.inf
        (unbounded anti-squeezing); negative values are a domain error, and
        reusing a label within one registry is rejected.
        """
        if x_var < 0 or p_var < 0:
            raise ValueError(f"source {label!r}: negative variance ({x_var}, {p_var})")
        if label in self._sources:
            raise ValueError(f"source label {label!r} already registered")
        src = SourceMode(label, float(x_var), float(p_var))
        self._sources[label] = src
        return src

    def vacuum(self, label):
        return self.new_source(label, 1.0, 1.0)

    def source(self, label):
        return self._sources[label]

    def labels(self):
        return list(self._sources)

    def x(self, label):
        """Unit basis form for the x quadrature of a source."""
        self._require(label)
        return LinearForm({(label, "x"): 1.0})

    def p(self, label):
        self._require(label)
        return LinearForm({(label, "p"): 1.0})

    def _require(self, label):
        if label not in self._sources:
            raise KeyError(f"unknown source label {label!r} in this context")

    def variance(self, form: LinearForm):
        """Exact variance: sum of c^2 * var over independent source quadratures.

        Cross terms vanish (sources independent, no x-p correlation within a
        source).  Exact-zero coefficients never appear (pruned on the fly),
        so idealized inf-variance sources contribute only when coupled.
        """
        total = 0.0
        for (label, quad), c in form.coeffs.items():
            src = self._sources.get(label)
            if src is None:
                raise KeyError(f"form references unknown source {label!r}")
            var = src.x_var if quad == "x" else src.p_var
            total += c * c * var
        return total

    def per_source_variance(self, form: LinearForm):
        """Variance contribution of each source to a form, keyed by label."""
        out: dict[str, float] = {}
        for (label, quad), c in form.coeffs.items():
            src = self._sources[label]
            var = src.x_var if quad == "x" else src.p_var
            out[label] = out.get(label, 0.0) + c * c * var
        return out


def commutator_check(xf: LinearForm, pf: LinearForm):
    """Canonical pairing of two forms in units of [x, p] = 2i.

    Returns sum over sources of c_x[xf] c_p[pf] - c_p[xf] c_x[pf]; equals 1
    for a conjugate pair, 0 for commuting forms.  Pure coefficient
    arithmetic, no variances involved.
    """
    total = 0.0
    labels = xf.sources() | pf.sources()
    for label in labels:
        total += xf.coefficient(label, "x") * pf.coefficient(label, "p")
        total -= xf.coefficient(label, "p") * pf.coefficient(label, "x")
    return total

