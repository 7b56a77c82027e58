"""Scalar N-function calculus for orthotropic growth laws.

The growth of the flux in each coordinate direction is described by a
(regularized) power N-function

    phi(t) = (delta^2 + t^2)^(p/2) / p,      p > 1, delta >= 0,

which for delta = 0 reduces to t^p / p.  From phi we derive, per
coordinate, the flux A(t) = B(t) t, the weight B used by the
semi-implicit solver, the natural-distance map V, and the auxiliary
root map psi' with psi'(t)^2 = t phi'(t).  Shifted N-functions
phi_a'(t) = t/(a+t) phi'(a+t) are provided for the convexity/Young
property checks.

All evaluation maps accept floats or numpy arrays and are pure; every
object here is immutable after construction.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PowerNFunction",
    "ShiftedNFunction",
    "GrowthLaw",
    "conjugate_exponent",
]


def _check_nonnegative(t, what="argument"):
    if np.any(np.asarray(t) < 0):
        raise ValueError(f"{what} must be nonnegative")


@dataclass(frozen=True)
class PowerNFunction:
    """The N-function (delta^2 + t^2)^(p/2) / p on t >= 0."""

    p: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"exponent must satisfy p > 1, got {self.p}")
        if self.delta < 0:
            raise ValueError(f"regularization shift must be >= 0, got {self.delta}")

    def value(self, t):
        _check_nonnegative(t)
        t = np.asarray(t, dtype=float)
        if self.delta == 0.0:
            out = t ** self.p / self.p
        else:
            out = (self.delta ** 2 + t ** 2) ** (self.p / 2) / self.p
        return out if out.ndim else float(out)

    def deriv(self, t):
        """phi'(t) = t (delta^2 + t^2)^((p-2)/2)."""
        _check_nonnegative(t)
        t = np.asarray(t, dtype=float)
        if self.delta == 0.0:
            out = t ** (self.p - 1)
        else:
            out = t * (self.delta ** 2 + t ** 2) ** ((self.p - 2) / 2)
        return out if out.ndim else float(out)

    def deriv2(self, t):
        """phi''(t) = (delta^2 + t^2)^((p-4)/2) (delta^2 + (p-1) t^2)."""
        _check_nonnegative(t)
        t = np.asarray(t, dtype=float)
        if self.delta == 0.0:
            out = (self.p - 1) * t ** (self.p - 2)
        else:
            out = (self.delta ** 2 + t ** 2) ** ((self.p - 4) / 2) * (
                self.delta ** 2 + (self.p - 1) * t ** 2
            )
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ShiftedNFunction:
    """Shift of a power N-function by a gradient magnitude a >= 0."""

    base: PowerNFunction
    a: float

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"shift must be >= 0, got {self.a}")

    def deriv(self, t):
        """t/(a+t) phi'(a+t), continued by 0 at t = 0."""
        _check_nonnegative(t)
        t = np.asarray(t, dtype=float)
        denom = self.a + t
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(denom > 0, t / np.where(denom > 0, denom, 1.0), 0.0)
        out = out * self.base.deriv(denom)
        return out if out.ndim else float(out)

    def value(self, t):
        """Integral of the shifted derivative from 0 to t.

        Uses the closed-form antiderivative of s (a+s)^(p-2) when
        delta = 0 and adaptive 32-node Gauss-Legendre otherwise.
        """
        _check_nonnegative(t)
        t = np.asarray(t, dtype=float)
        if self.base.delta == 0.0:
            out = self._value_closed(t)
        else:
            out = np.vectorize(self._value_quad)(t)
        out = np.asarray(out)
        return out if out.ndim else float(out)

    def _value_closed(self, t):
        p, a = self.base.p, self.a
        s = a + t
        if a == 0.0:
            return t ** p / p
        return (s ** p - a ** p) / p - a * (s ** (p - 1) - a ** (p - 1)) / (p - 1)

    def _value_quad(self, t, rel_tol=1e-10):
        if t == 0.0:
            return 0.0
        nodes, weights = np.polynomial.legendre.leggauss(32)

        def panel(lo, hi):
            mid, half = (hi + lo) / 2, (hi - lo) / 2
            return half * float(np.sum(weights * self.deriv(mid + half * nodes)))

        def refine(lo, hi, whole, depth):
            mid = (lo + hi) / 2
            left, right = panel(lo, mid), panel(mid, hi)
            if abs(left + right - whole) <= rel_tol * (abs(left) + abs(right)) or depth > 40:
                return left + right
            return refine(lo, mid, left, depth + 1) + refine(mid, hi, right, depth + 1)

        return refine(0.0, float(t), panel(0.0, float(t)), 0)


def conjugate_exponent(p):
    """Hoelder conjugate q = p/(p-1)."""
    if not p > 1:
        raise ValueError(f"conjugate exponent requires p > 1, got {p}")
    return p / (p - 1)


class GrowthLaw:
    """Per-coordinate growth description for the orthotropic problem.

    Parameters
    ----------
    exponents : pair of floats
        Growth exponents (p_1, p_2), each in (1, inf).
    deltas : pair of floats, optional
        Regularization shifts per coordinate; 0 gives the plain
        power-law case used in all convergence experiments.
    """

    def __init__(self, exponents, deltas=(0.0, 0.0)):
        exponents = tuple(float(p) for p in exponents)
        deltas = tuple(float(d) for d in deltas)
        if len(exponents) != 2 or len(deltas) != 2:
            raise ValueError("growth law is two-dimensional: need two exponents/deltas")
        self.phis = tuple(PowerNFunction(p, d) for p, d in zip(exponents, deltas))
        self.exponents = exponents
        self.deltas = deltas

    def phi(self, i):
        """The N-function of coordinate i (0-based)."""
        return self.phis[i]

    def flux(self, i, t):
        """A_i(t): sign(t) |t|^(p-1), or t (delta^2+t^2)^((p-2)/2) if regularized."""
        p, d = self.exponents[i], self.deltas[i]
        t = np.asarray(t, dtype=float)
        if d == 0.0:
            out = np.sign(t) * np.abs(t) ** (p - 1)
        else:
            out = t * (d ** 2 + t ** 2) ** ((p - 2) / 2)
        return out if out.ndim else float(out)

    def weight(self, i, t, clamp=0.0):
        """B_i(t) with A_i(t) = B_i(t) t, clamped away from the singularity.

        For p < 2 and delta = 0 the weight |t|^(p-2) blows up at t = 0,
        so a positive clamp on |t| is required there.
        """
        p, d = self.exponents[i], self.deltas[i]
        t = np.asarray(t, dtype=float)
        if p == 2.0 and d == 0.0:
            out = np.ones_like(t)
        elif d == 0.0:
            at = np.abs(t)
            if p < 2.0:
                if clamp <= 0.0:
                    raise ValueError(
                        "weight of a singular law (p < 2, delta = 0) needs clamp > 0"
                    )
                at = np.maximum(at, clamp)
            out = at ** (p - 2)
        else:
            out = (d ** 2 + t ** 2) ** ((p - 2) / 2)
        return out if out.ndim else float(out)

    def natural(self, i, t):
        """Natural-distance map V_i(t) = sign(t) |t|^(p/2).

        Error measurement always uses the unregularized form, so the
        delta of the law is ignored here.
        """
        p = self.exponents[i]
        t = np.asarray(t, dtype=float)
        out = np.sign(t) * np.abs(t) ** (p / 2)
        return out if out.ndim else float(out)

    def psi_deriv(self, i, t):
        """psi_i'(t) = sqrt(t phi_i'(t)) for t >= 0."""
        _check_nonnegative(t)
        t = np.asarray(t, dtype=float)
        out = np.sqrt(t * self.phis[i].deriv(t))
        return out if out.ndim else float(out)

    def conjugates(self):
        """Conjugate exponents (q_1, q_2) of the growth exponents."""
        return tuple(conjugate_exponent(p) for p in self.exponents)
