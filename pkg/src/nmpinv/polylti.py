"""Polynomial and discrete LTI transfer-function algebra.

Transfer functions are stored as numerator/denominator polynomials in z
with coefficients indexed by ascending power, so ``coeffs[i]`` multiplies
``z**i``.  Improper systems (numerator degree above denominator degree)
are first-class values: they carry a ``preview`` count, the number of
future input samples the simulator needs.  That is how the stable
approximate inverses built here are represented and simulated.

Main entry points:

    Polynomial, DiscreteTransferFunction, ZeroClassification
    poly_eval, poly_roots, classify_zeros, relative_degree
    exact_inverse, zos_inverse, naive_approx_inverse
    dc_gain, simulate, frequency_response
"""

import cmath
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateApproximation,
    ImproperSystem,
    InsufficientPreview,
    NonConvergence,
    PoleAtOne,
    PoleOnUnitCircle,
)

# Root-finder settings: Aberth-Ehrlich with a hard iteration cap, then a
# companion-matrix eigenvalue fallback.  Residuals are checked against the
# coefficient norm so the tolerance is scale-free.
_ABERTH_MAX_ITER = 500
_ABERTH_TOL = 1e-12
_ROOT_RESIDUAL_TOL = 1e-8

# Zeros with modulus inside this band around 1 are classified unstable:
# marginal zeros produce non-decaying inverse modes.
_UNIT_CIRCLE_GUARD = 1e-9


class Polynomial:
    """Real polynomial with ascending coefficients; empty tuple is the zero polynomial."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=()):
        trimmed = list(float(c) for c in coeffs)
        while trimmed and trimmed[-1] == 0.0:
            trimmed.pop()
        self.coeffs = tuple(trimmed)

    @classmethod
    def from_roots(cls, roots, gain=1.0):
        """Build gain * prod(z - root_i); complex roots must come in conjugate pairs."""
        c = np.polynomial.polynomial.polyfromroots(list(roots))
        if np.max(np.abs(c.imag)) > 1e-9 * max(1.0, np.max(np.abs(c))):
            raise ValueError("roots do not form a real polynomial")
        return cls(gain * c.real)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def is_zero(self):
        return not self.coeffs

    def __call__(self, z):
        return poly_eval(self, z)

    def derivative(self):
        return Polynomial(tuple(i * c for i, c in enumerate(self.coeffs) if i > 0))

    def scaled(self, factor):
        return Polynomial(tuple(factor * c for c in self.coeffs))

    def __mul__(self, other):
        if self.is_zero() or other.is_zero():
            return Polynomial()
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"Polynomial({list(self.coeffs)})"


def poly_eval(p: Polynomial, z) -> complex:
    """Horner evaluation of sum(coeffs[i] * z**i)."""
    acc = 0.0 + 0.0j
    for c in reversed(p.coeffs):
        acc = acc * z + c
    return acc


def _aberth_roots(coeffs):
    """Aberth-Ehrlich simultaneous iteration on a polynomial with nonzero constant term."""
    n = len(coeffs) - 1
    p = Polynomial(coeffs)
    dp = p.derivative()
    radius = abs(coeffs[0] / coeffs[-1]) ** (1.0 / n)
    radius = max(radius, 1e-3)
    # Slight angular offset breaks the symmetry of real-coefficient spectra.
    roots = np.array(
        [radius * cmath.exp(1j * (2 * cmath.pi * k / n + 0.25)) for k in range(n)]
    )
    for _ in range(_ABERTH_MAX_ITER):
        moved = 0.0
        for k in range(n):
            zk = roots[k]
            pz = poly_eval(p, zk)
            dpz = poly_eval(dp, zk)
            if dpz == 0:
                roots[k] = zk + 1e-6 * (1 + 1j)
                moved = np.inf
                continue
            newton = pz / dpz
            others = roots[np.arange(n) != k]
            repulsion = np.sum(1.0 / (zk - others)) if n > 1 else 0.0
            denom = 1.0 - newton * repulsion
            if denom == 0:
                roots[k] = zk + 1e-6 * (1 - 1j)
                moved = np.inf
                continue
            step = newton / denom
            roots[k] = zk - step
            moved = max(moved, abs(step) / max(1.0, abs(zk)))
        if moved < _ABERTH_TOL:
            break
    return roots


def _companion_roots(coeffs):
    """Eigenvalues of the companion matrix (descending-normalized)."""
    monic = np.asarray(coeffs, dtype=float) / coeffs[-1]
    n = len(monic) - 1
    comp = np.zeros((n, n))
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -monic[:-1]
    return np.linalg.eigvals(comp)


def _residuals_ok(p, roots):
    scale = np.linalg.norm(p.coeffs)
    return all(abs(poly_eval(p, r)) / scale < _ROOT_RESIDUAL_TOL for r in roots)


def poly_roots(p: Polynomial) -> list:
    """All deg(p) roots, residual-checked; raises NonConvergence if both methods fail."""
    if p.degree < 1:
        raise ValueError("poly_roots requires degree >= 1")
    coeffs = list(p.coeffs)
    zero_roots = 0
    while coeffs[0] == 0.0:
        coeffs.pop(0)
        zero_roots += 1
    found = []
    if len(coeffs) > 1:
        found = list(_aberth_roots(coeffs))
        if not _residuals_ok(Polynomial(coeffs), found):
            found = list(_companion_roots(coeffs))
    roots = [0.0 + 0.0j] * zero_roots + found
    if not _residuals_ok(p, roots):
        raise NonConvergence(
            f"root residuals above {_ROOT_RESIDUAL_TOL} for degree {p.degree}"
        )
    return sorted(roots, key=lambda r: (r.real, r.imag))


@dataclass(frozen=True)
class ZeroClassification:
    """Numerator roots split at the unit circle, plus the leading gain."""

    stable_zeros: tuple
    unstable_zeros: tuple
    gain: float

    def reconstructed_numerator(self) -> Polynomial:
        return Polynomial.from_roots(
            list(self.stable_zeros) + list(self.unstable_zeros), self.gain
        )


class DiscreteTransferFunction:
    """Rational z-domain model N(z)/D(z) with a sample time in seconds."""

    __slots__ = ("num", "den", "sample_time")

    def __init__(self, num, den, sample_time):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero():
            raise ValueError("denominator must be nonzero")
        if sample_time <= 0:
            raise ValueError("sample_time must be positive")
        self.num = num
        self.den = den
        self.sample_time = float(sample_time)

    @property
    def preview(self) -> int:
        """Future input samples the simulator needs (0 for proper systems)."""
        return max(0, self.num.degree - self.den.degree)

    def __call__(self, z):
        return poly_eval(self.num, z) / poly_eval(self.den, z)

    def __repr__(self):
        return (
            f"DiscreteTransferFunction(num={list(self.num.coeffs)}, "
            f"den={list(self.den.coeffs)}, dt={self.sample_time})"
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "num": list(self.num.coeffs),
                "den": list(self.den.coeffs),
                "dt": self.sample_time,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str):
        obj = json.loads(text)
        return cls(obj["num"], obj["den"], obj["dt"])


def relative_degree(tf: DiscreteTransferFunction) -> int:
    """deg(den) - deg(num); the inherent input-to-output delay in samples."""
    r = tf.den.degree - tf.num.degree
    if r < 0:
        raise ImproperSystem(f"deg(num)={tf.num.degree} > deg(den)={tf.den.degree}")
    return r


def classify_zeros(tf: DiscreteTransferFunction) -> ZeroClassification:
    """Partition numerator roots by modulus; moduli within 1e-9 of 1 count as unstable."""
    if tf.num.is_zero():
        raise ValueError("classify_zeros requires a nonzero numerator")
    gain = tf.num.coeffs[-1]
    if tf.num.degree == 0:
        return ZeroClassification((), (), gain)
    roots = poly_roots(tf.num)
    stable = tuple(r for r in roots if abs(r) < 1.0 - _UNIT_CIRCLE_GUARD)
    unstable = tuple(r for r in roots if abs(r) >= 1.0 - _UNIT_CIRCLE_GUARD)
    return ZeroClassification(stable, unstable, gain)


def exact_inverse(tf: DiscreteTransferFunction) -> DiscreteTransferFunction:
    """Swap numerator and denominator; improper results carry their preview count."""
    if tf.num.is_zero():
        raise ValueError("cannot invert a zero numerator")
    return DiscreteTransferFunction(tf.den, tf.num, tf.sample_time)


def _real_product_at_one(roots):
    prod = 1.0 + 0.0j
    for r in roots:
        prod *= 1.0 - r
    return prod.real


def zos_inverse(tf: DiscreteTransferFunction) -> DiscreteTransferFunction:
    """Stable approximate inverse: D(z) over the unstable numerator factor frozen at z=1.

    The numerator is factored as gain * Ns(z) * Nu(z) with Ns collecting the
    stable zeros and Nu the unstable ones; the inverse is
    D(z) / (Nu(1) * gain * Ns(z)), whose poles are exactly the stable zeros.
    """
    cls = classify_zeros(tf)
    nu_at_one = _real_product_at_one(cls.unstable_zeros)
    if abs(nu_at_one) < 1e-12:
        raise DegenerateApproximation("numerator has a zero at z = 1")
    den = Polynomial.from_roots(cls.stable_zeros, gain=cls.gain * nu_at_one)
    return DiscreteTransferFunction(tf.den, den, tf.sample_time)


def naive_approx_inverse(tf: DiscreteTransferFunction) -> DiscreteTransferFunction:
    """D(z) divided by the scalar N(1): the whole numerator frozen at z = 1."""
    n_at_one = poly_eval(tf.num, 1.0).real
    if abs(n_at_one) < 1e-12:
        raise DegenerateApproximation("numerator vanishes at z = 1")
    return DiscreteTransferFunction(tf.den, Polynomial([n_at_one]), tf.sample_time)


def dc_gain(tf: DiscreteTransferFunction) -> float:
    """num(1)/den(1)."""
    d = poly_eval(tf.den, 1.0).real
    if abs(d) < 1e-12:
        raise PoleAtOne("denominator vanishes at z = 1")
    return poly_eval(tf.num, 1.0).real / d


def frequency_response(tf: DiscreteTransferFunction, omega: float) -> complex:
    """Evaluate at z = exp(j*omega); omega in rad/sample."""
    z = cmath.exp(1j * omega)
    d = poly_eval(tf.den, z)
    if abs(d) < 1e-12:
        raise PoleOnUnitCircle(f"denominator vanishes at omega={omega}")
    return poly_eval(tf.num, z) / d


def simulate(tf: DiscreteTransferFunction, inputs, preview=None) -> np.ndarray:
    """Run the difference equation from zero initial conditions.

    Improper systems look ``tf.preview`` samples ahead; the tail is
    zero-padded so the output has the same length as the input.  ``preview``
    is the caller's future-sample budget and must cover ``tf.preview``.
    """
    needed = tf.preview
    if preview is None:
        preview = needed
    if preview < needed:
        raise InsufficientPreview(f"need {needed} future samples, granted {preview}")
    u = np.asarray(inputs, dtype=float)
    if u.ndim != 1:
        raise ValueError("input must be a 1-D sequence")
    if u.size == 0:
        return np.zeros(0)
    num = tf.num.coeffs
    den = tf.den.coeffs
    m = tf.den.degree
    p = tf.num.degree
    L = u.size
    # Input side of the difference equation, w[k] = sum_j num[j] u[k-m+j],
    # with out-of-range samples (both ends) treated as zero.
    conv = np.convolve(u, num[::-1])
    w = np.zeros(L)
    k0 = max(0, m - p)
    count = min(L - k0, conv.size - (k0 + p - m))
    if count > 0:
        w[k0 : k0 + count] = conv[k0 + p - m : k0 + p - m + count]
    if m == 0:
        return w / den[0]
    # Output recursion with y(k) = 0 for k < 0.
    y = np.zeros(L)
    lead = den[m]
    past = den[:m]
    for k in range(L):
        acc = w[k]
        j0 = max(0, m - k)
        for j in range(j0, m):
            acc -= past[j] * y[k - m + j]
        y[k] = acc / lead
    return y
