"""The comparison autocorrelation g(t) = sech(b t) and its exact moments.

sech(x) = sum_n E_2n x^2n / (2n)! with Euler numbers E_2n, so the moment
coefficients of g are c_n = |E_2n| b^2n.  Its spectral measure has density
sech(pi w / 2b) / 2b on the real line.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import mpmath
import numpy as np

from .moment_engine import MomentSequence


@lru_cache(maxsize=None)
def euler_numbers(n_max: int) -> tuple:
    """Signed Euler numbers E_0, E_2, ..., E_{2 n_max} as exact integers."""
    e = [1]
    for n in range(1, n_max + 1):
        e.append(-sum(comb(2 * n, 2 * j) * e[j] for j in range(n)))
    return tuple(e)


@dataclass(frozen=True)
class SechMoments:
    b: float
    c: np.ndarray
    euler: tuple

    def as_moment_sequence(self) -> MomentSequence:
        return MomentSequence(self.c, np.zeros_like(self.c), 0, f"sech(b={self.b!r})")


def sech_moments(b: float, n_max: int) -> SechMoments:
    if not b > 0:
        raise ValueError("b must be positive")
    e = euler_numbers(n_max)
    c = np.array([float(abs(x)) * b ** (2 * n) for n, x in enumerate(e)])
    return SechMoments(float(b), c, e)


def calibrate_b(m) -> float:
    """b such that sech(b t) has its order-1 pole where ``m`` has it: b = sqrt(c_1/c_0)."""
    c = m.c if isinstance(m, MomentSequence) else np.asarray(m, dtype=float)
    if not c[0] > 0:
        raise ValueError("c_0 must be positive to calibrate b")
    return float(np.sqrt(c[1] / c[0]))


def sech_spectral_density(b: float, omega):
    """Probability density on the real omega line whose even moments are c_n."""
    omega = np.asarray(omega, dtype=float)
    return 1.0 / np.cosh(np.pi * omega / (2 * b)) / (2 * b)


def sech_hausdorff_moments(b: float, k_max: int, precision_bits: int = 256):
    """mu_k and mu~_k of the exact sech measure under w = u / (1 + u), u = omega^2."""
    # x = tan(theta) maps w to sin^2(theta) on a finite interval where the
    # integrand is smooth, so tanh-sinh quadrature reaches working precision
    with mpmath.workprec(precision_bits):
        b = mpmath.mpf(b)
        half_pi = mpmath.pi / 2

        cache = {}  # quad revisits the same nodes for every power

        def integrand(theta, power):
            hit = cache.get(theta)
            if hit is None:
                x = mpmath.tan(theta)
                hit = (mpmath.sin(theta) ** 2,
                       mpmath.sech(mpmath.pi * x / (2 * b)) / (b * mpmath.cos(theta) ** 2))
                cache[theta] = hit
            return hit[0] ** power * hit[1]

        pts = [0, half_pi / 4, half_pi / 2, half_pi]
        half = mpmath.mpf(1) / 2
        mu = [mpmath.quad(lambda t: integrand(t, k), pts) for k in range(k_max + 1)]
        mut = [mpmath.quad(lambda t: integrand(t, k + half), pts) for k in range(k_max + 1)]
        return mu, mut
