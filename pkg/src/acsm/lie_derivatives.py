"""Higher time derivatives along the FPU flow.

Two engines live here:

* Taylor jets.  The flow through a phase point is expanded as
  ``q(t) = sum_m q[m] t^m`` (same for ``p``); the polynomial force is composed
  with the position jets by truncated Cauchy products.  The m-th Lie
  derivative of an observable equals ``m! * f[m]``.
* The Faa di Bruno formula with the tuple enumerator over
  ``K(n, s) = {k in N^n : k_1 + 2 k_2 + ... + n k_n = s}`` walked in inverse
  lexicographic order (right to left).  Used for scalar compositions and as a
  cross-check of the jet engine.

Jet arrays carry the Taylor index on axis 0; any trailing axes are batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .fpu_model import ChainModel, PhasePoint


def cauchy_coeff(a, b, m: int):
    """m-th coefficient of the product of two jets (arrays indexed on axis 0)."""
    return np.einsum("i...,i...->...", a[: m + 1], b[m::-1])


def jet_multiply(a, b):
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    for m in range(a.shape[0]):
        out[m] = cauchy_coeff(a, b, m)
    return out


@dataclass(frozen=True)
class Jet:
    """Truncated Taylor series ``sum_m c[m] t^m`` closed under arithmetic at fixed order."""

    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=float))

    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((order + 1,) + value.shape)
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, value, order: int) -> "Jet":
        """The identity ``t -> value + t``."""
        j = cls.constant(value, order)
        if order >= 1:
            j.coefficients[1] = 1.0
        return j

    @property
    def order(self) -> int:
        return self.coefficients.shape[0] - 1

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.order != self.order:
                raise ValueError("jets of different order")
            return other
        return Jet.constant(other, self.order)

    def __add__(self, other):
        return Jet(self.coefficients + self._coerce(other).coefficients)

    __radd__ = __add__

    def __sub__(self, other):
        return Jet(self.coefficients - self._coerce(other).coefficients)

    def __rsub__(self, other):
        return Jet(self._coerce(other).coefficients - self.coefficients)

    def __neg__(self):
        return Jet(-self.coefficients)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(jet_multiply(self.coefficients, self._coerce(other).coefficients))
        return Jet(self.coefficients * other)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0 or int(k) != k:
            raise ValueError("only non-negative integer powers")
        out = Jet.constant(np.ones(self.coefficients.shape[1:]), self.order)
        for _ in range(int(k)):
            out = out * self
        return out

    def scale(self, a) -> "Jet":
        return Jet(self.coefficients * a)

    def derivatives(self) -> np.ndarray:
        """``d^m/dt^m`` at t = 0 for m = 0..order."""
        f = np.array([factorial(m) for m in range(self.order + 1)], dtype=float)
        return self.coefficients * f.reshape((-1,) + (1,) * (self.coefficients.ndim - 1))

    def __call__(self, t):
        """Horner evaluation of the truncated series."""
        acc = self.coefficients[-1] * 1.0
        for c in self.coefficients[-2::-1]:
            acc = acc * t + c
        return acc


def _bond_jet(qj):
    pad = np.zeros(qj.shape[:-1] + (1,))
    full = np.concatenate([pad, qj], axis=-1)
    return full[..., :-1] - full[..., 1:]


def trajectory_jet(model: ChainModel, x, order: int, p=None):
    """Taylor coefficients of q(t), p(t) through the given state(s).

    Returns ``(qj, pj)`` with shape ``(order + 1,) + q.shape``.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    if isinstance(x, PhasePoint):
        q, p = x.q, x.p
    else:
        q, p = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
    alpha, beta = model.params.alpha, model.params.beta
    shape = (order + 1,) + q.shape
    qj = np.zeros(shape)
    pj = np.zeros(shape)
    bj = np.zeros(shape)
    b2 = np.zeros(shape)
    b3 = np.zeros(shape)
    qj[0], pj[0] = q, p
    for m in range(order):
        bj[m] = _bond_jet(qj[m])
        b2[m] = cauchy_coeff(bj, bj, m)
        b3[m] = cauchy_coeff(b2, bj, m)
        vp = bj[m] + alpha * b2[m] + beta * b3[m]
        f = vp.copy()
        f[..., :-1] -= vp[..., 1:]
        qj[m + 1] = pj[m] / (m + 1)
        pj[m + 1] = f / (m + 1)
    return qj, pj


def quadratic_sum_jet(xj, weights):
    """Jet of ``sum_k w_k x_k(t)^2`` for ``xj`` of shape (M+1, ..., K)."""
    order = xj.shape[0] - 1
    out = np.zeros(xj.shape[:-1])
    w = np.asarray(weights, dtype=float)
    for m in range(order + 1):
        # symmetric Cauchy product: half the terms, doubled
        acc = np.zeros(xj.shape[1:])
        for i in range((m + 1) // 2):
            acc += 2.0 * xj[i] * xj[m - i]
        if m % 2 == 0:
            acc += xj[m // 2] ** 2
        out[m] = acc @ w
    return out


def hamiltonian_jet(model: ChainModel, qj, pj):
    n = qj.shape[-1]
    kin = quadratic_sum_jet(pj, np.full(n, 0.5))
    bj = _bond_jet(qj)
    b2 = jet_multiply(bj, bj)
    b3 = jet_multiply(b2, bj)
    b4 = jet_multiply(b2, b2)
    a, bt = model.params.alpha, model.params.beta
    pot = (0.5 * b2 + a / 3.0 * b3 + bt / 4.0 * b4).sum(axis=-1)
    return kin + pot


def energy_fraction_jet(model: ChainModel, qj, pj):
    v = model.low_modes
    w = model.mode_frequencies[: model.low_mode_count] ** 2
    qk = qj @ v
    pk = pj @ v
    return 0.5 * (quadratic_sum_jet(pk, np.ones(len(w))) + quadratic_sum_jet(qk, w)) / model.n


def half_kinetic_jet(model: ChainModel, qj, pj):
    h = model.n // 2
    return quadratic_sum_jet(pj[..., :h], np.full(h, 0.5))


def observable_jet(model: ChainModel, x, observable, order: int, p=None) -> Jet:
    """Jet of an observable along the flow; ``m! * c[m]`` is its m-th Lie derivative."""
    qj, pj = trajectory_jet(model, x, order, p)
    return Jet(observable.jet(model, qj, pj))


# -- Faa di Bruno --------------------------------------------------------------

@dataclass(frozen=True)
class FaaTuple:
    k: tuple
    s: int

    def __post_init__(self):
        if sum((j + 1) * kj for j, kj in enumerate(self.k)) != self.s:
            raise ValueError(f"{self.k} does not satisfy sum j*k_j = {self.s}")

    @property
    def n(self) -> int:
        return len(self.k)


def _first(n: int, s: int) -> list:
    k = [0] * n
    rest = s
    for j in range(n, 1, -1):
        k[j - 1] = rest // j
        rest -= j * k[j - 1]
    k[0] = rest
    return k


def faa_first_tuple(n: int, s: int) -> FaaTuple:
    if n < 1 or s < 0:
        raise ValueError("need n >= 1 and s >= 0")
    return FaaTuple(tuple(_first(n, s)), s)


def faa_next_tuple(t: FaaTuple) -> FaaTuple | None:
    """Successor in inverse lexicographic order; ``None`` after the last vector."""
    k = list(t.k)
    for m in range(2, len(k) + 1):
        if k[m - 1]:
            k[m - 1] -= 1
            k[: m - 1] = _first(m - 1, k[0] + m)
            return FaaTuple(tuple(k), t.s)
    return None


def faa_tuples(n: int, s: int):
    t = faa_first_tuple(n, s)
    while t is not None:
        yield t
        t = faa_next_tuple(t)


def faa_di_bruno(f_derivs, g_derivs, n: int) -> float:
    """n-th derivative of ``f(g(x))``.

    ``f_derivs[k]`` is f^(k) at g(x) for k = 0..n and ``g_derivs[j-1]`` is
    g^(j) at x for j = 1..n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0.0
    nfact = factorial(n)
    for t in faa_tuples(n, n):
        coef = nfact
        prod = 1.0
        for j, kj in enumerate(t.k, start=1):
            if kj:
                coef //= factorial(kj)
                prod *= (g_derivs[j - 1] / factorial(j)) ** kj
        total += coef * f_derivs[sum(t.k)] * prod
    return total


def compose_scalar_jet(f_derivs, g: Jet) -> Jet:
    """Jet of ``f(g(t))`` from the derivatives of f at g(0) and the jet of g."""
    h = Jet(g.coefficients.copy())
    h.coefficients[0] = 0.0
    out = Jet.constant(np.zeros(g.coefficients.shape[1:]), g.order)
    power = Jet.constant(np.ones(g.coefficients.shape[1:]), g.order)
    for k in range(g.order + 1):
        out = out + power.scale(f_derivs[k] / factorial(k))
        power = power * h
    return out
