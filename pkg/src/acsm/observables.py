"""Observables usable by the sampler, the jet engine and the integrator.

Each observable evaluates on batches of states (``value``) and composes with
trajectory jets (``jet``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fpu_model as fm
from .lie_derivatives import (
    energy_fraction_jet,
    half_kinetic_jet,
    hamiltonian_jet,
    jet_multiply,
)


@dataclass(frozen=True)
class Hamiltonian:
    name = "H"

    def value(self, model, q, p):
        return fm.hamiltonian(model, q, p)

    def jet(self, model, qj, pj):
        return hamiltonian_jet(model, qj, pj)


@dataclass(frozen=True)
class EnergyFraction:
    """Low-mode energy fraction, optionally with its component along H removed."""

    lam: float = 0.0
    name: str = "E"

    def value(self, model, q, p):
        v = fm.observable_E(model, q, p)
        return v - self.lam * fm.hamiltonian(model, q, p) if self.lam else v

    def jet(self, model, qj, pj):
        j = energy_fraction_jet(model, qj, pj)
        return j - self.lam * hamiltonian_jet(model, qj, pj) if self.lam else j


@dataclass(frozen=True)
class HalfKinetic:
    lam: float = 0.0
    name: str = "K"

    def value(self, model, q, p):
        v = fm.half_kinetic(model, q, p)
        return v - self.lam * fm.hamiltonian(model, q, p) if self.lam else v

    def jet(self, model, qj, pj):
        j = half_kinetic_jet(model, qj, pj)
        return j - self.lam * hamiltonian_jet(model, qj, pj) if self.lam else j


def Etilde(proj: fm.ProjectionCoeffs) -> EnergyFraction:
    return EnergyFraction(proj.lambda_E, "Etilde")


def Ktilde(proj: fm.ProjectionCoeffs) -> HalfKinetic:
    return HalfKinetic(proj.lambda_K, "Ktilde")


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in the positions and momenta.

    ``terms`` is a tuple of ``(coef, monomial)`` where a monomial is a tuple of
    ``(var, index, power)`` with ``var`` in {"q", "p"} and 1-based ``index``.
    """

    terms: tuple
    name: str = "poly"

    @classmethod
    def parse(cls, text: str, n_particles: int) -> "Polynomial":
        import sympy

        qs = sympy.symbols(f"q1:{n_particles + 1}")
        ps = sympy.symbols(f"p1:{n_particles + 1}")
        names = {str(s): s for s in qs + ps}
        try:
            expr = sympy.sympify(text, locals=names)
            poly = sympy.Poly(expr, *(qs + ps))
        except (sympy.SympifyError, sympy.PolynomialError, TypeError) as exc:
            raise ValueError(f"not a polynomial in q1..q{n_particles}, p1..p{n_particles}: {text!r}") from exc
        terms = []
        for powers, coef in poly.terms():
            mono = []
            for i, e in enumerate(powers):
                if e:
                    var = "q" if i < n_particles else "p"
                    mono.append((var, i % n_particles + 1, int(e)))
            terms.append((float(coef), tuple(mono)))
        return cls(tuple(terms), name=text)

    def _check(self, n):
        for _, mono in self.terms:
            for var, idx, power in mono:
                if var not in ("q", "p") or not 1 <= idx <= n or power < 0:
                    raise ValueError(f"bad monomial factor {(var, idx, power)!r} for N={n}")

    def value(self, model, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        self._check(q.shape[-1])
        out = np.zeros(q.shape[:-1])
        for coef, mono in self.terms:
            t = np.full(q.shape[:-1], coef)
            for var, idx, power in mono:
                t = t * (q if var == "q" else p)[..., idx - 1] ** power
            out = out + t
        return out

    def jet(self, model, qj, pj):
        self._check(qj.shape[-1])
        out = np.zeros(qj.shape[:-1])
        for coef, mono in self.terms:
            t = np.zeros(qj.shape[:-1])
            t[0] = coef
            for var, idx, power in mono:
                base = (qj if var == "q" else pj)[..., idx - 1]
                for _ in range(power):
                    t = jet_multiply(t, base)
            out = out + t
        return out


def position(i: int) -> Polynomial:
    return Polynomial(((1.0, (("q", i, 1),)),), name=f"q{i}")


def make_observable(name: str, model, proj: fm.ProjectionCoeffs | None = None, expr: str | None = None):
    if name == "H":
        return Hamiltonian()
    if name == "E":
        return EnergyFraction()
    if name == "K":
        return HalfKinetic()
    if name in ("Etilde", "Ktilde"):
        if proj is None:
            raise ValueError(f"{name} needs projection coefficients")
        return Etilde(proj) if name == "Etilde" else Ktilde(proj)
    if name in ("custom-polynomial", "poly"):
        if not expr:
            raise ValueError("custom-polynomial observable needs an expression")
        return Polynomial.parse(expr, model.n)
    raise ValueError(f"unsupported observable {name!r}")
