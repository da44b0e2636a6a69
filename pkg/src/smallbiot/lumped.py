"""
Lumped (one- and two-term) approximations to the dunking QoIs, their error
estimators, and the thermal-resistance reading of phi.

Everything here is closed form. Times are nondimensional; Bi = B / gamma is
the dunking Biot number and Bi' = phi * Bi its phi-corrected version.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

E_INV = math.exp(-1.0)


@dataclass(frozen=True)
class LumpedInputs:
    biot: float
    gamma: float
    phi: float
    gamma_chi: float = 0.0
    gamma2_upsilon: float = 0.0
    bound_mode: bool = False

    def __post_init__(self):
        if self.biot < 0:
            raise ValueError("B must be >= 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.phi < 0 or self.gamma_chi < 0 or self.gamma2_upsilon < 0:
            raise ValueError("functionals must be >= 0")

    @classmethod
    def from_sensitivity(cls, res, biot: float, bound_mode: bool | None = None) -> "LumpedInputs":
        bm = getattr(res, "upper_bound", False) if bound_mode is None else bound_mode
        return cls(biot, res.gamma, res.phi, res.gamma_chi, res.gamma2_upsilon, bm)

    @property
    def bi(self) -> float:
        return self.biot / self.gamma

    @property
    def bi_prime(self) -> float:
        return self.phi * self.biot / self.gamma

    @property
    def tau1(self) -> float:
        return tau1(self.biot, self.gamma)


def tau1(biot: float, gamma: float) -> float:
    return math.inf if biot == 0 else 1.0 / (biot * gamma)


def u1_avg(t, biot: float, gamma: float):
    """One-term lumped average temperature exp(-B gamma t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return np.exp(-biot * gamma * t)


def u2p_avg(t, inp: LumpedInputs):
    """phi-corrected lumped average: the time constant grows by 1 + Bi'."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return np.exp(-inp.biot * inp.gamma * t / (1.0 + inp.bi_prime))


def u2p_delta(inp: LumpedInputs) -> float:
    bp = inp.bi_prime
    return bp / (1.0 + bp)


def u2p_boundary_avg(t, inp: LumpedInputs):
    return u1_avg(t, inp.biot, inp.gamma) * (1.0 + u2p_delta(inp))


def error_estimators(inp: LumpedInputs, t0: float | None = None) -> dict:
    """Asymptotic and non-asymptotic error estimates for the lumped models.

    ``t0`` defaults to 0.2 tau1; the relative u_delta estimate is split into
    its transient part C0/(B gamma t0) Bi and its long-time part C1 Bi.
    """
    if inp.phi <= 0:
        raise ValueError("phi = 0: C0 and C1 are undefined")
    bi, bp = inp.bi, inp.bi_prime
    mix = abs(inp.gamma_chi - inp.gamma2_upsilon - inp.phi ** 2)
    c0 = inp.gamma2_upsilon * E_INV / inp.phi
    c1 = mix / inp.phi
    out = {
        "e1_asymp": bp * E_INV,
        "e1_UB": 0.5 * math.sqrt(bp),
        "e2P_asymp": (mix * E_INV + inp.gamma2_upsilon) * bi ** 2,
        "C0": c0,
        "C1": c1,
    }
    if inp.biot == 0:
        out.update(t0=None, e_delta_transient=0.0, e_delta_longtime=0.0, e_delta_rel_estimate=0.0)
        return out
    if t0 is None:
        t0 = 0.2 * inp.tau1
    if not t0 > 0:
        raise ValueError("t0 must be > 0")
    transient = c0 / (inp.biot * inp.gamma * t0) * bi
    longtime = c1 * bi
    out.update(t0=t0, e_delta_transient=transient, e_delta_longtime=longtime,
               e_delta_rel_estimate=transient + longtime)
    return out


def resistances(inp: LumpedInputs, measures, dimensional=None) -> dict:
    """Conduction, convection and equivalent resistances.

    ``measures`` is a :class:`~smallbiot.geometry.ShapeMeasures` in units of
    ell. Without ``dimensional`` (a :class:`~smallbiot.dunking.DimensionalInput`)
    the outputs are nondimensional (resistances in units of ell^(2-d)/k_inf);
    with it they are in m and K/W (per unit depth in 2D).
    """
    L = measures.intrinsic_length
    if dimensional is None:
        L_cond = inp.phi * L
        R_avg = inp.phi / (inp.gamma * measures.boundary)
        R_h = math.inf if inp.biot == 0 else 1.0 / (inp.biot * measures.boundary)
    else:
        ell, h = dimensional.ell, dimensional.h
        area = measures.boundary * ell ** (measures.dim - 1)
        L = L * ell
        L_cond = inp.phi * L
        R_avg = L_cond / (dimensional.k_inf * area)
        R_h = math.inf if h == 0 else 1.0 / (h * area)
    out = {"L": L, "L_cond": L_cond, "R_avg": R_avg, "R_h": R_h,
           "R_eq": R_avg + R_h, "Bi_dunk": inp.bi, "Bi_dunk_prime": inp.bi_prime}
    if math.isinf(R_h):
        out["flag"] = "h = 0: convective resistance is infinite"
    return out


def large_biot_resistance(inp: LumpedInputs, boundary: float) -> float:
    """Nondimensional R_eq with the convective resistance dropped (B -> infinity)."""
    return inp.phi / (inp.gamma * boundary)


@dataclass
class LumpedReport:
    inputs: LumpedInputs
    tau1: float
    u2p_delta: float
    estimators: dict
    resistances: dict | None = None

    def u1_avg(self, t):
        return u1_avg(t, self.inputs.biot, self.inputs.gamma)

    def u2p_avg(self, t):
        return u2p_avg(t, self.inputs)

    def u2p_boundary_avg(self, t):
        return u2p_boundary_avg(t, self.inputs)

    def record(self) -> dict:
        out = {"inputs": asdict(self.inputs), "Bi_dunk": self.inputs.bi,
               "Bi_dunk_prime": self.inputs.bi_prime, "tau1": self.tau1,
               "u2P_delta": self.u2p_delta, **self.estimators}
        if self.resistances:
            out["resistances"] = self.resistances
        if self.inputs.bound_mode:
            out["bound_mode"] = True
        return out


def report(inp: LumpedInputs, t0: float | None = None, measures=None,
           dimensional=None) -> LumpedReport:
    est = error_estimators(inp, t0) if inp.phi > 0 else {}
    res = resistances(inp, measures, dimensional) if measures is not None else None
    return LumpedReport(inp, inp.tau1, u2p_delta(inp), est, res)
