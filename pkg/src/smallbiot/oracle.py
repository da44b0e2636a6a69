"""
Independent reference solutions: the slab eigenseries for the transient
problem on the unit interval, closed-form xi for the interval and the disk,
and a dense direct solver for small systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


@dataclass(frozen=True)
class SlabSeries:
    """Eigen-expansion of u_avg on the unit interval with Robin coefficient B.

    With the half-width as length unit, the Biot number is B/2 and the modes
    solve lam tan(lam) = B/2; Fourier time on the unit interval is 4x that
    on the half-slab.
    """
    biot: float
    eigenvalues: np.ndarray
    coefficients: np.ndarray

    @property
    def n_terms(self) -> int:
        return len(self.eigenvalues)

    def u_avg(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0):
            raise ValueError("t must be >= 0")
        lam2 = self.eigenvalues ** 2
        out = np.exp(-4.0 * np.outer(t, lam2)) @ self.coefficients
        return out

    def tail_bound(self, t: float) -> float:
        """Estimate of the omitted terms n > N.

        For large lam, sin^2(lam) ~ Bi^2/lam^2, so c_n ~ 2 Bi^2/lam^4 with
        lam spaced by pi; the sum is bounded by an integral (t = 0) or a
        geometric series in the decay factors (t > 0).
        """
        bi = self.biot / 2
        lam_last = float(self.eigenvalues[-1])
        integral = 2 * bi ** 2 / (3 * math.pi * lam_last ** 3)
        if t <= 0:
            return integral
        lam = lam_last + math.pi
        geom = 2 * bi ** 2 / lam ** 4 * math.exp(-4 * lam ** 2 * t) / -math.expm1(-8 * math.pi * lam * t)
        return min(integral, geom)


def _root(k: int, bi: float, tol: float = 1e-13) -> float:
    """Root of lam tan(lam) = bi in ((k-1) pi, (k-1) pi + pi/2), k >= 1."""
    lo = (k - 1) * math.pi
    hi = lo + math.pi / 2
    f = lambda x: x * math.sin(x) - bi * math.cos(x)  # no poles; same roots in the bracket
    a, b = lo, hi - 1e-300
    fa = f(a)
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
        if b - a < tol * max(1.0, b):
            break
    x = 0.5 * (a + b)
    # Newton polish on lam tan(lam) - bi itself (tan has no pole near the root)
    for _ in range(2):
        g = x * math.tan(x) - bi
        dg = math.tan(x) + x / math.cos(x) ** 2
        xn = x - g / dg
        if not lo < xn < hi:
            break
        x = xn
    if not lo <= x <= hi:
        raise ArithmeticError(f"eigenvalue {k} left its bracket")
    return x


def slab_series(biot: float, n_terms: int = 200) -> SlabSeries:
    if not biot > 0:
        raise ValueError("B must be > 0")
    if n_terms < 1:
        raise ValueError("need at least one term")
    bi = biot / 2
    lam = np.array([_root(k, bi) for k in range(1, n_terms + 1)])
    s, c = np.sin(lam), np.cos(lam)
    coef = 2 * s ** 2 / (lam * (lam + s * c))
    # tan(lam) cannot be evaluated better than ~lam * eps near lam, hence the scale
    resid = np.abs(lam * np.tan(lam) - bi) / np.maximum(1.0, lam) ** 2
    if resid.max() > 1e-12 * max(1.0, bi):
        raise ArithmeticError(f"eigenvalue residual {resid.max():.2e}")
    return SlabSeries(biot, lam, coef)


def slab_u_avg(biot: float, t, n_terms: int = 200):
    """u_avg(t) on the unit interval (gamma = 2) from the eigenseries."""
    if biot == 0:
        return np.ones_like(np.atleast_1d(np.asarray(t, dtype=float)))
    return slab_series(biot, n_terms).u_avg(t)


# ---------------------------------------------------------------------------
# closed-form xi
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosedFormXi:
    shape_id: str
    xi: object  # callable on points
    phi: float
    gamma_chi: float
    gamma2_upsilon: float


def closed_form_xi(shape_id: str) -> ClosedFormXi:
    """Analytic xi for the unit interval and the unit disk (sigma = kappa = 1)."""
    if shape_id == "interval":
        return ClosedFormXi("interval", lambda x: np.asarray(x) - np.asarray(x) ** 2 - 1 / 6,
                            1 / 3, 1 / 9, 1 / 45)
    if shape_id == "disk":
        c = math.pi ** -0.5

        def xi(p):
            p = np.atleast_2d(p)
            return c * (0.25 - 0.5 * (p ** 2).sum(axis=1))

        return ClosedFormXi("disk", xi, 1 / 2, 1 / 4, 1 / 12)
    raise ValueError(f"no closed form for {shape_id!r}")


def dense_solve_oracle(A, rhs) -> np.ndarray:
    """Dense LU solve for small systems (certifies the sparse solvers)."""
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    if A.shape[0] > 500:
        raise ValueError("dense oracle is limited to 500 unknowns")
    return sla.solve(A, np.asarray(rhs, dtype=float))
