"""
The sensitivity field xi and its quadratic functionals phi, chi and upsilon.

xi solves the constrained Neumann problem

    -div(kappa grad xi) = |Omega|^(-1/2) gamma sigma   in Omega
     kappa d_n xi       = -|Omega|^(-1/2)              on the boundary
     int sigma xi       = 0

and the functionals are phi = int kappa |grad xi|^2, chi = int_boundary xi^2,
upsilon = int sigma xi^2. phi, gamma*chi and gamma^2*upsilon are invariant
under dilation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fem import UNIFORM, MaterialField, assemble, solve_saddle
from .geometry import ShapeSpec, measures
from .mesh import Mesh, generate, refine_uniform

log = logging.getLogger(__name__)

CONVERGED_RTOL = 1e-3


@dataclass
class SensitivityResult:
    xi: np.ndarray
    phi: float
    chi: float
    upsilon: float
    gamma: float
    phi_alt: float
    xi_mean: float
    residual: float
    mesh: Mesh | None = None
    order: int = 2
    uniform: bool = True
    discretization_estimate: float = float("nan")
    history: list = field(default_factory=list)
    converged: bool = False
    warning: str = ""
    upper_bound: bool = False

    @property
    def gamma_chi(self) -> float:
        return self.gamma * self.chi

    @property
    def gamma2_upsilon(self) -> float:
        return self.gamma ** 2 * self.upsilon

    def record(self, **extra) -> dict:
        """JSON-ready summary (the field itself is omitted)."""
        out = {
            "phi": self.phi,
            "gamma_chi": self.gamma_chi,
            "gamma2_upsilon": self.gamma2_upsilon,
            "phi_alt": self.phi_alt,
            "gamma": self.gamma,
            "materials": "uniform" if self.uniform else "piecewise",
            "order": self.order,
            "levels": len(self.history) or 1,
            "discretization_estimate": self.discretization_estimate,
            "converged": self.converged,
            "history": self.history,
        }
        if self.warning:
            out["warning"] = self.warning
        if self.upper_bound:
            out["upper_bound"] = True
        out.update(extra)
        return out


def solve_xi(mesh: Mesh, materials: MaterialField = UNIFORM, order: int = 2) -> SensitivityResult:
    """Galerkin solution for xi with the zero-mean condition as a Lagrange multiplier."""
    ops = assemble(mesh, materials, order)
    vol, bnd = ops.volume, ops.boundary_measure
    gamma = bnd / vol
    scale = vol ** -0.5
    rhs = scale * (gamma * ops.b_sigma - ops.b_boundary)
    sol = solve_saddle(ops.K_kappa, ops.b_sigma, rhs, 0.0)
    xi = sol.x
    phi = float(xi @ (ops.K_kappa @ xi))
    chi = float(xi @ (ops.M_boundary @ xi))
    ups = float(xi @ (ops.M_sigma @ xi))
    phi_alt = float(-scale * (ops.b_boundary @ xi))
    return SensitivityResult(xi=xi, phi=phi, chi=chi, upsilon=ups, gamma=gamma,
                             phi_alt=phi_alt, xi_mean=float(ops.b_sigma @ xi) / vol,
                             residual=sol.residual, mesh=mesh, order=order,
                             uniform=materials.is_uniform)


def default_mesh_size(shape: ShapeSpec) -> float:
    m = measures(shape)
    if shape.kind == "interval":
        return shape.length / 8
    if shape.kind == "disk":
        return 0.25 * shape.radius
    return 0.1 * m.diameter


def functionals_with_convergence(shape: ShapeSpec | Mesh, materials: MaterialField = UNIFORM,
                                 order: int = 2, levels: int = 4, h: float | None = None,
                                 regions=None) -> SensitivityResult:
    """Solve for xi on ``levels`` uniformly refined meshes; return the finest.

    ``discretization_estimate`` is the change in phi over the last
    refinement. ``regions`` (array or callable on element centroids) assigns
    material regions on the coarse mesh; children inherit them.
    """
    if levels < 2:
        raise ValueError("need at least 2 refinement levels")
    if isinstance(shape, Mesh):
        mesh = shape
    else:
        mesh = generate(shape, h or default_mesh_size(shape))
    if regions is not None:
        mesh = mesh.with_regions(regions)
    history = []
    res = None
    for lev in range(levels):
        if lev:
            mesh = refine_uniform(mesh)
        res = solve_xi(mesh, materials, order)
        history.append({"level": lev, "n_elements": mesh.n_elements, "phi": res.phi,
                        "gamma_chi": res.gamma_chi, "gamma2_upsilon": res.gamma2_upsilon})
    deltas = [abs(history[i]["phi"] - history[i - 1]["phi"]) for i in range(1, levels)]
    res.history = history
    res.discretization_estimate = deltas[-1]
    res.converged = deltas[-1] < CONVERGED_RTOL * abs(res.phi)
    # changes at roundoff level carry no convergence information
    floor = 1e-9 * abs(res.phi)
    if len(deltas) >= 2 and any(b >= a and b > floor for a, b in zip(deltas, deltas[1:])):
        res.warning = "phi changes did not decrease monotonically under refinement"
        log.warning("%s: %s", getattr(shape, "name", "mesh"), res.warning)
    return res


def kappa_upper_bound(shape, sigma: MaterialField | None = None, **kwargs) -> SensitivityResult | dict:
    """phi with kappa = 1, an upper bound for phi under any admissible kappa >= 1.

    ``shape`` may be a dictionary id (sigma must then be uniform) or a shape.
    """
    if isinstance(shape, str):
        if sigma is not None and not set(sigma.sigma.values()) <= {1.0}:
            raise ValueError("dictionary bounds need uniform sigma")
        out = dict(dictionary(shape, kwargs.get("parameter")))
        out["upper_bound"] = True
        return out
    mats = MaterialField(dict(sigma.sigma) if sigma else {}, {}, default=(1.0, 1.0))
    if sigma is not None and sigma.default is None:
        mats = MaterialField(dict(sigma.sigma), {r: 1.0 for r in sigma.sigma}, default=None)
    res = functionals_with_convergence(shape, mats, **kwargs)
    res.upper_bound = True
    return res


# ---------------------------------------------------------------------------
# closed forms and tensorisation
# ---------------------------------------------------------------------------

def interval_functionals(length: float = 1.0) -> dict:
    """Unscaled phi, chi, upsilon, gamma for the interval (0, length)."""
    return {"phi": 1 / 3, "chi": length / 18, "upsilon": length ** 2 / 180, "gamma": 2 / length}


def disk_functionals(radius: float = 1.0) -> dict:
    g = 2 / radius
    return {"phi": 1 / 2, "chi": (1 / 4) / g, "upsilon": (1 / 12) / g ** 2, "gamma": g}


def sphere_functionals(radius: float = 1.0) -> dict:
    g = 3 / radius
    return {"phi": 3 / 5, "chi": (9 / 25) / g, "upsilon": (27 / 175) / g ** 2, "gamma": g}


def tensorize(base, length: float) -> dict:
    """Functionals of the extrusion base x (0, length) from those of the base.

    ``base`` holds unscaled ``phi``, ``chi``, ``upsilon`` and ``gamma`` (a
    dict or a :class:`SensitivityResult`); only valid for sigma = kappa = 1.
    """
    if isinstance(base, SensitivityResult):
        if not base.uniform:
            raise ValueError("tensorization holds only for sigma = kappa = 1 "
                             "(phi of an extrusion is phi of the base plus 1/3 in the homogeneous case only)")
        base = {"phi": base.phi, "chi": base.chi, "upsilon": base.upsilon, "gamma": base.gamma}
    elif not base.get("uniform", True):
        raise ValueError("tensorization holds only for sigma = kappa = 1")
    if not length > 0:
        raise ValueError("extrusion length must be > 0")
    line = interval_functionals(length)
    phi = base["phi"] + line["phi"]
    chi = base["chi"] + line["chi"] + (2 / length) * base["upsilon"] + base["gamma"] * line["upsilon"]
    ups = base["upsilon"] + line["upsilon"]
    gamma = base["gamma"] + 2 / length
    return {"phi": phi, "chi": chi, "upsilon": ups, "gamma": gamma,
            "gamma_chi": gamma * chi, "gamma2_upsilon": gamma ** 2 * ups}


def _scaled(d: dict, asymptotic: bool = False) -> dict:
    return {"phi": d["phi"], "gamma_chi": d["gamma"] * d["chi"],
            "gamma2_upsilon": d["gamma"] ** 2 * d["upsilon"], "asymptotic": asymptotic}


DICTIONARY_IDS = ("interval", "disk", "sphere", "isosceles-right-triangle", "equilateral-triangle",
                  "right-triangle", "rectangle", "parallelepiped", "circular-cylinder")


def dictionary(shape_id: str, parameter=None) -> dict:
    """Closed-form (phi, gamma*chi, gamma^2*upsilon) for canonical homogeneous domains.

    ``parameter``: W for ``right-triangle`` (asymptotic small-W forms);
    side lengths (a, b) for ``rectangle``, (a, b, c) for ``parallelepiped``;
    (radius, length) for ``circular-cylinder``. phi never depends on them.
    """
    sid = shape_id.lower().replace("_", "-").replace(" ", "-")
    aliases = {"isoceles-right": "isosceles-right-triangle", "isosceles-right": "isosceles-right-triangle",
               "equilateral": "equilateral-triangle", "cylinder": "circular-cylinder",
               "rect": "rectangle", "square": "rectangle", "slab": "parallelepiped",
               "box": "parallelepiped"}
    sid = aliases.get(sid, sid)
    r2 = 3 + 2 * math.sqrt(2)
    if sid == "interval":
        return _scaled(interval_functionals())
    if sid == "disk":
        return _scaled(disk_functionals())
    if sid == "sphere":
        return _scaled(sphere_functionals())
    if sid == "isosceles-right-triangle":
        return {"phi": 4 / 3, "gamma_chi": 0.8 * r2, "gamma2_upsilon": 4 / 15 * r2, "asymptotic": False}
    if sid == "equilateral-triangle":
        return {"phi": 1.0, "gamma_chi": 9 / 5, "gamma2_upsilon": 3 / 5, "asymptotic": False}
    if sid == "right-triangle":
        if parameter is None:
            raise ValueError("right-triangle needs W")
        w = float(parameter[0] if isinstance(parameter, (tuple, list)) else parameter)
        return {"phi": 2 / 3 / w ** 2, "gamma_chi": 28 / 15 / w ** 4,
                "gamma2_upsilon": 28 / 45 / w ** 4, "asymptotic": True}
    if sid == "rectangle":
        a, b = parameter or (1.0, 1.0)
        return _scaled(tensorize(interval_functionals(a), b))
    if sid == "parallelepiped":
        a, b, c = parameter or (1.0, 1.0, 1.0)
        return _scaled(tensorize(tensorize(interval_functionals(a), b), c))
    if sid == "circular-cylinder":
        r, length = parameter or (1.0, 1.0)
        return _scaled(tensorize(disk_functionals(r), length))
    raise ValueError(f"unknown dictionary shape {shape_id!r}; known: {', '.join(DICTIONARY_IDS)}")
