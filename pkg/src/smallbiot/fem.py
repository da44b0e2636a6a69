"""
Lagrange P1/P2 finite elements on 1D partitions and triangulations.

Assembly is vectorised over elements; all bilinear forms have piecewise
constant coefficients, so the quadrature rules used integrate them exactly.
Linear systems are solved with SuperLU and the achieved residual is always
checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import Mesh, _edges_of


class SolverError(RuntimeError):
    def __init__(self, msg: str, residual: float = float("nan")):
        super().__init__(f"{msg} (relative residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# materials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaterialField:
    """Per-region heat capacity ratio ``sigma`` and conductivity ``kappa``.

    Use :func:`make_materials` to build a normalised field (volume-weighted
    mean of sigma equal to one, minimum kappa equal to one). ``default`` is
    used for regions missing from the dictionaries; ``None`` makes missing
    regions an error.
    """

    sigma: dict = field(default_factory=dict)
    kappa: dict = field(default_factory=dict)
    default: tuple[float, float] | None = (1.0, 1.0)

    @property
    def is_uniform(self) -> bool:
        vals_s = set(self.sigma.values()) | ({self.default[0]} if self.default else set())
        vals_k = set(self.kappa.values()) | ({self.default[1]} if self.default else set())
        return vals_s <= {1.0} and vals_k <= {1.0}

    def per_element(self, mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
        reg = mesh.element_region
        s = np.empty(len(reg))
        k = np.empty(len(reg))
        for r in np.unique(reg):
            r = int(r)
            if self.default is None and (r not in self.sigma or r not in self.kappa):
                raise KeyError(f"no material given for region {r}")
            s[reg == r] = self.sigma.get(r, self.default[0] if self.default else np.nan)
            k[reg == r] = self.kappa.get(r, self.default[1] if self.default else np.nan)
        if (s <= 0).any() or (k <= 0).any():
            raise ValueError("material values must be positive")
        return s, k


UNIFORM = MaterialField()


def make_materials(sigma: dict, kappa: dict, region_volumes: dict) -> MaterialField:
    """Normalise raw per-region values: mean of sigma over the volume is 1, min kappa is 1."""
    regions = set(region_volumes)
    if set(sigma) != regions or set(kappa) != regions:
        raise ValueError(f"materials must cover exactly the regions {sorted(regions)}")
    if min(sigma.values()) <= 0 or min(kappa.values()) <= 0:
        raise ValueError("material values must be positive")
    total = sum(region_volumes.values())
    mean = sum(sigma[r] * region_volumes[r] for r in regions) / total
    kmin = min(kappa.values())
    return MaterialField({r: sigma[r] / mean for r in regions},
                         {r: kappa[r] / kmin for r in regions}, default=None)


# ---------------------------------------------------------------------------
# reference elements and quadrature
# ---------------------------------------------------------------------------

def _gauss_1d(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


# degree-4 symmetric rule (6 points), reference triangle of area 1/2
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
_TRI4 = (
    np.array([[_A1, _A1], [_B1, _A1], [_A1, _B1], [_A2, _A2], [_B2, _A2], [_A2, _B2]]),
    0.5 * np.array([_W1] * 3 + [_W2] * 3),
)
_TRI2 = (np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]), np.full(3, 1 / 6))


def _basis_1d(order: int, x: np.ndarray):
    """Values (nq, n) and derivatives (nq, n, 1); node order: left, right, midpoint."""
    if order == 1:
        v = np.column_stack([1 - x, x])
        d = np.column_stack([-np.ones_like(x), np.ones_like(x)])
    else:
        v = np.column_stack([(1 - x) * (1 - 2 * x), x * (2 * x - 1), 4 * x * (1 - x)])
        d = np.column_stack([4 * x - 3, 4 * x - 1, 4 - 8 * x])
    return v, d[..., None]


def _basis_tri(order: int, p: np.ndarray):
    """Values (nq, n) and gradients (nq, n, 2); vertex dofs then edges 01, 12, 20."""
    x, y = p[:, 0], p[:, 1]
    L = [1 - x - y, x, y]
    dL = [np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    if order == 1:
        v = np.column_stack(L)
        g = np.stack([np.broadcast_to(d, (len(x), 2)) for d in dL], axis=1)
        return v, g
    vals, grads = [], []
    for i in range(3):
        vals.append(L[i] * (2 * L[i] - 1))
        grads.append((4 * L[i] - 1)[:, None] * dL[i])
    for i, j in ((0, 1), (1, 2), (2, 0)):
        vals.append(4 * L[i] * L[j])
        grads.append(4 * (L[i][:, None] * dL[j] + L[j][:, None] * dL[i]))
    return np.column_stack(vals), np.stack(grads, axis=1)


# ---------------------------------------------------------------------------
# function space
# ---------------------------------------------------------------------------

class FunctionSpace:
    """Continuous Lagrange space of ``order`` 1 or 2 on ``mesh``.

    cell_dofs: (ne, nloc). facet_dofs: (nb, nfloc), ordered
    (start, end[, midpoint]). dof_coords: (ndofs, dim).
    """

    def __init__(self, mesh: Mesh, order: int = 2):
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        self.mesh = mesh
        self.order = order
        nv = mesh.n_nodes
        e = mesh.elements
        f = mesh.boundary_facets
        x = mesh.nodes
        if order == 1:
            self.cell_dofs = e.copy()
            self.facet_dofs = f.copy()
            self.dof_coords = x.copy()
        elif mesh.dim == 1:
            mid = nv + np.arange(len(e))
            self.cell_dofs = np.column_stack([e, mid])
            self.facet_dofs = f.copy()
            self.dof_coords = np.vstack([x, 0.5 * (x[e[:, 0]] + x[e[:, 1]])])
        else:
            edges = _edges_of(e)
            key = np.sort(edges, axis=1)
            uniq, inv = np.unique(key, axis=0, return_inverse=True)
            inv = inv.ravel()
            ne = len(e)
            self.cell_dofs = np.column_stack([e, nv + inv[:ne], nv + inv[ne:2 * ne], nv + inv[2 * ne:]])
            fkey = np.sort(f, axis=1)
            # locate each boundary facet among the unique edges
            idx = np.searchsorted(uniq[:, 0] * (nv + 1) + uniq[:, 1], fkey[:, 0] * (nv + 1) + fkey[:, 1])
            self.facet_dofs = np.column_stack([f, nv + idx])
            self.dof_coords = np.vstack([x, 0.5 * (x[uniq[:, 0]] + x[uniq[:, 1]])])
        self.n_dofs = len(self.dof_coords)

    def interpolate(self, func) -> np.ndarray:
        return np.asarray(func(self.dof_coords), dtype=float)


@dataclass
class AssembledOperators:
    """Sparse operators of the weak forms; see :func:`assemble`."""

    space: FunctionSpace
    M_sigma: sp.csr_matrix
    K_kappa: sp.csr_matrix
    M_boundary: sp.csr_matrix
    b_boundary: np.ndarray
    b_sigma: np.ndarray
    volume: float
    boundary_measure: float


def _scatter(dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    nl = dofs.shape[1]
    rows = np.repeat(dofs, nl, axis=1).ravel()
    cols = np.tile(dofs, (1, nl)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def _element_geometry(mesh: Mesh):
    x = mesh.nodes
    e = mesh.elements
    if mesh.dim == 1:
        J = (x[e[:, 1]] - x[e[:, 0]])[:, :, None]  # (ne,1,1)
    else:
        J = np.stack([x[e[:, 1]] - x[e[:, 0]], x[e[:, 2]] - x[e[:, 0]]], axis=2)
    det = np.linalg.det(J) if mesh.dim == 2 else J[:, 0, 0]
    invJ = np.linalg.inv(J)
    return det, invJ


def local_matrices(space: FunctionSpace, sigma_e: np.ndarray, kappa_e: np.ndarray):
    """Element mass, stiffness and load arrays of shape (ne, nloc, nloc) / (ne, nloc)."""
    mesh = space.mesh
    if mesh.dim == 1:
        q, w = _gauss_1d(3)
        v, g = _basis_1d(space.order, q)
    else:
        q, w = _TRI4 if space.order == 2 else _TRI2
        v, g = _basis_tri(space.order, q)
    det, invJ = _element_geometry(mesh)
    adet = np.abs(det)
    mass_ref = np.einsum("q,qi,qj->ij", w, v, v)
    load_ref = np.einsum("q,qi->i", w, v)
    # physical gradients: grad = invJ^T grad_ref
    G = np.einsum("eab,qia->eqib", invJ, g)
    stiff = np.einsum("q,eqia,eqja->eij", w, G, G) * (kappa_e * adet)[:, None, None]
    mass = mass_ref[None] * (sigma_e * adet)[:, None, None]
    load = load_ref[None] * (sigma_e * adet)[:, None]
    return mass, stiff, load


def assemble(mesh: Mesh, materials: MaterialField = UNIFORM, order: int = 2) -> AssembledOperators:
    """Assemble sigma-mass, kappa-stiffness, boundary mass and the two load vectors."""
    space = FunctionSpace(mesh, order)
    sigma_e, kappa_e = materials.per_element(mesh)
    mass, stiff, load = local_matrices(space, sigma_e, kappa_e)
    n = space.n_dofs
    M = _scatter(space.cell_dofs, mass, n)
    K = _scatter(space.cell_dofs, stiff, n)
    b_sigma = np.bincount(space.cell_dofs.ravel(), weights=load.ravel(), minlength=n)

    fd = space.facet_dofs
    if mesh.dim == 1:
        Mb = sp.coo_matrix((np.ones(len(fd)), (fd[:, 0], fd[:, 0])), shape=(n, n)).tocsr()
        bb = np.bincount(fd[:, 0], minlength=n).astype(float)
    else:
        x = mesh.nodes
        f = mesh.boundary_facets
        length = np.linalg.norm(x[f[:, 1]] - x[f[:, 0]], axis=1)
        q, w = _gauss_1d(3)
        v, _ = _basis_1d(order, q)
        mref = np.einsum("q,qi,qj->ij", w, v, v)
        lref = np.einsum("q,qi->i", w, v)
        Mb = _scatter(fd, mref[None] * length[:, None, None], n)
        bb = np.bincount(fd.ravel(), weights=(lref[None] * length[:, None]).ravel(), minlength=n)
    return AssembledOperators(space, M, K, Mb, bb, b_sigma,
                              volume=mesh.volume(), boundary_measure=mesh.boundary_measure())


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

@dataclass
class Solution:
    x: np.ndarray
    residual: float
    multiplier: float | None = None


def _rel_residual(A, x, b) -> float:
    """Normwise backward error |Ax - b| / (|A| |x| + |b|) in the infinity norm."""
    r = np.abs(A @ x - b).max()
    denom = sp.linalg.norm(A, ord=np.inf) * np.abs(x).max() + np.abs(b).max()
    return r / denom if denom > 0 else r


SINGULAR_PIVOT_RATIO = 1e-13


def factorize(A: sp.spmatrix):
    """SuperLU factorisation with a symmetric fill-reducing ordering."""
    try:
        lu = splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A",
                  options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SolverError(f"factorisation failed: {exc}") from exc
    # a tiny pivot means a numerically singular matrix; the backward error
    # alone would not notice (any huge x has a small one)
    piv = np.abs(lu.U.diagonal())
    ratio = piv.min() / piv.max() if piv.size and piv.max() > 0 else 0.0
    if ratio < SINGULAR_PIVOT_RATIO:
        raise SolverError("matrix is numerically singular", ratio)
    return lu


def _solve_checked(A, b, tol: float, lu=None) -> tuple[np.ndarray, float]:
    lu = lu or factorize(A)
    x = lu.solve(b)
    res = _rel_residual(A, x, b)
    for _ in range(3):
        if res <= tol:
            break
        # iterative refinement
        x = x + lu.solve(b - A @ x)
        res = _rel_residual(A, x, b)
    if not np.isfinite(res) or res > tol:
        raise SolverError("linear solve did not reach tolerance", res)
    return x, res


def solve_spd(A: sp.spmatrix, rhs: np.ndarray, tol: float = 1e-10) -> Solution:
    x, res = _solve_checked(sp.csc_matrix(A), np.asarray(rhs, dtype=float), tol)
    return Solution(x, res)


def solve_saddle(A: sp.spmatrix, constraint: np.ndarray, rhs: np.ndarray,
                 constraint_rhs: float = 0.0, tol: float = 1e-10) -> Solution:
    """Solve [[A, c], [c^T, 0]] [x; lam] = [rhs; constraint_rhs].

    ``A`` may be singular (e.g. a Neumann stiffness matrix) as long as its
    kernel is not orthogonal to ``c``.
    """
    c = np.asarray(constraint, dtype=float)
    n = A.shape[0]
    # scale the border so it is commensurate with A
    s = sp.linalg.norm(A, ord=1) / max(np.abs(c).max(), 1e-300) if A.nnz else 1.0
    cs = c * s
    Big = sp.bmat([[A, sp.csc_matrix(cs[:, None])], [sp.csr_matrix(cs[None, :]), None]], format="csc")
    b = np.concatenate([rhs, [constraint_rhs * s]])
    y, res = _solve_checked(Big, b, tol)
    x = y[:n]
    scale = max(np.abs(c).sum() * np.abs(x).max(), abs(constraint_rhs), 1e-300)
    if abs(c @ x - constraint_rhs) > 1e-12 * scale:
        raise SolverError("constraint not satisfied", abs(c @ x - constraint_rhs) / scale)
    return Solution(x, res, multiplier=float(y[n] * s))
