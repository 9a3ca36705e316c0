"""Nystrom boundary operators, off-boundary potentials and rigid projections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _quad
from .geometry import BoundaryMesh
from .kernels import KernelSpec, correction_operator, rigid_fields

__all__ = [
    "PotentialError",
    "DensityField",
    "BoundaryOperator",
    "RigidMotionBasis",
    "assemble_S",
    "assemble_Kstar",
    "assemble_K",
    "assemble_pressure_trace",
    "outer_operators",
    "eval_potential",
    "eval_traction",
    "gram_SN",
    "rigid_basis",
    "project_rigid_orthogonal",
]


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class DensityField:
    mesh: BoundaryMesh
    values: np.ndarray
    role: str = "density"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.mesh.ndof:
            raise PotentialError(f"density length {v.size} != 2 x {self.mesh.n_nodes}")
        object.__setattr__(self, "values", v)

    def as_nodes(self):
        return self.values.reshape(-1, 2)


@dataclass(frozen=True)
class BoundaryOperator:
    matrix: np.ndarray
    domain: str
    codomain: str
    role: str
    spec: KernelSpec | None = None

    def __matmul__(self, other):
        if isinstance(other, DensityField):
            return self.matrix @ other.values
        if isinstance(other, BoundaryOperator):
            return self.matrix @ other.matrix
        return self.matrix @ other

    @property
    def shape(self):
        return self.matrix.shape


def _check_pairing(mesh, spec):
    if not isinstance(spec, KernelSpec):
        raise PotentialError("a KernelSpec is required")
    if spec.corrected:
        if spec.outer is mesh:
            raise PotentialError("operators on the outer mesh itself are not corrected operators")
        o = spec.outer
        if not o.curves[0].contains(mesh.points).all():
            raise PotentialError("mesh is not enclosed by the kernel's outer boundary")


def _cached(spec, key, mesh, build):
    # the mesh is stored with the value so a recycled id cannot alias it
    hit = spec._cache.get((key, id(mesh)))
    if hit is None or hit[0] is not mesh:
        hit = (mesh, build())
        spec._cache[(key, id(mesh))] = hit
    return hit[1]


def _correction_sol(mesh, spec):
    cs = correction_operator(spec)
    return cs, _cached(spec, "sol", mesh, lambda: cs.solve(mesh.points, mesh.weights))


def assemble_S(mesh: BoundaryMesh, spec: KernelSpec) -> BoundaryOperator:
    """Trace of the single layer on ``mesh`` (density values -> trace values)."""
    _check_pairing(mesh, spec)

    def build():
        S = _quad.self_S(mesh, spec.params)
        if spec.corrected:
            cs, sol = _correction_sol(mesh, spec)
            S += cs.field(mesh.points, mesh.points, mesh.weights, sol)
        return BoundaryOperator(S, mesh.tag, mesh.tag, "S_trace", spec)

    return _cached(spec, "S", mesh, build)


def assemble_Kstar(mesh: BoundaryMesh, spec: KernelSpec) -> BoundaryOperator:
    """Principal-value NP operator: traction limits are (+-1/2 + K*) phi."""
    _check_pairing(mesh, spec)
    if any(n % 2 for n in mesh.sizes):
        raise PotentialError("NP assembly needs an even node count per component")

    def build():
        K = _quad.self_Kstar(mesh, spec.params)
        if spec.corrected:
            cs, sol = _correction_sol(mesh, spec)
            K += cs.traction(mesh.points, mesh.normals, mesh.points, mesh.weights, sol)
        return BoundaryOperator(K, mesh.tag, mesh.tag, "Kstar", spec)

    return _cached(spec, "Kstar", mesh, build)


def assemble_K(mesh: BoundaryMesh, spec: KernelSpec) -> BoundaryOperator:
    """L2 adjoint of K*, i.e. the double-layer type operator K = W^-1 K*^T W."""
    Ks = assemble_Kstar(mesh, spec).matrix
    W = mesh.dof_weights()
    return BoundaryOperator(Ks.T * W[None, :] / W[:, None], mesh.tag, mesh.tag, "K", spec)


def assemble_pressure_trace(mesh: BoundaryMesh, spec: KernelSpec, side=-1) -> np.ndarray:
    """Boundary value of the Stokes pressure potential (interior side by default)."""
    if spec.family != "stokes":
        raise PotentialError("pressure is only defined for the Stokes family")
    P = _quad.self_P(mesh, side)
    if spec.corrected:
        cs, sol = _correction_sol(mesh, spec)
        P = P + cs.pressure(mesh.points, mesh.points, mesh.weights, sol)
    return P


def outer_operators(mesh: BoundaryMesh, spec: KernelSpec):
    """Maps from densities on ``mesh`` to (trace, interior traction) on the outer boundary."""
    if not spec.corrected:
        raise PotentialError("outer traces need a corrected kernel")

    def build():
        cs, (eta, coef) = _correction_sol(mesh, spec)
        o, prm = cs.outer, spec.params
        V = _quad.cross_S(o.points, mesh.points, mesh.weights, prm) + cs.S_oo @ eta
        V += cs._basis_at(o.points) @ coef
        if not hasattr(cs, "K_oo"):
            cs.K_oo = _quad.self_Kstar(o, prm)
        T = _quad.cross_T(o.points, o.normals, mesh.points, mesh.weights, prm)
        T += (-0.5 * np.eye(o.ndof) + cs.K_oo) @ eta
        return V, T

    return _cached(spec, "outer", mesh, build)


def _check_far(points, meshes):
    for m in meshes:
        if m is None:
            continue
        d = np.linalg.norm(points[:, None, :] - m.points[None], axis=-1)
        j = np.argmin(d, axis=1)
        near = d[np.arange(len(points)), j] < 5 * m.weights[j]
        if np.any(near):
            raise PotentialError(
                f"near-boundary evaluation unsupported: {int(near.sum())} point(s) closer "
                "than 5 mesh spacings")


def _values(density):
    return density.values if isinstance(density, DensityField) else np.asarray(density, float).ravel()


def eval_potential(mesh: BoundaryMesh, density, spec: KernelSpec, points):
    """Single-layer potential (and pressure for Stokes) at off-boundary points.

    Returns an array (P, 2) of displacements, or a tuple (values, pressure)
    for the Stokes family.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    _check_far(pts, [mesh, spec.outer])
    phi = _values(density)
    prm = spec.params
    u = _quad.cross_S(pts, mesh.points, mesh.weights, prm) @ phi
    if spec.corrected:
        cs, sol = _correction_sol(mesh, spec)
        u += cs.field(pts, mesh.points, mesh.weights, sol) @ phi
    u = u.reshape(-1, 2)
    if spec.family != "stokes":
        return u
    p = _quad.cross_P(pts, mesh.points, mesh.weights) @ phi
    if spec.corrected:
        p += cs.pressure(pts, mesh.points, mesh.weights, sol) @ phi
    return u, p


def eval_traction(mesh: BoundaryMesh, density, spec: KernelSpec, points, normals):
    """Conormal derivative of the single-layer potential at off-boundary points."""
    pts = np.atleast_2d(np.asarray(points, float))
    nrm = np.atleast_2d(np.asarray(normals, float))
    _check_far(pts, [mesh, spec.outer])
    phi = _values(density)
    t = _quad.cross_T(pts, nrm, mesh.points, mesh.weights, spec.params) @ phi
    if spec.corrected:
        cs, sol = _correction_sol(mesh, spec)
        t += cs.traction(pts, nrm, mesh.points, mesh.weights, sol) @ phi
    return t.reshape(-1, 2)


def gram_SN(mesh: BoundaryMesh, spec: KernelSpec) -> BoundaryOperator:
    """Energy Gram matrix (phi, psi) = -phi^T W S psi, symmetrized."""
    if spec.family != "lame" or not spec.corrected:
        raise PotentialError("the energy Gram matrix needs a corrected Lame kernel")

    def build():
        S = assemble_S(mesh, spec).matrix
        A = -(mesh.dof_weights()[:, None] * S)
        G = 0.5 * (A + A.T)
        ev = np.linalg.eigvalsh(G)
        if not ev[0] > 0:
            raise PotentialError(
                f"Gram matrix not positive definite: eigenvalues in [{ev[0]:.3e}, {ev[-1]:.3e}] "
                "(under-resolved mesh?)")
        return BoundaryOperator(G, mesh.tag, mesh.tag, "gram", spec)

    return _cached(spec, "gram", mesh, build)


@dataclass(frozen=True)
class RigidMotionBasis:
    """Per-component rigid motions about component centroids.

    ``fields`` is (2n, 3m): columns 3i..3i+2 are e1, e2, (x2, -x1) on
    component i and zero elsewhere.  ``gram`` holds the 3x3 L2 Gram
    matrices per component.
    """

    mesh: BoundaryMesh
    fields: np.ndarray
    gram: np.ndarray
    centers: np.ndarray

    def moments(self, values):
        # one density (ndof,) or a stack of columns (ndof, k)
        W = self.mesh.dof_weights()
        v = np.asarray(values, float)
        return self.fields.T @ (W.reshape((-1,) + (1,) * (v.ndim - 1)) * v)


def rigid_basis(mesh: BoundaryMesh) -> RigidMotionBasis:
    m = mesh.n_components
    F = np.zeros((mesh.ndof, 3 * m))
    G = np.zeros((m, 3, 3))
    cen = mesh.centroids()
    W = mesh.dof_weights()
    for i in range(m):
        s, ds = mesh.component(i), mesh.dof_slice(i)
        R = rigid_fields(mesh.points[s], cen[i])
        F[ds, 3 * i:3 * i + 3] = R
        G[i] = R.T @ (W[ds, None] * R)
    return RigidMotionBasis(mesh, F, G, cen)


def project_rigid_orthogonal(density, basis: RigidMotionBasis | None = None):
    """Remove per-component L2 moments along the rigid motions."""
    if isinstance(density, DensityField):
        mesh, v = density.mesh, density.values
    else:
        if basis is None:
            raise PotentialError("a basis is required for raw arrays")
        mesh, v = basis.mesh, np.asarray(density, float)
    basis = basis or rigid_basis(mesh)
    W = mesh.dof_weights()
    out = v.copy()
    for i in range(mesh.n_components):
        ds = mesh.dof_slice(i)
        R = basis.fields[ds, 3 * i:3 * i + 3]
        a = np.linalg.solve(basis.gram[i], R.T @ (W[ds, None] * v[ds].reshape(R.shape[0], -1)))
        out[ds] = v[ds] - (R @ a).reshape(v[ds].shape)
    if isinstance(density, DensityField):
        return DensityField(mesh, out, density.role)
    return out


def rigid_orthogonal_basis(mesh: BoundaryMesh, basis: RigidMotionBasis | None = None):
    """Orthonormal (Euclidean) columns spanning the moment-free densities."""
    basis = basis or rigid_basis(mesh)
    C = mesh.dof_weights()[:, None] * basis.fields
    q, _ = np.linalg.qr(C, mode="complete")
    return q[:, C.shape[1]:]


__all__.append("rigid_orthogonal_basis")
