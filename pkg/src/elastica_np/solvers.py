"""DtN maps and boundary-integral solvers for the transmission problem and its limits.

All solvers work on an :class:`~elastica_np.geometry.InclusionArray`.  The
exterior field is represented as G + S phi with S the Neumann-corrected
single layer of the background pair, so the traction on the outer
boundary stays equal to the prescribed load whenever phi has no rigid
moments.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .geometry import BoundaryMesh, InclusionArray
from .kernels import KernelSpec, LamePair, rigid_fields
from .potentials import (
    BoundaryOperator,
    DensityField,
    assemble_Kstar,
    assemble_pressure_trace,
    assemble_S,
    gram_SN,
    rigid_basis,
)

__all__ = [
    "SolverError",
    "LoadSpec",
    "SolutionBundle",
    "background_spec",
    "background_trace",
    "dtn_exterior",
    "dtn_interior",
    "solve_transmission",
    "solve_limit_stokes",
    "solve_limit_soft",
    "solve_limit_rigid",
    "solve_rigid_resultants",
    "error_snorm",
    "density_snorm",
    "load_norm",
]

MOMENT_TOL = 1e-6
RIGID_FIT_TOL = 1e-5


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class LoadSpec:
    """Affine background displacement u = A x for a symmetric strain A."""

    A: np.ndarray
    pair: LamePair

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.shape != (2, 2):
            raise SolverError(f"load matrix must be 2x2, got shape {A.shape}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-14 * max(1.0, np.abs(A).max())):
            raise SolverError("load matrix must be symmetric")
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        self.pair.check()

    @property
    def stress(self):
        lam, mu = self.pair.lam, self.pair.mu
        return lam * np.trace(self.A) * np.eye(2) + 2 * mu * self.A

    def traction(self, normals):
        return np.asarray(normals) @ self.stress.T


@dataclass
class SolutionBundle:
    case: str
    array: InclusionArray
    pair: LamePair
    load: LoadSpec
    phi: DensityField
    spec: KernelSpec
    psi: DensityField | None = None
    rigid: np.ndarray | None = None
    pressure: np.ndarray | None = None
    tilde: object = None
    info: dict = field(default_factory=dict)

    @property
    def mesh(self):
        return self.phi.mesh


_SPECS: OrderedDict = OrderedDict()
_MAX_SPECS = 6
_SPECS_LOCK = threading.Lock()


def _spec(outer: BoundaryMesh, family, pair=None, mu_prime=None, mode="neumann_corrected"):
    with _SPECS_LOCK:
        return _spec_locked(outer, family, pair, mu_prime, mode)


def _spec_locked(outer, family, pair, mu_prime, mode):
    key = (id(outer), family, None if pair is None else (pair.lam, pair.mu), mu_prime, mode)
    hit = _SPECS.get(key)
    if hit is not None and hit[0] is outer:
        _SPECS.move_to_end(key)
        return hit[1]
    spec = KernelSpec(family, pair=pair, mu_prime=mu_prime, mode=mode, outer=outer)
    # the mesh is kept in the value so its id cannot be recycled while cached
    _SPECS[key] = (outer, spec)
    while len(_SPECS) > _MAX_SPECS:
        _SPECS.popitem(last=False)
    return spec


def background_spec(array: InclusionArray, pair: LamePair, mode="neumann_corrected") -> KernelSpec:
    """Shared corrected kernel spec of the background pair for an array."""
    return _spec(array.outer_mesh, "lame", pair=pair, mode=mode)


def background_trace(load: LoadSpec, mesh: BoundaryMesh, outer: BoundaryMesh | None = None):
    """Trace and traction of the background field on ``mesh``.

    With ``outer`` the affine field has its L2 rigid projection on the
    outer boundary removed, which does not change its stress.
    """
    G = mesh.points @ load.A.T
    if outer is not None:
        o = outer
        cen = o.centroids()[0]
        R = rigid_fields(o.points, cen, o.weights)
        Go = (o.points @ load.A.T).ravel()
        c = R.T @ (o.dof_weights() * Go)
        G = G - (rigid_fields(mesh.points, cen) @ _orthonormal_coeffs(o, cen) @ c).reshape(-1, 2)
    return G.ravel(), load.traction(mesh.normals).ravel()


def _orthonormal_coeffs(o, cen):
    # raw rigid fields -> outer-orthonormal ones, as a 3x3 change of basis
    raw = rigid_fields(o.points, cen)
    return np.linalg.lstsq(raw, rigid_fields(o.points, cen, o.weights), rcond=None)[0]


def _lu(A, what):
    rc = 1.0 / np.linalg.cond(A, 1)
    if not rc > 1e2 * np.finfo(float).eps:
        raise SolverError(f"{what} is numerically singular (rcond {rc:.2e})")
    return linalg.lu_factor(A, check_finite=False), rc


def dtn_exterior(mesh: BoundaryMesh, pair: LamePair, spec: KernelSpec) -> BoundaryOperator:
    """Exterior DtN (1/2 + K*) S^-1 of the background pair."""
    S = assemble_S(mesh, spec).matrix
    K = assemble_Kstar(mesh, spec).matrix
    lu, rc = _lu(S, "single layer")
    L = linalg.lu_solve(lu, (0.5 * np.eye(mesh.ndof) + K).T, trans=1).T
    return BoundaryOperator(L, mesh.tag, mesh.tag, "DtN_ext", spec)


def _normal_fields(mesh):
    m = mesh.n_components
    Nf = np.zeros((mesh.ndof, m))
    for i in range(m):
        Nf[mesh.dof_slice(i), i] = mesh.normals[mesh.component(i)].ravel()
    return Nf


def dtn_interior(mesh: BoundaryMesh, material, outer: BoundaryMesh) -> BoundaryOperator:
    """Interior DtN map for a Lame pair or (float) Stokes viscosity.

    A Lame pair (lam, mu) is evaluated as mu times the DtN of (lam/mu, 1).
    For Stokes the single layer annihilates the normal fields, so it is
    regularized by a rank-m term and the map is exact on zero-flux traces;
    its output is taken modulo normal fields (the pressure constant).
    """
    W = mesh.dof_weights()
    if isinstance(material, LamePair):
        material.check()
        mu = material.mu
        spec = _spec(outer, "lame", pair=LamePair(material.lam / mu, 1.0))
        S = assemble_S(mesh, spec).matrix
        K = assemble_Kstar(mesh, spec).matrix
        lu, _ = _lu(S, "interior single layer")
        L = mu * linalg.lu_solve(lu, (-0.5 * np.eye(mesh.ndof) + K).T, trans=1).T
        return BoundaryOperator(L, mesh.tag, mesh.tag, "DtN_int", spec)
    mu = float(material)
    spec = _spec(outer, "stokes", mu_prime=mu)
    S = assemble_S(mesh, spec).matrix
    K = assemble_Kstar(mesh, spec).matrix
    Nf = _normal_fields(mesh)
    Sreg = S + Nf @ (Nf.T * W[None, :])
    lu, _ = _lu(Sreg, "regularized Stokes single layer")
    L = linalg.lu_solve(lu, (-0.5 * np.eye(mesh.ndof) + K).T, trans=1).T
    nn = (Nf**2 * W[:, None]).sum(0)
    L -= Nf @ ((Nf.T * W[None, :]) @ L / nn[:, None])
    return BoundaryOperator(L, mesh.tag, mesh.tag, "DtN_int", spec)


def _moments(mesh, v):
    return rigid_basis(mesh).fields.T @ (mesh.dof_weights() * v)


def _check_moments(mesh, phi, what, data):
    # relative to |phi| + |data| so that (near) zero solutions pass
    mom = np.abs(_moments(mesh, phi)).max() if phi.size else 0.0
    W = mesh.dof_weights()
    scale = (np.sqrt((W * phi**2).sum()) + np.sqrt((W * data**2).sum())) * np.sqrt(mesh.weights.sum())
    rel = mom / scale if scale > 0 else 0.0
    if rel > MOMENT_TOL:
        raise SolverError(f"{what}: density has rigid moments {rel:.2e} (relative)")
    return rel


def _setup(array, pair, load):
    pair.check()
    if (load.pair.lam, load.pair.mu) != (pair.lam, pair.mu):
        raise SolverError("load must be defined with the background pair")
    D = array.incl_mesh
    spec = background_spec(array, pair)
    S = assemble_S(D, spec).matrix
    K = assemble_Kstar(D, spec).matrix
    G, dG = background_trace(load, D, array.outer_mesh)
    return D, spec, S, K, G, dG


def solve_transmission(array: InclusionArray, pair: LamePair, tilde_pair: LamePair,
                       load: LoadSpec) -> SolutionBundle:
    """Transmission problem with inclusion pair ``tilde_pair``.

    Solves (L_i - L_e) S phi = dG/dnu - L_i G, then psi from continuity of
    the displacement.  The interior kernel is evaluated for the rescaled
    pair (lam~/mu~, 1) and multiplied by mu~.
    """
    D, spec, S, K, G, dG = _setup(array, pair, load)
    tilde_pair.check()
    mu_t = tilde_pair.mu
    tspec = _spec(array.outer_mesh, "lame", pair=LamePair(tilde_pair.lam / mu_t, 1.0))
    St = assemble_S(D, tspec).matrix
    Kt = assemble_Kstar(D, tspec).matrix
    lu, _ = _lu(St, "interior single layer")
    X = linalg.lu_solve(lu, np.column_stack([S, G]), check_finite=False)
    Li = mu_t * (-0.5 * np.eye(D.ndof) + Kt) @ X
    M = Li[:, :-1] - (0.5 * np.eye(D.ndof) + K)
    rhs = dG - Li[:, -1]
    lu_m, rc = _lu(M, "transmission system")
    phi = linalg.lu_solve(lu_m, rhs, check_finite=False)
    psi = X[:, -1] + X[:, :-1] @ phi
    rel = _check_moments(D, phi, "transmission", dG)
    return SolutionBundle("transmission", array, pair, load, DensityField(D, phi), spec,
                          psi=DensityField(D, mu_t * psi), tilde=tilde_pair,
                          info={"rcond": rc, "moment_residual": rel})


def solve_limit_stokes(array: InclusionArray, pair: LamePair, mu_tilde: float,
                       load: LoadSpec) -> SolutionBundle:
    """Incompressible limit: Stokes inclusions of viscosity ``mu_tilde``.

    Continuity of displacement and traction gives the block system
    [S_st, -S; -1/2 + K_st*, -(1/2 + K*)] [psi; phi] = [G; dG/dnu], with the
    Stokes traction including the pressure.
    """
    if not mu_tilde > 0:
        raise SolverError(f"viscosity must be positive, got {mu_tilde}")
    D, spec, S, K, G, dG = _setup(array, pair, load)
    # unit-viscosity kernel; psi is rescaled afterwards
    sspec = _spec(array.outer_mesh, "stokes", mu_prime=1.0)
    Ss = assemble_S(D, sspec).matrix
    Ks = assemble_Kstar(D, sspec).matrix
    n = D.ndof
    I = np.eye(n)
    # unknowns (psi / mu_tilde, phi); traction row divided by mu_tilde
    A = np.block([[Ss, -S], [-0.5 * I + Ks, -(0.5 * I + K) / mu_tilde]])
    rhs = np.concatenate([G, dG / mu_tilde])
    lu, rc = _lu(A, "Stokes limit system")
    sol = linalg.lu_solve(lu, rhs, check_finite=False)
    psi, phi = mu_tilde * sol[:n], sol[n:]
    rel = _check_moments(D, phi, "Stokes limit", dG)
    p = assemble_pressure_trace(D, sspec) @ psi
    p -= p.mean()
    return SolutionBundle("limit_stokes", array, pair, load, DensityField(D, phi), spec,
                          psi=DensityField(D, psi), pressure=p, tilde=mu_tilde,
                          info={"rcond": rc, "moment_residual": rel})


def solve_limit_soft(array: InclusionArray, pair: LamePair, load: LoadSpec) -> SolutionBundle:
    """Traction-free holes: (1/2 + K*) phi = -dG/dnu."""
    D, spec, S, K, G, dG = _setup(array, pair, load)
    lu, rc = _lu(0.5 * np.eye(D.ndof) + K, "1/2 + K*")
    phi = linalg.lu_solve(lu, -dG, check_finite=False)
    rel = _check_moments(D, phi, "soft limit", dG)
    return SolutionBundle("limit_soft", array, pair, load, DensityField(D, phi), spec,
                          info={"rcond": rc, "moment_residual": rel})


def _rigid_fit(D, trace):
    motions = np.zeros((D.n_components, 3))
    res = 0.0
    cen = D.centroids()
    for i in range(D.n_components):
        s, ds = D.component(i), D.dof_slice(i)
        R = rigid_fields(D.points[s], cen[i])
        w = np.repeat(np.sqrt(D.weights[s]), 2)
        a, *_ = np.linalg.lstsq(w[:, None] * R, w * trace[ds], rcond=None)
        motions[i] = a
        res = max(res, np.linalg.norm(w * (trace[ds] - R @ a)))
    return motions, res


def solve_limit_rigid(array: InclusionArray, pair: LamePair, load: LoadSpec) -> SolutionBundle:
    """Rigid inclusions: (-1/2 + K*) phi = -dG/dnu on rigid-orthogonal phi.

    Returned ``rigid`` holds, per inclusion, the coefficients of e1, e2 and
    the rotation (x2, -x1) about the inclusion centroid.
    """
    D, spec, S, K, G, dG = _setup(array, pair, load)
    n = D.ndof
    R = rigid_basis(D).fields
    W = D.dof_weights()
    A = np.block([[-0.5 * np.eye(n) + K, R], [R.T * W[None, :], np.zeros((R.shape[1],) * 2)]])
    lu, rc = _lu(A, "rigid limit system")
    sol = linalg.lu_solve(lu, np.concatenate([-dG, np.zeros(R.shape[1])]), check_finite=False)
    phi = sol[:n]
    trace = G + S @ phi
    motions, res = _rigid_fit(D, trace)
    # relative to the data too: a motionless inclusion has a trace at roundoff level
    scale = max(np.sqrt((W * trace**2).sum()), np.sqrt((W * G**2).sum()))
    if res > RIGID_FIT_TOL * max(scale, np.finfo(float).tiny):
        raise SolverError(f"interior trace not rigid (fit residual {res:.2e}, trace {scale:.2e})")
    rel = _check_moments(D, phi, "rigid limit", dG)
    return SolutionBundle("limit_rigid", array, pair, load, DensityField(D, phi), spec,
                          rigid=motions,
                          info={"rcond": rc, "moment_residual": rel, "fit_residual": res,
                                "multiplier": np.abs(sol[n:]).max()})


def _global_rigid(mesh, center):
    return rigid_fields(mesh.points, center)


def solve_rigid_resultants(array: InclusionArray, pair: LamePair, resultants,
                           load: LoadSpec) -> SolutionBundle:
    """Rigid inclusions with prescribed force and torque resultants.

    ``resultants`` is (m, 3): for inclusion n the integrals of the exterior
    traction against e1, e2 and (x2, -x1) taken about the outer centroid.
    Each basis solution is G + S phi + (global rigid motion) with Dirichlet
    data on the inclusions and no rigid moments of phi in total, so its
    traction on the outer boundary is the load (or zero).  The stiffness
    system is solved by least squares; its kernel is the global rigid
    motions.  ``rigid`` holds the inclusion motions in the global basis.
    """
    D, spec, S, K, G, dG = _setup(array, pair, load)
    m, n = D.n_components, D.ndof
    c = np.asarray(resultants, dtype=float).reshape(m, 3)
    o = array.outer_mesh
    cen = o.centroids()[0]
    g = load.traction(o.normals).ravel()
    total = _global_rigid(o, cen).T @ (o.dof_weights() * g)
    if not np.allclose(c.sum(0), total, rtol=0, atol=1e-8 * max(1.0, np.abs(total).max(),
                                                                 np.abs(c).max())):
        raise SolverError(
            f"incompatible resultants: sum over inclusions {c.sum(0)} must equal the "
            f"load's rigid moments on the outer boundary {total}")
    W = D.dof_weights()
    Rg = _global_rigid(D, cen)
    A_sys = np.block([[S, Rg], [Rg.T * W[None, :], np.zeros((3, 3))]])
    lu, rc = _lu(A_sys, "rigid-resultant system")
    # right-hand sides: -G for v, then r_l on component m for v_m^l
    rhs = np.zeros((n + 3, 1 + 3 * m))
    rhs[:n, 0] = -G
    for k in range(m):
        ds = D.dof_slice(k)
        rhs[:n][ds, 1 + 3 * k:4 + 3 * k] = Rg[ds]
    sol = linalg.lu_solve(lu, rhs, check_finite=False)
    phis = sol[:n]
    Kp = 0.5 * np.eye(n) + K
    trac = Kp @ phis
    trac[:, 0] += dG

    def resultant(t):
        # t is (n, k): per component, moments of each column against Rg
        out = np.empty((m, 3, t.shape[1]))
        for k in range(m):
            ds = D.dof_slice(k)
            out[k] = Rg[ds].T @ (W[ds, None] * t[ds])
        return out

    res = resultant(trac)
    Amat = res[:, :, 1:].reshape(3 * m, 3 * m)
    b = (c - res[:, :, 0]).ravel()
    a, *_ = np.linalg.lstsq(Amat, b, rcond=None)
    phi = phis[:, 0] + phis[:, 1:] @ a
    sv = np.linalg.svd(Amat, compute_uv=False)
    got = resultant((Kp @ phi + dG)[:, None])[..., 0]
    return SolutionBundle("rigid_resultants", array, pair, load, DensityField(D, phi), spec,
                          rigid=a.reshape(m, 3),
                          info={"rcond": rc, "stiffness": Amat, "singular_values": sv,
                                "resultants": got, "global_shift": sol[n:] @ np.r_[1.0, a]})


def density_snorm(phi, mesh: BoundaryMesh, spec: KernelSpec) -> float:
    v = phi.values if isinstance(phi, DensityField) else np.asarray(phi, float)
    G = gram_SN(mesh, spec).matrix
    return float(np.sqrt(max(v @ G @ v, 0.0)))


def error_snorm(bundle_a: SolutionBundle, bundle_b: SolutionBundle) -> float:
    """Energy norm of the density difference of two solutions on one mesh."""
    if bundle_a.mesh is not bundle_b.mesh:
        raise SolverError("bundles live on different meshes")
    pa, pb = bundle_a.pair, bundle_b.pair
    if (pa.lam, pa.mu) != (pb.lam, pb.mu):
        raise SolverError("bundles use different background pairs")
    return density_snorm(bundle_a.phi.values - bundle_b.phi.values, bundle_a.mesh, bundle_a.spec)


def load_norm(array: InclusionArray, pair: LamePair, load: LoadSpec) -> float:
    """Computable proxy for the load size: energy norm of S^-1 G on the inclusions."""
    D = array.incl_mesh
    spec = background_spec(array, pair)
    G, _ = background_trace(load, D, array.outer_mesh)
    x = np.linalg.solve(assemble_S(D, spec).matrix, G)
    return density_snorm(x, D, spec)
