"""Kelvin matrix, traction kernel, Stokeslet and the bounded-domain corrections.

The Lame operator is mu Lap u + (lam + mu) grad div u and the fundamental
solution satisfies L Gamma = delta I.  The Stokes pair is the
incompressible limit lam -> inf of the same kernel, with pressure
p = lim lam div u and conormal derivative p N + 2 mu D(u) N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _quad
from .geometry import BoundaryMesh

__all__ = [
    "KernelError",
    "SingularityError",
    "LamePair",
    "KernelSpec",
    "moduli_from_pair",
    "kelvin",
    "traction",
    "stokeslet_pressure",
    "correction_operator",
    "CorrectionSolver",
    "rigid_fields",
]

DIM = 2


class KernelError(ValueError):
    pass


class SingularityError(KernelError):
    pass


@dataclass(frozen=True)
class LamePair:
    lam: float
    mu: float

    @property
    def admissible(self):
        return self.mu > 0 and DIM * self.lam + 2 * self.mu > 0

    def uniformly_admissible(self, delta):
        a, b = DIM * self.lam + 2 * self.mu, self.mu
        return delta <= min(a, b) and max(a, b) <= 1.0 / delta

    def check(self):
        if not (np.isfinite(self.lam) and np.isfinite(self.mu)) or not self.admissible:
            raise KernelError(
                f"inadmissible Lame pair (lam={self.lam}, mu={self.mu}): "
                "need mu > 0 and 2 lam + 2 mu > 0")
        return self

    def scaled(self, t):
        return LamePair(t * self.lam, t * self.mu)


def moduli_from_pair(pair: LamePair):
    """Young's and bulk moduli (E, K) of an admissible pair in 2D."""
    pair.check()
    lam, mu = pair.lam, pair.mu
    E = 2 * mu * (DIM * lam + 2 * mu) / ((DIM - 1) * lam + 2 * mu)
    K = (DIM * lam + 2 * mu) / DIM
    return E, K


def _params(pair):
    return _quad.KernelParams(pair.lam, pair.mu)


def _diff(x, z):
    r = np.asarray(x, float) - np.asarray(z, float)
    if np.any((r**2).sum(-1) == 0):
        raise SingularityError("kernel evaluated at its source point (x == z)")
    return r


def kelvin(x, z, pair: LamePair):
    """Kelvin matrix Gamma(x - z); broadcasts over leading axes."""
    return _quad.gamma(_diff(x, z), _params(pair.check()))


def traction(x, z, n_x, pair: LamePair):
    """Conormal derivative at x (normal n_x) of the columns of Gamma(. - z)."""
    r = _diff(x, z)
    n = np.broadcast_to(np.asarray(n_x, float), r.shape)
    return _quad.traction_kernel(r, n, _params(pair.check()))


def stokeslet_pressure(x, z, mu_prime):
    """Stokes velocity kernel and pressure vector.

    G = (1 / (4 pi mu')) (log|r| I - r r^T / |r|^2) and q = r / (2 pi |r|^2),
    r = x - z, so that mu' Lap G + grad q = 0 and div G = 0 off the source.
    """
    if not mu_prime > 0:
        raise KernelError(f"viscosity must be positive, got {mu_prime}")
    r = _diff(x, z)
    G = _quad.gamma(r, _quad.KernelParams(np.inf, mu_prime))
    return G, _quad.pressure_kernel(r)


def rigid_fields(points, center, normalize_weights=None):
    """Rigid motions e1, e2, (x2, -x1) about ``center`` as (2n, 3) columns.

    With ``normalize_weights`` the columns are made orthonormal in the
    weighted L2 pairing (Gram-Schmidt in that order).
    """
    p = np.asarray(points) - np.asarray(center)
    n = len(p)
    R = np.zeros((n, 2, 3))
    R[:, 0, 0] = 1.0
    R[:, 1, 1] = 1.0
    R[:, 0, 2] = p[:, 1]
    R[:, 1, 2] = -p[:, 0]
    R = R.reshape(2 * n, 3)
    if normalize_weights is not None:
        W = np.repeat(normalize_weights, 2)
        for k in range(3):
            for j in range(k):
                R[:, k] -= (R[:, j] * W * R[:, k]).sum() * R[:, j]
            R[:, k] /= np.sqrt((R[:, k] * W * R[:, k]).sum())
    return R


@dataclass
class KernelSpec:
    """Which kernel a boundary operator uses.

    family 'lame' takes ``pair``; family 'stokes' takes ``mu_prime``.
    Corrected modes need ``outer`` (the mesh of the outer boundary).
    """

    family: str = "lame"
    pair: LamePair | None = None
    mu_prime: float | None = None
    mode: str = "free_space"
    outer: BoundaryMesh | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in ("lame", "stokes"):
            raise KernelError(f"unknown kernel family {self.family!r}")
        if self.mode not in ("free_space", "neumann_corrected", "dirichlet_corrected"):
            raise KernelError(f"unknown kernel mode {self.mode!r}")
        if self.family == "lame":
            if self.pair is None:
                raise KernelError("lame kernel needs a Lame pair")
            self.pair.check()
        else:
            if self.mu_prime is None or not self.mu_prime > 0:
                raise KernelError("stokes kernel needs a positive viscosity")
            if self.mode == "dirichlet_corrected":
                raise KernelError("dirichlet-corrected Stokes kernel is not supported")
        if self.mode == "free_space":
            if self.outer is not None:
                raise KernelError("free_space kernels take no outer mesh")
        elif self.outer is None:
            raise KernelError(f"{self.mode} kernel needs an outer mesh")

    @property
    def params(self):
        if self.family == "lame":
            return _quad.KernelParams(self.pair.lam, self.pair.mu)
        return _quad.KernelParams(np.inf, self.mu_prime)

    @property
    def corrected(self):
        return self.mode != "free_space"

    def with_mode(self, mode, outer=None):
        return KernelSpec(self.family, self.pair, self.mu_prime, mode, outer)


class CorrectionSolver:
    """Regular part of the Neumann or Dirichlet function of the outer domain.

    For a density phi carried by sources (points z_j, weights w_j) the
    correction R phi = int R(., z) phi(z) dsigma(z) is represented as an
    outer single layer S_out eta plus a rigid (Neumann) or constant
    (Dirichlet) field.  The outer system is factored once in the
    constructor; each call back-substitutes all source columns at once.

    Neumann data: the traction of Gamma^N(., z) on the outer boundary is
    I/|dOmega| + r3(x) r3(z)^T with r3 the normalized rotation about the
    outer centroid.  Its translation part is the constant 1/|dOmega|; the
    rotation part is what makes the Neumann problem solvable.
    """

    def __init__(self, spec: KernelSpec, outer: BoundaryMesh):
        self.spec, self.outer, self.mode = spec, outer, spec.mode
        self.prm = spec.params
        o = outer
        self.center = o.centroids()[0] if o.n_components == 1 else (
            (o.points * o.weights[:, None]).sum(0) / o.weights.sum())
        self.length = o.weights.sum()
        self.W = o.dof_weights()
        self.S_oo = _quad.self_S(o, self.prm)
        m = o.ndof
        if self.mode == "neumann_corrected":
            self.R_o = rigid_fields(o.points, self.center, o.weights)
            B = -0.5 * np.eye(m) + _quad.self_Kstar(o, self.prm)
            C = self.R_o
            A = np.block([[B, C], [C.T * self.W[None, :], np.zeros((3, 3))]])
        else:
            E = np.tile(np.eye(2), (o.n_nodes, 1))
            self.E_o = E
            A = np.block([[self.S_oo, E], [E.T * self.W[None, :], np.zeros((2, 2))]])
        rc = 1.0 / np.linalg.cond(A, 1)
        if not rc > 1e3 * np.finfo(float).eps:
            raise KernelError(f"outer correction system singular (rcond {rc:.2e})")
        self.lu = linalg.lu_factor(A, check_finite=False)
        self.rcond = rc

    def _rigid_at(self, pts):
        # orthonormal outer basis continued as rigid fields to arbitrary points
        if not hasattr(self, "_rc"):
            raw = rigid_fields(self.outer.points, self.center)
            self._rc = np.linalg.lstsq(raw, self.R_o, rcond=None)[0]
        return rigid_fields(pts, self.center) @ self._rc

    def solve(self, src_pts, src_w):
        """Outer density eta and rigid/constant coefficients for unit sources.

        Returns (eta, coef) with eta (2M, 2S) and coef (3 or 2, 2S) such that
        R phi = S_out eta phi + basis coef phi for source values phi (2S,).
        """
        o, prm = self.outer, self.prm
        m = o.ndof
        if self.mode == "neumann_corrected":
            T = _quad.cross_T(o.points, o.normals, src_pts, src_w, prm)
            Rz = self._rigid_at(src_pts) * np.repeat(src_w, 2)[:, None]
            P = self.R_o @ Rz.T
            rhs = np.vstack([P - T, np.zeros((3, T.shape[1]))])
            sol = linalg.lu_solve(self.lu, rhs, check_finite=False)
            eta = sol[:m]
            Gz = _quad.cross_S(o.points, src_pts, src_w, prm)
            coef = -(self.R_o.T * self.W[None, :]) @ (Gz + self.S_oo @ eta)
            return eta, coef
        Gz = _quad.cross_S(o.points, src_pts, src_w, prm)
        rhs = np.vstack([-Gz, np.zeros((2, Gz.shape[1]))])
        sol = linalg.lu_solve(self.lu, rhs, check_finite=False)
        return sol[:m], sol[m:]

    def _basis_at(self, pts):
        if self.mode == "neumann_corrected":
            return self._rigid_at(pts)
        return np.tile(np.eye(2), (len(pts), 1))

    def field(self, pts, src_pts, src_w, sol=None):
        """Matrix of R phi evaluated at ``pts`` (2P, 2S)."""
        eta, coef = sol if sol is not None else self.solve(src_pts, src_w)
        S_po = _quad.cross_S(np.asarray(pts), self.outer.points, self.outer.weights, self.prm)
        return S_po @ eta + self._basis_at(np.asarray(pts)) @ coef

    def traction(self, pts, normals, src_pts, src_w, sol=None):
        """Matrix of the conormal derivative of R phi at ``pts``."""
        eta, _ = sol if sol is not None else self.solve(src_pts, src_w)
        T_po = _quad.cross_T(np.asarray(pts), np.asarray(normals), self.outer.points,
                             self.outer.weights, self.prm)
        return T_po @ eta

    def pressure(self, pts, src_pts, src_w, sol=None):
        if not self.prm.stokes:
            raise KernelError("pressure is defined for the Stokes family only")
        eta, _ = sol if sol is not None else self.solve(src_pts, src_w)
        return _quad.cross_P(np.asarray(pts), self.outer.points, self.outer.weights) @ eta

    def kernel(self, x, z):
        """R(x, z) as 2x2 matrices for point lists x (P,2), z (S,2): (P, S, 2, 2)."""
        x, z = np.atleast_2d(x), np.atleast_2d(z)
        F = self.field(x, z, np.ones(len(z)))
        return F.reshape(len(x), 2, len(z), 2).transpose(0, 2, 1, 3)


def correction_operator(spec: KernelSpec, outer_mesh: BoundaryMesh | None = None) -> CorrectionSolver:
    """Factored correction solver for a corrected kernel spec (cached on the spec)."""
    if not spec.corrected:
        raise KernelError("free_space kernels have no correction")
    outer = outer_mesh if outer_mesh is not None else spec.outer
    key = ("correction", id(outer))
    if key not in spec._cache:
        spec._cache[key] = CorrectionSolver(spec, outer)
    return spec._cache[key]
