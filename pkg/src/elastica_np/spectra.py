"""NP spectra in the single-layer energy inner product, unit-cell constants and gap study."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .geometry import BoundaryMesh, ClosedCurve, build_array, mesh_curve, smoothed_square
from .kernels import KernelSpec, LamePair
from .potentials import assemble_Kstar, assemble_S, rigid_orthogonal_basis

__all__ = [
    "SpectralError",
    "SpectralReport",
    "GapRow",
    "GapStudy",
    "np_spectrum",
    "unit_cell_constants",
    "gap_study",
]

HALF_TOL = 1e-6
_MODES = {"N": "neumann_corrected", "D": "dirichlet_corrected"}


class SpectralError(RuntimeError):
    pass


@dataclass
class SpectralReport:
    mode: str
    subspace: str
    eigenvalues: np.ndarray
    symmetry_residual: float
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return float(self.eigenvalues[0])

    @property
    def M(self):
        return float(self.eigenvalues[-1])

    @property
    def delta1(self):
        return min(self.m + 0.5, 0.5 - self.M)

    @property
    def n_half(self):
        return int(np.sum(np.abs(self.eigenvalues - 0.5) < HALF_TOL))

    def count_near(self, value, tol):
        return int(np.sum(np.abs(self.eigenvalues - value) < tol))


def _pencil(mesh, spec):
    S = assemble_S(mesh, spec).matrix
    K = assemble_Kstar(mesh, spec).matrix
    W = mesh.dof_weights()
    B = -(W[:, None] * S)
    A = B @ K
    res = np.linalg.norm(A - A.T) / np.linalg.norm(A)
    return 0.5 * (A + A.T), 0.5 * (B + B.T), res


def np_spectrum(mesh: BoundaryMesh, pair: LamePair, mode="N", subspace="full",
                outer: BoundaryMesh | None = None, spec: KernelSpec | None = None) -> SpectralReport:
    """Eigenvalues of K* made self-adjoint by the energy form -W S.

    ``mode`` picks the Neumann ('N') or Dirichlet ('D') corrected kernel of
    ``outer``; ``subspace`` is 'full' or 'rigid_orthogonal'.
    """
    if mode not in _MODES:
        raise SpectralError(f"mode must be 'N' or 'D', got {mode!r}")
    if subspace not in ("full", "rigid_orthogonal"):
        raise SpectralError(f"unknown subspace {subspace!r}")
    if spec is None:
        if outer is None:
            raise SpectralError("an outer mesh (or a corrected spec) is required")
        spec = KernelSpec("lame", pair=pair, mode=_MODES[mode], outer=outer)
    elif spec.mode != _MODES[mode]:
        raise SpectralError(f"spec mode {spec.mode} does not match {mode!r}")
    A, B, res = _pencil(mesh, spec)
    if subspace == "rigid_orthogonal":
        Q = rigid_orthogonal_basis(mesh)
        A, B = Q.T @ A @ Q, Q.T @ B @ Q
    try:
        L = linalg.cholesky(B, lower=True)
    except linalg.LinAlgError:
        ev = np.linalg.eigvalsh(B)
        raise SpectralError(
            f"energy Gram matrix is indefinite (eigenvalues in [{ev[0]:.3e}, {ev[-1]:.3e}])") from None
    C = linalg.solve_triangular(L, linalg.solve_triangular(L, A, lower=True).T, lower=True)
    theta = linalg.eigh(0.5 * (C + C.T), eigvals_only=True, check_finite=False)
    meta = {"n_components": mesh.n_components, "ndof": mesh.ndof,
            "sizes": list(mesh.sizes), "pair": (pair.lam, pair.mu)}
    return SpectralReport(mode, subspace, np.sort(theta), float(res), meta)


def unit_cell_constants(omega: ClosedCurve, pair: LamePair, N: int, N_cell=512,
                        scale=1.0, shift=(0.0, 0.0)):
    """Cell constants (m^N(omega), M^D(omega)) with a smoothed square as the cell.

    m^N is the bottom of the full Neumann spectrum and M^D the top of the
    rigid-orthogonal Dirichlet spectrum.  ``scale``/``shift`` place the
    cell and inclusion at another period.
    """
    cell = smoothed_square().transformed(scale, shift)
    if not cell.contains(omega.transformed(scale, shift).position(
            np.linspace(0, 2 * np.pi, 512, endpoint=False))).all():
        raise SpectralError("inclusion does not fit inside the cell")
    om = omega.transformed(scale, shift)
    D = mesh_curve(om, N, tag="cell_inclusion")
    Y = mesh_curve(cell, N_cell, tag="cell")
    rn = np_spectrum(D, pair, "N", "full", outer=Y)
    rd = np_spectrum(D, pair, "D", "rigid_orthogonal", outer=Y)
    return rn.m, rd.M


@dataclass
class GapRow:
    eps: float
    mN: float
    MN: float
    mD: float
    MD: float
    n_inclusions: int

    @property
    def delta1(self):
        return min(self.mN + 0.5, self.mD + 0.5, 0.5 - self.MN, 0.5 - self.MD)


@dataclass
class GapStudy:
    rows: list
    mN_omega: float
    MD_omega: float
    reports: dict

    def ordering_slack(self):
        """Smallest slack of m^N <= m^D and M^N <= M^D over all rows."""
        return min(min(r.mD - r.mN, r.MD - r.MN) for r in self.rows)

    def cell_slack(self):
        """Smallest slack of M^D_eps <= M^D(omega) and m^N_eps >= m^N(omega)."""
        return min(min(self.MD_omega - r.MD, r.mN - self.mN_omega) for r in self.rows)

    @property
    def delta1(self):
        return min(r.delta1 for r in self.rows)


def gap_study(outer: ClosedCurve, omega: ClosedCurve, pair: LamePair, eps_list,
              N_incl=64, N_outer=256, N_cell=512) -> GapStudy:
    """Rigid-orthogonal endpoints for each period plus the unit-cell constants."""
    mN_w, MD_w = unit_cell_constants(omega, pair, N_incl, N_cell)
    rows, reports = [], {}
    for eps in eps_list:
        arr = build_array(outer, omega, eps, N_incl, N_outer)
        D = arr.incl_mesh
        rn = np_spectrum(D, pair, "N", "rigid_orthogonal", outer=arr.outer_mesh)
        rd = np_spectrum(D, pair, "D", "rigid_orthogonal", outer=arr.outer_mesh)
        reports[eps] = (rn, rd)
        rows.append(GapRow(float(eps), rn.m, rn.M, rd.m, rd.M, arr.n_inclusions))
    return GapStudy(rows, mN_w, MD_w, reports)
