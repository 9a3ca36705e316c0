import numpy as np
import pytest
from scipy import linalg

from elastica_np.geometry import make_curve, single_inclusion
from elastica_np.potentials import _correction_sol
from elastica_np.spectra import (
    HALF_TOL,
    SpectralError,
    SpectralReport,
    gap_study,
    np_spectrum,
    unit_cell_constants,
)

import oracles
from conftest import PAIR, corrected, omega_circle, outer_circle


def _report(arr, mode="N", subspace="full"):
    return np_spectrum(arr.incl_mesh, PAIR, mode, subspace, outer=arr.outer_mesh)


@pytest.mark.parametrize("mode", ["N", "D"])
@pytest.mark.parametrize("name", ["circle", "array5"])
def test_full_spectrum_has_rigid_eigenvalues(geometries, name, mode):
    arr = geometries[name]
    r = _report(arr, mode)
    assert r.n_half == 3 * arr.incl_mesh.n_components
    assert r.count_near(0.5, HALF_TOL) == r.n_half


@pytest.mark.parametrize("mode", ["N", "D"])
@pytest.mark.parametrize("name", ["circle", "array5"])
def test_rigid_orthogonal_spectrum_avoids_endpoints(geometries, name, mode):
    r = _report(geometries[name], mode, "rigid_orthogonal")
    assert r.count_near(0.5, 1e-3) == 0 and r.count_near(-0.5, 1e-3) == 0
    assert r.delta1 > 1e-3
    assert len(r.eigenvalues) == geometries[name].incl_mesh.ndof - 3 * geometries[name].incl_mesh.n_components


@pytest.mark.parametrize("name", ["circle", "ellipse", "kite", "array5"])
def test_report_invariants(geometries, name):
    r = _report(geometries[name])
    ev = r.eigenvalues
    assert isinstance(r, SpectralReport)
    assert np.all(np.diff(ev) >= 0)
    assert ev[0] >= -0.5 - 1e-6 and ev[-1] <= 0.5 + 1e-6
    assert r.m == ev[0] and r.M == ev[-1]
    assert r.delta1 == pytest.approx(min(r.m + 0.5, 0.5 - r.M))
    assert r.symmetry_residual < 1e-8


def test_bad_arguments(single_circle):
    D, o = single_circle.incl_mesh, single_circle.outer_mesh
    with pytest.raises(SpectralError):
        np_spectrum(D, PAIR, "X", outer=o)
    with pytest.raises(SpectralError):
        np_spectrum(D, PAIR, "N", "half", outer=o)
    with pytest.raises(SpectralError):
        np_spectrum(D, PAIR, "N")
    with pytest.raises(SpectralError):
        np_spectrum(D, PAIR, "D", spec=corrected(single_circle))


# ---- brute-force oracle ----------------------------------------------------------

def _rot(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s], [s, c]])


# the cardinal density oscillates at the node scale, so extrapolate from close in
HS = (5e-4, 2.5e-4, 1.25e-4)


def _oracle_matrices(arr):
    """S and K* of a circle concentric with the outer circle, from quadrature.

    Only the columns of node 0 are computed (adaptive quadrature of the
    trigonometric cardinal function, principal value by extrapolated
    one-sided tractions); the rest follow from rotation equivariance.
    """
    D, spec = arr.incl_mesh, corrected(arr)
    curve = D.curves[0]
    N = D.n_nodes
    lam, mu = PAIR.lam, PAIR.mu
    cs, sol = _correction_sol(D, spec)
    S0 = np.zeros((2 * N, 2))
    K0 = np.zeros((2 * N, 2))
    for k in range(2):
        delta = np.zeros((N, 2))
        delta[0, k] = 1.0
        dens = lambda s, d=delta: oracles.trig_interp(d, s)[0]
        e = delta.ravel()
        for i in range(N):
            x, t0 = D.points[i], D.param[i]
            S0[2 * i:2 * i + 2, k] = oracles.layer_quad(
                curve, dens, x, lambda r: oracles.kelvin_ref(r, lam, mu), t0=t0)
            S0[2 * i:2 * i + 2, k] += cs.field(x[None], D.points, D.weights, sol) @ e
            corr = lambda pt, n: cs.traction(pt[None], n[None], D.points, D.weights, sol) @ e
            tp = oracles.extrapolated_traction(D, 0, i, dens, delta, lam, mu, +1, corr, hs=HS)
            K0[2 * i:2 * i + 2, k] = tp - 0.5 * delta[i]
    S = np.zeros((2 * N, 2 * N))
    K = np.zeros((2 * N, 2 * N))
    for j in range(N):
        Q = _rot(2 * np.pi * j / N)
        for i in range(N):
            src = 2 * ((i - j) % N)
            S[2 * i:2 * i + 2, 2 * j:2 * j + 2] = Q @ S0[src:src + 2] @ Q.T
            K[2 * i:2 * i + 2, 2 * j:2 * j + 2] = Q @ K0[src:src + 2] @ Q.T
    return S, K


def test_spectrum_matches_brute_force_oracle():
    arr = single_inclusion(outer_circle(), omega_circle(), 32, 256)
    S, K = _oracle_matrices(arr)
    W = arr.incl_mesh.dof_weights()
    B = -(W[:, None] * S)
    A = B @ K
    theta = linalg.eigh(0.5 * (A + A.T), 0.5 * (B + B.T), eigvals_only=True)
    ref = theta[np.argsort(-np.abs(theta))][:10]
    got = _report(arr).eigenvalues
    got = got[np.argsort(-np.abs(got))][:10]
    np.testing.assert_allclose(np.sort(got), np.sort(ref), atol=1e-4)


# ---- unit cell -------------------------------------------------------------------

def test_unit_cell_constants_signs_and_bounds():
    mN, MD = unit_cell_constants(omega_circle(), PAIR, 64)
    assert -0.5 < mN < 0 < MD < 0.5


def test_unit_cell_constants_scale_invariant():
    a = unit_cell_constants(omega_circle(), PAIR, 64)
    b = unit_cell_constants(omega_circle(), PAIR, 64, scale=0.5, shift=(1.5, -0.5))
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_unit_cell_constants_grow_with_inclusion():
    vals = [unit_cell_constants(omega_circle(r), PAIR, 64) for r in (0.1, 0.15, 0.25)]
    mN, MD = np.array(vals).T
    assert np.all(np.diff(mN) < 0) and np.all(np.diff(MD) > 0)


def test_unit_cell_rejects_large_inclusion():
    with pytest.raises(SpectralError):
        unit_cell_constants(make_curve("circle", radius=0.55), PAIR, 64)


def test_gap_study_single_period():
    st = gap_study(outer_circle(), omega_circle(), PAIR, [1.0])
    (row,) = st.rows
    assert row.n_inclusions == 5
    assert st.delta1 == row.delta1 > 0
    assert st.ordering_slack() >= -1e-6
    assert st.cell_slack() >= -2e-3
    rn, rd = st.reports[1.0]
    assert (rn.mode, rd.mode) == ("N", "D")
