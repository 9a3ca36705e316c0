"""Nystrom matrix builders for the 2D Kelvin / Stokes layer kernels.

Matrices are node-major: entry [2i+a, 2j+b] couples coordinate a at
target i with coordinate b at source j, source quadrature weight
included.  Diagonal blocks of a mesh use the Kress log rule for the
single layer and an exact trigonometric Hilbert transform for the Cauchy
part of the traction kernel; everything else is plain trapezoid.
"""

import numpy as np

_ROWS = 256
_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


class KernelParams:
    """Coefficients of the Kelvin kernel; lam = inf gives the Stokes limit.

    gamma = a log|r| I - b r r^T / |r|^2 with a = c1/2pi, b = c2/2pi, and
    kappa = mu / (2mu + lam) weighs the Cauchy part of the traction kernel.
    """

    def __init__(self, lam, mu):
        self.lam, self.mu = float(lam), float(mu)
        inv = 0.0 if np.isinf(lam) else 1.0 / (2 * mu + lam)
        self.c1 = 0.5 * (1.0 / mu + inv)
        self.c2 = 0.5 * (1.0 / mu - inv)
        self.kappa = mu * inv
        self.stokes = bool(np.isinf(lam))

    def key(self):
        return (self.lam, self.mu)


def gamma(r, prm):
    rho2 = (r**2).sum(-1)
    a, b = prm.c1 / (2 * np.pi), prm.c2 / (2 * np.pi)
    out = -b * r[..., :, None] * r[..., None, :] / rho2[..., None, None]
    lg = 0.5 * a * np.log(rho2)
    out[..., 0, 0] += lg
    out[..., 1, 1] += lg
    return out


def traction_kernel(r, n, prm):
    # sigma(Gamma e_k) n, r = x - z, n = normal at x
    rho2 = (r**2).sum(-1)
    rn = (r * n).sum(-1)
    k = prm.kappa
    out = (2 * (1 - k) / (2 * np.pi)) * (rn / rho2**2)[..., None, None] * (
        r[..., :, None] * r[..., None, :])
    out += (k / (2 * np.pi)) * (r[..., :, None] * n[..., None, :]
                                 - n[..., :, None] * r[..., None, :]) / rho2[..., None, None]
    d = (k / (2 * np.pi)) * rn / rho2
    out[..., 0, 0] += d
    out[..., 1, 1] += d
    return out


def pressure_kernel(r):
    # row vector q(x, z) with pressure = q . density
    return r / (2 * np.pi * (r**2).sum(-1))[..., None]


def _flat(blk):
    # (P, S, 2, 2) -> (2P, 2S)
    p, s = blk.shape[:2]
    return blk.transpose(0, 2, 1, 3).reshape(2 * p, 2 * s)


def cross_S(tgt, src_pts, src_w, prm):
    out = np.empty((2 * len(tgt), 2 * len(src_pts)))
    for i0 in range(0, len(tgt), _ROWS):
        r = tgt[i0:i0 + _ROWS, None, :] - src_pts[None]
        out[2 * i0:2 * (i0 + len(r))] = _flat(gamma(r, prm) * src_w[None, :, None, None])
    return out


def cross_T(tgt, tgt_n, src_pts, src_w, prm):
    out = np.empty((2 * len(tgt), 2 * len(src_pts)))
    for i0 in range(0, len(tgt), _ROWS):
        r = tgt[i0:i0 + _ROWS, None, :] - src_pts[None]
        n = np.broadcast_to(tgt_n[i0:i0 + _ROWS, None, :], r.shape)
        out[2 * i0:2 * (i0 + len(r))] = _flat(traction_kernel(r, n, prm) * src_w[None, :, None, None])
    return out


def cross_P(tgt, src_pts, src_w):
    r = tgt[:, None, :] - src_pts[None]
    q = pressure_kernel(r) * src_w[None, :, None]
    return q.reshape(len(tgt), 2 * len(src_pts))


def kress_weights(N):
    """R_ij with sum_j R_ij f(t_j) ~ int log(4 sin^2((t_i - s)/2)) f(s) ds."""
    n = N // 2
    t = 2 * np.pi * np.arange(N) / N
    m = np.arange(1, n)
    row = -(2 * np.pi / n) * (np.cos(np.outer(t, m)) / m).sum(1) - (np.pi / n**2) * np.cos(n * t)
    idx = (np.arange(N)[:, None] - np.arange(N)[None]) % N
    return row[idx]


def hilbert_matrix(N):
    """Periodic Hilbert transform (1/2pi) pv int cot((t-s)/2) f(s) ds on nodes."""
    n = N // 2
    t = 2 * np.pi * np.arange(N) / N
    row = (2.0 / N) * np.sin(np.outer(t, np.arange(1, n))).sum(1)
    idx = (np.arange(N)[:, None] - np.arange(N)[None]) % N
    return row[idx]


def _cot_half(N):
    t = 2 * np.pi * np.arange(N) / N
    d = t[:, None] - t[None]
    c = np.zeros((N, N))
    off = ~np.eye(N, dtype=bool)
    c[off] = 1.0 / np.tan(0.5 * d[off])
    return c


def _logsin(N):
    t = 2 * np.pi * np.arange(N) / N
    d = t[:, None] - t[None]
    off = ~np.eye(N, dtype=bool)
    out = np.zeros((N, N))
    out[off] = np.log(4 * np.sin(0.5 * d[off]) ** 2)
    return out


def _with_zero_diag(blk):
    idx = np.arange(blk.shape[0])
    blk[idx, idx] = 0.0
    return blk


def self_S(mesh, prm):
    """Single-layer trace matrix on a (multi-component) mesh."""
    x, w = mesh.points, mesh.weights
    n = len(x)
    out = np.empty((2 * n, 2 * n))
    for i0 in range(0, n, _ROWS):
        r = x[i0:i0 + _ROWS, None, :] - x[None]
        rows = np.arange(i0, min(i0 + _ROWS, n))
        r[np.arange(len(rows)), rows] = 1.0  # placeholder, diagonal replaced below
        blk = gamma(r, prm) * w[None, :, None, None]
        blk[np.arange(len(rows)), rows] = 0.0
        out[2 * i0:2 * (i0 + len(rows))] = _flat(blk)
    a4 = prm.c1 / (4 * np.pi)
    for c in range(mesh.n_components):
        s = mesh.component(c)
        N = mesh.sizes[c]
        sp = mesh.speed[s]
        tau = mesh.d1[s] / sp[:, None]
        corr = a4 * sp[None, :] * (kress_weights(N) - (2 * np.pi / N) * _logsin(N))
        blk = np.zeros((N, N, 2, 2))
        blk[..., 0, 0] = corr
        blk[..., 1, 1] = corr
        idx = np.arange(N)
        diag = (2 * np.pi / N) * sp[:, None, None] * (
            prm.c1 / (2 * np.pi) * np.log(sp)[:, None, None] * np.eye(2)
            - prm.c2 / (2 * np.pi) * tau[:, :, None] * tau[:, None, :])
        blk[idx, idx] += diag
        ds = mesh.dof_slice(c)
        out[ds, ds] += _flat(blk)
    return out


def self_Kstar(mesh, prm):
    """Principal-value traction (NP) matrix on a mesh."""
    x, w, nr = mesh.points, mesh.weights, mesh.normals
    n = len(x)
    out = np.empty((2 * n, 2 * n))
    for i0 in range(0, n, _ROWS):
        rows = np.arange(i0, min(i0 + _ROWS, n))
        r = x[rows, None, :] - x[None]
        r[np.arange(len(rows)), rows] = 1.0
        nn = np.broadcast_to(nr[rows, None, :], r.shape)
        blk = traction_kernel(r, nn, prm) * w[None, :, None, None]
        blk[np.arange(len(rows)), rows] = 0.0
        out[2 * i0:2 * (i0 + len(rows))] = _flat(blk)
    k = prm.kappa
    for c in range(mesh.n_components):
        s = mesh.component(c)
        N = mesh.sizes[c]
        sp, d1, d2, nrm = mesh.speed[s], mesh.d1[s], mesh.d2[s], nr[s]
        ratio = sp[None, :] / sp[:, None]
        corr = 0.5 * k * ratio * (_cot_half(N) / N - hilbert_matrix(N))
        blk = corr[..., None, None] * _J
        # smooth diagonal limits
        k0 = -(d2 * nrm).sum(-1) / (2 * sp**2)
        tau = d1 / sp[:, None]
        cross = d2[:, 0] * nrm[:, 1] - d2[:, 1] * nrm[:, 0]
        rem = -cross / (2 * sp) - (d1 * d2).sum(-1) / sp**2
        idx = np.arange(N)
        diag = (2 * np.pi / N) * sp[:, None, None] / (2 * np.pi) * (
            k * k0[:, None, None] * np.eye(2)
            + 2 * (1 - k) * k0[:, None, None] * tau[:, :, None] * tau[:, None, :])
        diag += (k / N) * rem[:, None, None] * _J
        blk[idx, idx] += diag
        ds = mesh.dof_slice(c)
        out[ds, ds] += _flat(blk)
    return out


def self_P(mesh, side=-1):
    """Boundary value of the Stokes pressure potential (side -1: interior)."""
    x, w, nr = mesh.points, mesh.weights, mesh.normals
    n = len(x)
    r = x[:, None, :] - x[None]
    idx = np.arange(n)
    r[idx, idx] = 1.0
    q = pressure_kernel(r) * w[None, :, None]
    q[idx, idx] = 0.0
    for c in range(mesh.n_components):
        s = mesh.component(c)
        N = mesh.sizes[c]
        sp, d1, d2, nrm = mesh.speed[s], mesh.d1[s], mesh.d2[s], nr[s]
        tau = d1 / sp[:, None]
        corr = 0.5 * hilbert_matrix(N) - _cot_half(N) / (2 * N)
        blk = corr[:, :, None] * tau[None, :, :]
        k0 = -(d2 * nrm).sum(-1) / (2 * sp**2)
        rem2 = -(d1 * d2).sum(-1) / (2 * sp**2)
        li = np.arange(N)
        blk[li, li] += (1.0 / N) * (-k0[:, None] * sp[:, None] * nrm + rem2[:, None] * tau)
        blk[li, li] += 0.5 * side * nrm
        q[s, s] += blk
    return q.reshape(n, 2 * n)
