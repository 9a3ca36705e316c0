"""Smooth closed curves, Nystrom meshes and periodic inclusion arrays.

Curves are 2pi-periodic, counterclockwise parametrizations with analytic
first and second derivatives.  Meshes use the equispaced parameter nodes
t_j = 2 pi j / N, which is what the spectral quadrature rules in
:mod:`elastica_np.potentials` expect.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "ClosedCurve",
    "BoundaryMesh",
    "InclusionArray",
    "make_curve",
    "mesh_curve",
    "merge_meshes",
    "build_array",
    "single_inclusion",
    "lattice_cells",
    "smoothed_square",
    "UNIT_CELL_HALF",
]

UNIT_CELL_HALF = 0.5
_CHECK_SAMPLES = 1024
_CONTAIN_MARGIN = 1e-9


class GeometryError(ValueError):
    pass


def _trig_eval(coef_c, coef_s, t, deriv=0):
    # sum_k a_k cos(k t) + b_k sin(k t), k = 0..K-1, and its derivatives
    k = np.arange(len(coef_c))
    kt = np.outer(t, k)
    c, s = np.cos(kt), np.sin(kt)
    if deriv == 0:
        return c @ coef_c + s @ coef_s
    if deriv == 1:
        return (-s * k) @ coef_c + (c * k) @ coef_s
    return (-c * k**2) @ coef_c + (-s * k**2) @ coef_s


@dataclass(frozen=True)
class ClosedCurve:
    """Counterclockwise smooth closed curve x(t), t in [0, 2pi).

    ``kind`` is one of circle, ellipse, kite, trig.  ``params`` holds the
    defining parameters; ``scale`` and ``shift`` apply the affine map
    x -> scale * x + shift after evaluation (used for rescaled cells).
    """

    kind: str
    params: dict
    scale: float = 1.0
    shift: tuple = (0.0, 0.0)
    _coef: tuple = field(default=None, repr=False, compare=False)

    def _raw(self, t, deriv):
        p = self.params
        t = np.asarray(t, dtype=float)
        if self.kind == "circle":
            r = p["radius"]
            cx, cy = p["center"]
            if deriv == 0:
                return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], -1)
            if deriv == 1:
                return np.stack([-r * np.sin(t), r * np.cos(t)], -1)
            return np.stack([-r * np.cos(t), -r * np.sin(t)], -1)
        if self.kind == "ellipse":
            a, b = p["semi_axes"]
            cx, cy = p["center"]
            if deriv == 0:
                return np.stack([cx + a * np.cos(t), cy + b * np.sin(t)], -1)
            if deriv == 1:
                return np.stack([-a * np.sin(t), b * np.cos(t)], -1)
            return np.stack([-a * np.cos(t), -b * np.sin(t)], -1)
        if self.kind == "kite":
            # s * (cos t + a cos 2t - a, b sin t + c sin 2t)
            s, a, b, c = p["size"], p["a"], p["b"], p["c"]
            cx, cy = p["center"]
            if deriv == 0:
                x = cx + s * (np.cos(t) + a * np.cos(2 * t) - a)
                y = cy + s * (b * np.sin(t) + c * np.sin(2 * t))
            elif deriv == 1:
                x = s * (-np.sin(t) - 2 * a * np.sin(2 * t))
                y = s * (b * np.cos(t) + 2 * c * np.cos(2 * t))
            else:
                x = s * (-np.cos(t) - 4 * a * np.cos(2 * t))
                y = -s * (b * np.sin(t) + 4 * c * np.sin(2 * t))
            return np.stack([x, y], -1)
        if self.kind == "trig":
            # radial curve rho(t) (cos t, sin t) about the center
            cc, ss = self._coef
            cx, cy = p["center"]
            r0 = _trig_eval(cc, ss, t, 0)
            e = np.stack([np.cos(t), np.sin(t)], -1)
            ep = np.stack([-np.sin(t), np.cos(t)], -1)
            if deriv == 0:
                return np.array([cx, cy]) + _col(r0) * e
            r1 = _trig_eval(cc, ss, t, 1)
            if deriv == 1:
                return _col(r1) * e + _col(r0) * ep
            r2 = _trig_eval(cc, ss, t, 2)
            return _col(r2 - r0) * e + 2 * _col(r1) * ep
        raise GeometryError(f"unknown curve kind {self.kind!r}")

    def _eval(self, t, deriv):
        t = np.asarray(t, dtype=float)
        x = self._raw(np.atleast_1d(t), deriv)
        return x[0] if t.ndim == 0 else x

    def position(self, t):
        return self.scale * self._eval(t, 0) + np.asarray(self.shift)

    def d1(self, t):
        return self.scale * self._eval(t, 1)

    def d2(self, t):
        return self.scale * self._eval(t, 2)

    def speed(self, t):
        return np.linalg.norm(self.d1(t), axis=-1)

    def normal(self, t):
        d = self.d1(t)
        n = np.stack([d[..., 1], -d[..., 0]], -1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def arclength(self, n=None):
        # trapezoid on a periodic analytic integrand
        n = n or 4096
        t = 2 * np.pi * np.arange(n) / n
        return float(self.speed(t).sum() * 2 * np.pi / n)

    def signed_area(self, n=4096):
        t = 2 * np.pi * np.arange(n) / n
        x, d = self.position(t), self.d1(t)
        return float(0.5 * np.sum(x[:, 0] * d[:, 1] - x[:, 1] * d[:, 0]) * 2 * np.pi / n)

    def centroid(self, n=4096):
        t = 2 * np.pi * np.arange(n) / n
        x, d = self.position(t), self.d1(t)
        a = self.signed_area(n)
        w = (x[:, 0] * d[:, 1] - x[:, 1] * d[:, 0]) * 2 * np.pi / n
        return (x * w[:, None]).sum(0) / (3 * a)

    def transformed(self, scale, shift):
        """Curve ``scale * x + shift`` (composes with any existing map)."""
        s = self.scale * scale
        sh = tuple(scale * np.asarray(self.shift) + np.asarray(shift))
        return ClosedCurve(self.kind, self.params, s, sh, self._coef)

    def closest(self, pts, n=2048):
        """Closest parameter, point and signed distance (negative inside)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t = 2 * np.pi * np.arange(n) / n
        x = self.position(t)
        d2 = ((pts[:, None, :] - x[None]) ** 2).sum(-1)
        ts = t[np.argmin(d2, axis=1)]
        for _ in range(30):
            r = self.position(ts) - pts
            g = (r * self.d1(ts)).sum(-1)
            h = (self.d1(ts) ** 2).sum(-1) + (r * self.d2(ts)).sum(-1)
            step = g / np.where(np.abs(h) > 1e-300, h, 1.0)
            step = np.clip(step, -np.pi / n, np.pi / n)
            ts = ts - step
            if np.max(np.abs(step)) < 1e-15:
                break
        xs = self.position(ts)
        diff = pts - xs
        dist = np.linalg.norm(diff, axis=-1)
        sgn = np.sign((diff * self.normal(ts)).sum(-1))
        return ts, xs, sgn * dist

    def contains(self, pts, margin=_CONTAIN_MARGIN):
        return self.closest(pts)[2] < -margin


def _col(a):
    return np.asarray(a)[..., None]


def _segments_cross(x):
    # proper crossings among non-adjacent polygon edges
    a, b = x, np.roll(x, -1, axis=0)
    m = len(x)

    def orient(p, q, r):
        return ((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))

    for i0 in range(0, m, 128):
        ai, bi = a[i0:i0 + 128, None], b[i0:i0 + 128, None]
        o1 = orient(ai, bi, a[None])
        o2 = orient(ai, bi, b[None])
        o3 = orient(a[None], b[None], ai)
        o4 = orient(a[None], b[None], bi)
        hit = (o1 * o2 < 0) & (o3 * o4 < 0)
        idx = np.arange(i0, min(i0 + 128, m))[:, None]
        sep = np.abs(idx - np.arange(m)[None])
        sep = np.minimum(sep, m - sep)
        if np.any(hit & (sep > 1)):
            return True
    return False


def _check_curve(curve: ClosedCurve):
    m = _CHECK_SAMPLES
    t = 2 * np.pi * np.arange(m) / m
    x = curve.position(t)
    sp = curve.speed(t)
    if not np.all(np.isfinite(x)) or np.min(sp) <= 0:
        raise GeometryError(f"degenerate parametrization for {curve.kind} {curve.params}")
    if curve.signed_area() <= 0:
        raise GeometryError(f"curve not counterclockwise: {curve.kind} {curve.params}")
    h = sp.max() * 2 * np.pi / m
    # pairs that are far apart along the curve must stay apart in space
    s = np.concatenate([[0.0], np.cumsum(sp * 2 * np.pi / m)])
    total = s[-1]
    s = s[:-1]
    ds = np.abs(s[:, None] - s[None])
    ds = np.minimum(ds, total - ds)
    dx = np.linalg.norm(x[:, None] - x[None], axis=-1)
    far = ds > 4 * h
    floor = 0.5 * h
    if np.any(far) and dx[far].min() < floor:
        raise GeometryError(
            f"self-intersection detected for {curve.kind} {curve.params}: "
            f"min distance {dx[far].min():.3e} below floor {floor:.3e}")
    if _segments_cross(x):
        raise GeometryError(f"self-intersection detected for {curve.kind} {curve.params}")


def make_curve(kind: str, params: dict | None = None, **kw) -> ClosedCurve:
    """Build and validate a closed curve.

    Parameters
    ----------
    kind : {'circle', 'ellipse', 'kite', 'trig'}
    params : dict
        circle: center, radius.  ellipse: center, semi_axes (a, b).
        kite: center, size, a, b, c with
        x = size*(cos t + a cos 2t - a, b sin t + c sin 2t); c defaults to 0.
        trig: center, cos, sin (radial Fourier coefficients, index = mode).
    """
    p = dict(params or {})
    p.update(kw)
    p["center"] = tuple(float(c) for c in p.get("center", (0.0, 0.0)))
    coef = None
    if kind == "circle":
        if not p.get("radius", 0) > 0:
            raise GeometryError(f"circle radius must be > 0, got {p.get('radius')}")
        p["radius"] = float(p["radius"])
    elif kind == "ellipse":
        ab = p.get("semi_axes")
        if ab is None and "a" in p:
            ab = (p.pop("a"), p.pop("b"))
        if ab is None or min(ab) <= 0:
            raise GeometryError(f"ellipse semi-axes must be > 0, got {ab}")
        p["semi_axes"] = (float(ab[0]), float(ab[1]))
    elif kind == "kite":
        p.setdefault("size", 1.0)
        p.setdefault("a", 0.65)
        p.setdefault("b", 1.5)
        p.setdefault("c", 0.0)
        if p["size"] <= 0 or p["b"] <= 0:
            raise GeometryError(f"kite size and b must be > 0, got {p}")
    elif kind == "trig":
        cc = np.asarray(p.get("cos", [1.0]), dtype=float)
        ss = np.asarray(p.get("sin", np.zeros_like(cc)), dtype=float)
        k = max(len(cc), len(ss))
        cc = np.pad(cc, (0, k - len(cc)))
        ss = np.pad(ss, (0, k - len(ss)))
        ss[0] = 0.0
        p["cos"], p["sin"] = tuple(cc), tuple(ss)
        coef = (cc, ss)
        t = 2 * np.pi * np.arange(_CHECK_SAMPLES) / _CHECK_SAMPLES
        if np.min(_trig_eval(cc, ss, t)) <= 0:
            raise GeometryError("trig radial function must stay positive")
    else:
        raise GeometryError(f"unknown curve kind {kind!r}")
    curve = ClosedCurve(kind, p, 1.0, (0.0, 0.0), coef)
    _check_curve(curve)
    return curve


def smoothed_square(half=UNIT_CELL_HALF, exponent=14, center=(0.0, 0.0), tol=1e-15):
    """Analytic rounded square |x|^p + |y|^p = half^p as a radial trig curve.

    The radial function is expanded in Fourier modes and truncated once
    the coefficients fall below ``tol`` relative.  With p = 14 the radius
    of curvature on the diagonal is sqrt(2) half 2^(-1/p) / (p - 1), about
    0.052 for the unit cell.
    """
    if exponent % 2:
        raise GeometryError("exponent must be even for an analytic curve")
    m = 8192
    t = 2 * np.pi * np.arange(m) / m
    rho = half * (np.cos(t) ** exponent + np.sin(t) ** exponent) ** (-1.0 / exponent)
    f = np.fft.rfft(rho) / m
    cc = 2 * f.real
    ss = -2 * f.imag
    cc[0] /= 2
    mag = np.hypot(cc, ss)
    keep = np.nonzero(mag > tol * mag[0])[0].max() + 1
    return make_curve("trig", center=center, cos=cc[:keep], sin=ss[:keep])


@dataclass(frozen=True)
class BoundaryMesh:
    """Equispaced Nystrom nodes on one or more closed curves.

    Arrays are concatenated over components; ``offsets[i]:offsets[i+1]``
    selects component i.  Vector unknowns are stored node-major, so DOF
    2*j + c is coordinate c at node j.
    """

    curves: tuple
    sizes: tuple
    points: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    speed: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    param: np.ndarray
    comp: np.ndarray
    offsets: np.ndarray
    tag: str = "mesh"

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def ndof(self):
        return 2 * len(self.points)

    @property
    def n_components(self):
        return len(self.sizes)

    def component(self, i):
        return slice(self.offsets[i], self.offsets[i + 1])

    def dof_slice(self, i):
        return slice(2 * self.offsets[i], 2 * self.offsets[i + 1])

    def lengths(self):
        return np.array([self.weights[self.component(i)].sum() for i in range(self.n_components)])

    def centroids(self):
        # arclength-weighted centroid per component
        out = []
        for i in range(self.n_components):
            s = self.component(i)
            w = self.weights[s]
            out.append((self.points[s] * w[:, None]).sum(0) / w.sum())
        return np.array(out)

    def dof_weights(self):
        return np.repeat(self.weights, 2)


def mesh_curve(curve: ClosedCurve, N: int, tag="mesh") -> BoundaryMesh:
    if int(N) != N or N % 2:
        raise GeometryError(f"node count must be even, got {N}")
    if N < 16:
        raise GeometryError(f"node count must be >= 16, got {N}")
    N = int(N)
    t = 2 * np.pi * np.arange(N) / N
    d1 = curve.d1(t)
    sp = np.linalg.norm(d1, axis=-1)
    nrm = np.stack([d1[:, 1], -d1[:, 0]], -1) / sp[:, None]
    return BoundaryMesh(
        curves=(curve,), sizes=(N,), points=curve.position(t), d1=d1,
        d2=curve.d2(t), speed=sp, normals=nrm, weights=2 * np.pi * sp / N,
        param=t, comp=np.zeros(N, dtype=int), offsets=np.array([0, N]), tag=tag)


def merge_meshes(meshes, tag="mesh") -> BoundaryMesh:
    meshes = list(meshes)
    sizes = tuple(itertools.chain.from_iterable(m.sizes for m in meshes))
    comp = np.concatenate([np.repeat(np.arange(len(sizes)), sizes)]) if sizes else np.zeros(0, int)
    cat = lambda name: np.concatenate([getattr(m, name) for m in meshes])
    return BoundaryMesh(
        curves=tuple(itertools.chain.from_iterable(m.curves for m in meshes)),
        sizes=sizes, points=cat("points"), d1=cat("d1"), d2=cat("d2"),
        speed=cat("speed"), normals=cat("normals"), weights=cat("weights"),
        param=cat("param"), comp=comp, offsets=np.concatenate([[0], np.cumsum(sizes)]),
        tag=tag)


@dataclass(frozen=True)
class InclusionArray:
    outer: ClosedCurve
    omega: ClosedCurve
    eps: float
    lattice: tuple
    outer_mesh: BoundaryMesh
    incl_mesh: BoundaryMesh
    N_incl: int
    N_outer: int

    @property
    def n_inclusions(self):
        return len(self.lattice)


def _cell_probe(n, eps, half=UNIT_CELL_HALF):
    # four corners and four edge midpoints of the closed cell eps*(n + Y)
    offs = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1], [0, -1], [1, 0], [0, 1], [-1, 0]], float)
    return eps * (np.asarray(n, float)[None] + half * offs)


def lattice_cells(outer: ClosedCurve, eps: float):
    """All n in Z^2 whose closed cell eps*(n + Y) lies inside ``outer``."""
    t = 2 * np.pi * np.arange(2048) / 2048
    x = outer.position(t)
    lo = np.floor(x.min(0) / eps) - 1
    hi = np.ceil(x.max(0) / eps) + 1
    cand = [(i, j) for i in range(int(lo[0]), int(hi[0]) + 1)
            for j in range(int(lo[1]), int(hi[1]) + 1)]
    if not cand:
        return []
    probes = np.concatenate([_cell_probe(n, eps) for n in cand])
    inside = outer.contains(probes).reshape(len(cand), 8).all(axis=1)
    return [c for c, ok in zip(cand, inside) if ok]


def build_array(outer: ClosedCurve, omega: ClosedCurve, eps: float,
                N_incl: int, N_outer: int) -> InclusionArray:
    if not eps > 0:
        raise GeometryError(f"eps must be positive, got {eps}")
    t = 2 * np.pi * np.arange(_CHECK_SAMPLES) / _CHECK_SAMPLES
    w = omega.position(t)
    margin = UNIT_CELL_HALF - np.abs(w).max()
    if margin <= 0:
        raise GeometryError(f"omega must lie inside Y = (-1/2,1/2)^2 with margin, got {margin:.3e}")
    cells = lattice_cells(outer, eps)
    if not cells:
        raise GeometryError(f"no cells fit: no closed cell of size {eps} lies inside the outer curve")
    base = mesh_curve(omega, N_incl)
    meshes = []
    for n in cells:
        c = omega.transformed(eps, (eps * n[0], eps * n[1]))
        m = mesh_curve(c, N_incl)
        # nodes exactly eps * omega-nodes + eps * n
        pts = eps * base.points + eps * np.asarray(n, float)
        m = BoundaryMesh(m.curves, m.sizes, pts, eps * base.d1, eps * base.d2,
                         eps * base.speed, base.normals.copy(), eps * base.weights,
                         base.param.copy(), m.comp, m.offsets)
        meshes.append(m)
    incl = merge_meshes(meshes, tag="inclusions")
    if not outer.contains(incl.points).all():
        raise GeometryError("inclusion nodes fall outside the outer curve")
    return InclusionArray(outer, omega, float(eps), tuple(cells),
                          mesh_curve(outer, N_outer, tag="outer"), incl, N_incl, N_outer)


def single_inclusion(outer: ClosedCurve, omega: ClosedCurve, N_incl: int,
                     N_outer: int) -> InclusionArray:
    """One inclusion ``omega`` (unscaled, not tied to a lattice cell) inside ``outer``."""
    incl = mesh_curve(omega, N_incl, tag="inclusions")
    if not outer.contains(incl.points).all():
        raise GeometryError("inclusion is not inside the outer curve")
    return InclusionArray(outer, omega, 1.0, ((0, 0),),
                          mesh_curve(outer, N_outer, tag="outer"), incl, N_incl, N_outer)
