import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from elastica_np.geometry import build_array, make_curve, single_inclusion
from elastica_np.kernels import KernelSpec, LamePair
from elastica_np.solvers import LoadSpec

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# background pair used by all experiments
PAIR = LamePair(2.0, 0.5)
STRAIN = np.diag([1.0, -1.0])
# milder than the classic kite (a = 0.65), which needs more than 64 nodes
TEST_KITE = dict(size=0.3, a=0.4, b=1.5)


def outer_circle(r=2.0):
    return make_curve("circle", center=(0.0, 0.0), radius=r)


def omega_circle(r=0.25):
    return make_curve("circle", center=(0.0, 0.0), radius=r)


def test_shapes():
    """Single-inclusion shapes used across suites."""
    return {
        "circle": make_curve("circle", center=(0.1, -0.2), radius=0.4),
        "ellipse": make_curve("ellipse", center=(-0.2, 0.1), semi_axes=(0.5, 0.3)),
        "kite": make_curve("kite", center=(0.1, 0.0), **TEST_KITE),
    }


test_shapes.__test__ = False


@pytest.fixture(scope="session")
def pair():
    return PAIR


@pytest.fixture(scope="session")
def load():
    return LoadSpec(STRAIN, PAIR)


@pytest.fixture(scope="session")
def array5():
    return build_array(outer_circle(), omega_circle(), 1.0, 64, 256)


@pytest.fixture(scope="session")
def single_circle():
    return single_inclusion(outer_circle(), omega_circle(), 64, 256)


@pytest.fixture(scope="session")
def geometries(array5):
    out = {k: single_inclusion(outer_circle(), c, 64, 256) for k, c in test_shapes().items()}
    out["array5"] = array5
    return out


def corrected(array, pair=PAIR, mode="neumann_corrected"):
    return KernelSpec("lame", pair=pair, mode=mode, outer=array.outer_mesh)


def stokes_corrected(array, mu=1.0):
    return KernelSpec("stokes", mu_prime=mu, mode="neumann_corrected", outer=array.outer_mesh)


def smooth_density(mesh, seed, modes=4):
    """Random trigonometric density per component: (callables, node values)."""
    rng = np.random.default_rng(seed)
    fns = []
    for _ in range(mesh.n_components):
        a, b = rng.normal(size=(2, modes + 1, 2)) / (1 + np.arange(modes + 1))[None, :, None]
        k = np.arange(modes + 1)
        fns.append(lambda s, a=a, b=b: (np.cos(k * s) @ a + np.sin(k * s) @ b))
    vals = np.concatenate([
        np.array([fns[c](t) for t in mesh.param[mesh.component(c)]]) for c in range(mesh.n_components)])
    return fns, vals


def jump_relation_error(mesh, spec, seed=0, nodes=((0, 0), (0, 11))):
    """Worst relative mismatch of extrapolated one-sided tractions vs (+-1/2 + K*) phi."""
    import oracles
    from elastica_np.potentials import _correction_sol, assemble_Kstar

    fns, vals = smooth_density(mesh, seed)
    phi = vals.ravel()
    Kphi = (assemble_Kstar(mesh, spec).matrix @ phi).reshape(-1, 2)
    if spec.family == "stokes":
        lam, mu = np.inf, spec.mu_prime
    else:
        lam, mu = spec.pair.lam, spec.pair.mu
    corr = None
    if spec.corrected:
        cs, sol = _correction_sol(mesh, spec)

        def corr(pt, n):
            return cs.traction(pt[None], n[None], mesh.points, mesh.weights, sol) @ phi

    scale = np.abs(np.abs(Kphi) + np.abs(vals)).max()
    err = 0.0
    for comp, node in nodes:
        i = mesh.component(comp).start + node
        dens = lambda s, c=comp: fns[c](s)
        for side in (1, -1):
            ext = oracles.extrapolated_traction(mesh, comp, node, dens, vals, lam, mu, side, corr)
            pred = side * 0.5 * vals[i] + Kphi[i]
            err = max(err, np.abs(ext - pred).max() / scale)
    return err
