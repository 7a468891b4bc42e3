import math
import warnings

import numpy as np
import pytest
from sklearn.base import clone

from gpzkf.filters import (
    GPEKF,
    GPZKF,
    DomainError,
    EkfState,
    Ellipsoid,
    SystemSpec,
    Theorem2Flags,
    ZkfOptions,
    ZkfState,
    clip_to_box,
    finite_difference_jacobian,
    gpekf_step,
    theorem2_mode,
    theorem2_options,
    zkf_correct,
    zkf_measure,
    zkf_predict,
    zkf_step,
)
from gpzkf.gpcore import GPModel, LipschitzConstants, SEKernel, estimate_lipschitz
from gpzkf.uncertainty import NoiseSpec, noise_box
from gpzkf.zonogeom import Box, Strip, Zonotope, affine_map, contains_points, point, zonotope_interval_hull

from oracles import corner_points, hull_contains, kalman_update

U0 = np.zeros(1)
HUGE = Box.zero_centered([1e6, 1e6])


def prior_gp(n_in, n_out, var=1.0, ls=1.0):
    return GPModel(SEKernel(var, ls)).fit(np.zeros((0, n_in)), np.zeros((0, n_out)))


def make_system(gp_g, gp_h, f=None, jac=None, nx=2, ny=2, std_w=0.05, std_v=0.05, T=15, state_box=HUGE, hess=None):
    f = f or (lambda x, u: np.asarray(x, dtype=float))
    return SystemSpec(
        nx, 1, ny, f, gp_g, gp_h,
        NoiseSpec(std_w, nx, T, 0.05), NoiseSpec(std_v, ny, T, 0.05),
        control_domain=Box([0.0], [1.0]), state_domain=state_box,
        f_jacobian=jac, f_hessian_bound=np.zeros(nx) if hess is None else hess,
    )


A2 = np.array([[1.0, 0.1], [-0.05, 0.95]])


def g_true(X):
    return 0.1 * np.column_stack([np.sin(X[:, 0]), np.cos(X[:, 1]) - 1.0])


def h_true(X):
    return np.column_stack([np.sin(X[:, 0]) + 0.5 * X[:, 1], X[:, 1] - 0.2 * X[:, 0] ** 2])


def learned_system(n=80, seed=0, **kw):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.5, 1.5, (n, 2))
    Z = np.column_stack([X, np.zeros(n)])
    gp_g = GPModel(SEKernel(0.05, [1.0, 1.0, 1.0]), noise_std=0.01).fit(Z, g_true(X) + 0.01 * rng.normal(size=(n, 2)))
    gp_h = GPModel(SEKernel(1.0, [1.0, 1.0, 1.0]), noise_std=0.05).fit(Z, h_true(X) + 0.05 * rng.normal(size=(n, 2)))
    return make_system(gp_g, gp_h, f=lambda x, u: A2 @ x, jac=lambda x, u: A2, **kw)


@pytest.fixture(scope="module")
def system2():
    return learned_system(state_box=Box.zero_centered([4.0, 4.0]))


def simulate(sys, x0, T, rng):
    """A rollout of the system the GPs were trained on."""
    xs, ys = [np.asarray(x0, float)], [None]
    for _ in range(T):
        x = xs[-1]
        xn = A2 @ x + g_true(x[None])[0] + rng.normal(0, sys.noise_w.std, 2)
        xs.append(xn)
        ys.append(h_true(xn[None])[0] + rng.normal(0, sys.noise_v.std, 2))
    return np.array(xs), ys


def zero_state(X0):
    return ZkfState(X0, 0, LipschitzConstants(), LipschitzConstants())


# predict


def test_predict_prior_point_example():
    sf2, beta = 0.3, 2.0
    sys = make_system(prior_gp(3, 2, sf2), prior_gp(3, 2))
    opts = ZkfOptions(beta_g=beta)
    Xbar = zkf_predict(zero_state(point([0.4, -0.7])), sys, U0, opts)
    hull = zonotope_interval_hull(Xbar)
    rW = noise_box(sys.noise_w).radius
    np.testing.assert_allclose(hull.center, [0.4, -0.7], atol=1e-14)
    np.testing.assert_allclose(hull.radius, beta * math.sqrt(sf2) + rW, rtol=1e-12)


def test_predict_dense_data_limit():
    A = np.array([[0.9, 0.2], [-0.1, 1.0]])
    g1, g2 = np.meshgrid(np.linspace(-2, 2, 21), np.linspace(-2, 2, 21))
    Z = np.column_stack([g1.ravel(), g2.ravel(), np.zeros(g1.size)])
    gp_g = GPModel(SEKernel(1.0, [1.0, 1.0, 1.0]), noise_std=1e-5).fit(Z, np.zeros((len(Z), 2)))
    sys = make_system(gp_g, prior_gp(3, 2), f=lambda x, u: A @ x, jac=lambda x, u: A)
    X = Zonotope([0.2, -0.1], [[0.1, 0.05], [0.0, 0.1]])
    Xbar = zkf_predict(zero_state(X), sys, U0, ZkfOptions(linearization_errors=False))
    ref = affine_map(X, A)
    got, want = zonotope_interval_hull(Xbar), zonotope_interval_hull(ref)
    rW = noise_box(sys.noise_w).radius
    np.testing.assert_allclose(got.center, want.center, atol=1e-9)
    excess = got.radius - want.radius - rW
    assert np.all(excess >= -1e-12) and np.all(excess <= 1e-3)


def test_predict_containment_monte_carlo():
    """g from the prior, x uniform in X, w truncated to W: d(x, u, w) lands in X-bar."""
    rng = np.random.default_rng(3)
    kern = SEKernel(0.04, [0.8, 1.0])
    noise, dg = 0.02, 0.05
    X = Zonotope([0.2], [[0.15]])
    spec_w = NoiseSpec(0.03, 1, 15, 0.05)
    rW = noise_box(spec_w).radius
    n_fn, per_fn = 200, 5
    hits = 0
    for _ in range(n_fn):
        Ztr = np.column_stack([rng.uniform(-1, 1, 20), np.zeros(20)])
        P = X.sample(per_fn, rng)
        allz = np.vstack([Ztr, np.column_stack([P, np.zeros(per_fn)])])
        f = np.linalg.cholesky(kern(allz, allz) + 1e-10 * np.eye(len(allz))) @ rng.normal(size=len(allz))
        gp = GPModel(kern, noise_std=noise, delta=dg).fit(Ztr, f[:20, None] + noise * rng.normal(size=(20, 1)))
        sys = SystemSpec(1, 1, 1, lambda x, u: 0.9 * x, gp, prior_gp(2, 1), spec_w, NoiseSpec(0.1, 1, 15, 0.05),
                         Box([0.0], [1.0]), Box([0.0], [5.0]), lambda x, u: np.array([[0.9]]), np.zeros(1))
        lips = estimate_lipschitz(gp, Box([0, 0], [1, 0]), 100, state_dims=[0], seed=1)
        Xbar = zkf_predict(ZkfState(X, 0, lips, LipschitzConstants()), sys, U0)
        w = rng.normal(0, spec_w.std, per_fn)
        while np.any(np.abs(w) > rW[0]):
            bad = np.abs(w) > rW[0]
            w[bad] = rng.normal(0, spec_w.std, int(bad.sum()))
        nxt = (0.9 * P[:, 0] + f[20:] + w)[:, None]
        hits += bool(np.all(contains_points(Xbar, nxt)))
    assert hits / n_fn >= 1 - dg


def test_predict_reduces_order():
    sys = make_system(prior_gp(3, 2), prior_gp(3, 2))
    X = Zonotope([0, 0], np.random.default_rng(0).normal(size=(2, 25)))
    Xbar = zkf_predict(zero_state(X), sys, U0, ZkfOptions(max_generators=6, beta_g=1.0))
    assert Xbar.n_generators <= 6
    Xfull = zkf_predict(zero_state(X), sys, U0, ZkfOptions(max_generators=0, beta_g=1.0))
    assert Xfull.n_generators == 27
    np.testing.assert_allclose(zonotope_interval_hull(Xbar).radius, zonotope_interval_hull(Xfull).radius)


def test_predict_control_outside_domain():
    sys = make_system(prior_gp(3, 2), prior_gp(3, 2))
    with pytest.raises(DomainError):
        zkf_predict(zero_state(point([0, 0])), sys, np.array([1.5]))


def test_predict_estimate_outside_state_domain():
    sys = make_system(prior_gp(3, 2), prior_gp(3, 2), state_box=Box.zero_centered([1.0, 1.0]))
    with pytest.raises(DomainError):
        zkf_predict(zero_state(Zonotope([0.5, 0], np.eye(2))), sys, U0)


# measure


def test_measure_consistent_measurement():
    g = np.linspace(-2, 2, 25)
    g1, g2 = np.meshgrid(g, g)
    X = np.column_stack([g1.ravel(), g2.ravel()])
    Z = np.column_stack([X, np.zeros(len(X))])
    gp_h = GPModel(SEKernel(4.0, [1.5, 1.5, 1.0]), noise_std=1e-4).fit(Z, X)
    sys = make_system(prior_gp(3, 2), gp_h)
    Xbar = Zonotope([0.3, -0.4], 0.1 * np.eye(2))
    S = zkf_measure(Xbar, sys, U0, Xbar.center, LipschitzConstants())
    np.testing.assert_allclose(S.map @ Xbar.center - S.offset, 0.0, atol=1e-3)
    np.testing.assert_allclose(S.map, np.eye(2), atol=1e-3)
    assert S.contains(Xbar.center[None])[0]


def test_measure_prior_is_uninformative():
    sys = make_system(prior_gp(3, 2), prior_gp(3, 2))
    Xbar = Zonotope([0.3, -0.4], np.eye(2))
    S = zkf_measure(Xbar, sys, U0, np.array([0.2, 0.1]), LipschitzConstants(), ZkfOptions(beta_h=2.0))
    assert np.all(S.map == 0)
    # 0 lies within the bound, so every x satisfies the strip
    assert np.all(np.abs(S.offset + S.bound.center) <= S.bound.radius)
    assert np.all(S.contains(np.random.default_rng(0).normal(0, 100, (50, 2))))


def test_measure_control_outside_domain():
    sys = make_system(prior_gp(3, 2), prior_gp(3, 2))
    with pytest.raises(DomainError):
        zkf_measure(point([0, 0]), sys, np.array([-2.0]), np.zeros(2), LipschitzConstants())


def test_measure_monte_carlo():
    """h from the prior, x in X-bar, v truncated to V: x satisfies the strip."""
    rng = np.random.default_rng(5)
    kern = SEKernel(1.0, [0.7, 1.0])
    noise, dh = 0.05, 0.05
    spec_v = NoiseSpec(0.05, 1, 15, 0.05)
    rV = noise_box(spec_v).radius[0]
    Xbar = Zonotope([0.1], [[0.2]])
    n_fn, per_fn, hits = 200, 5, 0
    for _ in range(n_fn):
        Ztr = np.column_stack([rng.uniform(-1, 1, 25), np.zeros(25)])
        P = Xbar.sample(per_fn, rng)
        allz = np.vstack([Ztr, np.column_stack([P, np.zeros(per_fn)])])
        h = np.linalg.cholesky(kern(allz, allz) + 1e-10 * np.eye(len(allz))) @ rng.normal(size=len(allz))
        gp = GPModel(kern, noise_std=noise, delta=dh).fit(Ztr, h[:25, None] + noise * rng.normal(size=(25, 1)))
        sys = SystemSpec(1, 1, 1, lambda x, u: x, prior_gp(2, 1), gp, NoiseSpec(0.1, 1, 15, 0.05), spec_v,
                         Box([0.0], [1.0]), Box([0.0], [5.0]), None, np.zeros(1))
        lips = estimate_lipschitz(gp, Box([0, 0], [1, 0]), 100, state_dims=[0], seed=2)
        ok = True
        for j in range(per_fn):
            v = rng.normal(0, spec_v.std)
            while abs(v) > rV:
                v = rng.normal(0, spec_v.std)
            S = zkf_measure(Xbar, sys, U0, np.array([h[25 + j] + v]), lips)
            ok &= bool(S.contains(P[j : j + 1])[0])
        hits += ok
    assert hits / n_fn >= 1 - dh - spec_v.delta


# correct


def test_correct_uninformative_strip():
    Xbar = Zonotope([0.1, 0.2], [[1.0, 0.3], [0.2, 0.8]])
    S = Strip(np.eye(2), [0.0, 0.0], Box.zero_centered([1e12, 1e12]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        Xhat, _ = zkf_correct(Xbar, S, Box.zero_centered([50.0, 50.0]))
    np.testing.assert_allclose(Xhat.center, Xbar.center, atol=1e-9)
    np.testing.assert_allclose(Xhat.generators[:, :2], Xbar.generators, atol=1e-9)
    np.testing.assert_allclose(zonotope_interval_hull(Xhat).radius, zonotope_interval_hull(Xbar).radius, atol=1e-9)


def test_correct_hand_example():
    Xbar = Zonotope([0.0, 0.0], np.eye(2))
    S = Strip([[1.0, 0.0]], [0.0], Box([0.0], [0.1]))
    Xhat, lam = zkf_correct(Xbar, S, Box.zero_centered([1e6, 1e6]))
    k = 1.0 / 1.01
    np.testing.assert_allclose(lam, [[k], [0.0]])
    np.testing.assert_allclose(Xhat.generators, [[1 - k, 0.0, 0.1 * k], [0.0, 1.0, 0.0]])
    np.testing.assert_allclose(Xhat.center, [0.0, 0.0])


@pytest.mark.parametrize("seed", range(8))
def test_correct_soundness_by_rejection_sampling(seed):
    rng = np.random.default_rng(seed)
    Xbar = Zonotope(rng.normal(size=2), rng.normal(size=(2, 4)))
    c = rng.normal(size=(2, 2))
    S = Strip(c, c @ Xbar.center + rng.normal(0, 0.5, 2), Box([0.0, 0.0], rng.uniform(0.3, 1.5, 2)))
    hull = zonotope_interval_hull(Xbar)
    box = Box(hull.center + 0.3 * hull.radius * rng.uniform(-1, 1, 2), 0.8 * hull.radius)
    Xhat, _ = zkf_correct(Xbar, S, box)
    P = Xbar.sample(20000, rng)
    P = P[S.contains(P) & np.all(np.abs(P - box.center) <= box.radius, axis=1)]
    assert len(P) > 50
    inside = hull_contains(corner_points(Xhat), P, tol=1e-9)
    assert inside is not None and inside.all()


def test_correct_never_fattens_hull():
    rng = np.random.default_rng(11)
    for _ in range(50):
        Xbar = Zonotope(rng.normal(size=3), rng.normal(size=(3, 5)))
        J = rng.normal(size=(4, 3)) * rng.uniform(0, 3, (4, 1))
        S = Strip(J, J @ Xbar.center + rng.normal(size=4), Box.zero_centered(rng.uniform(1e-3, 5, 4)))
        Xhat, _ = zkf_correct(Xbar, S, Box.zero_centered([1e3] * 3))
        assert np.all(zonotope_interval_hull(Xhat).radius <= zonotope_interval_hull(Xbar).radius * (1 + 1e-10))
        assert np.linalg.norm(Xhat.generators) <= np.linalg.norm(Xbar.generators) * (1 + 1e-10)


def test_clip_to_box_keeps_points_and_stays_inside():
    rng = np.random.default_rng(2)
    Z = Zonotope([0.0, 0.0], [[1.0, 0.5], [0.2, 1.0]])
    box = Box([0.5, 0.0], [0.8, 2.0])
    C = clip_to_box(Z, box)
    assert box.contains_box(zonotope_interval_hull(C))
    P = Z.sample(5000, rng)
    P = P[np.all(np.abs(P - box.center) <= box.radius, axis=1)]
    assert contains_points(C, P).all()
    assert clip_to_box(Z, Box.zero_centered([10, 10])) is Z


# steps and relaxations


def ekf_1d_hand(sys, mu0, P0, y):
    """One step of the scalar filter written out from GP posterior quantities."""
    z0 = np.array([mu0, 0.0])
    a = 0.8 + sys.gp_dynamics.mean_jacobian(z0)[0, 0]
    mg, sg = sys.gp_dynamics.posterior(z0)
    mbar = 0.8 * mu0 + mg[0]
    Pbar = a * a * P0 + sg[0] ** 2 + sys.noise_w.std**2
    z1 = np.array([mbar, 0.0])
    c = sys.gp_observation.mean_jacobian(z1)[0, 0]
    mh, sh = sys.gp_observation.posterior(z1)
    R = sh[0] ** 2 + sys.noise_v.std**2
    k = Pbar * c / (c * c * Pbar + R)
    return mbar + k * (y - mh[0]), (1 - k * c) ** 2 * Pbar + k * k * R, k


def scalar_system(std_w=0.1, std_v=0.2):
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, 40)
    Z = np.column_stack([x, np.zeros(40)])
    gp_g = GPModel(SEKernel(0.1, 1.0), noise_std=0.05).fit(Z, (0.1 * np.sin(x))[:, None])
    gp_h = GPModel(SEKernel(1.0, 1.0), noise_std=0.05).fit(Z, (x + 0.3 * x**2)[:, None])
    return SystemSpec(1, 1, 1, lambda x, u: 0.8 * x, gp_g, gp_h, NoiseSpec(std_w, 1, 15, 0.05), NoiseSpec(std_v, 1, 15, 0.05),
                      Box([0.0], [1.0]), Box([0.0], [10.0]), lambda x, u: np.array([[0.8]]), np.zeros(1))


def test_theorem2_scalar_hand_gain():
    sys = scalar_system()
    step = theorem2_mode(sys)
    X0 = Zonotope([0.5], [[0.3]])
    y = np.array([0.9])
    z = step(zero_state(X0), u_prev=U0, u_now=U0, y=y)
    m, P, k = ekf_1d_hand(sys, 0.5, 0.09, 0.9)
    np.testing.assert_allclose(z.last_gain, [[k]], rtol=1e-12)
    np.testing.assert_allclose(z.estimate.center, [m], rtol=1e-12)
    np.testing.assert_allclose(z.estimate.covariation(), [[P]], rtol=1e-12)
    e = gpekf_step(EkfState(np.array([0.5]), np.array([[0.09]])), sys, U0, U0, y)
    np.testing.assert_allclose(e.last_gain, [[k]], rtol=1e-12)
    np.testing.assert_allclose(e.cov, [[P]], rtol=1e-12)


def test_theorem2_equivalence_multistep(system2):
    rng = np.random.default_rng(9)
    xs, ys = simulate(system2, [0.3, -0.2], 15, rng)
    X0 = Zonotope([0.3, -0.2], [[0.1, 0.02], [0.0, 0.1]])
    step = theorem2_mode(system2)
    z, e = zero_state(X0), EkfState(X0.center, X0.covariation())
    for t in range(1, 16):
        z = step(z, u_prev=U0, u_now=U0, y=ys[t])
        e = gpekf_step(e, system2, U0, U0, ys[t])
        assert np.max(np.abs(z.estimate.center - e.mean)) <= 1e-8
        assert np.linalg.norm(z.estimate.covariation() - e.cov) <= 1e-8
        assert np.linalg.norm(z.last_gain - e.last_gain) <= 1e-8


def test_theorem2_options_literal_variant():
    opts = theorem2_options(Theorem2Flags(noise_as_one_sigma=False))
    assert opts.noise_bounds == "none" and opts.beta_g == 1.0 and not opts.linearization_errors
    assert not opts.clip_state and opts.generator_cap(2) is None and not opts.gain_guard
    assert theorem2_options().noise_bounds == "one_sigma"
    with pytest.raises(ValueError):
        ZkfOptions(noise_bounds="bogus")


def test_zkf_hull_dominates_ekf_one_sigma(system2):
    rng = np.random.default_rng(21)
    for trial in range(3):
        xs, ys = simulate(system2, rng.uniform(-0.5, 0.5, 2), 15, rng)
        X0 = Zonotope(xs[0], 0.1 * np.eye(2))
        zkf = GPZKF(system2, seed=0).init(X0)
        ekf = GPEKF(system2).init(X0)
        for t in range(1, 16):
            rz = zkf.step(U0, U0, ys[t])
            re = ekf.step(U0, U0, ys[t])
            sd = np.sqrt(np.diag(re.state.cov))
            assert np.all(zonotope_interval_hull(rz.set_descriptor).radius >= sd)


def test_zkf_step_records_intermediates_and_monotone_hull(system2):
    rng = np.random.default_rng(1)
    xs, ys = simulate(system2, [0.2, 0.1], 15, rng)
    zkf = GPZKF(system2).init(Zonotope(xs[0], 0.1 * np.eye(2)))
    for t in range(1, 16):
        s = zkf.step(U0, U0, ys[t]).state
        assert s.time == t
        assert set(s.timing) == {"predict", "measure", "correct", "total"}
        assert isinstance(s.last_strip, Strip) and s.last_gain.shape == (2, 2)
        assert s.estimate.n_generators <= 20
        assert np.all(zonotope_interval_hull(s.estimate).radius <= zonotope_interval_hull(s.last_prediction).radius + 1e-12)
        assert contains_points(s.estimate, xs[t : t + 1])[0]


def test_zkf_deterministic(system2):
    ys = simulate(system2, [0.2, 0.1], 15, np.random.default_rng(1))[1]
    runs = []
    for _ in range(2):
        zkf = GPZKF(system2, seed=3).init(Zonotope([0.2, 0.1], 0.1 * np.eye(2)))
        runs.append([zkf.step(U0, U0, y).state.estimate for y in ys[1:]])
    for a, b in zip(*runs):
        assert np.array_equal(a.center, b.center) and np.array_equal(a.generators, b.generators)


# GP-EKF


def test_gpekf_matches_linear_kalman_oracle():
    a, c = 0.9, 2.0
    x = np.linspace(-3, 3, 61)
    Z = np.column_stack([x, np.zeros_like(x)])
    gp_g = GPModel(SEKernel(1.0, 1.5), noise_std=1e-4).fit(Z, np.zeros((len(x), 1)))
    gp_h = GPModel(SEKernel(10.0, 1.5), noise_std=1e-4).fit(Z, (c * x)[:, None])
    sys = SystemSpec(1, 1, 1, lambda x, u: a * x, gp_g, gp_h, NoiseSpec(0.1, 1, 15, 0.05), NoiseSpec(0.2, 1, 15, 0.05),
                     Box([0.0], [1.0]), Box([0.0], [10.0]), lambda x, u: np.array([[a]]), np.zeros(1))
    m, P = np.array([0.2]), np.array([[0.25]])
    e = EkfState(m, P)
    rng = np.random.default_rng(0)
    for _ in range(10):
        y = rng.normal(0.3, 0.2, 1)
        e = gpekf_step(e, sys, U0, U0, y)
        mp, Pp = a * m, a * P * a + 0.01
        m, P, K = kalman_update(mp, Pp, np.array([[c]]), np.array([[0.04]]), y)
        np.testing.assert_allclose(e.mean, m, rtol=1e-3, atol=1e-4)
        np.testing.assert_allclose(e.cov, P, rtol=1e-3)
        np.testing.assert_allclose(e.last_gain, K, rtol=1e-3)


def test_gpekf_huge_measurement_noise_leaves_mean():
    base = scalar_system()
    sys = SystemSpec(1, 1, 1, base.f, base.gp_dynamics, base.gp_observation, base.noise_w, NoiseSpec(1e8, 1, 15, 0.05),
                     base.control_domain, base.state_domain, base.f_jacobian, base.f_hessian_bound)
    e0 = EkfState(np.array([0.5]), np.array([[0.1]]))
    e = gpekf_step(e0, sys, U0, U0, np.array([100.0]))
    mg, _ = sys.gp_dynamics.posterior([0.5, 0.0])
    assert abs(e.last_gain[0, 0]) < 1e-12
    np.testing.assert_allclose(e.mean, 0.8 * 0.5 + mg, atol=1e-9)


def test_gpekf_joseph_psd_over_many_steps(system2):
    rng = np.random.default_rng(0)
    e = EkfState(np.zeros(2), np.eye(2))
    for _ in range(1000):
        e = gpekf_step(e, system2, U0, U0, rng.normal(0, 1, 2))
        assert np.array_equal(e.cov, e.cov.T)
        assert np.min(np.linalg.eigvalsh(e.cov)) >= -1e-10


# estimator objects and system checks


def test_estimator_api(system2):
    zkf = GPZKF(system2, lipschitz_samples=50)
    params = zkf.get_params()
    assert {"system", "options", "lips_g", "lips_h", "lipschitz_samples", "seed"} <= set(params)
    assert clone(zkf).lipschitz_samples == 50
    ekf = GPEKF(system2, confidence=0.9).init(mean=[0.0, 0.0], cov=np.eye(2) * 0.01)
    rec = ekf.step(U0, U0, np.zeros(2))
    assert isinstance(rec.set_descriptor, Ellipsoid) and rec.step_time >= 0
    assert rec.set_descriptor.contains(rec.point_estimate)
    assert ekf.get_params()["confidence"] == 0.9


def test_ellipsoid_hull_radius():
    E = Ellipsoid(np.zeros(2), np.diag([4.0, 1.0]), 9.0)
    np.testing.assert_allclose(E.hull_radius(), [6.0, 3.0])
    assert E.contains([5.9, 0]) and not E.contains([6.1, 0])


def test_finite_difference_jacobian_fallback():
    f = lambda x, u: np.array([np.sin(x[0]) * x[1], x[0] ** 2])
    J = finite_difference_jacobian(f, np.array([0.3, 2.0]), U0)
    np.testing.assert_allclose(J, [[np.cos(0.3) * 2.0, np.sin(0.3)], [0.6, 0.0]], atol=1e-8)
    sys = make_system(prior_gp(3, 2), prior_gp(3, 2), f=f)
    np.testing.assert_allclose(sys.jac_f(np.array([0.3, 2.0]), U0), J)


def test_system_spec_rejects_inconsistent_dimensions():
    with pytest.raises(ValueError):
        make_system(prior_gp(3, 2), prior_gp(3, 3))
    with pytest.raises(ValueError):
        make_system(prior_gp(2, 2), prior_gp(3, 2))
    with pytest.raises(ValueError):
        SystemSpec(2, 1, 2, lambda x, u: x, prior_gp(3, 2), prior_gp(3, 2), NoiseSpec(1, 2, 15, 0.1), NoiseSpec(1, 2, 15, 0.1),
                   Box([0.0], [np.inf]), HUGE)
