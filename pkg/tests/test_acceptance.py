"""End-to-end behavioral gate for the region-finding library.

Each test covers one advertised guarantee with its tolerance stated next to
the assertion.  The update-rule reductions compare the matrix formulas
against hand-expanded 1-D and 2-D scalar forms; the integration and
gradient checks compare against an independent midpoint-rule oracle; the
recovery suites run the frozen landscape configurations and check the
recovered bounds against the analytic plateau.
"""

import time

import numpy as np
import pytest
from scipy.special import expit

from srf import (
    BetaOutOfRangeError,
    BuiltinSpec,
    CallableOracle,
    CornerGradients,
    CornerValues,
    Domain,
    OptimizerParams,
    Region,
    adversarial_wrapper,
    brute_force_integral,
    corner_matrix,
    corner_values,
    grow_region,
    make_builtin,
    naive_step,
    oirb_step,
    oirw_step,
    srvr,
    trapezoid_integral,
    trapgrad_step,
)

RNG_SEED = 20260826

BOX_LO, BOX_HI = 2.0, 6.0

PLATEAU_INITS = {
    1: [np.array([3.0]), np.array([4.0]), np.array([4.8]), np.array([5.5])],
    2: [
        np.array([3.0, 3.0]),
        np.array([4.0, 4.0]),
        np.array([4.8, 3.4]),
        np.array([5.5, 5.5]),
    ],
}


def step_box_oracle(n, domain, lo_level=0.1):
    return make_builtin(
        BuiltinSpec(
            kind="step_box",
            n=n,
            domain=domain,
            params={"box_lo": [BOX_LO] * n, "box_hi": [BOX_HI] * n,
                    "hi": 0.9, "lo": lo_level},
        )
    )


def smooth_plateau_oracle(n, domain, lo_level=0.1, sharpness=8.0):
    return make_builtin(
        BuiltinSpec(
            kind="smooth_plateau",
            n=n,
            domain=domain,
            params={"box_lo": [BOX_LO] * n, "box_hi": [BOX_HI] * n,
                    "hi": 0.9, "lo": lo_level, "sharpness": sharpness},
        )
    )


def random_instance(rng, n):
    a = rng.uniform(-2.0, 2.0, size=n)
    r = rng.uniform(0.1, 2.5, size=n)
    reg = Region(a, a + r)
    f_d = rng.uniform(0.05, 0.95, size=2**n)
    f_q = rng.uniform(0.05, 0.95, size=2**n)
    g = rng.uniform(-1.5, 1.5, size=(2**n, n))
    return reg, f_d, f_q, g


def explicit_naive(reg, f_d, lam):
    if reg.n == 1:
        r = float(reg.r[0])
        return np.array([f_d[0] - lam * r]), np.array([-f_d[1] + lam * r])
    r1, r2 = reg.r
    f00, f01, f10, f11 = f_d
    ga = np.array([
        (r2 / 2.0) * (f00 + f01) - lam * r1,
        (r1 / 2.0) * (f00 + f10) - lam * r2,
    ])
    gb = np.array([
        -(r2 / 2.0) * (f10 + f11) + lam * r1,
        -(r1 / 2.0) * (f01 + f11) + lam * r2,
    ])
    return ga, gb


def explicit_oirb(reg, f_d, f_q, alpha):
    half = alpha / 2.0
    if reg.n == 1:
        ga = 2.0 * f_d[0] - (1.0 + half) * f_q[0] - half * f_q[1]
        gb = -2.0 * f_d[1] + (1.0 + half) * f_q[1] + half * f_q[0]
        return np.array([ga]), np.array([gb])
    r1, r2 = reg.r
    f00, f01, f10, f11 = f_d
    q00, q01, q10, q11 = f_q
    scale = 1.0 + alpha
    ga = np.array([
        (r2 / 2.0) * (2.0 * (f00 + f01)
                      - scale * ((1.0 + half) * (q00 + q01) + half * (q10 + q11))),
        (r1 / 2.0) * (2.0 * (f00 + f10)
                      - scale * ((1.0 + half) * (q00 + q10) + half * (q01 + q11))),
    ])
    gb = np.array([
        (r2 / 2.0) * (-2.0 * (f10 + f11)
                      + scale * ((1.0 + half) * (q10 + q11) + half * (q00 + q01))),
        (r1 / 2.0) * (-2.0 * (f01 + f11)
                      + scale * ((1.0 + half) * (q01 + q11) + half * (q00 + q10))),
    ])
    return ga, gb


def explicit_oirw(reg, f_d, g, beta):
    if reg.n == 1:
        r = float(reg.r[0])
        ga = (beta / 2.0) * (r * g[0, 0] - f_d[1]) + (1.0 - beta / 2.0) * f_d[0]
        gb = (beta / 2.0) * (r * g[1, 0] + f_d[0]) - (1.0 - beta / 2.0) * f_d[1]
        return np.array([ga]), np.array([gb])
    r1, r2 = reg.r
    f00, f01, f10, f11 = f_d
    (g1_00, g2_00), (g1_01, g2_01), (g1_10, g2_10), (g1_11, g2_11) = g
    gamma = 2.0 - 3.0 * beta
    ga = np.array([
        (r2 / 4.0) * (gamma * (f00 + f01) - beta * (f10 + f11))
        + beta * (r1 * r2 / 4.0) * (g1_00 + g1_01)
        + beta * (r2**2 / 4.0) * (g2_00 - g2_01),
        (r1 / 4.0) * (gamma * (f00 + f10) - beta * (f01 + f11))
        + beta * (r1 * r2 / 4.0) * (g2_00 + g2_10)
        + beta * (r1**2 / 4.0) * (g1_00 - g1_10),
    ])
    gb = np.array([
        -(r2 / 4.0) * (gamma * (f10 + f11) - beta * (f00 + f01))
        + beta * (r1 * r2 / 4.0) * (g1_10 + g1_11)
        + beta * (r2**2 / 4.0) * (g2_11 - g2_10),
        -(r1 / 4.0) * (gamma * (f01 + f11) - beta * (f00 + f10))
        + beta * (r1 * r2 / 4.0) * (g2_01 + g2_11)
        + beta * (r1**2 / 4.0) * (g1_11 - g1_01),
    ])
    return ga, gb


def explicit_trapgrad(reg, f_d, g, lam):
    if reg.n == 1:
        r = float(reg.r[0])
        mean = (f_d[0] + f_d[1]) / 2.0
        ga = -(r / 2.0) * g[0, 0] + mean - lam * r
        gb = -(r / 2.0) * g[1, 0] - mean + lam * r
        return np.array([ga]), np.array([gb])
    r1, r2 = reg.r
    (g1_00, g2_00), (g1_01, g2_01), (g1_10, g2_10), (g1_11, g2_11) = g
    total = float(np.sum(f_d))
    ga = np.array([
        -(r1 * r2 / 4.0) * (g1_00 + g1_01) + (r2 / 4.0) * total - lam * r1,
        -(r1 * r2 / 4.0) * (g2_00 + g2_10) + (r1 / 4.0) * total - lam * r2,
    ])
    gb = np.array([
        -(r1 * r2 / 4.0) * (g1_10 + g1_11) - (r2 / 4.0) * total + lam * r1,
        -(r1 * r2 / 4.0) * (g2_01 + g2_11) - (r1 / 4.0) * total + lam * r2,
    ])
    return ga, gb


def hausdorff_to_plateau(reg):
    return max(
        float(np.abs(reg.a - BOX_LO).max()),
        float(np.abs(reg.b - BOX_HI).max()),
    )


@pytest.fixture(scope="module")
def plateau_runs():
    """The frozen plateau-recovery suite: 24 runs at reference settings."""
    params = OptimizerParams()  # eta 0.1, alpha 0.05, beta 0.0009, lam 0.1, T 800
    runs = {}
    start = time.perf_counter()
    for n in (1, 2):
        oir_domain = Domain([1.85] * n, [6.15] * n)
        naive_domain = Domain([2.05] * n, [5.95] * n)
        step_oir = step_box_oracle(n, oir_domain)
        smooth_oir = smooth_plateau_oracle(n, oir_domain)
        step_naive = step_box_oracle(n, naive_domain)
        for i, u0 in enumerate(PLATEAU_INITS[n]):
            runs[("oirb", n, i)] = grow_region(step_oir, u0, "oirb", params, oir_domain)
            runs[("oirw", n, i)] = grow_region(smooth_oir, u0, "oirw", params, oir_domain)
            runs[("naive", n, i)] = grow_region(
                step_naive, u0, "naive", params, naive_domain
            )
    runs["elapsed"] = time.perf_counter() - start
    return runs


def test_update_rules_reduce_to_explicit_scalar_forms():
    # tolerance: 1e-12 relative on 100 random instances per rule and
    # dimension; runtime under 1 s
    rng = np.random.default_rng(RNG_SEED)
    start = time.perf_counter()
    for n in (1, 2):
        for _ in range(100):
            reg, f_d, f_q, g = random_instance(rng, n)
            lam = rng.uniform(0.0, 0.5)
            alpha = rng.uniform(0.0, 0.2)
            beta = rng.uniform(0.0, 0.6 if n == 2 else 1.5)

            got_a, got_b = naive_step(CornerValues(f_d=f_d), reg, lam)
            want_a, want_b = explicit_naive(reg, f_d, lam)
            np.testing.assert_allclose(got_a, want_a, rtol=1e-12, atol=1e-13)
            np.testing.assert_allclose(got_b, want_b, rtol=1e-12, atol=1e-13)

            got_a, got_b = oirb_step(CornerValues(f_d=f_d, f_q=f_q), reg, alpha)
            want_a, want_b = explicit_oirb(reg, f_d, f_q, alpha)
            np.testing.assert_allclose(got_a, want_a, rtol=1e-12, atol=1e-13)
            np.testing.assert_allclose(got_b, want_b, rtol=1e-12, atol=1e-13)

            got_a, got_b = oirw_step(
                CornerValues(f_d=f_d), CornerGradients(g=g), reg, beta
            )
            want_a, want_b = explicit_oirw(reg, f_d, g, beta)
            np.testing.assert_allclose(got_a, want_a, rtol=1e-12, atol=1e-13)
            np.testing.assert_allclose(got_b, want_b, rtol=1e-12, atol=1e-13)

            got_a, got_b = trapgrad_step(
                CornerValues(f_d=f_d), CornerGradients(g=g), reg, lam
            )
            want_a, want_b = explicit_trapgrad(reg, f_d, g, lam)
            np.testing.assert_allclose(got_a, want_a, rtol=1e-12, atol=1e-13)
            np.testing.assert_allclose(got_b, want_b, rtol=1e-12, atol=1e-13)
    assert time.perf_counter() - start < 1.0


def test_trapezoid_exactness_and_error_envelope():
    # multilinear integrands: trapezoid equals the midpoint oracle at
    # 200 pts/dim within 1e-3 (both are exact); quadratic integrands:
    # error stays within L * (max r)^2 for sides up to 0.5
    dom = Domain(np.array([0.0, 0.0]), np.array([2.0, 2.0]))
    oracle = CallableOracle(
        2,
        dom,
        lambda pts: 0.1 + 0.05 * pts[:, 0] + 0.07 * pts[:, 1]
        + 0.02 * pts[:, 0] * pts[:, 1],
        None,
        "multilinear",
    )
    rng = np.random.default_rng(RNG_SEED + 1)
    for _ in range(10):
        a = rng.uniform(0.0, 1.0, size=2)
        reg = Region(a, a + rng.uniform(0.1, 0.9, size=2))
        vals = corner_values(oracle, corner_matrix(reg))
        trap = trapezoid_integral(vals, reg)
        brute = brute_force_integral(oracle, reg, 200)
        assert abs(trap - brute) <= 1e-3

    dom1 = Domain(np.array([0.01]), np.array([1.0]))
    square = CallableOracle(1, dom1, lambda pts: pts[:, 0] ** 2, None, "square")
    for _ in range(10):
        a = rng.uniform(0.01, 0.5)
        reg = Region(np.array([a]), np.array([a + rng.uniform(0.05, 0.5)]))
        vals = corner_values(square, corner_matrix(reg))
        trap = trapezoid_integral(vals, reg)
        exact = (reg.b[0] ** 3 - reg.a[0] ** 3) / 3.0
        lipschitz = 2.0 * float(reg.b[0])
        assert abs(trap - exact) <= lipschitz * float(reg.r.max()) ** 2


def test_bound_gradients_match_finite_differences():
    # naive rule with lam = 0 against central finite differences of the
    # midpoint-integral loss on smooth_plateau; 20 random regions with
    # sides <= 0.1; tolerance max(1e-3, L * (max r)^2) with L = 2.3
    dom = Domain(np.array([0.0, 0.0]), np.array([10.0, 10.0]))
    oracle = smooth_plateau_oracle(2, dom)
    rng = np.random.default_rng(RNG_SEED + 2)
    h = 1e-4
    pts = 200

    def loss(a, b):
        return -brute_force_integral(oracle, Region(a, b), pts)

    for _ in range(20):
        center = rng.uniform(1.2, 6.8, size=2)
        sides = rng.uniform(0.02, 0.1, size=2)
        reg = Region(center - sides / 2.0, center + sides / 2.0)
        vals = corner_values(oracle, corner_matrix(reg))
        grad_a, grad_b = naive_step(vals, reg, lam=0.0)
        tol = max(1e-3, 2.3 * float(reg.r.max()) ** 2)
        for k in range(2):
            bump = np.zeros(2)
            bump[k] = h
            fd_a = (loss(reg.a + bump, reg.b) - loss(reg.a - bump, reg.b)) / (2 * h)
            fd_b = (loss(reg.a, reg.b + bump) - loss(reg.a, reg.b - bump)) / (2 * h)
            assert abs(grad_a[k] - fd_a) <= tol
            assert abs(grad_b[k] - fd_b) <= tol


def test_adversarial_mode_equals_robust_run_on_complement():
    # final bounds within 1e-9 on both landscapes
    dom = Domain(np.array([0.0, 0.0]), np.array([10.0, 10.0]))
    params = OptimizerParams()

    f_step = step_box_oracle(2, dom)
    box_lo, box_hi = np.full(2, BOX_LO), np.full(2, BOX_HI)

    def inverse_step(pts):
        inside = np.all((pts >= box_lo) & (pts <= box_hi), axis=1)
        return np.where(inside, 0.1, 0.9)

    complement_step = CallableOracle(2, dom, inverse_step, None, "complement-step")
    u0 = np.array([8.0, 8.0])
    adv = grow_region(adversarial_wrapper(f_step), u0, "naive", params, dom)
    robust = grow_region(complement_step, u0, "naive", params, dom)
    assert np.abs(adv.final.a - robust.final.a).max() <= 1e-9
    assert np.abs(adv.final.b - robust.final.b).max() <= 1e-9

    trap_params = {
        "box_lo": [2.0, 2.0], "box_hi": [6.0, 6.0], "hi": 0.9, "lo": 0.1,
        "sharpness": 8.0, "trap_center": [4.0, 4.0], "trap_width": 0.3,
        "trap_depth": 0.7,
    }
    f_trap = make_builtin(
        BuiltinSpec(kind="trap_plateau", n=2, domain=dom, params=trap_params)
    )
    trap_center, trap_width, trap_depth = np.full(2, 4.0), 0.3, 0.7
    sharp = 8.0

    def inverse_trap(pts):
        rise = expit(sharp * (pts - box_lo))
        fall = expit(sharp * (box_hi - pts))
        plateau = 0.1 + 0.8 * np.prod(rise * fall, axis=1)
        d2 = ((pts - trap_center) ** 2).sum(axis=1)
        return 1.0 - (plateau - trap_depth * np.exp(-d2 / (2.0 * trap_width**2)))

    def inverse_trap_grad(pts):
        rise = expit(sharp * (pts - box_lo))
        fall = expit(sharp * (box_hi - pts))
        product = np.prod(rise * fall, axis=1)
        plateau_grad = 0.8 * product[:, None] * sharp * (fall - rise)
        diff = pts - trap_center
        envelope = np.exp(-(diff**2).sum(axis=1) / (2.0 * trap_width**2))
        return -(plateau_grad + trap_depth * envelope[:, None] * diff / trap_width**2)

    complement_trap = CallableOracle(
        2, dom, inverse_trap, inverse_trap_grad, "complement-trap"
    )
    u0 = np.array([4.0, 4.0])  # the trap pocket: high confidence for 1 - f
    adv = grow_region(adversarial_wrapper(f_trap), u0, "trapgrad", params, dom)
    robust = grow_region(complement_trap, u0, "trapgrad", params, dom)
    assert np.abs(adv.final.a - robust.final.a).max() <= 1e-9
    assert np.abs(adv.final.b - robust.final.b).max() <= 1e-9
    # the recovered adversarial region is the trap pocket, not the plateau
    assert np.all(adv.final.a > 3.0) and np.all(adv.final.b < 5.0)


def test_plateau_recovery(plateau_runs):
    # OIR_B and OIR_W within Hausdorff 0.2 of [2, 6]^n from every init;
    # naive strictly inside the plateau; full suite under 10 s
    for n in (1, 2):
        for i in range(len(PLATEAU_INITS[n])):
            for method in ("oirb", "oirw"):
                trace = plateau_runs[(method, n, i)]
                assert hausdorff_to_plateau(trace.final) <= 0.2, (method, n, i)
            naive = plateau_runs[("naive", n, i)]
            assert np.all(naive.final.a > BOX_LO), (n, i)
            assert np.all(naive.final.b < BOX_HI), (n, i)
    assert plateau_runs["elapsed"] < 10.0


def test_multi_init_convergence(plateau_runs):
    # OIR final bounds from the 4 inits agree pairwise within 2 * eta
    spread = 2.0 * 0.1
    for method in ("oirb", "oirw"):
        for n in (1, 2):
            finals = [
                plateau_runs[(method, n, i)].final
                for i in range(len(PLATEAU_INITS[n]))
            ]
            for first in finals:
                for second in finals:
                    assert np.abs(first.a - second.a).max() <= spread
                    assert np.abs(first.b - second.b).max() <= spread


def test_srvr_desk_analogue():
    # 4 inits x 3 methods on the [2, 6]^2 box in [0, 10]^2 yields
    # SRVR = 0.16 +/- 0.04; a whole-domain region yields exactly 1.0
    dom = Domain(np.array([0.0, 0.0]), np.array([10.0, 10.0]))
    params = OptimizerParams(eta=0.01)
    step = step_box_oracle(2, dom, lo_level=0.001)
    smooth = smooth_plateau_oracle(2, dom, lo_level=0.001, sharpness=32.0)
    volumes = []
    for method, oracle in (("naive", step), ("oirb", step), ("oirw", smooth)):
        for u0 in PLATEAU_INITS[2]:
            trace = grow_region(oracle, u0, method, params, dom)
            volumes.append(float(np.prod(trace.final.r)))
    ratio = srvr(volumes, dom)
    assert abs(ratio - 0.16) <= 0.04
    assert srvr([dom.volume], dom) == 1.0


def test_evaluation_accounting():
    # per step: forward exactly 2^n (naive, oirw, trapgrad) or 2^(n+1)
    # (oirb); backward exactly 2^n for white-box methods, 0 otherwise
    for n in (1, 2):
        dom = Domain([0.0] * n, [10.0] * n)
        oracle = smooth_plateau_oracle(n, dom)
        steps = 6
        params = OptimizerParams(steps=steps)
        u0 = np.full(n, 4.0)
        expected = {
            "naive": (steps * 2**n, 0),
            "oirb": (steps * 2 ** (n + 1), 0),
            "oirw": (steps * 2**n, steps * 2**n),
            "trapgrad": (steps * 2**n, steps * 2**n),
        }
        for method, (forward, backward) in expected.items():
            trace = grow_region(oracle, u0, method, params, dom)
            assert (trace.forward, trace.backward) == (forward, backward), (method, n)


def test_divergence_is_contained_by_the_domain():
    # naive with lam = 0 on a constant level grows monotonically, stops at
    # the domain walls, and the trace flags the clamping
    dom = Domain(np.array([0.0, 0.0]), np.array([10.0, 10.0]))
    oracle = make_builtin(
        BuiltinSpec(kind="constant", n=2, domain=dom, params={"level": 0.5})
    )
    params = OptimizerParams(lam=0.0, steps=300)
    trace = grow_region(oracle, np.array([5.0, 5.0]), "naive", params, dom)
    sides = np.array([rec.b - rec.a for rec in trace.steps])
    assert np.all(np.diff(sides, axis=0) >= -1e-12)
    np.testing.assert_array_equal(trace.final.a, dom.lo)
    np.testing.assert_array_equal(trace.final.b, dom.hi)
    assert any(rec.clamped for rec in trace.steps)


def test_beta_guard_rejects_before_any_evaluation():
    dom = Domain(np.array([0.0, 0.0]), np.array([10.0, 10.0]))
    calls = []

    def fn(pts):
        calls.append(pts.shape[0])
        return np.full(pts.shape[0], 0.5)

    def grad_fn(pts):
        calls.append(pts.shape[0])
        return np.zeros_like(pts)

    oracle = CallableOracle(2, dom, fn, grad_fn, "counting")
    for beta in (2.0 / 3.0, 0.7, 1.0):
        with pytest.raises(BetaOutOfRangeError):
            grow_region(
                oracle,
                np.array([5.0, 5.0]),
                "oirw",
                OptimizerParams(beta=beta, steps=1),
                dom,
            )
    assert calls == []
    ok = grow_region(
        oracle, np.array([5.0, 5.0]), "oirw",
        OptimizerParams(beta=0.66, steps=1), dom,
    )
    assert ok.forward == 4 and ok.backward == 4
