"""Acceptance suite: the ten quantitative exit criteria at stated tolerances.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output).  Tolerances are pinned here, not configurable.
"""

import math

import numpy as np

from freegeo import convex as cx
from freegeo import entropy as en
from freegeo import gibbs, logic, transport as tp
from freegeo.lab import experiments as ex
from freegeo.lab.config import RunConfig
from freegeo.matcore import MatrixTuple, Seed

from test_entropy import semicircle_log_energy_quadrature

LOG_2PIE = math.log(2 * math.pi * math.e)


def _verdict(num: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------


def test_criterion_01_gaussian_entropy_anchor():
    """h*(q) = m log(2 pi e) within 2% at n in {4, 8, 16}, m in {1, 2},
    and n-independent within error bars."""
    worst_rel = 0.0
    reports = {}
    for m in (1, 2):
        for n in (4, 8, 16):
            rep = en.gibbs_entropy(gibbs.Potential.quadratic(1.0, m), n, m,
                                   seed=Seed(1000 + n, m), nodes=8,
                                   samples_per_node=96, samples_final=256)
            reports[(m, n)] = rep
            rel = abs(rep.h_n - m * LOG_2PIE) / (m * LOG_2PIE)
            worst_rel = max(worst_rel, rel)
    ok = worst_rel <= 0.02
    spread_ok = True
    for m in (1, 2):
        hs = [reports[(m, n)] for n in (4, 8, 16)]
        for i in range(len(hs)):
            for j in range(i + 1, len(hs)):
                gap = abs(hs[i].h_n - hs[j].h_n)
                if gap > 2 * (hs[i].error_bar + hs[j].error_bar):
                    spread_ok = False
    _verdict(1, ok and spread_ok,
             f"Gaussian anchor worst relative error {worst_rel:.4f} (tol 0.02), "
             f"n-independence within 2x error bars: {spread_ok}")


def test_criterion_02_log_energy_identity():
    """log_energy_integral(1+eps) vs independent 2-D quadrature, |delta| <= 1e-3."""
    worst = 0.0
    for eps in (0.0, 0.1, 1.0):
        quad = semicircle_log_energy_quadrature(1.0 + eps)
        worst = max(worst, abs(en.log_energy_integral(1.0 + eps) - quad))
    _verdict(2, worst <= 1e-3,
             f"log-energy vs quadrature worst |delta| = {worst:.2e} (tol 1e-3)")


def test_criterion_03_counterexample_suite():
    """eps = 0.01, n = 64, 50 samples: all four counterexample metrics."""
    cfg = RunConfig.from_dict("counterexample",
                              {"epsilon": 0.01, "k": 8, "l": 8,
                               "samples": 50, "seed": 20240817})
    rep = ex.run_counterexample(cfg)
    parts = []
    for name in ("coupled_distance", "spectral_lower_bound", "commutator_norm",
                 "tradeoff_inequality"):
        metric = rep.metrics[name]
        parts.append(f"{name}={metric.value:.5f} vs {metric.target:.5f}")
    _verdict(3, rep.passed, "; ".join(parts))


def _quadratic_pair(rng):
    a = float(rng.uniform(0.3, 3.0))
    b = float(rng.normal())
    e = float(rng.normal())
    phi = cx.ScalarFn(lambda x, a=a, b=b, e=e: 0.5 * a * x * x + b * x + e,
                      grad=lambda x, a=a, b=b: a * x + b,
                      strong_convexity=a, semiconcavity=a)
    psi = cx.ScalarFn(lambda y, a=a, b=b, e=e: (y - b) ** 2 / (2 * a) - e,
                      grad=lambda y, a=a, b=b: (y - b) / a,
                      strong_convexity=1 / a, semiconcavity=1 / a)
    return phi, psi, a, b


def _safe_ratio(num, den):
    if den <= 0:
        return math.inf
    return num / den


def test_criterion_04_interpolation_pair_suite():
    """100 random admissible quadratic pairs, (s,t) in {0,.25,.5,.75,1}^2 with
    s <= t: all four interpolation conclusions at tolerance 1e-8."""
    rng = np.random.default_rng(4040)
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    tol = 1e-8
    worst = -math.inf
    checked = 0
    for _ in range(100):
        phi, psi, a, b = _quadratic_pair(rng)
        x0 = float(rng.normal())
        x1 = a * x0 + b  # zero-gap pair for conclusion (4)
        for i, s in enumerate(grid):
            for t in grid[i:]:
                pair = cx.interpolation_pair(phi, psi, s, t)
                pts = 2.0 * rng.normal(size=4)
                # boundary dispatch
                if s == t:
                    for x in pts[:2]:
                        worst = max(worst, abs(pair.phi_st(x) - 0.5 * x * x))
                        worst = max(worst, abs(pair.psi_st(x) - 0.5 * x * x))
                if s == 0.0 and t == 1.0:
                    for x in pts[:2]:
                        worst = max(worst, abs(pair.phi_st(x) - phi(x)))
                        worst = max(worst, abs(pair.psi_st(x) - psi(x)))
                # (1) admissibility of the derived pair
                worst = max(worst, -cx.duality_gap(pair.phi_st, pair.psi_st,
                                                   float(pts[0]), float(pts[1])))
                # (2)/(3) the interpolation curvature constants
                triples = [(float(rng.normal()), float(rng.normal()),
                            float(rng.uniform())) for _ in range(2)]
                c_phi = _safe_ratio(1 - t, 1 - s) if t < 1 else 0.0
                u_phi = _safe_ratio(t, s) if s > 0 else math.inf
                c_psi = _safe_ratio(s, t) if s > 0 else 0.0
                u_psi = _safe_ratio(1 - s, 1 - t) if t < 1 else math.inf
                worst = max(worst, cx.check_strong_convexity(pair.phi_st, c_phi, triples).max_violation)
                worst = max(worst, cx.check_semiconcavity(pair.phi_st, u_phi, triples).max_violation)
                worst = max(worst, cx.check_strong_convexity(pair.psi_st, c_psi, triples).max_violation)
                worst = max(worst, cx.check_semiconcavity(pair.psi_st, u_psi, triples).max_violation)
                # (4) zero duality gap propagates to (x_s, x_t)
                xs = (1 - s) * x0 + s * x1
                xt = (1 - t) * x0 + t * x1
                worst = max(worst, abs(cx.duality_gap(pair.phi_st, pair.psi_st, xs, xt)))
                checked += 1
    _verdict(4, worst <= tol,
             f"interpolation suite worst violation {worst:.2e} over {checked} "
             f"(pair, s, t) combinations (tol 1e-8)")


def test_criterion_05_hopf_lax_suite():
    """All four inf-convolution curvature items on 100 random smooth convex
    test functions, zero violations beyond 1e-8."""
    rng = np.random.default_rng(5050)
    tol = 1e-8
    worst = -math.inf
    for _ in range(100):
        a = float(rng.uniform(0.2, 2.5))  # strong convexity
        bcoef = float(rng.uniform(0.0, 2.0))
        k = float(rng.uniform(0.5, 3.0))
        shift = float(rng.normal())
        # a q + b softplus_k: strongly convex with constant a, semiconcave
        # with constant a + b k / 4 (softplus curvature peaks at k/4)
        fn = cx.ScalarFn(
            fn=lambda x, a=a, b=bcoef, k=k, s=shift:
                0.5 * a * x * x + b * np.logaddexp(0.0, k * (x - s)) / k,
            grad=lambda x, a=a, b=bcoef, k=k, s=shift:
                a * x + b / (1.0 + math.exp(-k * (x - s))),
            strong_convexity=a,
            semiconcavity=a + bcoef * k / 4,
        )
        t = float(rng.uniform(0.1, 2.0))
        ft = cx.hopf_lax(fn, t)
        triples = [(2 * float(rng.normal()), 2 * float(rng.normal()),
                    float(rng.uniform())) for _ in range(4)]
        # (i) 1/t-semiconcave for any input
        worst = max(worst, cx.check_semiconcavity(ft, 1.0 / t, triples).max_violation)
        # (ii) sharpened by input semiconcavity 1/u: 1/(u + t) with u = 1/sc
        u_inv = 1.0 / fn.semiconcavity
        worst = max(worst, cx.check_semiconcavity(ft, 1.0 / (u_inv + t), triples).max_violation)
        # (iii) convexity preserved
        worst = max(worst, cx.check_strong_convexity(ft, 0.0, triples).max_violation)
        # (iv) strong convexity 1/u with u = 1/c: 1/(u + t)
        c_inv = 1.0 / fn.strong_convexity
        worst = max(worst, cx.check_strong_convexity(ft, 1.0 / (c_inv + t), triples).max_violation)
    _verdict(5, worst <= tol,
             f"Hopf-Lax suite worst violation {worst:.2e} over 100 functions (tol 1e-8)")


def test_criterion_06_talagrand():
    """Gaussian tilt at n = 8: ratio 1.00 +- 0.10 over 10 seeds; quartic
    perturbation: ratio <= 1 always."""
    cfg = RunConfig.from_dict("talagrand",
                              {"n": 8, "samples": 128, "tilt": 10.0,
                               "seeds": 10, "seed": 606})
    rep = ex.run_talagrand(cfg)
    ratios = [row["ratio"] for row in rep.series["seeds"]]
    gauss_ok = all(abs(r - 1.0) <= 0.10 for r in ratios)

    cfg_q = RunConfig.from_dict("talagrand",
                                {"n": 8, "samples": 128, "tilt": 10.0,
                                 "quartic": 2.0, "seeds": 3, "seed": 607,
                                 "ti_nodes": 8})
    rep_q = ex.run_talagrand(cfg_q)
    ratios_q = [row["ratio"] for row in rep_q.series["seeds"]]
    quartic_ok = all(r <= 1.0 for r in ratios_q)
    _verdict(6, gauss_ok and quartic_ok,
             f"equality ratios in [{min(ratios):.3f}, {max(ratios):.3f}] "
             f"(tol 1.00 +- 0.10); quartic ratios max {max(ratios_q):.3f} <= 1")


def test_criterion_07_geodesic_sandwich():
    """Gaussian endpoints in dimensions 1 and 2: every grid pair satisfies
    d log((1-t)/(1-s)) - 0.05 <= dh <= d log(t/s) + 0.05."""
    ok = True
    details = []
    for dim, cov0, cov1, mean1 in ((1, "1", "4", "0"), (2, "1,2", "3,0.5", "1,-1")):
        cfg = RunConfig.from_dict("geodesic",
                                  {"dim": dim, "cov0": cov0, "cov1": cov1,
                                   "mean1": mean1, "samples": 4000,
                                   "grid": "0.1,0.25,0.5,0.75,0.9",
                                   "tolerance": 0.05, "seed": 700 + dim})
        rep = ex.run_geodesic(cfg)
        ok = ok and rep.passed
        details.append(f"dim {dim}: margin {rep.metrics['sandwich'].value:.4f}")
    _verdict(7, ok, "; ".join(details) + " (tol 0.05 nat)")


def test_criterion_08_moment_fixed_point():
    """mu = delta_0, t in {0.5, 1, 2}: terminal W2 <= 0.01 of N(0, 1/t);
    objective nondecreasing within 0.02 for discretized N(0,1)."""
    worst_w2 = 0.0
    for t_reg in (0.5, 1.0, 2.0):
        cfg = RunConfig.from_dict("moment", {"mu": "delta0", "t": t_reg,
                                             "iterations": 25, "seed": 808})
        rep = ex.run_moment_fixed_point(cfg)
        assert rep.metrics["gaussian_fixed_point"].passed
        worst_w2 = max(worst_w2, rep.metrics["gaussian_fixed_point"].value)
    cfg_g = RunConfig.from_dict("moment", {"mu": "gaussian", "t": 1.0,
                                           "iterations": 25, "seed": 809})
    rep_g = ex.run_moment_fixed_point(cfg_g)
    drop = rep_g.metrics["objective_monotone"].value
    ok = worst_w2 <= 0.01 and drop <= 0.02
    _verdict(8, ok,
             f"terminal W2 to N(0,1/t) worst {worst_w2:.4f} (tol 0.01); "
             f"objective max drop {drop:.4f} (tol 0.02)")


def test_criterion_09_formula_evaluator_oracle():
    """delta_R' vs spectral truncation on 50 random normal matrices to 1e-6;
    quantifier-free exactness to 1e-10; unitary invariance of types."""
    rng = np.random.default_rng(909)
    n, radius = 6, 1.0
    delta_formula = logic.parse(f"inf{{y:{radius}}} 0.5*tr((x1-y)'*(x1-y))")
    opts = logic.EvalOptions(starts=2, iters=400, tol=1e-12, seed=Seed(9))
    worst_delta = 0.0
    for _ in range(50):
        lam = rng.normal(0, 1.3, n) + 1j * rng.normal(0, 1.3, n)
        q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
        mat = q @ np.diag(lam) @ q.conj().T
        val = logic.evaluate(delta_formula, MatrixTuple(mat[None]), opts)
        sv = np.linalg.svd(mat, compute_uv=False)
        oracle = 0.5 * np.sum(np.maximum(sv - radius, 0.0) ** 2) / n
        worst_delta = max(worst_delta, abs(val - oracle))

    worst_qf = 0.0
    for _ in range(20):
        x = MatrixTuple(rng.normal(size=(2, 4, 4)) + 1j * rng.normal(size=(2, 4, 4)))
        a, b = x.entries
        f = logic.parse("max(re tr(x1*x2' - 0.25*x1), 0.0) + sqrt(re tr(x1'*x1))")
        direct = max((np.trace(a @ b.conj().T) / 4 - 0.25 * np.trace(a) / 4).real, 0.0) \
            + math.sqrt((np.trace(a.conj().T @ a) / 4).real)
        worst_qf = max(worst_qf, abs(logic.evaluate(f, x) - direct))

    worst_type = 0.0
    for _ in range(5):
        x = MatrixTuple(rng.normal(size=(1, 5, 5)) + 1j * rng.normal(size=(1, 5, 5)))
        q, _ = np.linalg.qr(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
        xu = x.conjugate_by(q)
        ta, tb = logic.qf_type(x, 3), logic.qf_type(xu, 3)
        worst_type = max(worst_type, logic.qf_distance(ta, tb))
    g = logic.parse("sup{y:1.0} re tr(y*x1)")
    x = MatrixTuple(rng.normal(size=(1, 4, 4)) + 1j * rng.normal(size=(1, 4, 4)))
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    quant_gap = abs(
        logic.evaluate(g, x, logic.EvalOptions(starts=4, iters=150, seed=Seed(2)))
        - logic.evaluate(g, x.conjugate_by(q),
                         logic.EvalOptions(starts=4, iters=150, seed=Seed(2))))

    ok = worst_delta <= 1e-6 and worst_qf <= 1e-10 and worst_type <= 1e-10 \
        and quant_gap <= 1e-4
    _verdict(9, ok,
             f"delta predicate |delta| {worst_delta:.2e} (tol 1e-6); "
             f"qf exactness {worst_qf:.2e} (tol 1e-10); type invariance "
             f"{worst_type:.2e}; quantified invariance {quant_gap:.2e}")


def test_criterion_10_transport_consistency():
    """W2^2 + 2C identity, geodesic linearity, diagonal-ensemble quantile
    agreement, all at 1e-8."""
    rng = np.random.default_rng(1010)
    samp = rng.normal(size=(24, 2, 4, 4)) + 1j * rng.normal(size=(24, 2, 4, 4))
    a = gibbs.Ensemble(samp)
    b = gibbs.Ensemble(samp + 0.4 * np.eye(4))

    c_val, plan = tp.optimal_inner_product(a, b)
    identity_gap = abs(plan.cost + 2 * c_val
                       - a.mean_squared_norm() - b.mean_squared_norm())

    w, plan = tp.empirical_w2(a, b)
    geo_gap = 0.0
    for s, t in ((0.0, 0.5), (0.25, 0.75), (0.5, 1.0)):
        ws_t, _ = tp.empirical_w2(tp.displacement(plan, s), tp.displacement(plan, t))
        geo_gap = max(geo_gap, abs(ws_t - abs(t - s) * w))

    lam = rng.normal(size=30)
    muv = 2.0 * rng.normal(size=30)
    da = gibbs.Ensemble(np.stack([(v * np.eye(3))[None] for v in lam]))
    db = gibbs.Ensemble(np.stack([(v * np.eye(3))[None] for v in muv]))
    w_diag, _ = tp.empirical_w2(da, db)
    quantile = float(np.sqrt(np.mean((np.sort(lam) - np.sort(muv)) ** 2)))
    diag_gap = abs(w_diag - quantile)

    ok = identity_gap <= 1e-8 and geo_gap <= 1e-8 and diag_gap <= 1e-8
    _verdict(10, ok,
             f"W2^2+2C identity gap {identity_gap:.2e}; geodesic linearity gap "
             f"{geo_gap:.2e}; diagonal/quantile gap {diag_gap:.2e} (tol 1e-8)")
