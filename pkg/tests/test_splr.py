import json
from pathlib import Path

import numpy as np
import pytest

from conftest import random_instance, random_point
from regot.cholesky import numeric_factorize, symbolic_analyze
from regot.dual import DualPoint, fused_gradient, hessian_dense, objective, plan
from regot.exceptions import LineSearchError, StepError
from regot.problem import gen_synthetic1, gen_synthetic2
from regot.sparsify import assemble, select_topk, topk_budget
from regot.splr import (
    LowRankTerm,
    SplrConfig,
    build_low_rank,
    compute_direction,
    initial_state,
    line_search,
    run_splr,
    splr_step,
)

FIXTURES = Path(__file__).parent / "fixtures"


def full_scheme(p):
    return select_topk(np.ones((p.n, p.m)), p.n * (p.m - 1))


def masked_hessian(x, p, omega, tau):
    H = hessian_dense(x, p)
    keep = np.eye(p.dim, dtype=bool)
    for i, j in omega.coords:
        if j < p.m - 1:
            keep[i, p.n + j] = keep[p.n + j, i] = True
    return np.where(keep, H, 0.0) + tau * np.eye(p.dim)


def factor(A):
    return numeric_factorize(symbolic_analyze(A), A)


def relerr(u, v):
    return np.abs(u - v).max() / np.abs(v).max()


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(c1=0.0), dict(c1=0.6), dict(c2=1e-5), dict(c2=1.0),
                                    dict(S=0), dict(J=-1), dict(tau_max=0.0), dict(density=1.5),
                                    dict(max_ls_trials=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SplrConfig(**kw)

    def test_j_zero_allowed(self):
        assert SplrConfig(J=0).J == 0


class TestLowRank:
    def _state_pair(self, rng, p):
        x0 = random_point(rng, p).x
        x1 = random_point(rng, p).x
        st0 = initial_state(x0, p)
        st1 = initial_state(x1, p)
        st1.x_prev, st1.g_prev = st0.x, st0.g
        return st1

    def test_inactive_without_history(self, rng):
        p = random_instance(rng, 5, 6)
        st = initial_state(random_point(rng, p).x, p)
        A = assemble(st.x, p, full_scheme(p), 0.1)
        assert not build_low_rank(st, A).active
        assert build_low_rank(st, A).dense() is None

    def test_secant_and_spd(self, rng):
        p = random_instance(rng, 6, 7)
        st = self._state_pair(rng, p)
        A = assemble(st.x, p, select_topk(plan(st.x, p), 8), 0.05)
        R = build_low_rank(st, A)
        assert R.active
        B = A.to_dense() + R.dense()
        np.testing.assert_allclose(B @ st.s_minus, st.y_minus, rtol=1e-9, atol=1e-12)
        assert np.linalg.eigvalsh((B + B.T) / 2).min() > 0

    def test_curvature_guard(self, rng):
        p = random_instance(rng, 4, 4)
        st = self._state_pair(rng, p)
        st.g_prev = st.g + st.s_minus  # y.s < 0
        A = assemble(st.x, p, full_scheme(p), 0.1)
        assert not build_low_rank(st, A).active

    def test_degenerate_denominator(self, rng):
        p = random_instance(rng, 4, 4)
        st = self._state_pair(rng, p)
        A = assemble(st.x, p, full_scheme(p), 0.1)
        st.x_prev = st.x.copy()  # s = 0 makes v.s vanish
        st.g_prev = st.g - np.ones(p.dim)
        assert not build_low_rank(st, A).active


class TestDirection:
    @pytest.mark.parametrize("seed", range(10))
    def test_newton_when_full(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 24))
        m = int(rng.integers(3, 48 - n + 1))
        p = random_instance(rng, n, m, eta=float(rng.choice([0.05, 0.1])))
        x = random_point(rng, p).x
        g = fused_gradient(x, p).grad
        A = assemble(x, p, full_scheme(p), 0.0)
        d = compute_direction(factor(A), LowRankTerm(), g)
        assert relerr(d, -np.linalg.solve(hessian_dense(x, p), g)) <= 1e-8

    @pytest.mark.parametrize("seed", range(10))
    def test_woodbury_matches_dense(self, seed):
        rng = np.random.default_rng(100 + seed)
        p = random_instance(rng, 8, 9, eta=0.1)
        x = random_point(rng, p).x
        A = assemble(x, p, select_topk(plan(x, p), 10), 0.1)
        s = rng.standard_normal(p.dim)
        y = A.matvec(s) + 0.3 * rng.standard_normal(p.dim)
        if y @ s <= 0:
            y = -y + 2 * A.matvec(s)
        v = A.matvec(s)
        R = LowRankTerm(u=y, v=v, xi=1 / (y @ s), zeta=-1 / (v @ s), active=True)
        g = fused_gradient(x, p).grad
        d = compute_direction(factor(A), R, g)
        assert relerr(d, -np.linalg.solve(A.to_dense() + R.dense(), g)) <= 1e-8

    def test_zero_gradient(self, rng):
        p = random_instance(rng, 4, 5)
        A = assemble(np.zeros(p.dim), p, full_scheme(p), 0.1)
        np.testing.assert_array_equal(compute_direction(factor(A), LowRankTerm(), np.zeros(p.dim)), 0.0)


def quadratic(Q, c):
    def func(x):
        return 0.5 * x @ Q @ x - c @ x, Q @ x - c, None
    return func


class TestLineSearch:
    def test_newton_step_accepted_first(self, rng):
        Q = np.diag([1.0, 4.0, 9.0])
        c = rng.standard_normal(3)
        func = quadratic(Q, c)
        x = np.zeros(3)
        f, g, _ = func(x)
        ls = line_search(func, x, -np.linalg.solve(Q, g), f, g)
        assert ls.gamma == 1.0 and ls.trials == 1 and ls.wolfe

    @pytest.mark.parametrize("scale", [1e-4, 0.1, 10.0, 1e3])
    def test_wolfe_conditions(self, rng, scale):
        Q = np.diag(rng.uniform(0.1, 10.0, 5))
        c = rng.standard_normal(5)
        func = quadratic(Q, c)
        x = rng.standard_normal(5)
        f, g, _ = func(x)
        d = -scale * g
        ls = line_search(func, x, d, f, g, c1=1e-4, c2=0.9)
        assert ls.wolfe
        assert ls.f <= f + 1e-4 * ls.gamma * ls.slope0
        assert ls.slope >= 0.9 * ls.slope0
        np.testing.assert_allclose(ls.x, x + ls.gamma * d)

    def test_ascent_rejected(self):
        func = quadratic(np.eye(2), np.zeros(2))
        x = np.ones(2)
        f, g, _ = func(x)
        with pytest.raises(ValueError):
            line_search(func, x, g, f, g)

    def test_payload_returned(self):
        def func(x):
            return float(x @ x), 2 * x, "tag"
        ls = line_search(func, np.ones(1), -np.ones(1), 1.0, np.array([2.0]))
        assert ls.payload == "tag"

    def test_no_decrease_raises(self):
        # Reported slope says descent but the function only increases.
        def func(x):
            return 1.0 + float(x @ x) + 1.0, np.zeros_like(x), None
        with pytest.raises(LineSearchError):
            line_search(func, np.zeros(2), np.ones(2), 1.0, -np.ones(2), max_trials=5)

    def test_fallback_without_curvature(self):
        # Curvature is never reached within the budget: best decrease is returned.
        def func(x):
            return -float(x.sum()), -np.ones_like(x), None
        ls = line_search(func, np.zeros(1), np.ones(1), 0.0, -np.ones(1), max_trials=4)
        assert not ls.wolfe and ls.gamma == 8.0 and ls.f == -8.0


def dense_reference(p, x, steps, cfg):
    """Plain sparse-plus-low-rank iteration with dense algebra: refresh every step, no candidates."""
    out = [x.copy()]
    xp = gp = None
    for _ in range(steps):
        g = fused_gradient(x, p).grad
        tau = min(cfg.tau_max, np.linalg.norm(g))
        A = masked_hessian(x, p, select_topk(plan(x, p), topk_budget(cfg.density, p.n, p.m)), tau)
        B = A.copy()
        if xp is not None:
            s, y = x - xp, g - gp
            v = A @ s
            if y @ s > 1e-6 * (y @ y):
                B += np.outer(y, y) / (y @ s) - np.outer(v, v) / (v @ s)
        d = -np.linalg.solve(B, g)
        f = objective(x, p)
        ls = line_search(lambda z: (objective(z, p), fused_gradient(z, p).grad, None),
                         x, d, f, g, cfg.c1, cfg.c2, cfg.max_ls_trials)
        xp, gp, x = x, g, ls.x
        out.append(x.copy())
    return out


class TestRun:
    def test_matches_dense_reference(self):
        p = gen_synthetic2(16, 16, eta=0.05)
        cfg = SplrConfig(S=1, J=0, density=0.1, tol=0.0, max_iter=8)
        ref = dense_reference(p, np.zeros(p.dim), 8, cfg)
        st = initial_state(np.zeros(p.dim), p)
        for k in range(8):
            st, _ = splr_step(st, p, cfg)
            assert relerr(st.x, ref[k + 1]) <= 1e-7, k

    def test_monotone_and_candidate_rule(self):
        p = gen_synthetic1(40, 40, "iid", seed=3, eta=0.02)
        _, tr = run_splr(np.zeros(p.dim), p, SplrConfig(max_iter=80))
        f = tr.column("f")
        assert np.all(np.diff(f) <= 1e-12 * (1 + np.abs(f[:-1])))
        for ev in tr.events:
            if ev.refresh and ev.f_s is not None:
                assert ev.f_next == min(ev.f_s, ev.f_q)
            else:
                assert ev.f_next == ev.f_q and ev.chosen == "q"
            assert ev.f_next <= ev.f_before

    def test_converges_to_tol(self):
        p = gen_synthetic2(32, 32, eta=0.01)
        _, tr = run_splr(np.zeros(p.dim), p, SplrConfig(tol=1e-10))
        assert tr.last.marginal_error <= 1e-10
        assert len(tr.events) == tr.last.iter

    def test_refresh_frequency_does_not_change_solution(self):
        p = gen_synthetic2(32, 32, eta=0.02)
        plans = []
        for S in (1, 10):
            pt, tr = run_splr(np.zeros(p.dim), p, SplrConfig(S=S, tol=1e-9))
            assert [e.refresh for e in tr.events] == [k % S == 0 for k in range(len(tr.events))]
            plans.append(plan(pt.x, p))
        assert np.abs(plans[0] - plans[1]).max() <= 1e-6

    def test_deterministic_and_overlap_identical(self):
        p = gen_synthetic2(24, 24, eta=0.01)
        runs = [run_splr(np.zeros(p.dim), p, SplrConfig(overlap=ov, tol=1e-9))
                for ov in (False, False, True)]
        for pt, tr in runs[1:]:
            assert np.array_equal(pt.x, runs[0][0].x)
            for col in ("iter", "f", "marginal_error", "duality_gap"):
                assert np.array_equal(tr.column(col), runs[0][1].column(col))
            assert tr.events == runs[0][1].events

    def test_max_iter_zero(self):
        p = gen_synthetic2(8, 8, eta=0.1)
        pt, tr = run_splr(np.zeros(p.dim), p, SplrConfig(max_iter=0))
        assert len(tr) == 1 and not tr.events
        assert np.array_equal(pt.x, np.zeros(p.dim))

    def test_record_every(self):
        p = gen_synthetic2(16, 16, eta=0.05)
        _, tr = run_splr(np.zeros(p.dim), p, SplrConfig(record_every=4, max_iter=10, tol=0.0))
        assert list(tr.column("iter")) == [0, 4, 8, 10]

    def test_golden_objective_trace(self):
        gold = json.loads((FIXTURES / "splr_synth2_32.json").read_text())
        p = gen_synthetic2(32, 32, eta=gold["eta"])
        _, tr = run_splr(np.zeros(p.dim), p, SplrConfig(max_iter=gold["iters"], tol=0.0))
        np.testing.assert_allclose(tr.column("f"), gold["f"], rtol=1e-9, atol=1e-13)

    def test_sandwich_at_refresh(self):
        p = gen_synthetic1(20, 20, "diff", seed=1, eta=0.05)
        st = initial_state(np.zeros(p.dim), p)
        cfg = SplrConfig(S=3, density=0.05)
        for _ in range(12):
            st, rec = splr_step(st, p, cfg)
            if not rec.refresh:
                continue
            HO = st.A.to_dense() - rec.tau * np.eye(p.dim)
            H = hessian_dense(st.x_prev, p)
            lo, hi = np.linalg.eigvalsh(H)[[0, -1]]
            lo_o, hi_o = np.linalg.eigvalsh(HO)[[0, -1]]
            slack = 1e-8 * hi
            assert lo - slack <= lo_o <= hi_o <= hi + slack

    def test_step_error_carries_trace(self, monkeypatch):
        import regot.splr as mod

        def boom(*a, **k):
            raise mod.LineSearchError("forced")

        monkeypatch.setattr(mod, "line_search", boom)
        p = gen_synthetic2(8, 8, eta=0.1)
        with pytest.raises(StepError) as info:
            run_splr(np.zeros(p.dim), p, SplrConfig())
        assert len(info.value.trace) == 1
