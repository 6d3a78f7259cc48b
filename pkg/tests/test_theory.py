"""Convergence-constant ledger, potential energy, bound checks, diagnostics."""

import numpy as np
import pytest

from svradmm.linalg import RealMatrix
from svradmm.problems import (
    ConstrainedProblem,
    L1Regularizer,
    QuadraticLoss,
    ZeroRegularizer,
    augmented_lagrangian,
)
from svradmm.solvers import IterateState, SolverConfig, run_asvrg_admm
from svradmm.theory import (
    Betas,
    RhoBound,
    TheoryParams,
    build_ledger,
    compute_betas,
    eta_margin,
    gamma_sequence,
    gamma_three_part,
    h_sequence,
    kkt_residual,
    linear_rate_fit,
    make_psi_hook,
    optimal_eta,
    optimal_theta,
    potential_energy,
    residual_R,
    residual_chain,
    rho_lower_bound,
    theorem1_check,
    theory_params_for,
    theory_report,
    theta_margin,
)

# a hand-checkable parameter point: unit spectra, rho 6, eta 2, theta 1/2
CANON = TheoryParams(L=1.0, sigma_max=1.0, sigma_min=1.0, phi_max=1.0,
                     phi_min=1.0, rho=6.0, eta=2.0, theta=0.5, m=8)

# a point with every decrease margin positive (small L, short epochs)
POSITIVE = TheoryParams(L=0.1, sigma_max=1.0, sigma_min=1.0, phi_max=1.0,
                        phi_min=1.0, rho=10.0, eta=3.0, theta=0.9, m=2)


def _tiny_problem(scale=0.1, d1=3, n=4, seed=0):
    rng = np.random.default_rng(seed)
    mats = [(lambda m: scale * (m + m.T) / 2)(rng.standard_normal((d1, d1)))
            for _ in range(n)]
    return ConstrainedProblem([QuadraticLoss(m) for m in mats], ZeroRegularizer(),
                              RealMatrix.identity(d1),
                              RealMatrix.scaled_identity(d1, -1.0), np.zeros(d1))


class TestParams:
    def test_defaults_tie_l1_to_rho(self):
        assert CANON.l1 == 6.0
        assert CANON.l2 == 1.0  # max(1, 1 - theta + 0.01)

    def test_l2_default_tracks_small_theta(self):
        tp = TheoryParams(L=1.0, sigma_max=1.0, sigma_min=1.0, phi_max=1.0,
                          phi_min=1.0, rho=1.0, eta=1.0, theta=0.5, m=2,
                          l2=2.0)
        assert tp.l2 == 2.0

    def test_validation(self):
        with pytest.raises(ValueError):
            TheoryParams(L=-1.0, sigma_max=1.0, sigma_min=1.0, phi_max=1.0,
                         phi_min=1.0, rho=1.0, eta=1.0, theta=0.5, m=2)
        with pytest.raises(ValueError):
            TheoryParams(L=1.0, sigma_max=1.0, sigma_min=1.0, phi_max=1.0,
                         phi_min=1.0, rho=1.0, eta=1.0, theta=1.5, m=2)
        with pytest.raises(ValueError):
            TheoryParams(L=1.0, sigma_max=0.5, sigma_min=1.0, phi_max=1.0,
                         phi_min=1.0, rho=1.0, eta=1.0, theta=0.5, m=2)


class TestBetas:
    def test_hand_checked_point(self):
        """At unit spectra with rho 6, eta 2, theta 1/2, l1 6, l2 1:
        the six coefficients reduce to simple fractions."""
        got = compute_betas(CANON)
        want = Betas(6.0, 5.6875, 4.25, 1.25, 1.5625, 5.6875)
        for g, w in zip(got, want):
            assert g == pytest.approx(w, abs=1e-12)

    def test_b1_vanishes_without_momentum_mixing(self):
        tp = TheoryParams(L=1.0, sigma_max=1.0, sigma_min=1.0, phi_max=1.0,
                          phi_min=1.0, rho=6.0, eta=2.0, theta=1.0, m=4)
        assert compute_betas(tp).b1 == 0.0

    def test_b4_is_pair_scaled_smoothness(self):
        b = compute_betas(CANON)
        assert b.b4 == pytest.approx(CANON.rho_inverse_pair * 5.0)


class TestHSequence:
    def test_terminal_value(self):
        """h_m = (5 L^2 / sigma_min)(2/rho + 1/(2 l1))."""
        h = h_sequence(CANON)
        assert h[CANON.m] == pytest.approx(5.0 * (2.0 / 6.0 + 1.0 / 12.0))

    def test_backward_recursion_closed_form(self):
        """With alpha1 = 1 the recursion is h_t = 3 h_{t+1} + bump, so
        h_t = 3^{m-t} h_m + bump (3^{m-t} - 1) / 2."""
        b = compute_betas(CANON)
        h = h_sequence(CANON, b)
        bump = b.b3 + 2.0 * b.b1
        for t in range(1, CANON.m + 1):
            k = CANON.m - t
            want = 3.0 ** k * h[CANON.m] + bump * (3.0 ** k - 1) / 2.0
            assert h[t] == pytest.approx(want, rel=1e-12)

    def test_entry_zero_unused(self):
        assert np.isnan(h_sequence(CANON)[0])


class TestGammas:
    def test_beta_form_matches_three_part_form(self):
        """Two independent arrangements of the same margin agree."""
        for tp in (CANON, POSITIVE):
            b = compute_betas(tp)
            h = h_sequence(tp, b)
            g = gamma_sequence(tp, b, h)
            for t in range(1, tp.m):
                assert g[t] == pytest.approx(gamma_three_part(tp, float(h[t + 1])),
                                             abs=1e-10)

    def test_terminal_row(self):
        b = compute_betas(CANON)
        h = h_sequence(CANON, b)
        g = gamma_sequence(CANON, b, h)
        assert g[CANON.m] == pytest.approx(b.b6 - b.b5 - h[1], rel=1e-12)

    def test_ledger_flags(self):
        bad = build_ledger(CANON)
        good = build_ledger(POSITIVE)
        assert not bad.gammas_positive
        assert good.gammas_positive
        assert good.tau > 0
        assert good.tau == pytest.approx(min(good.gamma_min, good.omega))
        assert good.omega == pytest.approx(5.0 * POSITIVE.L ** 2
                                           / (POSITIVE.sigma_min * POSITIVE.rho))


class TestOptimalValues:
    def test_theta_formula_value(self):
        val, clamped = optimal_theta(CANON)
        assert val == pytest.approx(0.4, abs=1e-12)
        assert not clamped

    def test_eta_formula_value(self):
        assert optimal_eta(CANON) == pytest.approx(5.0, abs=1e-12)

    def test_eta_maximizes_step_margin(self):
        """The eta formula is the true argmax of its margin curve."""
        star = optimal_eta(CANON)
        best = eta_margin(CANON, star)
        for mult in (0.25, 0.5, 0.9, 1.1, 2.0, 4.0):
            assert eta_margin(CANON, star * mult) <= best + 1e-12

    def test_theta_clamped_flag(self):
        # small l2 drives the raw ratio negative; the clamp floors it
        tp = TheoryParams(L=1.0, sigma_max=1.0, sigma_min=1.0, phi_max=1.0,
                          phi_min=1.0, rho=1.0, eta=2.0, theta=0.5, m=4,
                          l1=0.01, l2=0.5)
        val, clamped = optimal_theta(tp)
        assert clamped
        assert 0.0 < val <= 1.0

    def test_margins_finite(self):
        assert np.isfinite(theta_margin(CANON))
        assert np.isfinite(eta_margin(CANON))


class TestRhoBound:
    def test_canonical_value(self):
        rb = rho_lower_bound(CANON)
        assert isinstance(rb, RhoBound)
        assert rb.value == pytest.approx(14705.67901234568, rel=1e-12)
        assert not rb.satisfied

    def test_satisfied_flag(self):
        tp = TheoryParams(L=1.0, sigma_max=1.0, sigma_min=1.0, phi_max=1.0,
                          phi_min=1.0, rho=64.0, eta=2.0, theta=1.0, m=3)
        rb = rho_lower_bound(tp)
        assert rb.satisfied
        assert 64.0 > rb.value


class TestTheoryParamsFor:
    def test_identity_metric_unit_phis(self):
        p = _tiny_problem()
        cfg = SolverConfig(algorithm="asvrg", eta=1.0, theta=0.9, rho=2.0, m=4,
                           epochs=2)
        tp = theory_params_for(p, cfg)
        assert tp.phi_max == tp.phi_min == 1.0
        assert tp.L == pytest.approx(p.lipschitz().value)
        assert tp.sigma_min == pytest.approx(1.0, abs=1e-7)  # A = I

    def test_uzawa_metric_eigs(self):
        p = _tiny_problem()
        cfg = SolverConfig(algorithm="asvrg", eta=1.0, theta=0.9, rho=2.0, m=4,
                           epochs=2, q_mode="uzawa")
        tp = theory_params_for(p, cfg)
        # Q = gamma I - (eta rho / theta) A^T A with A = I is a scaled identity
        from svradmm.solvers import auto_gamma

        gamma = auto_gamma(1.0, 2.0, 0.9, p.coupling_spectrum().op_norm_gram)
        want = gamma - 2.0 / 0.9
        assert tp.phi_min == pytest.approx(want, rel=1e-9)
        assert tp.phi_max == pytest.approx(want, rel=1e-9)
        assert tp.phi_min > 1.0  # the auto gamma keeps Q above the identity

    def test_rejects_unresolved_schedules(self):
        p = _tiny_problem()
        with pytest.raises(ValueError):
            theory_params_for(p, SolverConfig(algorithm="asvrg", theta_mode="nesterov"))
        with pytest.raises(ValueError):
            theory_params_for(p, SolverConfig(algorithm="asvrg", rho_mode="adaptive",
                                              rho_kappa=2.0))
        with pytest.raises(ValueError):
            theory_params_for(p, SolverConfig(algorithm="sadmm", eta_mode="decaying"))

    def test_rejects_rank_deficient_coupling(self):
        rng = np.random.default_rng(1)
        a = RealMatrix.dense(np.vstack([np.eye(2), np.zeros((1, 2))]))  # 3x2, sigma_min(AA^T)=0
        p = ConstrainedProblem([QuadraticLoss(np.eye(2))], ZeroRegularizer(), a,
                               RealMatrix.dense(rng.standard_normal((3, 3))),
                               np.zeros(3))
        with pytest.raises(ValueError):
            theory_params_for(p, SolverConfig(algorithm="asvrg", theta=0.9, rho=1.0))


class TestPotentialEnergy:
    def test_matches_hand_assembly(self):
        """Psi = AL + b5 ||dx||^2 + h_t (||x-xt||^2 + ||xprev-xt||^2)."""
        p = _tiny_problem()
        tp = theory_params_for(p, SolverConfig(algorithm="asvrg", eta=3.0,
                                               theta=0.9, rho=10.0, m=2, epochs=2))
        led = build_ledger(tp)
        rng = np.random.default_rng(3)
        xt = rng.standard_normal(3)
        prev = IterateState(rng.standard_normal(3), np.zeros(3),
                            rng.standard_normal(3), rng.standard_normal(3), xt, 1, 0)
        cur = IterateState(rng.standard_normal(3), np.zeros(3),
                           rng.standard_normal(3), rng.standard_normal(3), xt, 1, 1)
        val = potential_energy(p, prev, cur, xt, tp, led, t=1)
        al = augmented_lagrangian(p, cur.x, cur.y, cur.lam, 10.0)
        dstep = cur.x - prev.x
        want = (al + led.betas.b5 * dstep @ dstep
                + led.h[1] * ((cur.x - xt) @ (cur.x - xt)
                              + (prev.x - xt) @ (prev.x - xt)))
        assert val.psi == pytest.approx(want, rel=1e-12)
        assert val.psi == pytest.approx(val.al_part + val.step_part
                                        + val.snapshot_part)

    def test_inner_index_bounds(self):
        p = _tiny_problem()
        tp = theory_params_for(p, SolverConfig(algorithm="asvrg", eta=3.0,
                                               theta=0.9, rho=10.0, m=2, epochs=2))
        led = build_ledger(tp)
        st = IterateState(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3),
                          np.zeros(3), 1, 1)
        with pytest.raises(ValueError):
            potential_energy(p, st, st, np.zeros(3), tp, led, t=0)
        with pytest.raises(ValueError):
            potential_energy(p, st, st, np.zeros(3), tp, led, t=3)

    def test_hook_records_along_run(self):
        p = _tiny_problem(scale=0.05)
        cfg = SolverConfig(algorithm="asvrg", eta=3.0, theta=0.9, rho=10.0,
                           m=2, epochs=3, seed=5, lambda_hist=True)
        tp = theory_params_for(p, cfg)
        res = run_asvrg_admm(p, cfg, init=np.ones(3) * 0.5,
                             psi_hook=make_psi_hook(p, tp))
        psis = [r.psi for r in res.trace if r.psi is not None]
        assert len(psis) == cfg.m * cfg.epochs
        assert all(np.isfinite(v) for v in psis)


class TestResiduals:
    def test_residual_r_hand_value(self):
        r = residual_R(np.array([0.0]), np.array([1.0]), np.array([3.0]),
                       np.array([0.5]))
        # 0.25 + 0.25 + 4.0 + 1.0
        assert r == pytest.approx(5.5)

    def test_chain_layout_and_snapshots(self):
        """Each position uses the snapshot of the epoch it sits in."""
        m = 2
        x_hist = np.arange(7.0)[:, None]  # T = 6 steps (3 epochs of 2)
        tilde = np.array([[0.0], [10.0], [20.0], [30.0]])
        chain = residual_chain(x_hist, tilde, m)
        assert chain.shape == (5,)
        for g in range(1, 6):
            want = residual_R(x_hist[g - 1], x_hist[g], x_hist[g + 1],
                              tilde[(g - 1) // m])
            assert chain[g - 1] == pytest.approx(want)

    def test_chain_validates_shape(self):
        with pytest.raises(ValueError):
            residual_chain(np.zeros((2, 1)), np.zeros((2, 1)), 2)
        with pytest.raises(ValueError):
            residual_chain(np.zeros((6, 1)), np.zeros((3, 1)), 4)


class TestTheorem1Check:
    def _runs(self, n_runs, epochs=4):
        p = _tiny_problem(scale=0.05, seed=11)
        cfg = SolverConfig(algorithm="asvrg", eta=3.0, theta=0.9, rho=10.0,
                           m=2, epochs=epochs, seed=0, lambda_hist=True,
                           keep_iterates=True)
        tp = theory_params_for(p, cfg)
        led = build_ledger(tp)
        hook = make_psi_hook(p, tp)
        rng = np.random.default_rng(7)
        results = []
        for k in range(n_runs):
            import dataclasses

            c = dataclasses.replace(cfg, seed=k)
            results.append(run_asvrg_admm(p, c, init=rng.standard_normal(3),
                                          psi_hook=hook))
        return results, led

    def test_report_fields_consistent(self):
        results, led = self._runs(5)
        rep = theorem1_check(results, led, min_runs=5)
        assert rep.n_runs == 5
        assert rep.t_steps == 8
        assert rep.tau == pytest.approx(led.tau)
        # recompute lhs independently
        chains = np.stack([residual_chain(r.x_hist, r.x_tilde_hist, 2)
                           for r in results])
        assert rep.lhs == pytest.approx(float(chains.mean(axis=0).min()))
        want_rhs = (rep.psi_first_mean - rep.psi_floor) / (led.tau * 8)
        assert rep.rhs == pytest.approx(want_rhs)
        assert rep.slack == pytest.approx(rep.rhs - rep.lhs)

    def test_min_runs_enforced(self):
        results, led = self._runs(3)
        with pytest.raises(ValueError, match="at least 30"):
            theorem1_check(results, led)

    def test_inapplicable_margins_refused(self):
        results, _ = self._runs(3)
        bad = build_ledger(CANON)
        with pytest.raises(ValueError, match="not positive"):
            theorem1_check(results, bad, min_runs=3)

    def test_psi_star_override(self):
        results, led = self._runs(4)
        rep = theorem1_check(results, led, psi_star=-100.0, min_runs=4)
        assert rep.psi_floor == -100.0

    def test_missing_history_refused(self):
        p = _tiny_problem(scale=0.05, seed=11)
        cfg = SolverConfig(algorithm="asvrg", eta=3.0, theta=0.9, rho=10.0,
                           m=2, epochs=4, seed=0, lambda_hist=True)
        tp = theory_params_for(p, cfg)
        res = run_asvrg_admm(p, cfg, init=np.ones(3),
                             psi_hook=make_psi_hook(p, tp))
        with pytest.raises(ValueError, match="keep_iterates"):
            theorem1_check([res], build_ledger(tp), min_runs=1)


class TestRateFit:
    def test_clean_geometric_decay(self):
        fit = linear_rate_fit(3.0 * 0.5 ** np.arange(50.0))
        assert fit.xi == pytest.approx(0.5, rel=1e-9)
        assert fit.c == pytest.approx(3.0, rel=1e-6)
        assert fit.r_squared == pytest.approx(1.0)
        assert not fit.no_linear_decay

    def test_constant_series_flags_no_decay(self):
        fit = linear_rate_fit(np.full(40, 2.0))
        assert fit.xi == pytest.approx(1.0)
        assert fit.no_linear_decay

    def test_floor_trims_dead_tail(self):
        v = np.concatenate([0.5 ** np.arange(30.0), np.zeros(10)])
        fit = linear_rate_fit(v, window=60)
        assert fit.window_start == 0
        assert fit.n_points == 30
        assert fit.xi == pytest.approx(0.5, rel=1e-9)

    def test_interior_dead_entry_shrinks_window(self):
        v = 0.5 ** np.arange(20.0)
        v[10] = 0.0
        fit = linear_rate_fit(v, window=60)
        assert fit.window_start == 11
        assert fit.n_points == 9

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            linear_rate_fit([1.0, 0.5])
        with pytest.raises(ValueError):
            linear_rate_fit(np.zeros(5))

    def test_window_parameter(self):
        v = np.concatenate([np.full(20, 5.0), 5.0 * 0.8 ** np.arange(1, 31.0)])
        fit = linear_rate_fit(v, window=30)
        assert fit.n_points == 30
        assert fit.window_start == 20
        assert fit.xi == pytest.approx(0.8, rel=1e-6)


class TestKKTResidual:
    def test_zero_regularizer_blocks(self):
        p = _tiny_problem()
        rng = np.random.default_rng(9)
        x, y, lam = (rng.standard_normal(3) for _ in range(3))
        r = kkt_residual(p, x, y, lam)
        assert r.stationarity_x == pytest.approx(
            np.linalg.norm(p.full_grad(x) - lam))
        assert r.stationarity_y == pytest.approx(np.linalg.norm(-lam))  # B^T lam
        assert r.feasibility == pytest.approx(np.linalg.norm(x - y))
        assert r.max_violation == max(r.stationarity_x, r.stationarity_y,
                                      r.feasibility)

    def test_l1_support_and_offsupport(self):
        p = _tiny_problem()
        p = ConstrainedProblem(p.losses, L1Regularizer(0.5), p.A, p.B, p.c)
        y = np.array([2.0, 0.0, -1.0])
        lam = np.array([-0.5, 0.2, 0.5])
        r = kkt_residual(p, np.zeros(3), y, lam)
        v = -lam  # B^T lam with B = -I
        # support entries need v_j = w sign(y_j); off-support |v_j| <= w
        dev = np.array([abs(v[0] - 0.5), max(0.0, abs(v[1]) - 0.5),
                        abs(v[2] + 0.5)])
        assert r.stationarity_y == pytest.approx(np.linalg.norm(dev))

    def test_true_kkt_point_is_clean(self):
        """x = y = lam = 0 satisfies every condition for the zero-reg problem."""
        p = _tiny_problem()
        r = kkt_residual(p, np.zeros(3), np.zeros(3), np.zeros(3))
        assert r.max_violation == 0.0


class TestTheoryReport:
    def test_report_contents(self):
        p = _tiny_problem(scale=0.05)
        cfg = SolverConfig(algorithm="asvrg", eta=3.0, theta=0.9, rho=10.0,
                           m=2, epochs=2)
        rep = theory_report(p, cfg)
        assert rep["gamma_min"] > 0
        assert rep["theorem1_applicable"]
        assert rep["tau"] == pytest.approx(min(rep["gamma_min"], rep["omega"]))
        assert rep["betas"]["b1"] >= 0
        tp = theory_params_for(p, cfg)
        want_theta, _ = optimal_theta(tp)
        assert rep["theta_opt"]["formula"] == pytest.approx(want_theta)
        assert rep["eta_opt"]["formula"] == pytest.approx(optimal_eta(tp))
        assert rep["rho_lower_bound"]["rho"] == 10.0

    def test_eta_grid_agreement_flag(self):
        """The eta formula lands on the grid argmax of its own margin."""
        p = _tiny_problem(scale=0.05)
        cfg = SolverConfig(algorithm="asvrg", eta=3.0, theta=0.9, rho=10.0,
                           m=2, epochs=2)
        rep = theory_report(p, cfg)
        assert rep["eta_opt"]["matches_grid"]
