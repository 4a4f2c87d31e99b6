import math

import numpy as np
import pytest

from flexprice import flexfn
from flexprice.simkit import integrators, plants, signals
from flexprice.simkit.runner import SimConfig, make_rng, run_config, run_scenario, switch_window
from flexprice.simkit.trajectory import COLUMNS, FLAG_COLUMNS, Trajectory, lyapunov_ascent, metrics


def _zero(t, x):
    return 0.0


class TestIntegrators:
    @pytest.mark.parametrize("step", [integrators.step_euler, integrators.step_rk4])
    def test_zero_drift(self, step):
        assert step(_zero, 0.0, 0.37, 1e-2) == 0.37

    def test_euler_constant(self):
        assert integrators.step_euler(lambda t, x: 0.5, 0.0, 0.2, 0.1) == pytest.approx(0.25)

    def test_euler_local_error_order(self):
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            got = integrators.step_euler(lambda t, x: -x, 0.0, 0.8, dt, bounds=None)
            errs.append(abs(got - 0.8 * math.exp(-dt)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)

    def test_rk4_relative_error(self):
        dt = 1e-3
        x = 1.0
        worst = 0.0
        for k in range(1, 1001):
            x = integrators.step_rk4(lambda t, x: -x, 0.0, x, dt, bounds=None)
            exact = math.exp(-k * dt)
            worst = max(worst, abs(x - exact) / exact)
        assert worst <= 1e-10

    def test_clip(self):
        assert integrators.step_euler(lambda t, x: 10.0, 0.0, 0.9, 0.1) == 1.0
        assert integrators.step_rk4(lambda t, x: -10.0, 0.0, 0.1, 0.1) == 0.0
        assert integrators.step_euler(lambda t, x: 10.0, 0.0, 0.9, 0.1, bounds=None) > 1.0

    def test_em_without_noise_is_euler(self):
        def f(t, x):
            return 0.3 - x

        for x in np.linspace(0, 1, 11):
            em = integrators.step_euler_maruyama(f, lambda t, x: 0.0, 0.0, x, 1e-2, 0.7)
            assert em == integrators.step_euler(f, 0.0, x, 1e-2)

    @pytest.mark.parametrize("x", [0.0, 1.0])
    def test_em_boundary_pure_drift(self, x):
        def f(t, x):
            return 0.0

        def g(t, x):
            return flexfn.diffusion(x, 2.0)

        assert integrators.step_euler_maruyama(f, g, 0.0, x, 1e-2, 1.3) == x

    def test_em_seeded_path(self):
        p = plants.NonlinearPlant(flexfn.FlexParams(2.97, 1.0, sigma_x=0.5))

        def path(seed):
            rng = make_rng(seed)
            x, out = 0.5, []
            for k in range(500):
                dw = math.sqrt(1e-3) * rng.standard_normal()
                x = integrators.step_euler_maruyama(
                    lambda t, s: p.drift(t, s, 0.5, 0.5), p.diffusion, k * 1e-3, x, 1e-3, dw
                )
                out.append(x)
            return np.array(out)

        assert path(3).tobytes() == path(3).tobytes()
        assert path(3).tobytes() != path(4).tobytes()


class TestSignals:
    def test_piecewise(self):
        s = signals.PiecewiseConstant((0.1, 0.2, 0.3), (1.0, 2.0))
        assert [s(0.0), s(0.999), s(1.0), s(1.5), s(2.0), s(9.0)] == [0.1, 0.1, 0.2, 0.2, 0.3, 0.3]

    @pytest.mark.parametrize("bps", [(2.0, 1.0), (1.0, 1.0)])
    def test_breakpoints_increasing(self, bps):
        with pytest.raises(ValueError, match="strictly increasing"):
            signals.PiecewiseConstant((0.1, 0.2, 0.3), bps)

    def test_sinusoid(self):
        s = signals.Sinusoid(0.5, 0.2, 24.0)
        assert s(6.0) == pytest.approx(0.7)
        assert signals.value_range(s) == (pytest.approx(0.3), pytest.approx(0.7))

    def test_table_hold_and_linear(self):
        hold = signals.Table((0.0, 1.0, 2.0), (0.1, 0.5, 0.3))
        lin = signals.Table((0.0, 1.0, 2.0), (0.1, 0.5, 0.3), "linear")
        assert hold(0.5) == 0.1 and hold(1.0) == 0.5 and hold(5.0) == 0.3
        assert lin(0.5) == pytest.approx(0.3) and lin(1.5) == pytest.approx(0.4)
        assert lin(-1.0) == 0.1

    def test_build_roundtrip(self):
        s = signals.build({"kind": "piecewise-constant", "levels": [0.1, 0.2], "breakpoints": [3]})
        assert s(2.9) == 0.1 and s(3.0) == 0.2
        with pytest.raises(ValueError):
            signals.build({"kind": "ramp"})


def _log(n=10, **cols):
    base = {c: [0] * n if c in FLAG_COLUMNS else [math.nan] * n for c in COLUMNS}
    base["time"] = [0.1 * k for k in range(n)]
    base["branch"] = ["positive"] * n
    base.update(cols)
    return Trajectory(base, {"dt": 0.1, "lam": -1.0})


class TestMetrics:
    def test_perfect_tracking(self):
        m = metrics(_log(D=[0.4] * 10, D_ref=[0.4] * 10, u=[0.5] * 10))
        assert m["rmse_tracking"] == 0.0

    def test_constant_offset(self):
        m = metrics(_log(D=[0.45] * 10, D_ref=[0.4] * 10, u=[0.5] * 10))
        assert m["rmse_tracking"] == pytest.approx(0.05, rel=1e-12)

    def test_hand_computed_log(self):
        d = [0.50, 0.52, 0.48, 0.50, 0.51, 0.49, 0.50, 0.50, 0.53, 0.47]
        u = [0.2, 1.1, 0.5, -0.1, 0.4, 0.4, 0.3, 0.3, 0.9, 1.0]
        e = [0.1, -0.2, 0.05, 0.0, 0.0, 0.01, -0.01, 0.0, 0.02, -0.03]
        v = [0.5, 0.6, 0.55, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]
        clamp = [0, 1, 0, 0, 0, 0, 1, 0, 0, 0]
        switch = [0, 0, 0, 1, 0, 0, 0, 0, 0, 0]
        proj = [0, 0, 1, 1, 1, 0, 0, 0, 0, 0]
        tr = _log(D=d, D_ref=[0.5] * 10, u=u, e=e, V=v, clamp=clamp, branch_switch=switch,
                  projection_active=proj, alpha_hat=[0.1] * 10, beta_hat=[0.2] * 10,
                  zeta_hat=[0.3] * 10)
        m = metrics(tr)
        # squared errors sum: 4+4+0+1+1+0+0+9+9 = 28 (units of 1e-4)
        assert m["rmse_tracking"] == pytest.approx(math.sqrt(28e-4 / 10), rel=1e-12)
        assert m["max_abs_tracking"] == pytest.approx(0.03)
        assert m["max_abs_e"] == pytest.approx(0.2)
        assert m["e_tail_max"] == pytest.approx(0.03)
        # 0.01 + 0.04 + 0.0025 + 0.0001 + 0.0001 + 0.0004 + 0.0009
        assert m["e_sq_integral"] == pytest.approx(0.1 * 0.054, rel=1e-12)
        assert m["u_bound_violations"] == 2
        assert m["u_min"] == -0.1 and m["u_max"] == 1.1
        # bound is -e**2 * 0.1 + 10 * 0.01: only the first jump (+0.1) exceeds it
        assert m["lyapunov_ascent_steps"] == 1
        assert m["clamp_events"] == 2
        assert m["branch_switch_events"] == 1
        assert m["projection_active_steps"] == 3
        assert m["final_gains"] == {"alpha_hat": 0.1, "beta_hat": 0.2, "zeta_hat": 0.3}

    def test_no_adaptive_columns(self):
        m = metrics(_log(D=[0.4] * 10, D_ref=[0.4] * 10, u=[0.5] * 10))
        assert m["max_abs_e"] is None and m["final_gains"] is None
        assert m["lyapunov_ascent_steps"] == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            metrics(_log(0, time=[], branch=[]))

    def test_ascent_mask(self):
        tr = _log(V=[1.0, 1.2, 1.1, 1.1], e=[0.0] * 4, n=4, time=[0, 0.1, 0.2, 0.3],
                  branch=["positive"] * 4)
        assert lyapunov_ascent(tr).tolist() == [True, False, False]

    def test_switch_window(self):
        tr = _log(branch_switch=[0, 0, 0, 0, 1, 0, 0, 0, 0, 0])
        assert switch_window(tr, 2).tolist() == [0, 0, 1, 1, 1, 1, 1, 0, 0, 0]


class TestCsv:
    def test_roundtrip(self, tmp_path):
        tr = run_config("fig4", **{"sim.horizon": 0.05})
        tr.to_csv(tmp_path / "t.csv")
        back = Trajectory.read_csv(tmp_path / "t.csv", tr.meta)
        for c in COLUMNS:
            if c == "branch":
                assert list(back[c]) == list(tr[c])
            else:
                np.testing.assert_array_equal(back[c], tr[c])

    def test_header_contract(self, tmp_path):
        run_config("fig3", **{"sim.horizon": 0.01}).to_csv(tmp_path / "t.csv")
        header = (tmp_path / "t.csv").read_text().splitlines()[0]
        assert header == (
            "time,x,y_ref,D,Y,D_ref,B,u,delta,branch,alpha_hat,beta_hat,zeta_hat,e,V,"
            "clamp,price_clamp,branch_switch,projection_active,no_consistent_branch,"
            "gain_clip,r_negative"
        )


class TestRunner:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(dt=2.0, horizon=1.0)
        with pytest.raises(ValueError):
            SimConfig(integrator="heun")
        assert SimConfig(dt=1e-3, horizon=24.0).n_steps == 24_000

    def test_em_requires_noise(self, lin_params):
        from flexprice.control_optimal import ExactPriceController

        with pytest.raises(ValueError):
            run_scenario(SimConfig(integrator="euler-maruyama", horizon=0.01),
                         plants.LinearPlant(lin_params), ExactPriceController(lin_params),
                         signals.Constant(0.5), signals.Constant(0.5))

    def test_time_grid_and_state_domain(self):
        tr = run_config("fig4")
        assert np.all(np.diff(tr["time"]) > 0)
        assert len(tr) == 24_000
        assert np.all((tr["x"] >= 0) & (tr["x"] <= 1))

    def test_clamp_accounting(self, lin_params):
        from flexprice.control_optimal import ExactPriceController

        # an unbounded price holding demand above baseline pushes x past 1;
        # with u in [0, 1] the linear dynamics alone keep x inside
        plant = plants.LinearPlant(lin_params)
        ctl = ExactPriceController(lin_params, clamp=False)
        tr = run_scenario(SimConfig(dt=1e-2, horizon=20.0), plant, ctl,
                          signals.Constant(0.1), signals.Constant(1.0), x0=0.9)
        assert np.all((tr["x"] >= 0) & (tr["x"] <= 1))
        hits = int(tr["clamp"].sum())
        assert hits > 0
        # every clamp flag marks a step whose raw update left [0, 1]
        for k in np.flatnonzero(tr["clamp"])[:50]:
            raw = integrators.step_rk4(
                lambda t, s: plant.drift(t, s, tr["u"][k], 0.1), 0.0, tr["x"][k], 1e-2, bounds=None
            )
            assert raw > 1.0 or raw < 0.0

    def test_abort_on_error(self):
        from flexprice.simkit.runner import RunAborted

        rigid = {"sim.horizon": 1.0, "plant.linear.flexible_share": 0.0,
                 "controller.model.flexible_share": 0.0}
        assert run_config("fig3", **rigid)["no_consistent_branch"].all()
        with pytest.raises(RunAborted):
            run_config("fig3", **rigid, **{"sim.abort_on_error": True})

    def test_errors_logged_not_fatal(self):
        tr = run_config("fig3", **{"sim.horizon": 1.0, "plant.linear.flexible_share": 0.0,
                                   "controller.model.flexible_share": 0.0})
        assert len(tr) == 1000
        # the fallback is the boundary price, then held
        assert np.all(tr["u"] == tr["u"][0]) and np.isfinite(tr["u"][0])
        assert np.all(tr["D"] == tr["B"])

    def test_deterministic_bytes(self, tmp_path):
        a = run_config("fig6", **{"sim.horizon": 2.0})
        b = run_config("fig6", **{"sim.horizon": 2.0})
        a.to_csv(tmp_path / "a.csv")
        b.to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_noisy_nonlinear_seeded(self, tmp_path):
        spec = _nonlinear_spec()
        a = run_config(spec)
        b = run_config(spec)
        c = run_config(spec, **{"sim.seed": 99})
        assert a["Y"].tobytes() == b["Y"].tobytes()
        assert a["x"].tobytes() == b["x"].tobytes()
        assert a["Y"].tobytes() != c["Y"].tobytes()
        assert np.any(a["Y"] != a["D"])

    def test_exact_tracking_away_from_switches(self):
        tr = run_config("fig3")
        far = ~switch_window(tr, 2)
        assert np.max(np.abs(tr["D"] - tr["D_ref"])[far]) <= 1e-6

    def test_euler_rk4_agree_to_first_order(self):
        gaps = []
        for dt in (4e-3, 2e-3):
            rk = run_config("fig4", **{"sim.dt": dt})
            eu = run_config("fig4", **{"sim.dt": dt, "sim.integrator": "euler"})
            gaps.append(np.max(np.abs(rk["x"] - eu["x"])))
        assert gaps[0] <= 1.0 * 4e-3
        assert gaps[1] <= 0.6 * gaps[0]

    def test_dt_refinement_first_order(self):
        ref = run_config("fig5", **{"sim.dt": 2.5e-4, "sim.horizon": 6.0})
        rm_ref = metrics(ref)["rmse_tracking"]
        diffs = []
        for dt in (2e-3, 1e-3):
            rm = metrics(run_config("fig5", **{"sim.dt": dt, "sim.horizon": 6.0}))["rmse_tracking"]
            diffs.append(abs(rm - rm_ref))
        # change in the metric shrinks at least linearly with dt
        assert diffs[1] <= 0.6 * diffs[0] + 1e-12


def _nonlinear_spec():
    return {
        "name": "noisy",
        "plant": {
            "kind": "nonlinear",
            "nonlinear": {
                "capacity": 2.97, "flexible_share": 1.0,
                "beta": [0, 0, 0, 0, -0.3, -0.5, -1.0], "alpha": [0.1, 1.0, 0.5, 0.2],
                "k": 1.0, "sigma_x": 0.2, "sigma_y": 0.01,
            },
        },
        "controller": {
            "kind": "clamped",
            "model": {"eta1": -1.0, "eta2": -0.9, "eta3": 1.0, "lambda1": 0.5,
                      "lambda2": 0.5, "capacity": 2.97},
        },
        "signals": {"baseline": {"kind": "constant", "value": 0.5},
                    "reference": {"kind": "sinusoid", "offset": 0.5, "amplitude": 0.1,
                                  "period": 24.0}},
        "sim": {"dt": 1e-2, "horizon": 5.0, "integrator": "euler-maruyama", "seed": 7},
    }


class TestPlants:
    def test_jump_scaling(self, lin_params):
        p = plants.LinearPlant(lin_params, mode="frozen", jumps=[(2.0, 1.3)])
        before, after = p.coeffs(1.0, 0.5, 0.5, 0.0), p.coeffs(2.0, 0.5, 0.5, 0.0)
        assert after.a == 1.3 * before.a and after.b == 1.3 * before.b
        assert after.d == 1.3 * before.d
        assert after.d / after.b == pytest.approx(lin_params.d_bar)

    def test_jump_keeps_d(self, lin_params):
        p = plants.LinearPlant(lin_params, mode="frozen", jumps=[(2.0, 0.7)], jump_scales_d=False)
        assert p.coeffs(3.0, 0.5, 0.5, 0.0).d == p.coeffs(0.0, 0.5, 0.5, 0.0).d

    def test_frozen_ignores_branch(self, lin_params):
        p = plants.LinearPlant(lin_params, mode="frozen", frozen_baseline=0.2)
        assert p.branch(0.0, 1.0, 1.0, 0.9).value == "positive"
        assert p.coeffs(0.0, 1.0, 1.0, 0.9) == p.coeffs(5.0, 0.0, 0.0, 0.1)

    def test_nonlinear_output_matches_flexfn(self):
        flex = flexfn.FlexParams(2.97, 0.8, beta=(-0.2,) * 7, alpha=(0.1, 1, 0.5, 0.2))
        p = plants.NonlinearPlant(flex)
        assert p.output(0.0, 0.3, 0.6, 0.4) == flexfn.demand(0.3, 0.6, 0.4, flex)
        # out-of-range prices are evaluated at the nearest bound
        assert p.output(0.0, 0.3, 1.4, 0.4) == flexfn.demand(0.3, 1.0, 0.4, flex)
