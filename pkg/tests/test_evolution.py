import math

import numpy as np
import pytest

from tailslab.evolution import (ArrayData, BlowupError, EvolutionState,
                                GaussianBump, NonlinearCoefficient,
                                OutputPlan, ProblemSpec, derive_system,
                                evolve, flat_exact_oracle, oracle_slice_data,
                                rhs_coefficients, step)
from tailslab.geometry import build_metric


def _linear_spec(metric, data):
    return ProblemSpec(metric=metric, power=3,
                       nonlin=NonlinearCoefficient(0.0), data=data,
                       symmetry="spherical")


class TestDeriveSystem:
    def test_zero_state_is_stationary(self, flat_metric):
        spec = _linear_spec(flat_metric, GaussianBump(amplitude=0.0))
        rhs = derive_system(spec, n=200)
        st = EvolutionState(0.0, np.zeros(200), np.zeros(200))
        dphi, dpi = rhs(st)
        assert np.all(dphi == 0.0) and np.all(dpi == 0.0)

    def test_rejects_normal_form(self):
        nf = build_metric("normal_form", 0.0, None)
        spec = _linear_spec(nf, GaussianBump())
        with pytest.raises(ValueError):
            derive_system(spec, n=100)

    def test_rejects_nonlinear_banded(self, flat_metric):
        with pytest.raises(ValueError, match="mode coupling"):
            ProblemSpec(metric=flat_metric, power=3,
                        nonlin=NonlinearCoefficient(1.0),
                        data=GaussianBump(), symmetry="banded", lmax=2)

    def test_manufactured_rhs_fourth_order(self, flat_metric):
        # smooth (Phi, Pi) profiles with the exact coefficient relation:
        # the only discretization is d/ds, so the residual against analytic
        # derivatives must shrink at 4th order (dissipation off)
        errs = {}
        for n in (101, 201, 401):
            grid = flat_metric.grid(n)
            s = grid.s
            w1 = np.sin(math.pi * s) * s          # w1(0) = 0
            dw1 = np.sin(math.pi * s) + math.pi * s * np.cos(math.pi * s)
            d2w1 = 2 * math.pi * np.cos(math.pi * s) \
                - math.pi ** 2 * s * np.sin(math.pi * s)
            w2 = s * (1.0 - np.cos(math.pi * s))
            dw2 = (1.0 - np.cos(math.pi * s)) + math.pi * s * np.sin(math.pi * s)
            coef = rhs_coefficients(flat_metric, grid, power=3, linear=True)
            spec = _linear_spec(flat_metric, GaussianBump(amplitude=0.0))
            rhs = derive_system(spec, n=n, dissipation=0.0)
            dphi, dpi = rhs(EvolutionState(0.0, w1, w2))
            exact = (coef[0] * dw2 + coef[1] * w2 + coef[2] * d2w1
                     + coef[3] * dw1 + coef[4] * w1)
            exact[0] = 0.0  # pinned center
            errs[n] = np.max(np.abs(dpi - exact))
        order1 = math.log2(errs[101] / errs[201])
        order2 = math.log2(errs[201] / errs[401])
        assert order1 > 3.5 and order2 > 3.5


class TestStep:
    def test_zero_stays_zero(self, flat_metric):
        spec = _linear_spec(flat_metric, GaussianBump(amplitude=0.0))
        rhs = derive_system(spec, n=150)
        st = EvolutionState(0.0, np.zeros(150), np.zeros(150))
        out = step(st, rhs, rhs.dt)
        assert np.all(out.Phi == 0.0) and np.all(out.Pi == 0.0)
        assert out.t_star == rhs.dt

    def test_single_step_matches_oracle_locally(self, flat_metric):
        data = GaussianBump(amplitude=0.1, width=0.5)
        grid = flat_metric.grid(400)
        sliced = oracle_slice_data(data, grid, flat_metric.height)
        spec = _linear_spec(flat_metric, sliced)
        rhs = derive_system(spec, n=400, dissipation=0.0)
        st = EvolutionState(0.0, sliced.phi0_times_r(grid),
                            sliced.pi0_times_r(grid))
        dt = 1e-3 * rhs.dt
        out = step(st, rhs, dt)
        r_mid = grid.r[150]
        exact = r_mid * flat_exact_oracle(data, dt, r_mid, flat_metric.height)
        # local error = O(dt^5) + dt * O(ds^4); both tiny here
        assert abs(out.Phi[150] - exact) < 1e-10

    def test_rejects_oversized_dt(self, flat_metric):
        spec = _linear_spec(flat_metric, GaussianBump())
        rhs = derive_system(spec, n=150)
        st = EvolutionState(0.0, np.zeros(150), np.zeros(150))
        with pytest.raises(ValueError, match="CFL"):
            step(st, rhs, 3.0 * rhs.dt)

    def test_unstable_cfl_blows_up(self, flat_metric):
        # dt twice the stable limit: the run must go unstable within the
        # documented horizon (empirical CFL scan, not an exact bound)
        data = GaussianBump(amplitude=0.1, width=0.5)
        spec = _linear_spec(flat_metric, data)
        plan = OutputPlan(n=200, cfl=1.2, probe_radii=(), trace_dt=0.1)
        with pytest.raises(BlowupError):
            evolve(spec, 50.0, plan)


class TestEvolve:
    def test_initial_head_equals_data(self, flat_metric):
        data = GaussianBump(amplitude=0.2, width=0.7)
        spec = _linear_spec(flat_metric, data)
        plan = OutputPlan(n=200, probe_radii=(1.0,), snapshot_times=(0.0,))
        traj = evolve(spec, 1.0, plan)
        grid = traj.grid
        head = traj.snapshots[0]
        assert head.t_star == 0.0
        expect = data.phi0_times_r(grid)
        assert np.max(np.abs(head.Phi - expect)) == 0.0
        # probe at t=0 equals rho*Phi interpolated
        assert abs(traj.probe(1.0).phi[0] - data.u0(1.0)) < 1e-8

    def test_huygens_cleanliness(self, small_linear_run):
        traj = small_linear_run
        p = traj.probe(1.0)
        sel = traj.times >= 20.0
        assert np.max(np.abs(p.phi[sel])) < 1e-6

    def test_oracle_agreement_and_convergence(self, flat_metric):
        data = GaussianBump(amplitude=0.1, width=0.5)
        errs = {}
        for n in (200, 400):
            grid = flat_metric.grid(n)
            sliced = oracle_slice_data(data, grid, flat_metric.height)
            spec = _linear_spec(flat_metric, sliced)
            plan = OutputPlan(n=n, probe_radii=(1.0, 3.0), trace_dt=0.05,
                              t_dense=20.0)
            traj = evolve(spec, 12.0, plan)
            err = 0.0
            for r in (1.0, 3.0):
                exact = flat_exact_oracle(data, traj.times,
                                          np.full_like(traj.times, r),
                                          flat_metric.height)
                err = max(err, np.max(np.abs(traj.probe(r).phi - exact)))
            errs[n] = err
        assert 1.8 < math.log2(errs[200] / errs[400]) < 4.5

    def test_energy_monotone_linear(self, small_linear_run):
        e = small_linear_run.energy
        tol = 1e-8 * e[0]
        assert np.all(np.diff(e) <= tol)

    def test_determinism_bitwise(self, flat_metric):
        data = GaussianBump(amplitude=0.1, width=0.5)
        out = []
        for _ in range(2):
            spec = _linear_spec(flat_metric, data)
            plan = OutputPlan(n=150, probe_radii=(1.0,), trace_dt=0.1)
            traj = evolve(spec, 10.0, plan)
            out.append((traj.scri.copy(), traj.probe(1.0).phi.copy()))
        assert np.array_equal(out[0][0], out[1][0])
        assert np.array_equal(out[0][1], out[1][1])

    def test_blowup_carries_partial_trajectory(self, flat_metric):
        # focusing, large data: genuine blowup, labeled out-of-hypothesis
        spec = ProblemSpec(metric=flat_metric, power=3,
                           nonlin=NonlinearCoefficient(1.0),
                           data=GaussianBump(amplitude=8.0, width=0.8),
                           symmetry="spherical")
        plan = OutputPlan(n=200, probe_radii=(1.0,), trace_dt=0.01)
        with pytest.raises(BlowupError) as exc:
            evolve(spec, 50.0, plan)
        traj = exc.value.trajectory
        assert traj is not None and traj.out_of_hypothesis
        assert traj.times.size > 0 and exc.value.t_blow > 0

    def test_small_data_cubic_no_blowup_and_decay(self, small_cubic_run):
        traj = small_cubic_run
        assert not traj.out_of_hypothesis
        p = traj.probe(1.0)
        # after the pulse passes, sup|phi| decreases
        late = np.abs(p.phi[traj.times > 20.0])
        assert late[0] > late[-1]
        assert np.max(np.abs(traj.scri[-10:])) < 1e-4

    def test_apriori_monitor_bounded(self, small_cubic_run):
        ap = small_cubic_run.apriori
        t = small_cubic_run.times
        sel = t > 0.5 * t[-1]
        assert np.max(ap[sel]) / np.min(ap[sel]) < 3.0

    def test_probe_matches_interpolated_snapshot(self, small_cubic_run):
        traj = small_cubic_run
        grid = traj.grid
        snap = traj.snapshots[-1]
        i = int(np.argmin(np.abs(traj.times - snap.t_star)))
        assert abs(traj.times[i] - snap.t_star) < 1e-9
        i0, w = grid.interp_weights(5.0)
        val = np.dot(w, snap.Phi[i0:i0 + 4]) / 5.0
        assert abs(val - traj.probe(5.0).phi[i]) < 1e-12

    def test_mass_deformed_smoke(self):
        metric = build_metric("mass_deformed", 0.25, None)
        data = GaussianBump(amplitude=0.05, width=0.5, center=3.0)
        spec = _linear_spec(metric, data)
        plan = OutputPlan(n=300, probe_radii=(3.0,), trace_dt=0.05)
        traj = evolve(spec, 30.0, plan)
        assert not traj.out_of_hypothesis
        assert np.all(np.isfinite(traj.scri))

    def test_banded_linear_modes(self, flat_metric):
        data = {(0, 0): GaussianBump(amplitude=0.1, width=0.5),
                (2, 1): GaussianBump(amplitude=0.05, width=0.5, center=1.0)}
        spec = ProblemSpec(metric=flat_metric, power=3,
                           nonlin=NonlinearCoefficient(0.0), data=None,
                           symmetry="banded", lmax=2, mode_data=data)
        plan = OutputPlan(n=200, probe_radii=(2.0,), trace_dt=0.05)
        traj = evolve(spec, 20.0, plan)
        assert traj.scri.shape[1] == 2
        assert np.all(np.isfinite(traj.scri))
        # linearity: doubling the data doubles the trace
        data2 = {k: GaussianBump(amplitude=2 * v.amplitude, width=v.width,
                                 center=v.center) for k, v in data.items()}
        spec2 = ProblemSpec(metric=flat_metric, power=3,
                            nonlin=NonlinearCoefficient(0.0), data=None,
                            symmetry="banded", lmax=2, mode_data=data2)
        traj2 = evolve(spec2, 20.0, plan)
        assert np.allclose(traj2.scri, 2.0 * traj.scri, atol=1e-12)


class TestOracle:
    def test_returns_initial_data_with_trivial_height(self):
        data = GaussianBump(amplitude=0.3, width=0.6, center=1.0)
        r = np.array([0.2, 1.0, 2.5])
        vals = flat_exact_oracle(data, 0.0, r, height=None)
        assert np.max(np.abs(vals - data.u0(r))) < 1e-12

    def test_huygens_zero_outside_light_cone(self, flat_metric):
        data = GaussianBump(amplitude=0.3, width=0.3, center=0.0)
        # t - r far beyond the (effective) support of the data
        val = flat_exact_oracle(data, 30.0, 2.0, flat_metric.height)
        assert abs(val) < 1e-12

    def test_center_limit_continuous(self):
        data = GaussianBump(amplitude=0.2, width=0.5)
        a = flat_exact_oracle(data, 0.3, 1e-9)
        b = flat_exact_oracle(data, 0.3, 1e-4)
        assert abs(a - b) < 1e-6

    def test_u1_contribution(self):
        data = GaussianBump(amplitude=0.0, width=0.5, amplitude1=0.2)
        # phi(t, 0) = G1(t) = t*u1(t) at the center for u0 = 0
        t = 0.4
        expect = t * data.u1(t)
        assert abs(flat_exact_oracle(data, t, 1e-10) - expect) < 1e-7


def test_nonlin_symbol_check():
    ok = NonlinearCoefficient(1.0, time_factor=lambda t: 1.0 / (1.0 + 0.1 * t))
    assert ok.symbol_check()
    bad = NonlinearCoefficient(1.0, time_factor=lambda t: math.exp(0.5 * t))
    assert not bad.symbol_check()
