import numpy as np
import pytest

import nsplab.spectral as sp
from nsplab.acoustic import KGParams, acoustic_from_fluid, kg_homogeneous_propagate
from nsplab.fluid import FluidState, PhysParams, make_ill_prepared_data
from nsplab.noise import NoiseModel
from nsplab.solvers import (
    EnergyLedger,
    StepRejected,
    StepScheme,
    admissible_dt,
    energy_monitor,
    ins_step,
    nsp_step,
    simulate_ins,
    simulate_nsp,
)


@pytest.fixture(scope="module")
def noise_off(grid16):
    return NoiseModel(grid16, mode_count=0)


def _rest(grid):
    return FluidState(
        rho=np.ones(grid.shape),
        momentum=np.zeros((3,) + grid.shape),
        potential=np.zeros(grid.shape),
    )


class TestScheme:
    def test_validation(self):
        with pytest.raises(ValueError):
            StepScheme(dt=0.0)
        with pytest.raises(ValueError):
            StepScheme(dt=0.1, splitting="magic")
        s = StepScheme(dt=0.1).with_dt(0.05)
        assert s.dt == 0.05 and s.splitting == "acoustic-exponential"

    def test_admissible_dt_orders(self, grid16):
        params = PhysParams(epsilon=0.1)
        exp = admissible_dt(grid16, params, "acoustic-exponential")
        expl = admissible_dt(grid16, params, "fully-explicit")
        assert 0 < expl < exp


class TestRestState:
    @pytest.mark.parametrize("splitting",
                             ["acoustic-exponential", "fully-explicit"])
    def test_exact_fixed_point(self, grid16, noise_off, splitting):
        params = PhysParams(epsilon=0.1)
        dt = 0.5 * admissible_dt(grid16, params, splitting)
        state = _rest(grid16)
        for j in range(5):
            state = nsp_step(state, params, StepScheme(dt, splitting),
                             noise_off, j)
        assert np.all(state.rho == 1.0)
        assert np.all(state.momentum == 0.0)
        assert np.all(state.potential == 0.0)


class TestStokesOracle:
    def test_shear_mode_decay(self, grid16, noise_off):
        # rho = 1, u = sin(y) e_x: pure heat flow at rate nu1, independent
        # of epsilon; 100 implicit steps must track exp(-nu1 t) to 1e-4.
        params = PhysParams(epsilon=1.0, nu1=0.1)
        dt = 0.01
        assert dt <= admissible_dt(grid16, params)
        y = grid16.mesh[1]
        m0 = np.zeros((3,) + grid16.shape)
        m0[0] = np.sin(y)
        state = FluidState(rho=np.ones(grid16.shape), momentum=m0,
                           potential=np.zeros(grid16.shape))
        for j in range(100):
            state = nsp_step(state, params, StepScheme(dt), noise_off, j)
        expect = np.exp(-params.nu1 * 1.0) * np.sin(y)
        assert np.max(np.abs(state.momentum[0] - expect)) < 1e-4
        assert np.max(np.abs(state.rho - 1.0)) < 1e-13


class TestLinearization:
    def test_small_fluctuations_follow_kg(self, grid16, noise_off):
        # tiny sigma0, no velocity: the nonlinear step tracks the linear
        # acoustic propagator with O(amplitude^2) error.
        params = PhysParams(epsilon=0.1, nu1=0.0)
        amp = 1e-5
        state = make_ill_prepared_data(params, grid16, seed=4,
                                       amplitude=amp, velocity_amplitude=0.0)
        dt = 0.5 * admissible_dt(grid16, params)
        steps = 10
        out = state
        for j in range(steps):
            out = nsp_step(out, params, StepScheme(dt), noise_off, j)

        kg = KGParams.from_phys(params)
        scale = params.epsilon ** (params.beta + 1.0)
        ref = kg_homogeneous_propagate(
            acoustic_from_fluid(state, params, grid16), kg, grid16,
            steps * dt / scale,
        )
        sig_num = (out.rho - 1.0) / params.epsilon
        err = sp.l2_norm(sig_num - ref.sigma, grid16)
        assert err < 50.0 * amp * sp.l2_norm(ref.sigma, grid16)


class TestConservation:
    def test_mass_and_poisson(self, grid16):
        params = PhysParams(epsilon=0.1)
        noise = NoiseModel(grid16, mode_count=16, seed=5, amplitude=0.05)
        state = make_ill_prepared_data(params, grid16, seed=3, amplitude=0.5)
        dt = admissible_dt(grid16, params)
        for j in range(30):
            state = nsp_step(state, params, StepScheme(dt), noise, j)
            assert abs(np.mean(state.rho) - 1.0) < 1e-12
            res = params.eps_beta * sp.laplacian(state.potential, grid16) - (
                state.rho - 1.0
            )
            assert sp.l2_norm(res, grid16) < 1e-9 * sp.l2_norm(
                state.rho - 1.0, grid16
            )
        assert np.min(state.rho) > 0.0

    def test_path_determinism(self, grid16):
        params = PhysParams(epsilon=0.1)
        noise = NoiseModel(grid16, mode_count=16, seed=8, amplitude=0.05)
        state0 = make_ill_prepared_data(params, grid16, seed=1, amplitude=0.5)
        dt = admissible_dt(grid16, params)
        a = simulate_nsp(state0, params, StepScheme(dt), noise, 10, path=3)
        b = simulate_nsp(state0, params, StepScheme(dt), noise, 10, path=3)
        assert np.array_equal(a.rho, b.rho)
        assert np.array_equal(a.momentum, b.momentum)
        c = simulate_nsp(state0, params, StepScheme(dt), noise, 10, path=4)
        assert not np.array_equal(a.momentum, c.momentum)


class TestFusedPipeline:
    def test_matches_modular_path(self, grid16):
        # the single-pipeline spectral step and the modular
        # assemble_forcing / kg_duhamel_step route must agree to roundoff
        params = PhysParams(epsilon=0.05)
        noise = NoiseModel(grid16, mode_count=16, seed=9, amplitude=0.05)
        state = make_ill_prepared_data(params, grid16, seed=3, amplitude=0.5)
        dt = admissible_dt(grid16, params)
        fused = modular = state
        for j in range(5):
            fused = nsp_step(fused, params, StepScheme(dt), noise, j,
                             fused=True)
            modular = nsp_step(modular, params, StepScheme(dt), noise, j,
                               fused=False)
        for name in ("rho", "momentum", "potential"):
            a = getattr(fused, name)
            b = getattr(modular, name)
            assert np.max(np.abs(a - b)) < 1e-12 * max(np.max(np.abs(b)), 1.0)


class TestRejection:
    def test_oversized_dt_rejected(self, grid16, noise_off, rng):
        params = PhysParams(epsilon=0.1)
        bound = admissible_dt(grid16, params)
        state = make_ill_prepared_data(params, grid16, seed=2)
        with pytest.raises(StepRejected):
            nsp_step(state, params, StepScheme(2.0 * bound), noise_off, 0)
        with pytest.raises(StepRejected):
            nsp_step(state, params,
                     StepScheme(2.0 * bound, "fully-explicit"), noise_off, 0)

    def test_driver_retries_with_halved_dt(self, grid16, noise_off):
        # 1.5x the admissible dt: each step splits into two accepted halves
        params = PhysParams(epsilon=0.1)
        bound = admissible_dt(grid16, params)
        state0 = make_ill_prepared_data(params, grid16, seed=2, amplitude=0.3)
        out = simulate_nsp(state0, params, StepScheme(1.5 * bound),
                           noise_off, 2)
        assert out.time == pytest.approx(3.0 * bound)

    def test_retries_exhausted(self, grid16, noise_off):
        params = PhysParams(epsilon=0.1)
        bound = admissible_dt(grid16, params)
        state0 = make_ill_prepared_data(params, grid16, seed=2, amplitude=0.3)
        with pytest.raises(StepRejected):
            simulate_nsp(state0, params, StepScheme(100.0 * bound),
                         noise_off, 1, max_retries=2)


class TestIncompressibleReference:
    def test_zero_fixed_point(self, grid16, noise_off):
        params = PhysParams()
        u = np.zeros((3,) + grid16.shape)
        out = ins_step(u, params, StepScheme(0.01), noise_off, 0)
        assert np.all(out == 0.0)

    def test_taylor_green_decay(self, grid16, noise_off):
        # single-mode vortex: convection vanishes, energy decays at the
        # Stokes rate exp(-2 nu1 t); 1% tolerance over t = 0.5.
        params = PhysParams(nu1=0.1)
        x, y, _ = grid16.mesh
        u = np.stack([
            np.sin(x) * np.cos(y),
            -np.cos(x) * np.sin(y),
            np.zeros(grid16.shape),
        ])
        e0 = sp.l2_norm(u, grid16)
        u = simulate_ins(u, params, StepScheme(0.005), noise_off, 100)
        ratio = sp.l2_norm(u, grid16) / e0
        assert ratio == pytest.approx(np.exp(-2.0 * params.nu1 * 0.5),
                                      rel=0.01)

    def test_output_solenoidal(self, grid16, rng):
        from conftest import random_vector
        params = PhysParams()
        noise = NoiseModel(grid16, mode_count=16, seed=4, amplitude=0.1)
        u = sp.project_solenoidal(random_vector(rng, grid16, band=4), grid16)
        out = ins_step(u, params, StepScheme(0.005), noise, 0)
        assert sp.l2_norm(sp.divergence(out, grid16), grid16) < 1e-10

    def test_cfl_guard(self, grid16, noise_off):
        params = PhysParams()
        u = np.full((3,) + grid16.shape, 50.0)
        with pytest.raises(StepRejected):
            ins_step(u, params, StepScheme(0.1), noise_off, 0)


class TestEnergyMonitor:
    def test_rest_state_all_zero(self, grid16, noise_off):
        params = PhysParams(epsilon=0.1)
        dt = 0.5 * admissible_dt(grid16, params)
        states = simulate_nsp(_rest(grid16), params, StepScheme(dt),
                              noise_off, 5, store=True)
        led = energy_monitor(states, params, StepScheme(dt), noise_off)
        assert np.all(led.kinetic == 0.0)
        assert np.all(led.violation == 0.0)
        assert led.violation_fraction == 0.0

    def test_deterministic_balance_first_order(self, grid16, noise_off):
        # noise off: E(t) + dissipation = E(0) up to discretization; the
        # defect vanishes at order ~1 in dt (left-point quadrature).
        params = PhysParams(epsilon=0.1)
        state0 = make_ill_prepared_data(params, grid16, seed=3, amplitude=0.5)
        base = admissible_dt(grid16, params)
        viols = []
        for k in (1, 2, 4):
            scheme = StepScheme(base / k)
            states = simulate_nsp(state0, params, scheme, noise_off, 8 * k,
                                  store=True)
            led = energy_monitor(states, params, scheme, noise_off)
            viols.append(np.max(np.abs(led.violation)))
        orders = np.log2(np.array(viols[:-1]) / np.array(viols[1:]))
        assert orders[-1] > 0.95
        assert viols[-1] < viols[0]

    def test_dissipation_nondecreasing(self, grid16):
        params = PhysParams(epsilon=0.1)
        noise = NoiseModel(grid16, mode_count=16, seed=6, amplitude=0.05)
        state0 = make_ill_prepared_data(params, grid16, seed=3, amplitude=0.5)
        dt = admissible_dt(grid16, params)
        states = simulate_nsp(state0, params, StepScheme(dt), noise, 20,
                              store=True)
        led = energy_monitor(states, params, StepScheme(dt), noise)
        assert np.all(np.diff(led.dissipation_cum) >= 0.0)
        assert np.all(np.diff(led.ito_cum) >= 0.0)
        assert np.all(np.isfinite(led.violation))

    def test_inequality_holds_with_noise(self, grid16):
        params = PhysParams(epsilon=0.1)
        noise = NoiseModel(grid16, mode_count=16, seed=7, amplitude=0.05)
        state0 = make_ill_prepared_data(params, grid16, seed=1, amplitude=0.5)
        dt = admissible_dt(grid16, params)
        states = simulate_nsp(state0, params, StepScheme(dt), noise, 50,
                              store=True)
        led = energy_monitor(states, params, StepScheme(dt), noise)
        assert led.violation_fraction <= 0.05

    def test_online_ledger_matches_stored(self, grid16):
        from nsplab.solvers import simulate_with_ledger
        params = PhysParams(epsilon=0.1)
        noise = NoiseModel(grid16, mode_count=16, seed=6, amplitude=0.05)
        state0 = make_ill_prepared_data(params, grid16, seed=3, amplitude=0.5)
        dt = admissible_dt(grid16, params)
        states = simulate_nsp(state0, params, StepScheme(dt), noise, 10,
                              store=True)
        stored = energy_monitor(states, params, StepScheme(dt), noise)
        final, online = simulate_with_ledger(state0, params, StepScheme(dt),
                                             noise, 10)
        assert np.array_equal(final.rho, states[-1].rho)
        np.testing.assert_allclose(online.violation, stored.violation,
                                   atol=1e-12)
        np.testing.assert_allclose(online.martingale_cum,
                                   stored.martingale_cum, atol=1e-13)

    def test_needs_initial_state(self, grid16, noise_off):
        params = PhysParams()
        with pytest.raises(ValueError):
            energy_monitor([], params, StepScheme(0.01), noise_off)

    def test_row_iterator(self, grid16, noise_off):
        params = PhysParams(epsilon=0.1)
        dt = 0.5 * admissible_dt(grid16, params)
        states = simulate_nsp(_rest(grid16), params, StepScheme(dt),
                              noise_off, 3, store=True)
        led = energy_monitor(states, params, StepScheme(dt), noise_off)
        rows = list(led.rows())
        assert len(rows) == 4
        assert rows[2][0] == 2
        assert rows[2][1] == pytest.approx(2 * dt)
