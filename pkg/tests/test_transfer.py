import numpy as np
import pytest

from specdiff import (
    DegradationSpec,
    Guidance,
    Observation,
    Schedule,
    SimConfig,
    SpectralPrior,
    StepTransfer,
    WeightSchedule,
    compose_transfer,
    ddim_subsequence,
    degrade,
    dps_step_transfer,
    ideal_step_transfers,
    ideal_triple,
    linear_ddpm_schedule,
    make_lpf,
    make_synthetic_prior,
    optimal_step_transfer,
    output_distribution,
    pigdm_step_transfer,
    posterior_optimal_denoise,
    prior_optimal_denoise,
    sample_prior,
    sampler_step_transfers,
    simulate_one,
    step_coeffs,
    true_posterior,
    w2_diag,
)
from specdiff.objective import triple_realization_loss

from oracles import (
    central_gradient,
    dense_map_denoiser,
    dense_operator_from_multiplier,
    dense_prior_denoiser,
    log_posterior,
    random_prior_arrays,
)


def _random_setup(rng, d=8, sigma=None, lam_floor=0.0):
    mu_f, lam = random_prior_arrays(d, rng, lam_floor=lam_floor)
    prior = SpectralPrior(dim=d, mu_f=mu_f, lambda0=lam)
    lam_h = np.fft.fft(rng.standard_normal(d))
    sigma = float(rng.uniform(0.1, 1.0)) if sigma is None else sigma
    spec = DegradationSpec(dim=d, lambda_h=lam_h, sigma_y=sigma)
    obs = degrade(sample_prior(prior, rng), spec, rng)
    return prior, spec, obs


def unroll(steps, x_f, y_f, mu_f):
    """Concrete step-by-step recursion, the reference for compose_transfer."""
    x = x_f.copy()
    for st in steps:
        x = st.G * x + st.Q * y_f + st.M * mu_f
    return x


class TestDenoisers:
    def test_prior_denoise_identity_at_full_signal(self):
        rng = np.random.default_rng(0)
        prior = make_synthetic_prior(8, 0.2)
        x_f = np.fft.fft(rng.standard_normal(8))
        np.testing.assert_allclose(prior_optimal_denoise(prior, x_f, 1.0), x_f, atol=1e-12)

    def test_prior_denoise_returns_mean_at_pure_noise(self):
        prior = make_synthetic_prior(8, 0.2, mu_const=1.5)
        x_f = np.fft.fft(np.random.default_rng(1).standard_normal(8))
        np.testing.assert_allclose(prior_optimal_denoise(prior, x_f, 0.0), prior.mu_f)

    def test_prior_denoise_matches_dense_solve(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            prior, spec, obs = _random_setup(rng)
            ab = float(rng.uniform(0.05, 0.95))
            x_t = rng.standard_normal(8)
            got = prior_optimal_denoise(prior, np.fft.fft(x_t), ab)
            Sigma0 = dense_operator_from_multiplier(prior.lambda0).real
            dense = dense_prior_denoiser(prior.mu_time(), Sigma0, x_t, ab)
            np.testing.assert_allclose(got, np.fft.fft(dense), atol=1e-10)

    def test_map_denoise_identity_at_full_signal(self):
        rng = np.random.default_rng(3)
        prior, spec, obs = _random_setup(rng, lam_floor=0.05)
        x_f = np.fft.fft(rng.standard_normal(8))
        got = posterior_optimal_denoise(prior, spec, obs.y_f, x_f, 1.0)
        np.testing.assert_allclose(got, x_f, atol=1e-9)

    def test_map_denoise_reduces_to_prior_denoise_at_huge_noise(self):
        from specdiff import with_noise

        rng = np.random.default_rng(4)
        prior, spec, obs = _random_setup(rng, sigma=0.3)
        x_f = np.fft.fft(rng.standard_normal(8))
        ab = 0.4
        got = posterior_optimal_denoise(prior, with_noise(spec, 1e6), obs.y_f, x_f, ab)
        want = prior_optimal_denoise(prior, x_f, ab)
        np.testing.assert_allclose(got, want, rtol=1e-6)

    def test_map_denoise_matches_dense_solve(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            prior, spec, obs = _random_setup(rng)
            ab = float(rng.uniform(0.05, 0.95))
            x_t = rng.standard_normal(8)
            got = posterior_optimal_denoise(prior, spec, obs.y_f, np.fft.fft(x_t), ab)
            Sigma0 = dense_operator_from_multiplier(prior.lambda0).real
            H = dense_operator_from_multiplier(spec.lambda_h).real
            dense = dense_map_denoiser(
                prior.mu_time(), Sigma0, H, spec.sigma_y, obs.y_time(), x_t, ab
            )
            np.testing.assert_allclose(got, np.fft.fft(dense), atol=1e-10)

    def test_map_denoise_is_stationary_point_of_log_posterior(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            prior, spec, obs = _random_setup(rng, lam_floor=0.05)
            ab = float(rng.uniform(0.05, 0.95))
            x_t = rng.standard_normal(8)
            out = posterior_optimal_denoise(prior, spec, obs.y_f, np.fft.fft(x_t), ab)
            x_hat = np.fft.ifft(out).real
            Sigma0_inv = dense_operator_from_multiplier(1.0 / prior.lambda0).real
            H = dense_operator_from_multiplier(spec.lambda_h).real

            def neg_lp(x0):
                return -log_posterior(
                    x0, prior.mu_time(), Sigma0_inv, H, spec.sigma_y, obs.y_time(), x_t, ab
                )

            g_hat = central_gradient(neg_lp, x_hat)
            scale = np.linalg.norm(central_gradient(neg_lp, x_t)) + 1.0
            assert np.linalg.norm(g_hat) / scale < 1e-8


class TestStepTransfers:
    def test_dps_zero_weight_is_prior_step(self):
        rng = np.random.default_rng(7)
        prior, spec, _ = _random_setup(rng)
        sched = ddim_subsequence(linear_ddpm_schedule(100), 4)
        coeffs = step_coeffs(sched, 3, prior)
        st = dps_step_transfer(coeffs, spec, 0.0)
        np.testing.assert_allclose(st.G, coeffs.a_s + coeffs.b_s * coeffs.c_s)
        np.testing.assert_array_equal(st.Q, np.zeros(8))
        np.testing.assert_allclose(st.M, coeffs.b_s * coeffs.d_s)

    def test_guidance_dead_on_unobserved_bins(self):
        prior = make_synthetic_prior(8, 0.2)
        spec = make_lpf(8, 0.5, sigma_y=0.1)
        sched = ddim_subsequence(linear_ddpm_schedule(100), 4)
        coeffs = step_coeffs(sched, 2, prior)
        st = dps_step_transfer(coeffs, spec, 0.8)
        blocked = spec.lambda_h == 0
        np.testing.assert_allclose(
            st.G[blocked], (coeffs.a_s + coeffs.b_s * coeffs.c_s)[blocked]
        )
        np.testing.assert_array_equal(st.Q[blocked], 0)
        np.testing.assert_allclose(st.M[blocked], (coeffs.b_s * coeffs.d_s)[blocked])

    def test_pigdm_zero_gain_is_prior_step(self):
        rng = np.random.default_rng(8)
        prior, spec, _ = _random_setup(rng)
        sched = ddim_subsequence(linear_ddpm_schedule(100), 4)
        coeffs = step_coeffs(sched, 2, prior)
        st = pigdm_step_transfer(coeffs, spec, 0.0, 0.5)
        np.testing.assert_array_equal(st.Q, np.zeros(8))
        np.testing.assert_allclose(st.G, coeffs.a_s + coeffs.b_s * coeffs.c_s)

    def test_pigdm_guidance_suppressed_by_huge_noise(self):
        rng = np.random.default_rng(9)
        prior, spec, _ = _random_setup(rng, sigma=1e6)
        sched = ddim_subsequence(linear_ddpm_schedule(100), 4)
        coeffs = step_coeffs(sched, 2, prior)
        st = pigdm_step_transfer(coeffs, spec, 1.0, 0.5)
        assert np.max(np.abs(st.Q)) < 1e-6

    def test_optimal_reduces_to_prior_step_at_huge_noise(self):
        rng = np.random.default_rng(10)
        prior, spec, _ = _random_setup(rng, sigma=1e8)
        sched = ddim_subsequence(linear_ddpm_schedule(100), 4)
        s = 2
        coeffs = step_coeffs(sched, s, prior)
        st = optimal_step_transfer(coeffs, spec, prior, sched.at(s))
        base = dps_step_transfer(coeffs, spec, 0.0)
        np.testing.assert_allclose(st.G, base.G, rtol=1e-6)
        np.testing.assert_allclose(st.M, base.M, rtol=1e-6)
        assert np.max(np.abs(st.Q)) < 1e-6

    def test_optimal_at_full_signal(self):
        rng = np.random.default_rng(11)
        prior, spec, _ = _random_setup(rng, lam_floor=0.05)
        sched = Schedule(alpha_bar=np.array([1.0, 0.5]), T_full=2)
        coeffs = step_coeffs(sched, 2, prior)
        st = optimal_step_transfer(coeffs, spec, prior, 1.0)
        np.testing.assert_allclose(st.G, np.full(8, coeffs.a_s + coeffs.b_s), atol=1e-12)
        np.testing.assert_array_equal(st.Q, np.zeros(8))
        np.testing.assert_array_equal(st.M, np.zeros(8))

    def test_optimal_matches_dense_update(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            prior, spec, obs = _random_setup(rng)
            sched = ddim_subsequence(linear_ddpm_schedule(200), 6)
            s = int(rng.integers(1, 7))
            ab = sched.at(s)
            coeffs = step_coeffs(sched, s, prior)
            st = optimal_step_transfer(coeffs, spec, prior, ab)
            x_s = rng.standard_normal(8)

            Sigma0 = dense_operator_from_multiplier(prior.lambda0).real
            H = dense_operator_from_multiplier(spec.lambda_h).real
            s2 = spec.sigma_y**2
            Sbar = (
                (1 - ab) * Sigma0 @ H.T @ H
                + s2 * ab * Sigma0
                + s2 * (1 - ab) * np.eye(8)
            )
            inv = np.linalg.inv(Sbar)
            dense_next = (
                coeffs.a_s * x_s
                + coeffs.b_s * inv @ (s2 * np.sqrt(ab) * Sigma0 @ x_s)
                + coeffs.b_s * inv @ ((1 - ab) * Sigma0 @ H.T @ obs.y_time())
                + coeffs.b_s * inv @ (s2 * (1 - ab) * prior.mu_time())
            )
            spectral_next = (
                st.G * np.fft.fft(x_s) + st.Q * obs.y_f + st.M * prior.mu_f
            )
            np.testing.assert_allclose(spectral_next, np.fft.fft(dense_next), atol=1e-10)


class TestTimeDomainOracle:
    """Single guided updates in the time domain must match the spectral transfers."""

    def test_guided_steps_match_spectral_transfers(self):
        # Exercise each sampler's single-step update on random interior steps
        # by advancing only the noisiest step of a two-step schedule.
        from specdiff.simulator import _run_batch

        rng = np.random.default_rng(14)
        kinds = ["dps", "pigdm", "optimal"]
        for kind in kinds:
            for _ in range(100):
                d = int(rng.integers(2, 12))
                prior, spec, obs = _random_setup(rng, d=d)
                ab_prev = float(rng.uniform(0.05, 0.999))
                ab_s = float(rng.uniform(0.01, ab_prev - 1e-3))
                two = Schedule(alpha_bar=np.array([ab_prev, ab_s]), T_full=2)
                coeffs = step_coeffs(two, 2, prior)
                x_s = rng.standard_normal(d)
                if kind == "dps":
                    zeta = float(rng.uniform(-2, 2))
                    st = dps_step_transfer(coeffs, spec, zeta)
                    guide = Guidance.dps_fixed([0.0, zeta])
                elif kind == "pigdm":
                    g = float(rng.uniform(-2, 2))
                    r = float(rng.uniform(0, 2))
                    st = pigdm_step_transfer(coeffs, spec, g, r)
                    guide = Guidance.pigdm([0.0, g], [1.0, r])
                else:
                    st = optimal_step_transfer(coeffs, spec, prior, ab_s)
                    guide = Guidance.optimal()
                cfg = SimConfig(prior=prior, spec=spec, schedule=two, guidance=guide)
                X, _, _ = _run_batch(cfg, obs, x_s[None, :], stop_at_s=1)
                want = st.G * np.fft.fft(x_s) + st.Q * obs.y_f + st.M * prior.mu_f
                np.testing.assert_allclose(
                    np.fft.fft(X[0]), want, atol=1e-10 * max(1.0, np.max(np.abs(want)))
                )


class TestCompose:
    def test_single_step_passthrough(self):
        rng = np.random.default_rng(15)
        st = StepTransfer(
            G=rng.standard_normal(4) + 0j,
            Q=rng.standard_normal(4) + 0j,
            M=rng.standard_normal(4) + 0j,
        )
        triple = compose_transfer([st])
        np.testing.assert_array_equal(triple.D1, st.G)
        np.testing.assert_array_equal(triple.D2, st.Q)
        np.testing.assert_array_equal(triple.D3, st.M)

    def test_two_step_hand_example_pins_ordering(self):
        # Steps applied s=2 then s=1 with G(1)=2, G(2)=3, Q=1 each:
        # D1 = 2*3 = 6 and D2 = Q(1) + G(1) Q(2) = 1 + 2 = 3.
        step2 = StepTransfer(G=np.array([3.0 + 0j]), Q=np.array([1.0 + 0j]), M=np.array([0j]))
        step1 = StepTransfer(G=np.array([2.0 + 0j]), Q=np.array([1.0 + 0j]), M=np.array([0j]))
        triple = compose_transfer([step2, step1])
        assert triple.D1[0] == 6.0
        assert triple.D2[0] == 3.0
        assert triple.D3[0] == 0.0

    def test_pure_product_when_no_sources(self):
        rng = np.random.default_rng(16)
        steps = [
            StepTransfer(G=rng.standard_normal(5) + 0j, Q=np.zeros(5, complex), M=np.zeros(5, complex))
            for _ in range(4)
        ]
        triple = compose_transfer(steps)
        np.testing.assert_allclose(triple.D1, np.prod([s.G for s in steps], axis=0))
        np.testing.assert_array_equal(triple.D2, np.zeros(5))
        np.testing.assert_array_equal(triple.D3, np.zeros(5))

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            compose_transfer([])

    def test_recursion_equals_closed_form_all_samplers(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            d = int(rng.integers(2, 16))
            prior, spec, obs = _random_setup(rng, d=d)
            S = int(rng.integers(1, 20))
            sched = ddim_subsequence(linear_ddpm_schedule(400), S)
            weight_sets = [
                WeightSchedule.dps(rng.uniform(-1, 1, sched.S)),
                WeightSchedule.pigdm(rng.uniform(-1, 1, sched.S), rng.uniform(0, 1, sched.S)),
            ]
            x_f = np.fft.fft(rng.standard_normal(d))
            for weights in weight_sets:
                steps = sampler_step_transfers(weights, prior, spec, sched)
                triple = compose_transfer(steps)
                direct = unroll(steps, x_f, obs.y_f, prior.mu_f)
                closed = triple.D1 * x_f + triple.D2 * obs.y_f + triple.D3 * prior.mu_f
                np.testing.assert_allclose(
                    closed, direct, atol=1e-12 * max(1.0, np.max(np.abs(direct)))
                )
            steps = ideal_step_transfers(prior, spec, sched)
            triple = compose_transfer(steps)
            direct = unroll(steps, x_f, obs.y_f, prior.mu_f)
            closed = triple.D1 * x_f + triple.D2 * obs.y_f + triple.D3 * prior.mu_f
            np.testing.assert_allclose(
                closed, direct, atol=1e-12 * max(1.0, np.max(np.abs(direct)))
            )

    def test_guidance_off_equivalence_across_samplers(self):
        rng = np.random.default_rng(18)
        prior, spec, obs = _random_setup(rng)
        sched = ddim_subsequence(linear_ddpm_schedule(200), 9)
        dps0 = compose_transfer(
            sampler_step_transfers(WeightSchedule.dps(np.zeros(9)), prior, spec, sched)
        )
        pigdm0 = compose_transfer(
            sampler_step_transfers(
                WeightSchedule.pigdm(np.zeros(9), np.ones(9)), prior, spec, sched
            )
        )
        for a, b in ((dps0.D1, pigdm0.D1), (dps0.D2, pigdm0.D2), (dps0.D3, pigdm0.D3)):
            np.testing.assert_allclose(a, b, atol=1e-14)
        assert np.max(np.abs(dps0.D2)) == 0.0


class TestOutputDistribution:
    def test_direct_passthrough_triple(self):
        rng = np.random.default_rng(19)
        prior, spec, obs = _random_setup(rng)
        triple_like = compose_transfer(
            [StepTransfer(G=np.zeros(8, complex), Q=np.ones(8, complex), M=np.zeros(8, complex))]
        )
        dist = output_distribution(triple_like, obs, prior)
        np.testing.assert_array_equal(dist.mean, obs.y_f)
        np.testing.assert_array_equal(dist.var, np.zeros(8))

    def test_zero_weight_dps_mean_ignores_measurement(self):
        rng = np.random.default_rng(20)
        prior, spec, obs = _random_setup(rng)
        sched = ddim_subsequence(linear_ddpm_schedule(100), 6)
        triple = compose_transfer(
            sampler_step_transfers(WeightSchedule.dps(np.zeros(6)), prior, spec, sched)
        )
        assert np.max(np.abs(triple.D2)) == 0.0

    def test_unobserved_bins_ignore_measurement_for_every_sampler(self):
        rng = np.random.default_rng(21)
        prior = make_synthetic_prior(10, 0.3, mu_const=0.5)
        spec = make_lpf(10, 0.4, sigma_y=0.2)
        sched = ddim_subsequence(linear_ddpm_schedule(150), 7)
        blocked = spec.lambda_h == 0
        triples = [
            compose_transfer(
                sampler_step_transfers(
                    WeightSchedule.dps(rng.uniform(-1, 1, 7)), prior, spec, sched
                )
            ),
            compose_transfer(
                sampler_step_transfers(
                    WeightSchedule.pigdm(rng.uniform(-1, 1, 7), rng.uniform(0, 1, 7)),
                    prior,
                    spec,
                    sched,
                )
            ),
            ideal_triple(prior, spec, sched),
        ]
        for triple in triples:
            np.testing.assert_array_equal(triple.D2[blocked], np.zeros(blocked.sum()))
