"""Volatility-block oracles.

The sharp checks here compare MCMC output against grid quadrature of the
exact conditional densities (total variation on equal-probability bins),
so any error in the Metropolis targets shows up directly.  Prior-
reproduction tests exploit the empty-path fallbacks, which must sample
the priors exactly.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from _oracles import H_SITE, h_site_chain, h_site_logpdf, tv_to_quadrature
from bicnet import sv
from bicnet.simulate import gen_sv_path
from bicnet.types import Hyperparameters

HYPER = Hyperparameters()


class TestHPathSites:
    """Freeze two of three sites with zero proposal steps; the free site
    then explores its exact full conditional, which quadrature verifies."""

    @pytest.mark.parametrize("site", [0, 1, 2])
    def test_site_conditional_matches_quadrature(self, site):
        samples, h_final = h_site_chain(site)
        frozen = [i for i in range(3) if i != site]
        np.testing.assert_array_equal(h_final[frozen], H_SITE["start"][frozen])
        tv = tv_to_quadrature(samples, h_site_logpdf(site), -8.0, 8.0)
        assert tv < 0.05, f"site {site}: TV {tv:.4f}"

    def test_zero_steps_freeze_whole_path(self):
        tuning = sv.SvTuning(h_steps=np.zeros(3))
        gen = np.random.default_rng(0)
        h = H_SITE["start"].copy()
        counters = sv.SvCounters()
        sv.update_h_path(H_SITE["f"], h, H_SITE["mu"], H_SITE["phi"],
                         H_SITE["delta2"], tuning, gen, counters=counters)
        np.testing.assert_array_equal(h, H_SITE["start"])
        assert counters.h_acc == 3  # null proposals always accept


class TestHPathMechanics:
    def test_bound_guard_counts_and_confines(self):
        # near-flat target (huge delta2) with giant steps: many proposals
        # land beyond the +-40 overflow guard and must be rejected there
        tuning = sv.SvTuning(h_steps=np.full(50, 120.0))
        gen = np.random.default_rng(1)
        h = np.zeros(50)
        counters = sv.SvCounters()
        for _ in range(40):
            sv.update_h_path(np.zeros(50), h, 0.0, 0.0, 1e8, tuning, gen,
                             counters=counters)
        assert counters.h_guard > 0
        assert np.all(np.abs(h) <= 40.0)

    def test_adaptation_grows_accepting_steps_and_clips(self):
        tuning = sv.SvTuning(h_steps=np.full(4, 1e-3))
        gen = np.random.default_rng(2)
        h = np.zeros(4)
        for _ in range(400):
            sv.update_h_path(np.ones(4), h, 0.0, 0.5, 0.25, tuning, gen,
                             adapt_gamma=0.5)
        # microscopic proposals are always accepted, so the scale must rise
        assert np.all(tuning.h_steps > 1e-3)
        assert np.all(tuning.h_steps <= 10.0)

    def test_no_adaptation_when_gamma_zero(self):
        tuning = sv.SvTuning(h_steps=np.full(6, 0.37))
        gen = np.random.default_rng(3)
        h = np.zeros(6)
        for _ in range(50):
            sv.update_h_path(np.ones(6), h, 0.0, 0.5, 0.25, tuning, gen)
        np.testing.assert_array_equal(tuning.h_steps, np.full(6, 0.37))

    def test_adapted_acceptance_near_target(self):
        gen = np.random.default_rng(4)
        h_true = gen_sv_path(0.0, 0.9, 0.25, 200, gen)
        f = gen.normal(size=200) * np.exp(0.5 * h_true)
        tuning = sv.SvTuning.fresh(200)
        h = np.zeros(200)
        for _ in range(3000):
            sv.update_h_path(f, h, 0.0, 0.9, 0.25, tuning, gen,
                             adapt_gamma=0.1)
        counters = sv.SvCounters()
        for _ in range(2000):
            sv.update_h_path(f, h, 0.0, 0.9, 0.25, tuning, gen,
                             counters=counters)
        rate = counters.h_acc / counters.h_tot
        assert abs(rate - sv.TARGET_ACCEPT) < 0.08

    def test_counters_report(self):
        counters = sv.SvCounters()
        assert np.isnan(counters.as_dict()["h_accept_rate"])
        counters.h_acc, counters.h_tot = 44, 100
        assert counters.as_dict()["h_accept_rate"] == 0.44


class TestMuUpdate:
    def test_matches_quadrature_moments(self):
        gen = np.random.default_rng(10)
        h = gen_sv_path(0.6, 0.7, 0.4, 15, gen)
        hyper = Hyperparameters(b_mu=0.2, B_mu=0.8)

        def logpdf(m):
            lp = -(m - 0.2) ** 2 / (2 * 0.8)
            lp += -(1 - 0.49) * (h[0] - m) ** 2 / (2 * 0.4)
            resid = h[1:] - m - 0.7 * (h[:-1] - m)
            return lp - np.dot(resid, resid) / (2 * 0.4)

        x = np.linspace(-6, 6, 40001)
        w = np.exp([logpdf(v) - logpdf(0.0) for v in x])
        w /= w.sum()
        q_mean = float(x @ w)
        q_var = float(((x - q_mean) ** 2) @ w)

        draws = np.array([sv.update_mu(h, 0.7, 0.4, hyper, gen)
                          for _ in range(100_000)])
        se_mean = np.sqrt(q_var / draws.size)
        assert abs(draws.mean() - q_mean) < 4 * se_mean
        assert abs(draws.var() - q_var) < 4 * q_var * np.sqrt(2.0 / draws.size)

    def test_iid_case_has_closed_form(self):
        # phi = 0 reduces to iid observations of mu: textbook conjugacy
        gen = np.random.default_rng(11)
        h = gen.normal(0.5, 0.6, size=20)
        hyper = Hyperparameters(b_mu=0.3, B_mu=1.0)
        prec = 20 / 0.25 + 1.0
        mean = (h.sum() / 0.25 + 0.3) / prec
        draws = np.array([sv.update_mu(h, 0.0, 0.25, hyper, gen)
                          for _ in range(100_000)])
        assert abs(draws.mean() - mean) < 4 / np.sqrt(prec * draws.size)
        assert abs(draws.var() - 1 / prec) < 4 / prec * np.sqrt(2 / draws.size)

    def test_empty_path_reproduces_prior(self):
        gen = np.random.default_rng(12)
        hyper = Hyperparameters(b_mu=-0.4, B_mu=2.0)
        draws = np.array([sv.update_mu(np.empty(0), 0.9, 0.25, hyper, gen)
                          for _ in range(200_000)])
        assert abs(draws.mean() + 0.4) < 4 * np.sqrt(2.0 / draws.size)
        assert abs(draws.var() - 2.0) < 4 * 2.0 * np.sqrt(2.0 / draws.size)
        assert stats.kstest(draws, "norm", args=(-0.4, np.sqrt(2.0))).pvalue > 1e-3


class TestPhiUpdate:
    def test_chain_matches_quadrature(self):
        gen = np.random.default_rng(20)
        h = gen_sv_path(0.0, 0.8, 0.25, 300, gen)
        x = h  # mu = 0

        def logpdf(p):
            lp = (HYPER.a_phi - 1) * np.log1p(p) + (HYPER.b_phi - 1) * np.log1p(-p)
            lp += 0.5 * np.log1p(-p * p)
            lp -= (1 - p * p) * x[0] ** 2 / (2 * 0.25)
            resid = x[1:] - p * x[:-1]
            return lp - np.dot(resid, resid) / (2 * 0.25)

        phi, draws = 0.5, np.empty(20000)
        counters = sv.SvCounters()
        for i in range(500 + draws.size):
            phi = sv.update_phi(h, 0.0, phi, 0.25, HYPER, gen, counters)
            if i >= 500:
                draws[i - 500] = phi
        assert counters.phi_acc / counters.phi_tot > 0.8
        tv = tv_to_quadrature(draws, logpdf, -0.999, 0.999)
        assert tv < 0.05, f"TV {tv:.4f}"

    def test_concentrates_on_truth(self):
        gen = np.random.default_rng(21)
        h = gen_sv_path(0.0, 0.8, 0.25, 5000, gen)
        phi = 0.0
        draws = []
        for _ in range(3000):
            phi = sv.update_phi(h, 0.0, phi, 0.25, HYPER, gen)
            draws.append(phi)
        assert abs(np.mean(draws[500:]) - 0.8) < 0.03

    def test_empty_path_reproduces_prior(self):
        gen = np.random.default_rng(22)
        counters = sv.SvCounters()
        draws = np.array([
            sv.update_phi(np.empty(0), 0.0, 0.5, 0.25, HYPER, gen, counters)
            for _ in range(100_000)
        ])
        assert counters.phi_acc == counters.phi_tot == draws.size
        a, b = HYPER.a_phi, HYPER.b_phi
        mean = 2 * a / (a + b) - 1
        var = 4 * a * b / ((a + b) ** 2 * (a + b + 1))
        assert abs(draws.mean() - mean) < 4 * np.sqrt(var / draws.size)
        assert abs(draws.var() - var) < 4 * var * np.sqrt(2.0 / draws.size)

    @given(st.integers(0, 2**32 - 1), st.floats(-0.95, 0.95),
           st.integers(1, 12))
    @settings(max_examples=40, deadline=None)
    def test_result_always_stationary(self, seed, phi0, t_len):
        gen = np.random.default_rng(seed)
        h = gen.normal(size=t_len)
        out = sv.update_phi(h, 0.0, phi0, 0.25, HYPER, gen)
        assert -1.0 < out < 1.0


class TestDelta2Update:
    def run_chain(self, h, n_keep, seed, burn=3000):
        gen = np.random.default_rng(seed)
        tuning = sv.SvTuning(h_steps=np.empty(0))
        d2 = 0.5
        for _ in range(burn):  # adapt the proposal scale first
            d2 = sv.update_delta2(h, 0.0, 0.6, d2, HYPER, tuning, gen,
                                  adapt_gamma=0.05)
        out = np.empty(n_keep)
        for i in range(n_keep):
            d2 = sv.update_delta2(h, 0.0, 0.6, d2, HYPER, tuning, gen)
            out[i] = d2
        return out

    def test_chain_matches_quadrature(self):
        gen = np.random.default_rng(30)
        h = gen_sv_path(0.0, 0.6, 0.3, 40, gen)
        x = h
        sse = (1 - 0.36) * x[0] ** 2 + np.sum((x[1:] - 0.6 * x[:-1]) ** 2)

        def logpdf(v):  # density of log(delta2)
            return (-0.5 * (40 - 1) * v - 0.5 * sse * np.exp(-v)
                    - np.exp(v) / (2 * HYPER.B_delta))

        draws = np.log(self.run_chain(h, 40000, seed=31))
        tv = tv_to_quadrature(draws, logpdf, -12.0, 4.0)
        assert tv < 0.05, f"TV {tv:.4f}"

    def test_empty_path_reproduces_gamma_prior(self):
        draws = self.run_chain(np.empty(0), 30000, seed=32)[::30]
        # prior: Gamma(1/2, rate 1/(2 B_delta))
        p = stats.kstest(draws, "gamma",
                         args=(0.5, 0.0, 2.0 * HYPER.B_delta)).pvalue
        assert p > 1e-3

    def test_concentrates_on_truth(self):
        gen = np.random.default_rng(33)
        h = gen_sv_path(0.0, 0.6, 0.25, 5000, gen)
        x = h
        tuning = sv.SvTuning(h_steps=np.empty(0))
        d2, draws = 1.0, []
        for it in range(4000):
            d2 = sv.update_delta2(x, 0.0, 0.6, d2, HYPER, tuning, gen,
                                  adapt_gamma=0.05 if it < 1000 else 0.0)
            if it >= 1000:
                draws.append(d2)
        assert abs(np.mean(draws) - 0.25) < 0.03

    def test_step_clipped(self):
        gen = np.random.default_rng(34)
        tuning = sv.SvTuning(h_steps=np.empty(0), delta2_step=9.9)
        d2 = 0.5
        for _ in range(300):
            d2 = sv.update_delta2(np.empty(0), 0.0, 0.0, d2, HYPER, tuning,
                                  gen, adapt_gamma=5.0)
        assert 1e-3 <= tuning.delta2_step <= 10.0


class FakeGen:
    """Deterministic stand-in driving Metropolis branches."""

    def __init__(self, gammas=(), normals=(), uniforms=()):
        self.gammas = list(gammas)
        self.normals = list(normals)
        self.uniforms = list(uniforms)

    def gamma(self, shape, scale):
        return self.gammas.pop(0)

    def standard_normal(self, size=None):
        v = self.normals.pop(0)
        return v if size is None else np.full(size, v)

    def random(self, size=None):
        v = self.uniforms.pop(0)
        return v if size is None else np.full(size, v)


class TestInterweave:
    def test_flat_prior_draws_match_exact_conditional(self):
        """With a flat level prior the level proposal *is* the conditional:
        acceptance must be ~1 and exp(-mu) must follow the implied Gamma."""
        gen = np.random.default_rng(40)
        t_len = 60
        mu0, delta2 = 0.4, 0.36
        h = gen_sv_path(mu0, 0.7, delta2, t_len, gen)
        f = gen.normal(size=t_len) * np.exp(0.5 * h)
        hyper = Hyperparameters(b_mu=0.0, B_mu=1e12)
        tuning = sv.SvTuning(h_steps=np.empty(0))
        c = float(np.sum(f * f * np.exp(-(h - mu0))))  # -delta*h_tilde = mu0-h

        counters = sv.SvCounters()
        samples = np.empty(4000)
        for i in range(samples.size):
            h_i = h.copy()
            new_mu, _ = sv.interweave_asis(f, h_i, mu0, 0.7, delta2, hyper,
                                           tuning, gen, counters=counters)
            samples[i] = new_mu
        assert counters.nc_mu_acc / counters.nc_mu_tot > 0.999
        p = stats.kstest(np.exp(-samples), "gamma",
                         args=(0.5 * t_len, 0.0, 2.0 / c)).pvalue
        assert p > 1e-3

    def test_double_rejection_leaves_state_bitwise_unchanged(self):
        gen0 = np.random.default_rng(41)
        h = gen_sv_path(0.2, 0.8, 0.25, 30, gen0)
        f = gen0.normal(size=30) * np.exp(0.5 * h)
        h_before = h.copy()
        tuning = sv.SvTuning(h_steps=np.empty(0))
        counters = sv.SvCounters()
        # gamma -> tiny y -> mu proposal ~690 -> prior ratio rejects it;
        # huge normal -> |delta| proposal beyond the bound -> auto-reject
        fake = FakeGen(gammas=[1e-300], normals=[1e6], uniforms=[0.5, 0.5])
        mu, delta2 = sv.interweave_asis(f, h, 0.2, 0.8, 0.25, Hyperparameters(),
                                        tuning, fake, counters=counters)
        assert (mu, delta2) == (0.2, 0.25)
        np.testing.assert_array_equal(h, h_before)
        assert counters.nc_mu_acc == 0 and counters.nc_delta_acc == 0
        # the out-of-bound delta branch must not consume an acceptance draw
        assert len(fake.uniforms) == 1

    def test_accepted_move_rebuilds_path_consistently(self):
        gen = np.random.default_rng(42)
        h = gen_sv_path(0.3, 0.8, 0.25, 50, gen)
        f = gen.normal(size=50) * np.exp(0.5 * h)
        h_tilde = (h - 0.3) / 0.5
        tuning = sv.SvTuning(h_steps=np.empty(0))
        moved = False
        for _ in range(50):
            mu, delta2 = sv.interweave_asis(f, h, 0.3, 0.8, 0.25,
                                            Hyperparameters(), tuning, gen)
            if (mu, delta2) != (0.3, 0.25):
                moved = True
                break
        assert moved
        np.testing.assert_allclose(
            h, mu + np.sqrt(delta2) * h_tilde, rtol=0, atol=1e-12
        )


@pytest.mark.slow
class TestBlockRecovery:
    def run_block(self, f, h0, n_sweeps, burn, seed, t_len):
        gen = np.random.default_rng(seed)
        tuning = sv.SvTuning.fresh(t_len)
        h = h0.copy()
        mu, phi, delta2 = 0.0, 0.8, 0.5
        keep = {"mu": [], "phi": [], "delta2": [], "h": np.zeros(t_len)}
        for it in range(n_sweeps):
            gamma = 2.0 / (20 + it) ** 0.6 if it < burn else 0.0
            mu, phi, delta2 = sv.sv_block_sweep(
                f, h, mu, phi, delta2, HYPER, tuning, gen, adapt_gamma=gamma
            )
            if it >= burn:
                keep["mu"].append(mu)
                keep["phi"].append(phi)
                keep["delta2"].append(delta2)
                keep["h"] += h
        keep["h"] /= n_sweeps - burn
        return keep

    def test_parameters_recovered(self):
        gen = np.random.default_rng(50)
        t_len = 3000
        h_true = gen_sv_path(0.5, 0.9, 0.25, t_len, gen)
        f = gen.normal(size=t_len) * np.exp(0.5 * h_true)
        keep = self.run_block(f, np.zeros(t_len), 20000, 5000, 51, t_len)
        assert abs(np.mean(keep["mu"]) - 0.5) < 0.15
        assert abs(np.mean(keep["phi"]) - 0.9) < 0.05
        assert abs(np.mean(keep["delta2"]) - 0.25) < 0.10

    def test_path_tracked(self):
        gen = np.random.default_rng(52)
        t_len = 500
        h_true = gen_sv_path(0.0, 0.95, 0.25, t_len, gen)
        f = gen.normal(size=t_len) * np.exp(0.5 * h_true)
        keep = self.run_block(f, np.zeros(t_len), 20000, 5000, 53, t_len)
        r = np.corrcoef(keep["h"], h_true)[0, 1]
        assert r > 0.7, f"posterior-mean path correlation {r:.3f}"
