"""Full Gibbs/Metropolis sampler: sweep scheduling, burn-in, thinning,
multi-chain orchestration, draw alignment, and acceptance bookkeeping.

Sweep order within one iteration is: noise variances, volatility blocks,
loadings, factors, group inclusion map.  Every random draw comes from a
stream keyed by (chain seed, sweep, block kind, block indices), so any
parallel schedule over subjects produces exactly the serial chain.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import loadings as load_mod
from . import posthoc
from . import rng as rng_mod
from . import sv as sv_mod
from .data import pooled_variance
from .types import (
    ChainState,
    Dataset,
    Dimensions,
    Hyperparameters,
    PosteriorDraws,
    ValidationError,
    validate_state,
)

STORED_VARIABLES = (
    "loadings", "indicators", "sv_mu", "sv_phi", "sv_delta2",
    "noise_var", "incl_prob", "loglik",
)

# Proposal sd (in log scale) for the loading/amplitude scale-transfer move.
_SCALE_STEP = 0.3


@dataclass
class FitConfig:
    """Run-level settings for one fit."""

    n_factors: int
    n_iter: int = 2000
    burn_in: int = 1000
    thin: int = 1
    n_chains: int = 1
    seed: int = 0
    threads: int = 1
    # None = decide from the data: the group layer is skipped for a
    # single subject, where the inclusion map has no pooling to do
    single_subject: bool | None = None
    hyper: Hyperparameters = field(default_factory=Hyperparameters)

    def validate(self) -> None:
        if self.n_factors < 1:
            raise ValidationError("n_factors must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValidationError("need 0 <= burn_in < n_iter")
        if self.thin < 1 or self.n_chains < 1 or self.threads < 1:
            raise ValidationError("thin, n_chains, threads must be >= 1")
        self.hyper.validate()


@dataclass
class ChainResult:
    """Everything one chain produces, already alignment-consistent."""

    chain_seed: int
    draws: PosteriorDraws
    reference: np.ndarray
    mean_factors: list[np.ndarray]
    mean_log_vol: list[np.ndarray]
    mean_amplitude: list[np.ndarray]
    mean_signal: list[np.ndarray]
    loglik_trace: np.ndarray
    acceptance: dict
    tuning_summary: dict
    final_state: ChainState


@dataclass
class FitResult:
    config: FitConfig
    dims: Dimensions
    chains: list[ChainResult]
    d_sigma: float


def adapt_schedule(sweep: int, burn_in: int) -> float:
    """Vanishing adaptation rate, frozen to 0 after burn-in."""
    if sweep > burn_in:
        return 0.0
    return 2.0 / (20.0 + sweep) ** 0.6


class Sampler:
    """One dataset + config, runnable as one or many chains."""

    def __init__(self, dataset: Dataset, config: FitConfig):
        dataset.validate()
        config.validate()
        self.config = config
        self.hyper = config.hyper
        self.dims = dataset.dims(config.n_factors)
        self.dims.validate()
        self.dataset = dataset
        if config.single_subject is None:
            self.group_layer = self.dims.n_subjects > 1
        else:
            self.group_layer = not config.single_subject
        self.prior_map = self.hyper.resolved_prior_map(
            self.dims.n_regions, self.dims.n_factors
        )
        if self.hyper.d_sigma is not None:
            self.d_sigma = float(self.hyper.d_sigma)
        else:
            var = pooled_variance(dataset)
            scale = self.hyper.c_sigma - 1.0
            # prior mean d/(c-1) matches the pooled variance when c > 1
            self.d_sigma = var * scale if scale > 0 else var
        self._set_series(dataset.series)

    def _set_series(self, series: list[list[np.ndarray]]) -> None:
        d = self.dims
        self.offsets = np.concatenate([[0], np.cumsum(d.n_times)]).astype(np.int64)
        self.cond_of_t = np.repeat(
            np.arange(d.n_conditions, dtype=np.int32), d.n_times
        )
        self.y_cat = [
            np.concatenate([series[g][s] for g in range(d.n_conditions)], axis=1)
            for s in range(d.n_subjects)
        ]

    def replace_series(self, series: list[list[np.ndarray]]) -> None:
        """Swap in regenerated data of identical shape (simulation checks)."""
        self._set_series(series)

    # -- state ------------------------------------------------------------

    def initial_state(self, chain_seed: int) -> tuple[ChainState, list]:
        """Overdispersed-but-stable start plus fresh proposal tuning.

        All indicators start on, loadings at one tenth of a slab draw,
        factors at the h=0 prior, unit noise; the volatility level starts
        at zero with the persistence at its prior mean.
        """
        d = self.dims
        gen = rng_mod.stream(chain_seed, 0, rng_mod.KIND_INIT)
        hyper = self.hyper
        phi0 = 2.0 * hyper.a_phi / (hyper.a_phi + hyper.b_phi) - 1.0
        state = ChainState(
            loadings=0.1 * gen.normal(
                0.0, np.sqrt(hyper.tau2_load),
                size=(d.n_subjects, d.n_regions, d.n_factors),
            ),
            indicators=np.ones(
                (d.n_subjects, d.n_regions, d.n_factors), dtype=np.int8
            ),
            factors=[
                gen.standard_normal((d.n_subjects, d.n_factors, t_g))
                for t_g in d.n_times
            ],
            log_vol=[
                np.zeros((d.n_subjects, d.n_factors, t_g)) for t_g in d.n_times
            ],
            sv_mu=np.zeros((d.n_conditions, d.n_subjects, d.n_factors)),
            sv_phi=np.full((d.n_conditions, d.n_subjects, d.n_factors), phi0),
            sv_delta2=np.full(
                (d.n_conditions, d.n_subjects, d.n_factors), hyper.B_delta
            ),
            noise_var=np.ones((d.n_conditions, d.n_subjects, d.n_regions)),
            incl_prob=self.prior_map.copy(),
        )
        tunings = [
            [
                [sv_mod.SvTuning.fresh(t_g) for _ in range(d.n_factors)]
                for _ in range(d.n_subjects)
            ]
            for t_g in d.n_times
        ]
        return state, tunings

    # -- one sweep --------------------------------------------------------

    def _subject_pass(
        self,
        state: ChainState,
        tunings: list,
        s: int,
        sweep: int,
        chain_seed: int,
        gamma: float,
        counters: sv_mod.SvCounters,
    ) -> float:
        d = self.dims
        hyper = self.hyper
        y_cat = self.y_cat[s]
        lam = state.loadings[s]
        z = state.indicators[s]
        f_cat = np.concatenate(
            [state.factors[g][s] for g in range(d.n_conditions)], axis=1
        )
        resid = y_cat - lam @ f_cat

        for g in range(d.n_conditions):
            gen = rng_mod.stream(chain_seed, sweep, rng_mod.KIND_NOISE, g, s)
            sl = slice(self.offsets[g], self.offsets[g + 1])
            state.noise_var[g, s] = load_mod.update_noise_variance(
                resid[:, sl], hyper, self.d_sigma, gen
            )

        for g in range(d.n_conditions):
            h_gs = state.log_vol[g][s]
            f_gs = state.factors[g][s]
            for k in range(d.n_factors):
                gen = rng_mod.stream(chain_seed, sweep, rng_mod.KIND_SV, g, s, k)
                mu, phi, delta2 = sv_mod.sv_block_sweep(
                    f_gs[k], h_gs[k],
                    float(state.sv_mu[g, s, k]),
                    float(state.sv_phi[g, s, k]),
                    float(state.sv_delta2[g, s, k]),
                    hyper, tunings[g][s][k], gen, gamma, counters,
                )
                state.sv_mu[g, s, k] = mu
                state.sv_phi[g, s, k] = phi
                state.sv_delta2[g, s, k] = delta2

        gen = rng_mod.stream(chain_seed, sweep, rng_mod.KIND_LOADINGS, s)
        inv_s2 = np.ascontiguousarray((1.0 / state.noise_var[:, s, :]).T)
        load_mod.update_loadings_subject(
            resid, f_cat, inv_s2, self.cond_of_t, lam, z,
            state.incl_prob, hyper.tau2_load, gen,
        )

        loglik = 0.0
        for g in range(d.n_conditions):
            gen = rng_mod.stream(chain_seed, sweep, rng_mod.KIND_FACTORS, g, s)
            sl = slice(self.offsets[g], self.offsets[g + 1])
            y_g = y_cat[:, sl]
            state.factors[g][s] = load_mod.update_factors_block(
                y_g, lam, state.log_vol[g][s], state.noise_var[g, s], gen
            )
            loglik += load_mod.observed_loglik(
                y_g, lam, state.log_vol[g][s], state.noise_var[g, s]
            )

        self._scale_transfer(state, s, sweep, chain_seed, counters)
        return loglik

    def _scale_transfer(
        self,
        state: ChainState,
        s: int,
        sweep: int,
        chain_seed: int,
        counters: sv_mod.SvCounters,
    ) -> None:
        """Metropolis move along each factor's loading/amplitude scale ridge.

        The likelihood only sees the product of a loading column with its
        factor path, so ``lam_k -> c lam_k``, ``f_k -> f_k / c``,
        ``h_k -> h_k - 2 log c``, ``mu_k -> mu_k - 2 log c`` leaves it (and
        every volatility transition term) unchanged.  Plain Gibbs diffuses
        along that ridge very slowly because the loadings are pinned by the
        factors and vice versa; this move jumps along it directly so the
        split settles where the loading slab and level priors put it.  The
        factor-path Jacobian cancels against the factor prior's
        normalisation, leaving only the slab term, the level prior and the
        volume factor c^m for the m active loadings.
        """
        d = self.dims
        hyper = self.hyper
        lam = state.loadings[s]
        gen = rng_mod.stream(chain_seed, sweep, rng_mod.KIND_SCALE, s)
        for k in range(d.n_factors):
            u = _SCALE_STEP * gen.standard_normal()
            accept_u = gen.random()
            lam_k = lam[:, k]
            ssq = float(lam_k @ lam_k)
            m = int(state.indicators[s, :, k].sum())
            log_alpha = m * u - np.expm1(2.0 * u) * ssq / (2.0 * hyper.tau2_load)
            for g in range(d.n_conditions):
                mu_g = float(state.sv_mu[g, s, k]) - hyper.b_mu
                log_alpha -= (
                    (mu_g - 2.0 * u) ** 2 - mu_g ** 2
                ) / (2.0 * hyper.B_mu)
            counters.scale_tot += 1
            if np.log(accept_u) < log_alpha:
                scale = np.exp(u)
                lam[:, k] *= scale
                for g in range(d.n_conditions):
                    state.factors[g][s][k] /= scale
                    state.log_vol[g][s][k] -= 2.0 * u
                    state.sv_mu[g, s, k] -= 2.0 * u
                counters.scale_acc += 1

    def sweep(
        self,
        state: ChainState,
        tunings: list,
        sweep_idx: int,
        chain_seed: int,
        gamma: float = 0.0,
        counters: sv_mod.SvCounters | None = None,
        executor: ThreadPoolExecutor | None = None,
    ) -> np.ndarray:
        """One full iteration over every block; returns per-subject loglik."""
        d = self.dims
        if counters is None:
            counters = sv_mod.SvCounters()
        parts = [sv_mod.SvCounters() for _ in range(d.n_subjects)]
        if executor is None:
            logliks = np.array([
                self._subject_pass(
                    state, tunings, s, sweep_idx, chain_seed, gamma, parts[s]
                )
                for s in range(d.n_subjects)
            ])
        else:
            futures = [
                executor.submit(
                    self._subject_pass,
                    state, tunings, s, sweep_idx, chain_seed, gamma, parts[s],
                )
                for s in range(d.n_subjects)
            ]
            logliks = np.array([f.result() for f in futures])
        for part in parts:
            for fld in dataclasses.fields(sv_mod.SvCounters):
                setattr(
                    counters, fld.name,
                    getattr(counters, fld.name) + getattr(part, fld.name),
                )
        if self.group_layer:
            gen = rng_mod.stream(chain_seed, sweep_idx, rng_mod.KIND_GROUP_PROB)
            state.incl_prob = load_mod.update_group_inclusion(
                state.indicators, self.hyper, self.prior_map, gen
            )
        return logliks

    # -- full chains ------------------------------------------------------

    def run_chain(
        self, chain_seed: int, executor: ThreadPoolExecutor | None = None
    ) -> ChainResult:
        cfg = self.config
        d = self.dims
        state, tunings = self.initial_state(chain_seed)
        counters = sv_mod.SvCounters()
        draws = PosteriorDraws(burn_in=cfg.burn_in, thin=cfg.thin)
        loglik_trace = np.empty(cfg.n_iter)
        ref_accum = np.zeros_like(state.loadings)
        ref_count = 0
        reference: np.ndarray | None = None
        mean_f = [np.zeros((d.n_subjects, d.n_factors, t)) for t in d.n_times]
        mean_h = [np.zeros((d.n_subjects, d.n_factors, t)) for t in d.n_times]
        mean_a = [np.zeros((d.n_subjects, d.n_factors, t)) for t in d.n_times]
        mean_sig = [np.zeros((d.n_subjects, d.n_regions, t)) for t in d.n_times]

        for it in range(cfg.n_iter):
            sweep_no = it + 1
            gamma = adapt_schedule(sweep_no, cfg.burn_in)
            logliks = self.sweep(
                state, tunings, sweep_no, chain_seed, gamma, counters, executor
            )
            loglik_trace[it] = logliks.sum()

            if cfg.burn_in // 2 <= it < cfg.burn_in:
                ref_accum += np.abs(state.loadings)
                ref_count += 1

            if not draws.keeps(it):
                continue
            if reference is None:
                if ref_count > 0:
                    reference = ref_accum / ref_count
                else:
                    reference = np.abs(state.loadings)
            plan = posthoc.plan_for_draw(state.loadings, reference)
            draws.append(
                it,
                loadings=plan.apply_columns(state.loadings),
                indicators=plan.apply_columns(state.indicators, signed=False),
                sv_mu=plan.apply_columns(state.sv_mu, signed=False),
                sv_phi=plan.apply_columns(state.sv_phi, signed=False),
                sv_delta2=plan.apply_columns(state.sv_delta2, signed=False),
                noise_var=state.noise_var,
                incl_prob=plan.apply_columns(state.incl_prob, signed=False),
                loglik=logliks,
            )
            for g in range(d.n_conditions):
                f_al = plan.apply_rows(state.factors[g])
                h_al = plan.apply_rows(state.log_vol[g], signed=False)
                mean_f[g] += f_al
                mean_h[g] += h_al
                mean_a[g] += np.exp(h_al)
                # the fitted signal is orientation- and scale-invariant,
                # so it averages on the raw state
                mean_sig[g] += state.loadings @ state.factors[g]

        n_draws = max(draws.n_draws, 1)
        for g in range(d.n_conditions):
            mean_f[g] /= n_draws
            mean_h[g] /= n_draws
            mean_a[g] /= n_draws
            mean_sig[g] /= n_draws

        problems = validate_state(state, d)
        if problems:
            raise ValidationError(
                "chain ended in an invalid state: " + "; ".join(problems)
            )
        h_steps = np.concatenate([
            tunings[g][s][k].h_steps
            for g in range(d.n_conditions)
            for s in range(d.n_subjects)
            for k in range(d.n_factors)
        ])
        tuning_summary = {
            "h_step_mean": float(h_steps.mean()),
            "h_step_min": float(h_steps.min()),
            "h_step_max": float(h_steps.max()),
            "delta2_steps": [
                float(tunings[g][s][k].delta2_step)
                for g in range(d.n_conditions)
                for s in range(d.n_subjects)
                for k in range(d.n_factors)
            ],
            "nc_steps": [
                float(tunings[g][s][k].nc_step)
                for g in range(d.n_conditions)
                for s in range(d.n_subjects)
                for k in range(d.n_factors)
            ],
        }
        return ChainResult(
            chain_seed=chain_seed,
            draws=draws,
            reference=(
                reference if reference is not None else np.abs(state.loadings)
            ),
            mean_factors=mean_f,
            mean_log_vol=mean_h,
            mean_amplitude=mean_a,
            loglik_trace=loglik_trace,
            acceptance=counters.as_dict(),
            tuning_summary=tuning_summary,
            final_state=state,
        )

    def run(self) -> FitResult:
        cfg = self.config
        chain_seeds = rng_mod.spawn_chain_seeds(cfg.seed, cfg.n_chains)
        executor = None
        try:
            if cfg.threads > 1:
                executor = ThreadPoolExecutor(max_workers=cfg.threads)
            chains = [self.run_chain(cs, executor) for cs in chain_seeds]
        finally:
            if executor is not None:
                executor.shutdown()
        return FitResult(
            config=cfg, dims=self.dims, chains=chains, d_sigma=self.d_sigma
        )

    # -- derived quantities ----------------------------------------------

    def selection_scores(self, result: ChainResult) -> dict[str, float]:
        """Information criteria for one chain at the posterior-mean plug-in."""
        d = self.dims
        lam_hat = result.draws.get("loadings").mean(axis=0)
        incl_mean = result.draws.get("indicators").mean(axis=0)
        sig_hat = result.draws.get("noise_var").mean(axis=0)
        ll_hat = 0.0
        for g in range(d.n_conditions):
            sl = slice(self.offsets[g], self.offsets[g + 1])
            for s in range(d.n_subjects):
                ll_hat += load_mod.observed_loglik(
                    self.y_cat[s][:, sl],
                    lam_hat[s],
                    result.mean_log_vol[g][s],
                    sig_hat[g, s],
                )
        ll_draws = result.draws.get("loglik").sum(axis=1)
        n_params = posthoc.count_parameters(incl_mean, d.n_conditions)
        n_obs = d.n_subjects * int(sum(d.n_times))
        return posthoc.model_selection_scores(ll_draws, ll_hat, n_params, n_obs)


def pool_chains(results: list[ChainResult]) -> dict[str, np.ndarray]:
    """Concatenate stored draws across chains on a common orientation.

    Each chain is internally aligned already; chains are mapped onto the
    first chain's orientation by one plan per chain computed between the
    chains' median loading matrices.
    """
    if not results:
        raise ValidationError("no chains to pool")
    base_med = np.median(results[0].draws.get("loadings"), axis=0)
    pooled: dict[str, list[np.ndarray]] = {name: [] for name in STORED_VARIABLES}
    for res in results:
        med = np.median(res.draws.get("loadings"), axis=0)
        plan = posthoc.plan_for_draw(med, np.abs(base_med))
        for name in STORED_VARIABLES:
            arr = res.draws.get(name)
            if name == "loadings":
                arr = plan.apply_columns(arr)
            elif name in ("indicators", "sv_mu", "sv_phi", "sv_delta2", "incl_prob"):
                arr = plan.apply_columns(arr, signed=False)
            pooled[name].append(arr)
    return {name: np.concatenate(chunks, axis=0) for name, chunks in pooled.items()}
