"""Log-volatility path and AR-parameter updates for one factor.

Each latent factor of each subject and condition carries an AR(1)
log-amplitude path h with parameters (mu, phi, delta2).  The block update
is: a single-site random-walk Metropolis sweep over the path, conjugate /
Metropolis draws of the parameters in the centered parameterization, then
a re-draw of (mu, delta) in the non-centered parameterization
h_tilde = (h - mu)/delta to break the strong posterior coupling between
the level and the path (the interweaving strategy).

Priors: mu ~ N(b_mu, B_mu); (phi+1)/2 ~ Beta(a_phi, b_phi);
delta2 ~ Gamma(1/2, rate 1/(2*B_delta)), equivalently delta ~ N(0, B_delta)
under the symmetric sign extension used by the non-centered step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .types import Hyperparameters

TARGET_ACCEPT = 0.44
# Reject |delta| proposals beyond this in the non-centered step; with the
# default N(0, 0.5) prior the mass beyond is < 1e-170.
NC_DELTA_BOUND = 20.0
MAX_EXP = 700.0


@dataclass
class SvTuning:
    """Adapted proposal scales for one (condition, subject, factor) block."""

    h_steps: np.ndarray
    delta2_step: float = 0.3
    nc_step: float = 0.3

    @classmethod
    def fresh(cls, n_times: int) -> "SvTuning":
        return cls(h_steps=np.full(n_times, 0.5))


@dataclass
class SvCounters:
    """Acceptance bookkeeping, aggregated over sweeps."""

    h_acc: int = 0
    h_tot: int = 0
    h_guard: int = 0
    phi_acc: int = 0
    phi_tot: int = 0
    delta2_acc: int = 0
    delta2_tot: int = 0
    nc_mu_acc: int = 0
    nc_mu_tot: int = 0
    nc_delta_acc: int = 0
    nc_delta_tot: int = 0
    scale_acc: int = 0
    scale_tot: int = 0

    def as_dict(self) -> dict:
        def rate(a: int, t: int) -> float:
            return a / t if t else float("nan")

        return {
            "h_accept_rate": rate(self.h_acc, self.h_tot),
            "h_guard_rejections": self.h_guard,
            "phi_accept_rate": rate(self.phi_acc, self.phi_tot),
            "delta2_accept_rate": rate(self.delta2_acc, self.delta2_tot),
            "nc_mu_accept_rate": rate(self.nc_mu_acc, self.nc_mu_tot),
            "nc_delta_accept_rate": rate(self.nc_delta_acc, self.nc_delta_tot),
            "scale_accept_rate": rate(self.scale_acc, self.scale_tot),
        }


def update_h_path(
    f_k: np.ndarray,
    h: np.ndarray,
    mu: float,
    phi: float,
    delta2: float,
    tuning: SvTuning,
    gen: np.random.Generator,
    adapt_gamma: float = 0.0,
    counters: SvCounters | None = None,
) -> None:
    """Single-site Metropolis sweep over the whole path, in place."""
    t_len = h.shape[0]
    normals = gen.standard_normal(t_len)
    log_unifs = np.log(gen.random(t_len))
    n_acc, n_guard = _kernels.h_path_sweep(
        f_k * f_k, h, mu, phi, delta2, tuning.h_steps, normals, log_unifs,
        adapt_gamma, TARGET_ACCEPT,
    )
    if counters is not None:
        counters.h_acc += n_acc
        counters.h_tot += t_len
        counters.h_guard += n_guard


def _ar_sufficient_stats(h: np.ndarray, mu: float) -> tuple[np.ndarray, float, float]:
    x = h - mu
    sxx = float(np.dot(x[:-1], x[:-1]))
    sxy = float(np.dot(x[1:], x[:-1]))
    return x, sxx, sxy


def update_mu(
    h: np.ndarray,
    phi: float,
    delta2: float,
    hyper: Hyperparameters,
    gen: np.random.Generator,
) -> float:
    """Conjugate Gaussian draw of the level given the path.

    An empty path means no data: the draw falls back to the prior, which
    gives validation code a way to reproduce prior marginals exactly.
    """
    t_len = h.shape[0]
    if t_len == 0:
        return hyper.b_mu + np.sqrt(hyper.B_mu) * gen.standard_normal()
    c_stat = (1.0 - phi * phi) / delta2
    prec = c_stat + 1.0 / hyper.B_mu
    lin = c_stat * h[0] + hyper.b_mu / hyper.B_mu
    if t_len > 1:
        resid = h[1:] - phi * h[:-1]
        prec += (t_len - 1) * (1.0 - phi) ** 2 / delta2
        lin += (1.0 - phi) * float(np.sum(resid)) / delta2
    return lin / prec + gen.standard_normal() / np.sqrt(prec)


def _log_phi_target_extra(phi: float, x0: float, delta2: float,
                          hyper: Hyperparameters) -> float:
    # Beta prior on (phi+1)/2 plus the stationary first-observation term;
    # the Gaussian AR likelihood cancels against the proposal.
    return (
        (hyper.a_phi - 1.0) * np.log1p(phi)
        + (hyper.b_phi - 1.0) * np.log1p(-phi)
        + 0.5 * np.log1p(-phi * phi)
        - (1.0 - phi * phi) * x0 * x0 / (2.0 * delta2)
    )


def update_phi(
    h: np.ndarray,
    mu: float,
    phi: float,
    delta2: float,
    hyper: Hyperparameters,
    gen: np.random.Generator,
    counters: SvCounters | None = None,
) -> float:
    """Independence-Metropolis draw of the persistence parameter.

    Proposes from the Gaussian conditional implied by the AR regression
    (which cancels exactly in the ratio), so only the Beta prior and the
    stationary term of the first point decide acceptance.  With no AR
    information (T=1) the proposal falls back to the prior itself, and an
    empty path returns an exact prior draw.
    """
    if h.shape[0] == 0:
        if counters is not None:
            counters.phi_tot += 1
            counters.phi_acc += 1
        return 2.0 * gen.beta(hyper.a_phi, hyper.b_phi) - 1.0
    x, sxx, _ = _ar_sufficient_stats(h, mu)
    if counters is not None:
        counters.phi_tot += 1
    if sxx > 0.0 and h.shape[0] > 1:
        sxy = float(np.dot(x[1:], x[:-1]))
        prop = sxy / sxx + np.sqrt(delta2 / sxx) * gen.standard_normal()
    else:
        prop = 2.0 * gen.beta(hyper.a_phi, hyper.b_phi) - 1.0
    if not (-1.0 < prop < 1.0):
        return phi
    log_alpha = _log_phi_target_extra(prop, x[0], delta2, hyper) - \
        _log_phi_target_extra(phi, x[0], delta2, hyper)
    if np.log(gen.random()) < log_alpha:
        if counters is not None:
            counters.phi_acc += 1
        return prop
    return phi


def _delta2_log_target(log_d2: float, sse: float, t_len: int,
                       hyper: Hyperparameters) -> float:
    # log posterior of log(delta2) including the change-of-variable term
    return (
        -0.5 * (t_len - 1) * log_d2
        - 0.5 * sse * np.exp(-log_d2)
        - np.exp(log_d2) / (2.0 * hyper.B_delta)
    )


def update_delta2(
    h: np.ndarray,
    mu: float,
    phi: float,
    delta2: float,
    hyper: Hyperparameters,
    tuning: SvTuning,
    gen: np.random.Generator,
    adapt_gamma: float = 0.0,
    counters: SvCounters | None = None,
) -> float:
    """Random-walk Metropolis on log(delta2), optionally adapting scale.

    An empty path targets the prior alone (the t_len=0 exponent reduces
    to the Gamma(1/2) prior in log coordinates).
    """
    x = h - mu
    sse = (1.0 - phi * phi) * x[0] * x[0] if x.size else 0.0
    if h.shape[0] > 1:
        resid = x[1:] - phi * x[:-1]
        sse += float(np.dot(resid, resid))
    cur = np.log(delta2)
    prop = cur + tuning.delta2_step * gen.standard_normal()
    log_alpha = _delta2_log_target(prop, sse, h.shape[0], hyper) - \
        _delta2_log_target(cur, sse, h.shape[0], hyper)
    accepted = np.log(gen.random()) < log_alpha
    if counters is not None:
        counters.delta2_tot += 1
        counters.delta2_acc += int(accepted)
    if adapt_gamma > 0.0:
        tuning.delta2_step = float(np.clip(
            tuning.delta2_step * np.exp(adapt_gamma * (accepted - TARGET_ACCEPT)),
            1e-3, 10.0,
        ))
    return float(np.exp(prop)) if accepted else delta2


def _nc_log_target_delta(delta: float, mu: float, h_tilde: np.ndarray,
                         f2: np.ndarray, B_delta: float) -> float:
    ex = -mu - delta * h_tilde
    if np.any(ex > MAX_EXP):
        return -np.inf
    return (
        -0.5 * delta * float(np.sum(h_tilde))
        - 0.5 * float(np.sum(f2 * np.exp(ex)))
        - delta * delta / (2.0 * B_delta)
    )


def interweave_asis(
    f_k: np.ndarray,
    h: np.ndarray,
    mu: float,
    phi: float,
    delta2: float,
    hyper: Hyperparameters,
    tuning: SvTuning,
    gen: np.random.Generator,
    adapt_gamma: float = 0.0,
    counters: SvCounters | None = None,
) -> tuple[float, float]:
    """Re-draw (mu, delta) holding the standardized path fixed.

    In the non-centered parameterization the standardized path carries no
    information about (mu, delta), so their conditional is the factor
    likelihood times the priors.  mu gets an independence-Metropolis draw
    from its exact flat-prior conditional (a Gamma in exp(-mu)), accepted
    on the prior ratio alone; delta gets a random-walk step over the
    sign-extended real line.  The path is rebuilt from the standardized
    coordinates only when something moved, so a doubly rejected sweep
    leaves the state bitwise unchanged.  Returns (mu, delta2).
    """
    t_len = h.shape[0]
    delta = float(np.sqrt(delta2))
    h_tilde = (h - mu) / delta
    f2 = f_k * f_k

    new_mu = mu
    c = float(np.sum(f2 * np.exp(-delta * h_tilde)))
    if counters is not None:
        counters.nc_mu_tot += 1
    if c > 0.0 and np.isfinite(c):
        y = gen.gamma(0.5 * t_len, 2.0 / c)
        if y > 0.0:
            prop = -np.log(y)
            log_alpha = ((mu - hyper.b_mu) ** 2 - (prop - hyper.b_mu) ** 2) / (
                2.0 * hyper.B_mu
            )
            if np.log(gen.random()) < log_alpha:
                new_mu = float(prop)
                if counters is not None:
                    counters.nc_mu_acc += 1

    new_delta = delta
    prop_d = delta + tuning.nc_step * gen.standard_normal()
    accepted = False
    if abs(prop_d) <= NC_DELTA_BOUND:
        log_alpha = _nc_log_target_delta(
            prop_d, new_mu, h_tilde, f2, hyper.B_delta
        ) - _nc_log_target_delta(new_delta, new_mu, h_tilde, f2, hyper.B_delta)
        accepted = np.log(gen.random()) < log_alpha
        if accepted:
            new_delta = float(prop_d)
    if counters is not None:
        counters.nc_delta_tot += 1
        counters.nc_delta_acc += int(accepted)
    if adapt_gamma > 0.0:
        tuning.nc_step = float(np.clip(
            tuning.nc_step * np.exp(adapt_gamma * (accepted - TARGET_ACCEPT)),
            1e-3, 10.0,
        ))

    if new_mu != mu or new_delta != delta:
        h[:] = new_mu + new_delta * h_tilde
    return new_mu, new_delta * new_delta


def sv_block_sweep(
    f_k: np.ndarray,
    h: np.ndarray,
    mu: float,
    phi: float,
    delta2: float,
    hyper: Hyperparameters,
    tuning: SvTuning,
    gen: np.random.Generator,
    adapt_gamma: float = 0.0,
    counters: SvCounters | None = None,
) -> tuple[float, float, float]:
    """Full update of one volatility block; mutates h, returns new params."""
    update_h_path(f_k, h, mu, phi, delta2, tuning, gen, adapt_gamma, counters)
    mu = update_mu(h, phi, delta2, hyper, gen)
    phi = update_phi(h, mu, phi, delta2, hyper, gen, counters)
    delta2 = update_delta2(
        h, mu, phi, delta2, hyper, tuning, gen, adapt_gamma, counters
    )
    mu, delta2 = interweave_asis(
        f_k, h, mu, phi, delta2, hyper, tuning, gen, adapt_gamma, counters
    )
    return mu, phi, delta2
