"""Task-effect statistics and the sparse behavioral regression.

A factor's task effect for one subject is the two-sample
Kolmogorov-Smirnov distance between the posterior draws of its
log-amplitude level under the task and under rest, signed by the
direction of the mean shift.  The S-by-K matrix of these distances then
enters a spike-and-slab linear regression against a behavioral measure,
sampled by Gibbs with the sparse coefficients handled as collapsed
two-point draws.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .types import Hyperparameters, NumericalError, ValidationError


def ks_statistic(draws_a: np.ndarray, draws_b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |ECDF_a - ECDF_b|."""
    a = np.sort(np.asarray(draws_a, dtype=float).ravel())
    b = np.sort(np.asarray(draws_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValidationError("ks_statistic needs non-empty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_critical_value(n_a: int, n_b: int, alpha: float = 0.05) -> float:
    """Asymptotic two-sample rejection threshold c(alpha)*sqrt((m+n)/(mn))."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    c = np.sqrt(0.5 * np.log(2.0 / alpha))
    return float(c * np.sqrt((n_a + n_b) / (n_a * n_b)))


@dataclass
class TaskEffect:
    """Per (subject, factor) activation summary for one task condition.

    ``delta`` holds KS distances in [0, 1]; ``sign`` the sign of the mean
    amplitude-level shift; ``labels`` one of none/excited/inhibited.
    """

    delta: np.ndarray
    sign: np.ndarray
    labels: np.ndarray
    threshold: float


def compute_task_effects(
    rest_draws: np.ndarray,
    task_draws: np.ndarray,
    threshold: float | None = None,
    alpha: float = 0.05,
) -> TaskEffect:
    """Activation statistics from rest and task draws of the SV level.

    Both inputs are (draws, S, K); draw counts may differ.  When no fixed
    ``threshold`` is given the asymptotic KS critical value at ``alpha``
    is used — approximate under MCMC autocorrelation, so treat the labels
    as a reporting policy rather than a test.
    """
    rest = np.asarray(rest_draws, dtype=float)
    task = np.asarray(task_draws, dtype=float)
    if rest.ndim != 3 or task.ndim != 3 or rest.shape[1:] != task.shape[1:]:
        raise ValidationError("draw arrays must be (draws, S, K) with equal S, K")
    if rest.shape[0] == 0 or task.shape[0] == 0:
        raise ValidationError("missing rest or task draws")
    _, s_count, k_count = rest.shape
    if threshold is None:
        threshold = ks_critical_value(task.shape[0], rest.shape[0], alpha)
    delta = np.empty((s_count, k_count))
    sign = np.empty((s_count, k_count), dtype=np.int64)
    labels = np.empty((s_count, k_count), dtype=object)
    for s in range(s_count):
        for k in range(k_count):
            delta[s, k] = ks_statistic(task[:, s, k], rest[:, s, k])
            diff = float(task[:, s, k].mean() - rest[:, s, k].mean())
            sign[s, k] = 0 if diff == 0.0 else (1 if diff > 0 else -1)
            if delta[s, k] < threshold or sign[s, k] == 0:
                labels[s, k] = "none"
            elif sign[s, k] > 0:
                labels[s, k] = "excited"
            else:
                labels[s, k] = "inhibited"
    return TaskEffect(delta=delta, sign=sign, labels=labels, threshold=threshold)


# ---------------------------------------------------------------------------
# sparse regression


@dataclass
class RegressionState:
    """Current value of every regression chain variable."""

    beta: np.ndarray
    pi: np.ndarray
    theta: float
    tau2: float
    sigma2: float

    @classmethod
    def fresh(cls, n_factors: int) -> "RegressionState":
        return cls(
            beta=np.zeros(n_factors),
            pi=np.ones(n_factors, dtype=np.int8),
            theta=0.5,
            tau2=1.0,
            sigma2=1.0,
        )

    def copy(self) -> "RegressionState":
        return RegressionState(
            beta=self.beta.copy(), pi=self.pi.copy(),
            theta=self.theta, tau2=self.tau2, sigma2=self.sigma2,
        )


def _draw_ig(shape: float, scale: float, gen: np.random.Generator) -> float:
    return float(scale / gen.gamma(shape, 1.0))


def regression_gibbs_sweep(
    z: np.ndarray,
    delta: np.ndarray,
    state: RegressionState,
    hyper: Hyperparameters,
    gen: np.random.Generator,
) -> RegressionState:
    """One systematic Gibbs sweep of the behavioral regression.

    Update order: inclusion rate theta, slab scale tau2, noise sigma2,
    the active coefficients jointly, then a collapsed (pi_k, beta_k) move
    per factor with beta_k integrated out of the inclusion odds.

    The sigma2 conditional carries the slab contribution of the active
    coefficients — shape gains sum(pi)/2 and scale gains
    beta'beta/(2*tau2) — because the slab variance is scaled by sigma2.
    """
    z = np.asarray(z, dtype=float)
    delta = np.asarray(delta, dtype=float)
    s_count, k_count = delta.shape
    if z.shape != (s_count,):
        raise ValidationError("behavioral vector length must match delta rows")
    if not np.all(np.isfinite(delta)) or not np.all(np.isfinite(z)):
        raise ValidationError("non-finite regression inputs")
    st = state.copy()

    k_on = int(st.pi.sum())
    st.theta = float(gen.beta(hyper.a_theta + k_on, hyper.b_theta + k_count - k_on))

    bb = float(st.beta @ st.beta)
    st.tau2 = _draw_ig(
        0.5 * (1 + k_on), 0.5 * hyper.S2 + bb / (2.0 * st.sigma2), gen
    )

    resid = z - delta @ st.beta
    st.sigma2 = _draw_ig(
        hyper.alpha1 + 0.5 * s_count + 0.5 * k_on,
        hyper.alpha2 + 0.5 * float(resid @ resid) + bb / (2.0 * st.tau2),
        gen,
    )

    active = np.nonzero(st.pi)[0]
    if active.size:
        d_a = delta[:, active]
        prec = d_a.T @ d_a + np.eye(active.size) / st.tau2
        try:
            chol = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError:
            corr = np.corrcoef(d_a.T)
            np.fill_diagonal(corr, 0.0)
            i, j = np.unravel_index(np.argmax(np.abs(corr)), corr.shape)
            raise NumericalError(
                "regression design is numerically singular; most collinear "
                f"columns: {active[i]} and {active[j]}"
            )
        mean = np.linalg.solve(prec, d_a.T @ z)
        noise = np.linalg.solve(
            chol.T, gen.standard_normal(active.size)
        ) * np.sqrt(st.sigma2)
        st.beta = np.zeros(k_count)
        st.beta[active] = mean + noise

    log_theta_odds = np.log(st.theta) - np.log1p(-st.theta)
    for k in range(k_count):
        beta_minus = st.beta.copy()
        beta_minus[k] = 0.0
        r = z - delta @ beta_minus
        d_k = delta[:, k]
        zeta = float(d_k @ d_k) + 1.0 / st.tau2
        proj = float(d_k @ r)
        log_odds = (
            log_theta_odds
            - 0.5 * np.log(st.tau2 * zeta)
            + proj * proj / (2.0 * st.sigma2 * zeta)
        )
        if log_odds >= 0.0:
            p_on = 1.0 / (1.0 + np.exp(-log_odds))
        else:
            e = np.exp(log_odds)
            p_on = e / (1.0 + e)
        if gen.random() < p_on:
            st.pi[k] = 1
            st.beta[k] = proj / zeta + np.sqrt(st.sigma2 / zeta) * gen.standard_normal()
        else:
            st.pi[k] = 0
            st.beta[k] = 0.0
    return st


def run_regression(
    z: np.ndarray,
    delta: np.ndarray,
    hyper: Hyperparameters,
    n_iter: int = 10000,
    burn_in: int = 2000,
    thin: int = 1,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Run the regression chain and return thinned post-burn-in draws."""
    delta = np.asarray(delta, dtype=float)
    s_count, k_count = delta.shape
    if s_count <= k_count:
        warnings.warn(
            f"regression has S={s_count} subjects for K={k_count} factors; "
            "inclusion probabilities will lean on the prior",
            stacklevel=2,
        )
    state = RegressionState.fresh(k_count)
    kept_beta, kept_pi, kept_scalar = [], [], []
    for it in range(n_iter):
        gen = rng_mod.stream(seed, it + 1, rng_mod.KIND_BEHAVIOR)
        state = regression_gibbs_sweep(z, delta, state, hyper, gen)
        if it >= burn_in and (it - burn_in) % thin == thin - 1:
            kept_beta.append(state.beta.copy())
            kept_pi.append(state.pi.copy())
            kept_scalar.append((state.theta, state.tau2, state.sigma2))
    scal = np.asarray(kept_scalar)
    return {
        "beta": np.asarray(kept_beta),
        "pi": np.asarray(kept_pi),
        "theta": scal[:, 0],
        "tau2": scal[:, 1],
        "sigma2": scal[:, 2],
    }


def summarize_associations(
    beta_draws: np.ndarray, level: float = 0.95
) -> dict[str, np.ndarray]:
    """Flag factors whose credible interval for beta excludes zero."""
    beta_draws = np.asarray(beta_draws, dtype=float)
    if beta_draws.shape[0] < 100:
        raise ValidationError("need at least 100 draws to summarize associations")
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(beta_draws, [alpha, 1.0 - alpha], axis=0)
    flags = (lo > 0.0) | (hi < 0.0)
    return {
        "associated": flags,
        "lower": lo,
        "upper": hi,
        "estimate": np.median(beta_draws, axis=0),
        "inclusion_rate": np.mean(beta_draws != 0.0, axis=0),
    }


def ols_report(z: np.ndarray, delta: np.ndarray) -> dict[str, np.ndarray]:
    """Auxiliary ordinary-least-squares fit with per-coefficient p-values.

    Fits z on an intercept plus all columns of delta.  Reported only for
    comparison with the Bayesian flags; no selection happens here.
    """
    from scipy import stats

    z = np.asarray(z, dtype=float)
    delta = np.asarray(delta, dtype=float)
    s_count, k_count = delta.shape
    dof = s_count - k_count - 1
    if dof < 1:
        raise ValidationError(
            f"need more subjects than coefficients: S={s_count}, K={k_count}"
        )
    x = np.column_stack([np.ones(s_count), delta])
    coef, _, rank, _ = np.linalg.lstsq(x, z, rcond=None)
    if rank < k_count + 1:
        raise ValidationError("rank-deficient design in auxiliary OLS")
    resid = z - x @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(x.T @ x)
    se = np.sqrt(np.diag(cov))
    tval = coef / se
    pval = 2.0 * stats.t.sf(np.abs(tval), dof)
    return {
        "coef": coef[1:], "se": se[1:], "t": tval[1:], "p": pval[1:],
        "intercept": float(coef[0]),
    }
