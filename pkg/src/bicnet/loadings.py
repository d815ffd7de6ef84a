"""Gibbs updates for noise variances, sparse loadings, factors, and the
group inclusion map, plus the factor-marginalized likelihood.

The loading update is the heart of the sparsity mechanism: each entry is
flipped in or out by its posterior odds, integrating the slab
analytically, and redrawn from its Gaussian conditional when active.
Partial residuals are maintained incrementally inside the compiled sweep
so a full pass costs O(N*K*T).
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .types import Hyperparameters, NumericalError


def logit_clipped(p: np.ndarray) -> np.ndarray:
    """Elementwise log-odds; exact 0 and 1 map to -inf/+inf."""
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    zero = p <= 0.0
    one = p >= 1.0
    mid = ~(zero | one)
    out[zero] = -np.inf
    out[one] = np.inf
    out[mid] = np.log(p[mid]) - np.log1p(-p[mid])
    return out


def draw_inverse_gamma(
    shape: float, scale: float, gen: np.random.Generator, size=None
) -> np.ndarray | float:
    """Draw from IG(shape, scale) with density ∝ x^{-shape-1} e^{-scale/x}."""
    g = gen.gamma(shape, 1.0, size=size)
    return scale / g


def update_noise_variance(
    resid: np.ndarray,
    hyper: Hyperparameters,
    d_sigma: float,
    gen: np.random.Generator,
) -> np.ndarray:
    """Per-region conjugate inverse-Gamma draw from current residuals.

    ``resid`` is (N, T) for one subject/condition; the posterior is
    IG(c_sigma + T/2, d_sigma + sum(resid^2)/2) independently per region.
    """
    t_len = resid.shape[1]
    rss = np.einsum("nt,nt->n", resid, resid)
    shape = hyper.c_sigma + 0.5 * t_len
    scale = d_sigma + 0.5 * rss
    return draw_inverse_gamma(shape, scale, gen, size=resid.shape[0])


def residual(y: np.ndarray, lam: np.ndarray, f: np.ndarray) -> np.ndarray:
    return y - lam @ f


def update_loadings_subject(
    resid_cat: np.ndarray,
    f_cat: np.ndarray,
    inv_s2: np.ndarray,
    cond_of_t: np.ndarray,
    lam: np.ndarray,
    z: np.ndarray,
    incl_prob: np.ndarray,
    tau2: float,
    gen: np.random.Generator,
) -> None:
    """Spike-and-slab sweep over all (region, factor) entries of a subject.

    Arguments are concatenated across conditions along time:
    ``resid_cat`` (N, T_total) is y - lam@f and is kept consistent in
    place; ``inv_s2`` is (N, G) inverse noise variances with
    ``cond_of_t`` giving each column's condition.  ``lam`` (float) and
    ``z`` (int8) are updated in place.
    """
    n, k = lam.shape
    normals = gen.standard_normal((n, k))
    unifs = gen.random((n, k))
    _kernels.loading_sweep(
        resid_cat, f_cat, inv_s2, cond_of_t, lam, z,
        logit_clipped(incl_prob), tau2, normals, unifs,
    )


def factor_posterior_terms(
    y: np.ndarray, lam: np.ndarray, sigma2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Precompute Lambda' Gamma^{-1} y (K,T) and Lambda' Gamma^{-1} Lambda."""
    atg = lam.T / sigma2[None, :]
    return atg @ y, atg @ lam


def update_factors_block(
    y: np.ndarray,
    lam: np.ndarray,
    h: np.ndarray,
    sigma2: np.ndarray,
    gen: np.random.Generator,
) -> np.ndarray:
    """Draw the whole factor path of one subject/condition.

    Each time point is the Gaussian conditional
    f_t ~ N(V Λ'Γ^{-1} y_t, V), V = (Λ'Γ^{-1}Λ + diag(exp(-h_t)))^{-1}.
    """
    aty, btb = factor_posterior_terms(y, lam, sigma2)
    xi = gen.standard_normal(h.shape)
    out = np.empty_like(h)
    flag = _kernels.factor_draws(aty, btb, h, xi, out)
    if flag != 0:
        raise NumericalError(
            "factor posterior precision failed to factor (non-finite state)"
        )
    return out


def update_group_inclusion(
    indicators: np.ndarray,
    hyper: Hyperparameters,
    prior_map: np.ndarray,
    gen: np.random.Generator,
) -> np.ndarray:
    """Conjugate Beta draw of the group map from subject indicators.

    ``indicators`` is (S, N, K) binary; the posterior for each entry is
    Beta(c*a + sum_s z, c*(1-a) + S - sum_s z).  Draws are nudged off the
    exact boundary to keep downstream log-odds finite.
    """
    s_count = indicators.shape[0]
    z_sum = indicators.sum(axis=0)
    a = hyper.conc * prior_map + z_sum
    b = hyper.conc * (1.0 - prior_map) + (s_count - z_sum)
    draw = gen.beta(a, b)
    return np.clip(draw, 1e-12, 1.0 - 1e-12)


def observed_loglik(
    y: np.ndarray, lam: np.ndarray, h: np.ndarray, sigma2: np.ndarray
) -> float:
    """Gaussian log-likelihood of one subject/condition with f integrated out.

    The T-by-T-free evaluation uses the Woodbury identity per time point;
    cost is O(T K^2 (K + N/K)).
    """
    aty, btb = factor_posterior_terms(y, lam, sigma2)
    ytgy = np.einsum("nt,nt->t", y, y / sigma2[:, None])
    logdet_gamma = float(np.sum(np.log(sigma2)))
    val = _kernels.marginal_loglik(aty, btb, h, ytgy, logdet_gamma, y.shape[0])
    if not np.isfinite(val):
        raise NumericalError("marginal likelihood evaluation failed")
    return float(val)
