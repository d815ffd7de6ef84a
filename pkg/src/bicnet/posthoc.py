"""Post-MCMC processing: sign/permutation alignment, posterior summaries,
group-map thresholding, model-selection scores, and recovery metrics.

Factor models are invariant to column permutations and sign flips, so raw
draws from different sweeps (or chains) need not agree on column order.
Alignment maps every draw onto a common reference by a greedy
absolute-correlation matching, then fixes signs; the same permutation and
flips are applied to every linked quantity so likelihoods are untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import ValidationError


# ---------------------------------------------------------------------------
# alignment


def greedy_assign(score: np.ndarray) -> np.ndarray:
    """Greedy one-to-one assignment on a square score matrix.

    Repeatedly takes the highest remaining (row, col) pair; ties resolve
    to the lowest row index, then lowest column index.  Returns ``perm``
    with ``perm[col] = row``, i.e. which source row lands on each target.
    """
    score = np.asarray(score, dtype=float)
    k = score.shape[0]
    if score.shape != (k, k):
        raise ValidationError("score matrix must be square")
    perm = np.full(k, -1, dtype=np.int64)
    free_rows = np.ones(k, dtype=bool)
    free_cols = np.ones(k, dtype=bool)
    work = score.copy()
    work[~np.isfinite(work)] = -np.inf
    for _ in range(k):
        masked = np.where(
            free_rows[:, None] & free_cols[None, :], work, -np.inf
        )
        # argmax scans row-major, so the first maximal entry already has the
        # lowest row index, then the lowest column index
        flat = int(np.argmax(masked))
        r, c = divmod(flat, k)
        perm[c] = r
        free_rows[r] = False
        free_cols[c] = False
    return perm


def _abs_corr(columns: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """|Pearson correlation| between each column pair; degenerate -> 0."""
    a = columns - columns.mean(axis=0, keepdims=True)
    b = reference - reference.mean(axis=0, keepdims=True)
    na = np.sqrt(np.sum(a * a, axis=0))
    nb = np.sqrt(np.sum(b * b, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (a.T @ b) / np.outer(na, nb)
    corr[~np.isfinite(corr)] = 0.0
    return np.abs(corr)


@dataclass(frozen=True)
class AlignmentPlan:
    """One draw's column permutation and sign flips.

    ``perm[j]`` is the source column moved into slot j; ``flips[j]`` the
    sign applied after the move.  Applying a plan and then its inverse is
    the identity.
    """

    perm: np.ndarray
    flips: np.ndarray

    @property
    def is_identity(self) -> bool:
        return bool(
            np.array_equal(self.perm, np.arange(self.perm.size))
            and np.all(self.flips == 1.0)
        )

    def inverse(self) -> "AlignmentPlan":
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return AlignmentPlan(perm=inv, flips=self.flips[inv].copy())

    def apply_columns(self, arr: np.ndarray, signed: bool = True) -> np.ndarray:
        """Reorder the trailing axis (loading-like and map-like arrays)."""
        out = np.asarray(arr)[..., self.perm]
        if signed:
            out = out * self.flips
        return out

    def apply_rows(self, arr: np.ndarray, signed: bool = True) -> np.ndarray:
        """Reorder the second-to-last axis (factor/log-vol paths (K, T))."""
        out = np.asarray(arr)[..., self.perm, :]
        if signed:
            out = out * self.flips[..., :, None]
        return out


def plan_for_draw(loadings: np.ndarray, reference: np.ndarray) -> AlignmentPlan:
    """Alignment plan for one loading draw against a reference.

    Both arguments are (S, N, K) (or (N, K)); columns are compared after
    stacking subjects, permuted by greedy absolute correlation, and each
    permuted column is flipped so its largest-magnitude entry is positive.
    """
    lam = np.asarray(loadings, dtype=float)
    ref = np.asarray(reference, dtype=float)
    cols = lam.reshape(-1, lam.shape[-1])
    refc = ref.reshape(-1, ref.shape[-1])
    if cols.shape != refc.shape:
        raise ValidationError("draw and reference shapes differ")
    perm = greedy_assign(_abs_corr(refc, cols).T)
    moved = cols[:, perm]
    peak = np.abs(moved).argmax(axis=0)
    peak_vals = moved[peak, np.arange(moved.shape[1])]
    flips = np.where(peak_vals < 0.0, -1.0, 1.0)
    return AlignmentPlan(perm=perm, flips=flips)


def align_draws(
    lam_draws: np.ndarray,
    reference: np.ndarray,
    factor_draws: np.ndarray | None = None,
    log_vol_draws: np.ndarray | None = None,
    mu_draws: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Align a stack of loading draws (and linked draws) to a reference.

    ``lam_draws`` is (D, ..., N, K); optional linked arrays carry the same
    leading draw axis.  Factor and log-volatility draws are (D, ..., K, T)
    and receive the same permutation (factors also the sign flips; log
    volatilities and mu are sign-invariant).
    """
    lam_draws = np.asarray(lam_draws)
    out_lam = np.empty_like(lam_draws)
    out = {"loadings": out_lam}
    if factor_draws is not None:
        out["factors"] = np.empty_like(np.asarray(factor_draws))
    if log_vol_draws is not None:
        out["log_vol"] = np.empty_like(np.asarray(log_vol_draws))
    if mu_draws is not None:
        out["sv_mu"] = np.empty_like(np.asarray(mu_draws))
    for d in range(lam_draws.shape[0]):
        plan = plan_for_draw(lam_draws[d], reference)
        out_lam[d] = plan.apply_columns(lam_draws[d])
        if factor_draws is not None:
            out["factors"][d] = plan.apply_rows(factor_draws[d])
        if log_vol_draws is not None:
            out["log_vol"][d] = plan.apply_rows(log_vol_draws[d], signed=False)
        if mu_draws is not None:
            out["sv_mu"][d] = plan.apply_columns(mu_draws[d], signed=False)
    return out


# ---------------------------------------------------------------------------
# summaries and maps


def posterior_summary(
    draws: np.ndarray, estimator: str = "median", level: float = 0.95
) -> dict[str, np.ndarray]:
    """Pointwise estimate plus equal-tailed credible interval.

    ``draws`` has the draw axis first.  Returns estimate / lower / upper.
    """
    draws = np.asarray(draws)
    if draws.shape[0] < 2:
        raise ValidationError("need at least 2 draws to summarize")
    if estimator == "median":
        est = np.median(draws, axis=0)
    elif estimator == "mean":
        est = np.mean(draws, axis=0)
    else:
        raise ValidationError(f"unknown estimator {estimator!r}")
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(draws, [alpha, 1.0 - alpha], axis=0)
    return {"estimate": est, "lower": lo, "upper": hi}


def threshold_group_map(pi0: np.ndarray, threshold: float) -> np.ndarray:
    """Binary group map: entry true iff its probability >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError("threshold must lie in (0, 1)")
    return np.asarray(pi0) >= threshold


# ---------------------------------------------------------------------------
# model selection


def count_parameters(
    incl_mean: np.ndarray, n_conditions: int
) -> int:
    """Effective parameter count for the information criteria.

    Loadings count one parameter per entry whose posterior inclusion
    probability reaches 0.5; each subject/condition adds N noise
    variances and 3 SV parameters per factor.  Latent paths h and f are
    not counted.
    """
    incl_mean = np.asarray(incl_mean)
    s_count, n_regions, n_factors = incl_mean.shape
    nnz = int((incl_mean >= 0.5).sum())
    return nnz + s_count * n_conditions * (n_regions + 3 * n_factors)


def model_selection_scores(
    loglik_draws: np.ndarray,
    loglik_at_mean: float,
    n_parameters: int,
    n_obs: int,
) -> dict[str, float]:
    """AIC/BIC at the plug-in estimate plus the DIC.

    ``loglik_draws`` are per-draw observed-data log-likelihood totals;
    ``loglik_at_mean`` the same evaluated at the posterior-mean plug-in;
    ``n_obs`` the total count of observed time points entering the
    likelihood (used only by BIC's log-n penalty).
    """
    loglik_draws = np.asarray(loglik_draws, dtype=float)
    if loglik_draws.size == 0:
        raise ValidationError("no log-likelihood draws stored")
    dev_bar = float(np.mean(-2.0 * loglik_draws))
    dev_hat = -2.0 * float(loglik_at_mean)
    return {
        "aic": dev_hat + 2.0 * n_parameters,
        "bic": dev_hat + n_parameters * float(np.log(n_obs)),
        "dic": 2.0 * dev_bar - dev_hat,
        "p_eff": dev_bar - dev_hat,
        "n_parameters": float(n_parameters),
    }


def pick_elbow(
    k_values: list[int], scores: list[float], spreads: list[float] | None = None
) -> int:
    """Smallest K whose score is within one spread of the minimum.

    ``spreads`` are per-K across-chain standard deviations; with a single
    chain they are zero and the rule degenerates to the arg-min.
    """
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(k_values)
    i_min = order[np.argmin(scores[order])]
    slack = 0.0 if spreads is None else float(np.asarray(spreads)[i_min])
    cutoff = scores[i_min] + slack
    for i in order:
        if scores[i] <= cutoff:
            return int(k_values[i])
    return int(k_values[i_min])


# ---------------------------------------------------------------------------
# recovery metrics


def mae(est: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute entrywise difference."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValidationError(f"shape mismatch: {est.shape} vs {truth.shape}")
    return float(np.mean(np.abs(est - truth)))


def rmse_reconstruction(
    lam_hat: np.ndarray, f_hat: np.ndarray, lam: np.ndarray, f: np.ndarray
) -> float:
    """Root mean (over time) squared reconstruction error.

    The squared error at each time point is summed over regions before
    averaging over time.
    """
    err = lam_hat @ f_hat - lam @ f
    t_len = err.shape[1]
    return float(np.sqrt(np.sum(err * err) / t_len))


def align_to_truth(est: np.ndarray, truth: np.ndarray) -> AlignmentPlan:
    """Plan matching estimated columns onto ground-truth columns.

    Unlike draw-to-reference alignment, signs here come from the
    correlation direction with the matched truth column, which is the
    right convention when scoring recovery.
    """
    est2 = np.asarray(est, float).reshape(-1, est.shape[-1])
    tru2 = np.asarray(truth, float).reshape(-1, truth.shape[-1])
    perm = greedy_assign(_abs_corr(tru2, est2).T)
    a = est2[:, perm] - est2[:, perm].mean(axis=0)
    b = tru2 - tru2.mean(axis=0)
    dots = np.einsum("mk,mk->k", a, b)
    flips = np.where(dots < 0.0, -1.0, 1.0)
    return AlignmentPlan(perm=perm, flips=flips)


def jaccard(set_a, set_b) -> float:
    """Jaccard similarity of two region sets; both empty counts as 0."""
    a, b = set(set_a), set(set_b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def match_maps(maps_a: list, maps_b: list) -> dict:
    """Greedy one-to-one matching of two lists of region sets.

    Returns the assignment (index into ``maps_a`` for each entry of
    ``maps_b``), the per-pair similarities, and their mean and standard
    deviation.
    """
    if len(maps_a) != len(maps_b):
        raise ValidationError("map lists must have equal length")
    k = len(maps_a)
    table = np.array(
        [[jaccard(maps_a[i], maps_b[j]) for j in range(k)] for i in range(k)]
    )
    perm = greedy_assign(table)
    sims = np.array([table[perm[j], j] for j in range(k)])
    return {
        "assignment": perm,
        "similarities": sims,
        "mean": float(sims.mean()) if k else 0.0,
        "sd": float(sims.std(ddof=1)) if k > 1 else 0.0,
        "table": table,
    }


def lagged_crosscorr(
    amplitude: np.ndarray, stimulus: np.ndarray, max_lag: int
) -> tuple[int, np.ndarray]:
    """Pearson correlation of amplitude against lagged stimulus.

    Lag L compares amplitude[L:] with stimulus[:-L] (the amplitude is
    allowed to respond after the stimulus).  Returns the arg-max lag in
    1..max_lag and the full correlation curve.
    """
    amp = np.asarray(amplitude, dtype=float)
    stim = np.asarray(stimulus, dtype=float)
    if amp.shape != stim.shape or amp.ndim != 1:
        raise ValidationError("amplitude and stimulus must be equal-length vectors")
    if not 1 <= max_lag < amp.size:
        raise ValidationError("max_lag must lie in [1, T)")
    if np.ptp(amp) == 0.0 or np.ptp(stim) == 0.0:
        raise ValidationError("constant series have no defined correlation")
    curve = np.empty(max_lag)
    for lag in range(1, max_lag + 1):
        a = amp[lag:]
        s = stim[:-lag]
        if np.ptp(a) == 0.0 or np.ptp(s) == 0.0:
            curve[lag - 1] = 0.0
            continue
        curve[lag - 1] = np.corrcoef(a, s)[0, 1]
    return int(np.argmax(curve) + 1), curve
