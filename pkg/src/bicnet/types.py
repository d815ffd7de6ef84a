"""Core data containers and validation shared by all sampler blocks.

Array orientation convention: time is always the trailing axis, so a
per-subject series is ``(n_regions, T)`` and a factor path is
``(n_factors, T)``.  Condition index 0 is the resting condition whenever a
rest condition exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class BicnetError(Exception):
    """Base class for package errors."""


class ValidationError(BicnetError):
    """Bad inputs, malformed files, or inconsistent configuration (exit 2)."""


class NumericalError(BicnetError):
    """Numerical failure inside a sampler or solver (exit 3)."""


@dataclass(frozen=True)
class Dimensions:
    """Problem sizes for one fit.

    Parameters
    ----------
    n_regions : int
        Number of observed region series (rows of each data matrix).
    n_factors : int
        Number of latent components; must be strictly less than n_regions.
    n_subjects : int
        Number of subjects.
    n_times : tuple of int
        Series length per condition; entry g is the length under
        condition g.  Condition 0 is rest when a rest condition exists.
    """

    n_regions: int
    n_factors: int
    n_subjects: int
    n_times: tuple[int, ...]

    @property
    def n_conditions(self) -> int:
        return len(self.n_times)

    def validate(self) -> None:
        if self.n_regions < 1 or self.n_factors < 1 or self.n_subjects < 1:
            raise ValidationError("all counts must be >= 1")
        if self.n_factors >= self.n_regions:
            raise ValidationError(
                f"K < N required: got K={self.n_factors}, N={self.n_regions}"
            )
        if len(self.n_times) < 1:
            raise ValidationError("at least one condition required")
        if any(t < 1 for t in self.n_times):
            raise ValidationError("every condition length must be >= 1")


@dataclass
class Hyperparameters:
    """Fixed prior constants for every sampler block.

    ``d_sigma=None`` means "resolve from the data at fit time" (reciprocal
    of the empirical variance of the pooled series, matching the prior
    mean to the data scale).  ``prior_map=None`` means a flat 0.5 map.

    Attributes
    ----------
    b_mu, B_mu : float
        Mean and variance of the Gaussian prior on the log-amplitude level.
    a_phi, b_phi : float
        Beta shape pair for the persistence transform (phi+1)/2.
    B_delta : float
        Scale of the Gamma(1/2, rate 1/(2*B_delta)) prior on the
        innovation variance; equals the prior mean.
    c_sigma, d_sigma : float
        Inverse-Gamma shape and scale for region noise variances.
    tau2_load : float
        Slab variance for nonzero loadings (fixed, not sampled).
    conc : float
        Beta concentration c for group inclusion probabilities.
    prior_map : ndarray or None
        (n_regions, n_factors) prior-mean inclusion map, entries in (0,1).
    a_theta, b_theta : float
        Beta pair for the regression inclusion rate.
    S2 : float
        Scale constant of the inverse-Gamma prior on the regression slab
        variance.
    alpha1, alpha2 : float
        Inverse-Gamma pair for the behavioral noise variance.
    """

    b_mu: float = 0.0
    B_mu: float = 1.0
    a_phi: float = 20.0
    b_phi: float = 2.5
    B_delta: float = 0.5
    c_sigma: float = 2.0
    d_sigma: Optional[float] = None
    tau2_load: float = 1.0
    conc: float = 2.0
    prior_map: Optional[np.ndarray] = None
    a_theta: float = 1.0
    b_theta: float = 1.0
    S2: float = 1.0
    alpha1: float = 2.0
    alpha2: float = 1.0

    def validate(self) -> None:
        pos = {
            "B_mu": self.B_mu, "a_phi": self.a_phi, "b_phi": self.b_phi,
            "B_delta": self.B_delta, "c_sigma": self.c_sigma,
            "tau2_load": self.tau2_load, "conc": self.conc,
            "a_theta": self.a_theta, "b_theta": self.b_theta,
            "S2": self.S2, "alpha1": self.alpha1, "alpha2": self.alpha2,
        }
        if self.d_sigma is not None:
            pos["d_sigma"] = self.d_sigma
        for name, val in pos.items():
            if not np.isfinite(val) or val <= 0:
                raise ValidationError(f"hyperparameter {name} must be > 0, got {val}")
        if self.prior_map is not None:
            pm = np.asarray(self.prior_map)
            if np.any(pm <= 0.0) or np.any(pm >= 1.0):
                raise ValidationError("prior_map entries must lie in the open (0,1)")

    def resolved_prior_map(self, n_regions: int, n_factors: int) -> np.ndarray:
        if self.prior_map is None:
            return np.full((n_regions, n_factors), 0.5)
        pm = np.asarray(self.prior_map, dtype=float)
        if pm.shape != (n_regions, n_factors):
            raise ValidationError(
                f"prior_map shape {pm.shape} does not match (N,K)=({n_regions},{n_factors})"
            )
        return pm


@dataclass
class Dataset:
    """Multi-subject, multi-condition region series plus optional behavior.

    ``series[g][s]`` is the (n_regions, T_g) matrix of subject s under
    condition g.  ``rest_index`` is the condition index of rest (0 after
    canonical ordering) or None when the dataset has no rest condition.
    ``behavioral[cond][measure]`` is a length-S vector aligned with
    ``subject_ids``.
    """

    series: list[list[np.ndarray]]
    condition_names: list[str]
    subject_ids: list[str]
    rest_index: Optional[int] = 0
    behavioral: dict = field(default_factory=dict)

    @property
    def n_conditions(self) -> int:
        return len(self.series)

    @property
    def n_subjects(self) -> int:
        return len(self.series[0])

    @property
    def n_regions(self) -> int:
        return self.series[0][0].shape[0]

    @property
    def n_times(self) -> tuple[int, ...]:
        return tuple(self.series[g][0].shape[1] for g in range(self.n_conditions))

    def dims(self, n_factors: int) -> Dimensions:
        return Dimensions(
            n_regions=self.n_regions,
            n_factors=n_factors,
            n_subjects=self.n_subjects,
            n_times=self.n_times,
        )

    def validate(self) -> None:
        if not self.series or not self.series[0]:
            raise ValidationError("dataset has no series")
        n = self.n_regions
        for g, per_subject in enumerate(self.series):
            if len(per_subject) != self.n_subjects:
                raise ValidationError(f"condition {g} has a different subject count")
            t_g = per_subject[0].shape[1]
            for s, y in enumerate(per_subject):
                if y.ndim != 2 or y.shape[0] != n:
                    raise ValidationError(
                        f"region count mismatch: condition {g}, subject "
                        f"{self.subject_ids[s]} has shape {y.shape}, expected N={n}"
                    )
                if y.shape[1] != t_g:
                    raise ValidationError(
                        f"length mismatch within condition {g}: subject "
                        f"{self.subject_ids[s]} has T={y.shape[1]}, expected {t_g}"
                    )
                if not np.all(np.isfinite(y)):
                    raise ValidationError(
                        f"non-finite entries: condition {g}, subject {self.subject_ids[s]}"
                    )


@dataclass
class ChainState:
    """Complete current value of every latent variable of one chain.

    Shapes (S subjects, N regions, K factors, one leading axis per
    condition including rest):
      loadings, indicators : (S, N, K)
      factors, log_vol     : list over conditions of (S, K, T_g)
      sv_mu, sv_phi, sv_delta2 : (n_conditions, S, K)
      noise_var            : (n_conditions, S, N)
      incl_prob            : (N, K)
    """

    loadings: np.ndarray
    indicators: np.ndarray
    factors: list[np.ndarray]
    log_vol: list[np.ndarray]
    sv_mu: np.ndarray
    sv_phi: np.ndarray
    sv_delta2: np.ndarray
    noise_var: np.ndarray
    incl_prob: np.ndarray

    def copy(self) -> "ChainState":
        return ChainState(
            loadings=self.loadings.copy(),
            indicators=self.indicators.copy(),
            factors=[f.copy() for f in self.factors],
            log_vol=[h.copy() for h in self.log_vol],
            sv_mu=self.sv_mu.copy(),
            sv_phi=self.sv_phi.copy(),
            sv_delta2=self.sv_delta2.copy(),
            noise_var=self.noise_var.copy(),
            incl_prob=self.incl_prob.copy(),
        )


def validate_state(state: ChainState, dims: Dimensions) -> list[str]:
    """Return the list of violated chain invariants (empty when valid)."""
    out: list[str] = []
    n, k, s = dims.n_regions, dims.n_factors, dims.n_subjects
    if state.loadings.shape != (s, n, k):
        out.append(f"loadings shape {state.loadings.shape} != {(s, n, k)}")
        return out
    if state.indicators.shape != (s, n, k):
        out.append(f"indicators shape {state.indicators.shape} != {(s, n, k)}")
        return out
    off = (state.indicators == 0) & (state.loadings != 0.0)
    if np.any(off):
        for idx in np.argwhere(off)[:5]:
            out.append(
                "nonzero loading with zero indicator at "
                f"(subject={idx[0]}, region={idx[1]}, factor={idx[2]})"
            )
    if np.any(np.abs(state.sv_phi) >= 1.0):
        out.append("non-stationary AR coefficient (|phi| >= 1)")
    if np.any(state.sv_delta2 <= 0.0) or not np.all(np.isfinite(state.sv_delta2)):
        out.append("non-positive innovation variance")
    if np.any(state.noise_var <= 0.0) or not np.all(np.isfinite(state.noise_var)):
        out.append("non-positive region noise variance")
    if np.any(state.incl_prob <= 0.0) or np.any(state.incl_prob >= 1.0):
        out.append("group inclusion probability outside open (0,1)")
    for g, (f, h) in enumerate(zip(state.factors, state.log_vol)):
        t_g = dims.n_times[g]
        if f.shape != (s, k, t_g) or h.shape != (s, k, t_g):
            out.append(f"factor/log-vol shape mismatch under condition {g}")
        elif not (np.all(np.isfinite(f)) and np.all(np.isfinite(h))):
            out.append(f"non-finite factor or log-vol entries under condition {g}")
    if not np.all(np.isfinite(state.loadings)):
        out.append("non-finite loading entries")
    return out


def reconstruct_covariance(
    loadings: np.ndarray, amplitudes: np.ndarray, noise_var: np.ndarray
) -> np.ndarray:
    """Instantaneous observed covariance: low-rank part plus diagonal noise.

    Parameters
    ----------
    loadings : (N, K) array
    amplitudes : (K,) array
        Diagonal of the factor covariance at one time point; entries > 0.
    noise_var : (N,) array
        Diagonal observation noise variances; entries > 0.
    """
    lam = np.asarray(loadings, dtype=float)
    amp = np.asarray(amplitudes, dtype=float)
    gam = np.asarray(noise_var, dtype=float)
    if lam.ndim != 2:
        raise ValidationError("loadings must be a 2-d array")
    n, k = lam.shape
    if amp.shape != (k,):
        raise ValidationError(f"amplitudes shape {amp.shape} != ({k},)")
    if gam.shape != (n,):
        raise ValidationError(f"noise_var shape {gam.shape} != ({n},)")
    if np.any(amp <= 0) or np.any(gam <= 0):
        raise ValidationError("amplitudes and noise variances must be > 0")
    cov = (lam * amp) @ lam.T + np.diag(gam)
    return 0.5 * (cov + cov.T)


class PosteriorDraws:
    """Thinned post-burn-in draw storage for a fixed set of variables.

    Stored draw count is ``floor((total - burn_in) / thin)`` and draw
    order is preserved.  Variables are registered lazily on first append.
    """

    def __init__(self, burn_in: int, thin: int = 1):
        if burn_in < 0 or thin < 1:
            raise ValidationError("burn_in must be >= 0 and thin >= 1")
        self.burn_in = burn_in
        self.thin = thin
        self._draws: dict[str, list[np.ndarray]] = {}
        self.sweep_indices: list[int] = []

    def keeps(self, sweep: int) -> bool:
        """Whether the given 0-based sweep index should be stored."""
        if sweep < self.burn_in:
            return False
        return (sweep - self.burn_in) % self.thin == self.thin - 1

    def expected_count(self, total_sweeps: int) -> int:
        return max(0, (total_sweeps - self.burn_in) // self.thin)

    def append(self, sweep: int, **variables: np.ndarray) -> None:
        self.sweep_indices.append(sweep)
        for name, value in variables.items():
            self._draws.setdefault(name, []).append(np.array(value, copy=True))

    @property
    def n_draws(self) -> int:
        return len(self.sweep_indices)

    def names(self) -> list[str]:
        return sorted(self._draws)

    def get(self, name: str) -> np.ndarray:
        """Stacked draws of one variable, shape (n_draws, *var_shape)."""
        if name not in self._draws:
            raise KeyError(name)
        return np.stack(self._draws[name], axis=0)
