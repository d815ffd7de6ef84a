"""Ground-truth simulators for recovery benchmarks.

Two stock designs are provided: a small network where each subject has a
different loading sparsity level (``sparsity_benchmark_scenario``), and a
homogeneous group whose shared membership comes from a block-structured
inclusion map (``group_benchmark_scenario``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import json
import numpy as np

from . import data as data_mod
from . import rng as rng_mod
from .types import ChainState, Dataset, Dimensions, ValidationError


@dataclass
class SimScenario:
    """Complete description of one synthetic dataset.

    Either ``nonsparsity`` (per-subject fraction of nonzero loadings,
    positions uniform without replacement) or ``group_map`` (an (N, K)
    inclusion-probability map; membership drawn once and shared by all
    subjects) decides the loading support pattern — exactly one must be set.

    ``mu_true`` has shape (n_conditions, S, K); ``phi_true`` and
    ``delta2_true`` broadcast to the same shape; ``sigma2_true``
    broadcasts to (n_conditions, S, N).
    """

    dims: Dimensions
    mu_true: np.ndarray
    phi_true: np.ndarray
    delta2_true: np.ndarray
    sigma2_true: np.ndarray
    seed: int
    nonsparsity: Optional[np.ndarray] = None
    group_map: Optional[np.ndarray] = None
    tau2: float = 1.0
    loading_mode: str = "slab"  # "slab" = N(0, tau2) values; "fixed" = unit magnitude
    name: str = "custom"

    def __post_init__(self) -> None:
        d = self.dims
        d.validate()
        if (self.nonsparsity is None) == (self.group_map is None):
            raise ValidationError("set exactly one of nonsparsity / group_map")
        if self.nonsparsity is not None:
            f = np.asarray(self.nonsparsity, dtype=float)
            if f.shape != (d.n_subjects,):
                raise ValidationError("nonsparsity must have one fraction per subject")
            if np.any((f < 0.0) | (f > 1.0)):
                raise ValidationError("nonsparsity fractions must lie in [0, 1]")
            self.nonsparsity = f
        else:
            pm = np.asarray(self.group_map, dtype=float)
            if pm.shape != (d.n_regions, d.n_factors):
                raise ValidationError("group_map must be (N, K)")
            if np.any((pm < 0.0) | (pm > 1.0)):
                raise ValidationError("group_map entries must lie in [0, 1]")
            self.group_map = pm
        shape = (d.n_conditions, d.n_subjects, d.n_factors)
        self.mu_true = np.broadcast_to(np.asarray(self.mu_true, float), shape).copy()
        self.phi_true = np.broadcast_to(np.asarray(self.phi_true, float), shape).copy()
        self.delta2_true = np.broadcast_to(
            np.asarray(self.delta2_true, float), shape
        ).copy()
        self.sigma2_true = np.broadcast_to(
            np.asarray(self.sigma2_true, float),
            (d.n_conditions, d.n_subjects, d.n_regions),
        ).copy()
        if np.any(np.abs(self.phi_true) >= 1.0):
            raise ValidationError("phi_true must be inside (-1, 1)")
        if np.any(self.delta2_true <= 0.0) or np.any(self.sigma2_true <= 0.0):
            raise ValidationError("variances must be > 0")
        if self.loading_mode not in ("slab", "unit", "fixed"):
            raise ValidationError(f"unknown loading_mode {self.loading_mode!r}")


def gen_loadings(scenario: SimScenario) -> tuple[np.ndarray, np.ndarray]:
    """Draw ground-truth loadings and membership indicators.

    Returns ``(loadings, indicators)`` with shape (S, N, K) each.  In
    fraction mode, subject s gets exactly ``round(fraction_s * N * K)``
    active entries at uniformly chosen positions.  In group-map mode one
    Bernoulli(map) membership draw is shared by every subject.  A factor
    with no member region in some subject is an error, since that factor
    would be unidentifiable.
    """
    d = scenario.dims
    n, k, s_count = d.n_regions, d.n_factors, d.n_subjects
    gen = rng_mod.stream(scenario.seed, 0, rng_mod.KIND_SIMULATE, 0)
    indicators = np.zeros((s_count, n, k), dtype=np.int8)

    if scenario.nonsparsity is not None:
        for s in range(s_count):
            count = int(round(scenario.nonsparsity[s] * n * k))
            flat = gen.choice(n * k, size=count, replace=False)
            indicators[s].ravel()[flat] = 1
    else:
        shared = (gen.random((n, k)) < scenario.group_map).astype(np.int8)
        indicators[:] = shared[None, :, :]

    empty = np.nonzero(indicators.sum(axis=1) == 0)
    if empty[0].size:
        raise ValidationError(
            f"empty ICN: factor {empty[1][0]} of subject {empty[0][0]} has no "
            "member regions; raise the fraction or reseed"
        )

    if scenario.loading_mode in ("slab", "unit"):
        values = gen.normal(0.0, np.sqrt(scenario.tau2), size=(s_count, n, k))
    else:
        values = np.where(gen.random((s_count, n, k)) < 0.5, -1.0, 1.0)
    values = values * indicators
    if scenario.loading_mode == "unit":
        # rescale every active column to slab-typical root-mean-square
        # (sum of squares m*tau2 over m members), so column scale carries
        # no draw-to-draw luck and recovery error reflects structure only
        for s in range(s_count):
            for j in range(k):
                m = indicators[s, :, j].sum()
                ssq = values[s, :, j] @ values[s, :, j]
                if m:
                    values[s, :, j] *= np.sqrt(m * scenario.tau2 / ssq)
    return values, indicators


def gen_sv_path(
    mu: float, phi: float, delta2: float, n_times: int, gen: np.random.Generator
) -> np.ndarray:
    """One stationary AR(1) log-amplitude path of length n_times."""
    if abs(phi) >= 1.0:
        raise ValidationError("phi must be inside (-1, 1)")
    if delta2 < 0.0:
        raise ValidationError("delta2 must be >= 0")
    innov = gen.normal(0.0, 1.0, size=n_times)
    delta = np.sqrt(delta2)
    h = np.empty(n_times)
    h[0] = mu + delta / np.sqrt(1.0 - phi * phi) * innov[0]
    for t in range(1, n_times):
        h[t] = mu + phi * (h[t - 1] - mu) + delta * innov[t]
    return h


def gen_dataset(
    scenario: SimScenario,
    loadings: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> tuple[Dataset, ChainState]:
    """Simulate a full dataset plus the generating latent state.

    Within each condition, each factor's log-amplitude follows its AR(1)
    path, factors are mean-zero Gaussians with variance ``exp(h)``, and
    observations add diagonal Gaussian noise on top of the loading mix.

    ``loadings`` optionally fixes the ``(values, indicators)`` pair
    instead of drawing them, which permits degenerate designs (e.g. all
    loadings zero, leaving pure noise) that ``gen_loadings`` rejects.
    """
    d = scenario.dims
    if loadings is None:
        loadings, indicators = gen_loadings(scenario)
    else:
        loadings, indicators = loadings
        loadings = np.asarray(loadings, dtype=float)
        indicators = np.asarray(indicators, dtype=np.int8)
        want = (d.n_subjects, d.n_regions, d.n_factors)
        if loadings.shape != want or indicators.shape != want:
            raise ValidationError(f"fixed loadings must have shape {want}")

    factors: list[np.ndarray] = []
    log_vol: list[np.ndarray] = []
    series: list[list[np.ndarray]] = []
    for g, t_g in enumerate(d.n_times):
        f_g = np.empty((d.n_subjects, d.n_factors, t_g))
        h_g = np.empty((d.n_subjects, d.n_factors, t_g))
        per_subject = []
        for s in range(d.n_subjects):
            for k in range(d.n_factors):
                gen = rng_mod.stream(scenario.seed, 1, rng_mod.KIND_SIMULATE, g, s, k)
                h = gen_sv_path(
                    scenario.mu_true[g, s, k],
                    scenario.phi_true[g, s, k],
                    scenario.delta2_true[g, s, k],
                    t_g,
                    gen,
                )
                h_g[s, k] = h
                f_g[s, k] = gen.normal(0.0, 1.0, size=t_g) * np.exp(0.5 * h)
            gen = rng_mod.stream(scenario.seed, 2, rng_mod.KIND_SIMULATE, g, s)
            noise = gen.normal(0.0, 1.0, size=(d.n_regions, t_g))
            noise *= np.sqrt(scenario.sigma2_true[g, s])[:, None]
            per_subject.append(loadings[s] @ f_g[s] + noise)
        factors.append(f_g)
        log_vol.append(h_g)
        series.append(per_subject)

    dataset = Dataset(
        series=series,
        condition_names=[f"cond{g}" if g else "rest" for g in range(d.n_conditions)],
        subject_ids=[f"sub{s:02d}" for s in range(d.n_subjects)],
        rest_index=0,
    )
    truth = ChainState(
        loadings=loadings,
        indicators=indicators,
        factors=factors,
        log_vol=log_vol,
        sv_mu=scenario.mu_true.copy(),
        sv_phi=scenario.phi_true.copy(),
        sv_delta2=scenario.delta2_true.copy(),
        noise_var=scenario.sigma2_true.copy(),
        incl_prob=(
            np.clip(scenario.group_map, 1e-6, 1 - 1e-6)
            if scenario.group_map is not None
            else np.full((d.n_regions, d.n_factors), 0.5)
        ),
    )
    return dataset, truth


def sparsity_benchmark_scenario(
    seed: int = 0,
    n_times: int = 1000,
    fractions: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
    loading_mode: str = "unit",
    sigma2: float = 0.1,
) -> SimScenario:
    """Small-network design: 6 regions, 3 factors, two equal conditions.

    One subject per sparsity fraction.  Log-amplitude levels step down
    with the factor index (2-k for factor k starting at 1), persistence
    0.9, innovation sd 0.5.  The observation noise is low by default so
    reconstruction error reflects the latent structure rather than the
    noise floor, and loading columns are drawn at unit scale so recovery
    is comparable across subjects.
    """
    n_subjects = len(fractions)
    dims = Dimensions(
        n_regions=6, n_factors=3, n_subjects=n_subjects, n_times=(n_times, n_times)
    )
    mu = np.array([2.0 - k for k in range(1, 4)])
    return SimScenario(
        dims=dims,
        mu_true=mu[None, None, :],
        phi_true=np.array(0.9),
        delta2_true=np.array(0.25),
        sigma2_true=np.array(sigma2),
        seed=seed,
        nonsparsity=np.asarray(fractions, dtype=float),
        loading_mode=loading_mode,
        name="sparsity-bench",
    )


def block_inclusion_map(
    n_regions: int, n_factors: int, p_in: float = 0.95, p_out: float = 0.05
) -> np.ndarray:
    """Contiguous block-diagonal inclusion map.

    Regions are split into n_factors contiguous blocks; a region's own
    block gets probability p_in, everything else p_out.
    """
    edges = np.linspace(0, n_regions, n_factors + 1).astype(int)
    out = np.full((n_regions, n_factors), p_out)
    for k in range(n_factors):
        out[edges[k]:edges[k + 1], k] = p_in
    return out


def group_benchmark_scenario(
    seed: int = 0,
    n_regions: int = 30,
    n_factors: int = 6,
    n_subjects: int = 8,
    n_times: int = 200,
) -> SimScenario:
    """Homogeneous-group design: shared block membership, one condition."""
    dims = Dimensions(
        n_regions=n_regions,
        n_factors=n_factors,
        n_subjects=n_subjects,
        n_times=(n_times,),
    )
    mu = np.linspace(1.0, 0.0, n_factors)
    return SimScenario(
        dims=dims,
        mu_true=mu[None, None, :],
        phi_true=np.array(0.9),
        delta2_true=np.array(0.25),
        sigma2_true=np.array(1.0),
        seed=seed,
        group_map=block_inclusion_map(n_regions, n_factors),
        name="group-bench",
    )


def scenario_metadata(scenario: SimScenario) -> dict:
    d = scenario.dims
    meta = {
        "name": scenario.name,
        "seed": scenario.seed,
        "n_regions": d.n_regions,
        "n_factors": d.n_factors,
        "n_subjects": d.n_subjects,
        "n_times": list(d.n_times),
        "loading_mode": scenario.loading_mode,
        "tau2": scenario.tau2,
    }
    if scenario.nonsparsity is not None:
        meta["nonsparsity"] = [float(f) for f in scenario.nonsparsity]
    else:
        meta["group_map"] = np.asarray(scenario.group_map).tolist()
    return meta


def write_scenario(scenario: SimScenario, out_dir: str | Path) -> Path:
    """Simulate and write a dataset in the manifest/CSV layout plus truth.

    Produces ``manifest.json``, one series CSV per (condition, subject),
    and ``truth.json`` holding every generating parameter.  Returns the
    manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset, truth = gen_dataset(scenario)

    conditions: dict[str, dict[str, str]] = {}
    for g, cname in enumerate(dataset.condition_names):
        files = {}
        for s, sid in enumerate(dataset.subject_ids):
            rel = f"{cname}_{sid}.csv"
            data_mod.write_series_csv(out_dir / rel, dataset.series[g][s])
            files[sid] = rel
        conditions[cname] = files
    manifest = {"rest_condition": dataset.condition_names[0], "conditions": conditions}
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    truth_doc = {
        "scenario": scenario_metadata(scenario),
        "loadings": truth.loadings.tolist(),
        "indicators": truth.indicators.astype(int).tolist(),
        "sv_mu": truth.sv_mu.tolist(),
        "sv_phi": truth.sv_phi.tolist(),
        "sv_delta2": truth.sv_delta2.tolist(),
        "noise_var": truth.noise_var.tolist(),
        "factors": [f.tolist() for f in truth.factors],
        "log_vol": [h.tolist() for h in truth.log_vol],
    }
    with open(out_dir / "truth.json", "w") as fh:
        json.dump(truth_doc, fh, sort_keys=True)
        fh.write("\n")
    return manifest_path
