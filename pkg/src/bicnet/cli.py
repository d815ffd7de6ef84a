"""Command-line interface.

Verbs: ``simulate`` (synthetic dataset generation), ``fit`` (run the
sampler), ``summarize`` (posterior tables from a saved fit), ``regress``
(task effects + behavioral association), ``select-k`` (information
criteria over a list of K), and ``compare`` (match two binary group
maps).  Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines  # noqa: F401  (re-exported for scripts)
from . import behavior, data, posthoc, simulate, store
from .sampler import FitConfig, Sampler, pool_chains
from .types import Hyperparameters, NumericalError, ValidationError

FLOAT_FMT = "%.10g"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def _write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _load_json(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"file not found: {p}")
    try:
        with open(p) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{p} is not valid JSON: {e}")


# ---------------------------------------------------------------------------
# simulate


def scenario_from_json(doc: dict) -> simulate.SimScenario:
    """Build a scenario from a JSON document (preset name or full spec)."""
    doc = dict(doc)
    preset = doc.pop("preset", None)
    if preset == "sparsity-bench":
        allowed = {"seed", "n_times", "fractions", "loading_mode"}
        bad = set(doc) - allowed
        if bad:
            raise ValidationError(f"unknown sparsity-bench fields: {sorted(bad)}")
        if "fractions" in doc:
            doc["fractions"] = tuple(doc["fractions"])
        return simulate.sparsity_benchmark_scenario(**doc)
    if preset == "group-bench":
        allowed = {"seed", "n_regions", "n_factors", "n_subjects", "n_times"}
        bad = set(doc) - allowed
        if bad:
            raise ValidationError(f"unknown group-bench fields: {sorted(bad)}")
        return simulate.group_benchmark_scenario(**doc)
    if preset is not None:
        raise ValidationError(f"unknown preset {preset!r}")

    required = {"n_regions", "n_factors", "n_subjects", "n_times"}
    missing = required - set(doc)
    if missing:
        raise ValidationError(f"scenario missing fields: {sorted(missing)}")
    from .types import Dimensions

    dims = Dimensions(
        n_regions=int(doc["n_regions"]),
        n_factors=int(doc["n_factors"]),
        n_subjects=int(doc["n_subjects"]),
        n_times=tuple(int(t) for t in doc["n_times"]),
    )
    return simulate.SimScenario(
        dims=dims,
        mu_true=np.asarray(doc.get("mu", 0.0), dtype=float),
        phi_true=np.asarray(doc.get("phi", 0.9), dtype=float),
        delta2_true=np.asarray(doc.get("delta2", 0.25), dtype=float),
        sigma2_true=np.asarray(doc.get("sigma2", 1.0), dtype=float),
        seed=int(doc.get("seed", 0)),
        nonsparsity=(
            np.asarray(doc["nonsparsity"], dtype=float)
            if "nonsparsity" in doc else None
        ),
        group_map=(
            np.asarray(doc["group_map"], dtype=float)
            if "group_map" in doc else None
        ),
        tau2=float(doc.get("tau2", 1.0)),
        loading_mode=doc.get("loading_mode", "slab"),
        name=doc.get("name", "custom"),
    )


def cmd_simulate(args) -> int:
    doc = _load_json(args.scenario)
    if args.seed is not None:
        doc["seed"] = args.seed
    scenario = scenario_from_json(doc)
    manifest = simulate.write_scenario(scenario, args.out)
    print(f"wrote dataset: {manifest}")
    return 0


# ---------------------------------------------------------------------------
# fit


def load_fit_config(path: str | Path) -> dict:
    doc = _load_json(path)
    if "manifest" not in doc or "n_factors" not in doc:
        raise ValidationError("fit config needs at least 'manifest' and 'n_factors'")
    hyper_doc = doc.get("hyper", {})
    known = set(Hyperparameters.__dataclass_fields__)
    bad = set(hyper_doc) - known
    if bad:
        raise ValidationError(f"unknown hyperparameter fields: {sorted(bad)}")
    if hyper_doc.get("prior_map") is not None:
        hyper_doc = dict(hyper_doc)
        hyper_doc["prior_map"] = np.asarray(hyper_doc["prior_map"], dtype=float)
    doc["hyper"] = Hyperparameters(**hyper_doc)
    # resolve dataset paths relative to the config file's directory
    doc["manifest"] = str((Path(path).parent / doc["manifest"]).resolve())
    return doc


def _build_sampler(doc: dict, seed=None, threads=None, n_factors=None) -> Sampler:
    dataset = data.load_manifest(doc["manifest"])
    if doc.get("standardize", True):
        dataset = data.preprocess(dataset)
    else:
        dataset = data.preprocess(dataset, standardize=False)
    config = FitConfig(
        n_factors=int(n_factors if n_factors is not None else doc["n_factors"]),
        n_iter=int(doc.get("n_iter", 2000)),
        burn_in=int(doc.get("burn_in", 1000)),
        thin=int(doc.get("thin", 1)),
        n_chains=int(doc.get("n_chains", 1)),
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        threads=int(threads if threads is not None else doc.get("threads", 1)),
        single_subject=doc.get("single_subject"),
        hyper=doc["hyper"],
    )
    return Sampler(dataset, config)


def cmd_fit(args) -> int:
    doc = load_fit_config(args.config)
    out = Path(args.out if args.out else doc.get("out", "fit-out"))
    sampler = _build_sampler(doc, seed=args.seed, threads=args.threads)
    result = sampler.run()
    scores = [sampler.selection_scores(c) for c in result.chains]
    store.save_run(out, result, sampler, extra={"selection_scores": scores})
    for i, chain in enumerate(result.chains):
        acc = chain.acceptance
        print(
            f"chain {i}: {chain.draws.n_draws} draws, "
            f"h acceptance {acc['h_accept_rate']:.3f}, "
            f"final loglik {chain.loglik_trace[-1]:.2f}"
        )
    print(f"saved fit: {out}")
    return 0


# ---------------------------------------------------------------------------
# summarize


def _chain_draws(run: dict, chain: int | None, pool: bool) -> dict[str, np.ndarray]:
    chains = run["chains"]
    if pool:
        from .sampler import STORED_VARIABLES

        class _D:
            def __init__(self, d):
                self._d = d

            def get(self, name):
                return self._d[name]

        medians = [np.median(c["draws"]["loadings"], axis=0) for c in chains]
        base = np.abs(medians[0])
        pooled: dict[str, list[np.ndarray]] = {n: [] for n in STORED_VARIABLES}
        for c, med in zip(chains, medians):
            plan = posthoc.plan_for_draw(med, base)
            for name in STORED_VARIABLES:
                arr = c["draws"][name]
                if name == "loadings":
                    arr = plan.apply_columns(arr)
                elif name != "noise_var" and name != "loglik":
                    arr = plan.apply_columns(arr, signed=False)
                pooled[name].append(arr)
        return {n: np.concatenate(v, axis=0) for n, v in pooled.items()}
    idx = 0 if chain is None else chain
    if not 0 <= idx < len(chains):
        raise ValidationError(f"chain index {idx} out of range")
    return run["chains"][idx]["draws"]


def cmd_summarize(args) -> int:
    run = store.load_run(args.run)
    draws = _chain_draws(run, args.chain, args.pool)
    if draws["loadings"].shape[0] < 2:
        raise ValidationError("store holds fewer than 2 draws")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est = args.estimator

    lam = posthoc.posterior_summary(draws["loadings"], est, args.level)
    incl = draws["indicators"].mean(axis=0)
    s_count, n_regions, k_count = lam["estimate"].shape
    _write_table(
        out / "loadings.csv",
        ["subject", "region", "factor", "estimate", "lower", "upper",
         "inclusion_rate"],
        (
            (s, n, k, lam["estimate"][s, n, k], lam["lower"][s, n, k],
             lam["upper"][s, n, k], incl[s, n, k])
            for s in range(s_count)
            for n in range(n_regions)
            for k in range(k_count)
        ),
    )

    pi = posthoc.posterior_summary(draws["incl_prob"], est, args.level)
    _write_table(
        out / "incl_prob.csv",
        ["region", "factor", "estimate", "lower", "upper"],
        (
            (n, k, pi["estimate"][n, k], pi["lower"][n, k], pi["upper"][n, k])
            for n in range(n_regions)
            for k in range(k_count)
        ),
    )

    gmap = posthoc.threshold_group_map(pi["estimate"], args.threshold)
    _write_table(
        out / "group_map.csv",
        ["region"] + [f"f{k}" for k in range(k_count)],
        ((n, *gmap[n].astype(int)) for n in range(n_regions)),
    )

    rows = []
    n_cond = draws["sv_mu"].shape[1]
    mu_s = posthoc.posterior_summary(draws["sv_mu"], est, args.level)
    phi_s = posthoc.posterior_summary(draws["sv_phi"], est, args.level)
    d2_s = posthoc.posterior_summary(draws["sv_delta2"], est, args.level)
    for g in range(n_cond):
        for s in range(s_count):
            for k in range(k_count):
                rows.append(
                    (g, s, k, mu_s["estimate"][g, s, k],
                     phi_s["estimate"][g, s, k], d2_s["estimate"][g, s, k])
                )
    _write_table(
        out / "sv_params.csv",
        ["condition", "subject", "factor", "mu", "phi", "delta2"], rows,
    )

    sig = posthoc.posterior_summary(draws["noise_var"], est, args.level)
    _write_table(
        out / "noise_var.csv",
        ["condition", "subject", "region", "estimate"],
        (
            (g, s, n, sig["estimate"][g, s, n])
            for g in range(n_cond)
            for s in range(s_count)
            for n in range(n_regions)
        ),
    )
    print(f"wrote summary tables: {out}")
    return 0


# ---------------------------------------------------------------------------
# regress


def cmd_regress(args) -> int:
    run = store.load_run(args.run)
    meta = run["metadata"]
    if meta["dataset"]["rest_index"] is None:
        raise ValidationError("task effects require a rest condition")
    cond_names = meta["dataset"]["condition_names"]
    if args.task not in cond_names:
        raise ValidationError(
            f"unknown task condition {args.task!r}; have {cond_names}"
        )
    g = cond_names.index(args.task)
    if g == meta["dataset"]["rest_index"]:
        raise ValidationError("task condition must differ from rest")

    draws = _chain_draws(run, args.chain, args.pool)
    mu_draws = draws["sv_mu"]
    rest = mu_draws[:, meta["dataset"]["rest_index"]]
    task = mu_draws[:, g]
    effect = behavior.compute_task_effects(rest, task, threshold=args.threshold)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    s_count, k_count = effect.delta.shape
    _write_table(
        out / f"task_effects_{args.task}.csv",
        ["subject", "factor", "delta", "sign", "label"],
        (
            (s, k, effect.delta[s, k], effect.sign[s, k], effect.labels[s, k])
            for s in range(s_count)
            for k in range(k_count)
        ),
    )

    subject_ids = meta["dataset"]["subject_ids"]
    measures = data.load_behavioral_csv(args.behavior, subject_ids)
    if args.measure is not None:
        if args.measure not in measures:
            raise ValidationError(
                f"measure {args.measure!r} not in {sorted(measures)}"
            )
        measures = {args.measure: measures[args.measure]}

    hyper = Hyperparameters()
    for name, z in sorted(measures.items()):
        reg = behavior.run_regression(
            z, effect.delta, hyper,
            n_iter=args.iters, burn_in=args.burn_in, seed=args.seed or 0,
        )
        assoc = behavior.summarize_associations(reg["beta"], args.level)
        try:
            ols = behavior.ols_report(z, effect.delta)
            ols_coef, ols_p = ols["coef"], ols["p"]
        except ValidationError:
            ols_coef = np.full(k_count, np.nan)
            ols_p = np.full(k_count, np.nan)
        _write_table(
            out / f"associations_{args.task}_{name}.csv",
            ["factor", "estimate", "lower", "upper", "associated",
             "inclusion_rate", "ols_coef", "ols_p"],
            (
                (k, assoc["estimate"][k], assoc["lower"][k], assoc["upper"][k],
                 int(assoc["associated"][k]), assoc["inclusion_rate"][k],
                 ols_coef[k], ols_p[k])
                for k in range(k_count)
            ),
        )
        flagged = [int(k) for k in np.nonzero(assoc["associated"])[0]]
        print(f"{name}: associated factors {flagged}")
    print(f"wrote association tables: {out}")
    return 0


# ---------------------------------------------------------------------------
# select-k


def cmd_select_k(args) -> int:
    doc = load_fit_config(args.config)
    try:
        k_list = sorted({int(k) for k in args.k.split(",")})
    except ValueError:
        raise ValidationError(f"bad K list {args.k!r}")
    rows = []
    means, spreads = [], []
    for k in k_list:
        sampler = _build_sampler(doc, seed=args.seed, threads=args.threads,
                                 n_factors=k)
        result = sampler.run()
        scores = [sampler.selection_scores(c) for c in result.chains]
        aics = np.array([s["aic"] for s in scores])
        bics = np.array([s["bic"] for s in scores])
        dics = np.array([s["dic"] for s in scores])
        means.append(float(aics.mean()))
        spreads.append(float(aics.std(ddof=1)) if len(scores) > 1 else 0.0)
        rows.append(
            (k, aics.mean(), bics.mean(), dics.mean(),
             spreads[-1], len(scores))
        )
        print(f"K={k}: AIC {aics.mean():.2f}  BIC {bics.mean():.2f}  "
              f"DIC {dics.mean():.2f}")
    out = Path(args.out) if args.out else Path("selection")
    out.mkdir(parents=True, exist_ok=True)
    _write_table(
        out / "selection.csv",
        ["k", "aic", "bic", "dic", "aic_sd", "n_chains"], rows,
    )
    if args.pick == "elbow":
        choice = posthoc.pick_elbow(k_list, means, spreads)
        print(f"elbow pick: K={choice}")
        with open(out / "choice.json", "w") as fh:
            json.dump({"picked_k": choice, "rule": "elbow"}, fh, sort_keys=True)
            fh.write("\n")
    print(f"wrote selection table: {out}")
    return 0


# ---------------------------------------------------------------------------
# compare


def _read_map_csv(path: str | Path) -> list[set[int]]:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"map file not found: {p}")
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "region":
            raise ValidationError(
                f"{p} is not a group-map CSV (expected 'region,f0,...' header)"
            )
        k = len(header) - 1
        maps: list[set[int]] = [set() for _ in range(k)]
        for row in reader:
            region = int(row[0])
            for j in range(k):
                if int(row[j + 1]):
                    maps[j].add(region)
    return maps


def cmd_compare(args) -> int:
    maps_a = _read_map_csv(args.a)
    maps_b = _read_map_csv(args.b)
    if len(maps_a) != len(maps_b):
        raise ValidationError(
            f"map factor counts differ: {len(maps_a)} vs {len(maps_b)}"
        )
    match = posthoc.match_maps(maps_a, maps_b)
    rows = [
        (int(match["assignment"][j]), j, match["similarities"][j])
        for j in range(len(maps_b))
    ]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_table(out / "matched.csv", ["a_factor", "b_factor", "jaccard"], rows)
        print(f"wrote matching: {out}")
    print(
        f"mean Jaccard {match['mean']:.4f} +/- {match['sd']:.4f} "
        f"over {len(maps_b)} matched pairs"
    )
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bicnet",
        description=(
            "Bayesian sparse dynamic factor model with stochastic "
            "volatility for multi-subject connectivity analysis"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the MCMC sampler")
    p.add_argument("--config", required=True, help="fit config JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="posterior tables from a saved fit")
    p.add_argument("--run", required=True, help="saved fit directory")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.999,
                   help="group-map inclusion threshold")
    p.add_argument("--estimator", choices=["median", "mean"], default="median")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--chain", type=int, default=None)
    p.add_argument("--pool", action="store_true",
                   help="pool all chains after re-alignment")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("regress", help="task effects + behavioral association")
    p.add_argument("--run", required=True)
    p.add_argument("--behavior", required=True, help="behavioral CSV")
    p.add_argument("--task", required=True, help="task condition name")
    p.add_argument("--measure", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None,
                   help="fixed activation threshold (default: KS critical value)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--chain", type=int, default=None)
    p.add_argument("--pool", action="store_true")
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("select-k", help="information criteria over several K")
    p.add_argument("--config", required=True)
    p.add_argument("--k", required=True, help="comma-separated K values")
    p.add_argument("--pick", choices=["none", "elbow"], default="elbow")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("compare", help="match two binary group maps")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is None and "BICNET_THREADS" in os.environ:
        try:
            args.threads = int(os.environ["BICNET_THREADS"])
        except ValueError:
            print("ignoring non-integer BICNET_THREADS", file=sys.stderr)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
