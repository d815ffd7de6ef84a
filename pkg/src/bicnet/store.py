"""On-disk draw store: one binary file per variable, deterministic metadata.

Each ``.bin`` file is a single JSON header line (shape and dtype) followed
by the raw C-order little-endian float64 bytes.  Metadata carries every
setting needed to re-run the job and deliberately contains no timestamps,
so rerunning an identical configuration reproduces every output byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .types import ValidationError

FORMAT_VERSION = 1


def write_array(path: str | Path, arr: np.ndarray) -> None:
    arr64 = np.ascontiguousarray(np.asarray(arr), dtype="<f8")
    header = json.dumps(
        {"shape": list(arr64.shape), "dtype": "<f8", "version": FORMAT_VERSION},
        sort_keys=True,
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(arr64.tobytes())


def read_array(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"array file not found: {path}")
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValidationError(f"bad array header in {path}")
        shape = tuple(header["shape"])
        data = fh.read()
    expected = int(np.prod(shape)) * 8
    if len(data) != expected:
        raise ValidationError(
            f"truncated array file {path}: {len(data)} bytes, expected {expected}"
        )
    return np.frombuffer(data, dtype="<f8").reshape(shape).copy()


def export_csv(bin_path: str | Path, csv_path: str | Path) -> None:
    """Flatten one stored array to CSV (draw index + flattened entries)."""
    arr = read_array(bin_path)
    flat = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr[:, None]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw"] + [f"v{i}" for i in range(flat.shape[1])])
        for i, row in enumerate(flat):
            writer.writerow([i] + [f"{v:.17g}" for v in row])


def write_metadata(path: str | Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_metadata(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"metadata not found: {path}")
    with open(path) as fh:
        return json.load(fh)


def save_run(out_dir: str | Path, result, sampler, extra: dict | None = None) -> Path:
    """Write a complete fit (all chains) under ``out_dir``.

    Layout: ``metadata.json`` plus one ``chainNN/`` directory per chain
    holding the stored draw variables, running posterior means of the
    latent paths, the per-sweep log-likelihood trace, and the alignment
    reference.
    """
    from .sampler import STORED_VARIABLES  # local import to avoid a cycle

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    hyper = cfg.hyper
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": "fit",
        "config": {
            "n_factors": cfg.n_factors,
            "n_iter": cfg.n_iter,
            "burn_in": cfg.burn_in,
            "thin": cfg.thin,
            "n_chains": cfg.n_chains,
            "seed": cfg.seed,
            "threads": cfg.threads,
            "group_layer": sampler.group_layer,
        },
        "hyperparameters": {
            "b_mu": hyper.b_mu, "B_mu": hyper.B_mu,
            "a_phi": hyper.a_phi, "b_phi": hyper.b_phi,
            "B_delta": hyper.B_delta,
            "c_sigma": hyper.c_sigma, "d_sigma_resolved": result.d_sigma,
            "tau2_load": hyper.tau2_load, "conc": hyper.conc,
            "a_theta": hyper.a_theta, "b_theta": hyper.b_theta,
            "S2": hyper.S2, "alpha1": hyper.alpha1, "alpha2": hyper.alpha2,
        },
        "dims": {
            "n_regions": result.dims.n_regions,
            "n_factors": result.dims.n_factors,
            "n_subjects": result.dims.n_subjects,
            "n_times": list(result.dims.n_times),
        },
        "dataset": {
            "condition_names": sampler.dataset.condition_names,
            "subject_ids": sampler.dataset.subject_ids,
            "rest_index": sampler.dataset.rest_index,
        },
        "chains": [],
    }
    for i, chain in enumerate(result.chains):
        cdir = out_dir / f"chain{i:02d}"
        cdir.mkdir(exist_ok=True)
        for name in STORED_VARIABLES:
            write_array(cdir / f"{name}.bin", chain.draws.get(name))
        for g in range(result.dims.n_conditions):
            write_array(cdir / f"mean_factors_g{g}.bin", chain.mean_factors[g])
            write_array(cdir / f"mean_log_vol_g{g}.bin", chain.mean_log_vol[g])
            write_array(cdir / f"mean_amplitude_g{g}.bin", chain.mean_amplitude[g])
        write_array(cdir / "loglik_trace.bin", chain.loglik_trace)
        write_array(cdir / "reference.bin", chain.reference)
        meta["chains"].append({
            "dir": cdir.name,
            "chain_seed": chain.chain_seed,
            "n_draws": chain.draws.n_draws,
            "acceptance": chain.acceptance,
            "tuning": chain.tuning_summary,
        })
    if extra:
        meta["extra"] = extra
    write_metadata(out_dir / "metadata.json", meta)
    return out_dir


def load_run(run_dir: str | Path) -> dict:
    """Read a saved fit back into arrays.

    Returns ``{"metadata": ..., "chains": [{"draws": {...}, "means":
    {...}, "loglik_trace": ..., "reference": ...}, ...]}``.
    """
    from .sampler import STORED_VARIABLES

    run_dir = Path(run_dir)
    meta = read_metadata(run_dir / "metadata.json")
    if meta.get("kind") != "fit":
        raise ValidationError(f"{run_dir} does not contain a saved fit")
    n_cond = len(meta["dims"]["n_times"])
    chains = []
    for entry in meta["chains"]:
        cdir = run_dir / entry["dir"]
        draws = {
            name: read_array(cdir / f"{name}.bin") for name in STORED_VARIABLES
        }
        means = {
            kind: [
                read_array(cdir / f"mean_{kind}_g{g}.bin") for g in range(n_cond)
            ]
            for kind in ("factors", "log_vol", "amplitude")
        }
        chains.append({
            "draws": draws,
            "means": means,
            "loglik_trace": read_array(cdir / "loglik_trace.bin"),
            "reference": read_array(cdir / "reference.bin"),
            "info": entry,
        })
    return {"metadata": meta, "chains": chains}
