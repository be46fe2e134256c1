"""Seeded experiment runner: generate, sketch, recover, score, report.

A run is fully determined by (config, seed): per-trial seeds derive from
the master seed through the counter PRF, trials never share state, and
aggregation is order-independent, so reruns (at any worker count)
produce identical trial records.  Wall-clock timings are kept out of
the JSON-lines trial log for that reason; they appear only in the
summary CSV.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import blocks, countsketch, decoder, hypergraph, signals, sketch
from .prng import stream_key

KINDS = (
    "set_query_l2",
    "set_query_l1",
    "zipfian",
    "block_sparse",
    "peelability",
    "runtime_scaling",
)

NOISE_MODELS = ("none", "gaussian", "adversarial_tail")


@dataclass
class ExperimentConfig:
    kind: str = "set_query_l2"
    n: int = 10_000
    k: int = 100
    eps: float = 0.5
    d: int = 7
    trials: int = 100
    seed: int = 0
    noise: str = "gaussian"
    noise_sigma: float = 1.0
    head_sigma: float = 10.0
    repetitions: int = 1
    b: int = 16
    alpha: float = 1.0
    candidate_multiplier: int = 9
    scale_factor: int = 20
    workers: int = 1
    success_threshold: float = 0.9
    ratio_min: float = 10.0
    ratio_max: float = 40.0
    out_dir: str | None = None

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.noise not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.noise!r}")
        if self.trials < 0:
            raise ValueError("trials must be non-negative")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


@dataclass
class TrialRecord:
    trial: int
    seed: int
    descriptor: dict
    error_ratio: float
    success: bool
    abort: bool
    wall_time_s: float
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        # wall_time_s is deliberately omitted: trial logs must be
        # byte-identical across reruns.
        return {
            "trial": self.trial,
            "seed": self.seed,
            "descriptor": self.descriptor,
            "error_ratio": self.error_ratio if math.isfinite(self.error_ratio) else None,
            "success": self.success,
            "abort": self.abort,
            "diagnostics": self.diagnostics,
        }


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list[TrialRecord]
    summary: dict

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("threshold_met", False))


def trial_seed(master_seed: int, trial: int) -> int:
    return int(stream_key(master_seed, trial))


def _matrix_seed(seed: int, rep: int) -> int:
    return int(stream_key(seed, 1_000_003 + rep))


def _gen_support(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return np.sort(rng.choice(n, size=k, replace=False))


def adversarial_image_noise(
    matrix: sketch.SketchMatrix, support, total_norm: float, rng: np.random.Generator
) -> np.ndarray:
    """Noise vector with all its mass on cells in the support's image."""
    support = decoder.as_support(support, n=matrix.n)
    image = np.unique(matrix.rows[support.indices].ravel())
    nu = np.zeros(matrix.w)
    if len(image) == 0 or total_norm == 0:
        return nu
    signs = rng.choice([-1.0, 1.0], size=len(image))
    nu[image] = signs * (total_norm / math.sqrt(len(image)))
    return nu


def _run_set_query_trial(config: ExperimentConfig, seed: int) -> TrialRecord:
    norm = sketch.NORM_L2 if config.kind == "set_query_l2" else sketch.NORM_L1
    rng = np.random.default_rng(seed)
    params = sketch.derive_params(
        config.n, config.k, config.eps, norm, config.d, seed=seed
    )
    support = _gen_support(rng, config.n, config.k)
    x = np.zeros(config.n)
    x[support] = rng.normal(0.0, config.head_sigma, size=config.k)
    if config.noise == "gaussian":
        tail_mask = np.ones(config.n, dtype=bool)
        tail_mask[support] = False
        x[tail_mask] = rng.normal(0.0, config.noise_sigma, size=config.n - config.k)

    matrices = []
    sketches = []
    noise_norms = []
    for rep in range(config.repetitions):
        p = sketch.SketchParams(
            n=params.n, k=params.k, eps=params.eps, d=params.d,
            norm=params.norm, seed=_matrix_seed(seed, rep), w=params.w,
        )
        mat = sketch.build_matrix(p)
        sk = sketch.apply(mat, x)
        if config.noise == "gaussian":
            nu = rng.normal(0.0, config.noise_sigma, size=params.w)
        elif config.noise == "adversarial_tail":
            nu = adversarial_image_noise(
                mat, support, config.noise_sigma * math.sqrt(params.w), rng
            )
        else:
            nu = np.zeros(params.w)
        sk = sketch.add_noise(sk, nu)
        matrices.append(mat)
        sketches.append(sk)
        order = 2 if norm == sketch.NORM_L2 else 1
        noise_norms.append(float(np.linalg.norm(nu, ord=order)))

    t0 = time.perf_counter()
    abort = False
    try:
        est = decoder.recover_robust(matrices, sketches, support, rng=rng)
        estimate = est.to_dense()
    except decoder.RecoveryError:
        abort = True
        estimate = np.zeros(config.n)
    wall = time.perf_counter() - t0

    order = 2 if norm == sketch.NORM_L2 else 1
    x_head = np.zeros_like(x)
    x_head[support] = x[support]
    num = float(np.linalg.norm(estimate - x_head, ord=order))
    den = float(np.linalg.norm(x - x_head, ord=order)) + float(
        np.mean(noise_norms)
    )
    if den == 0.0:
        ratio = 0.0 if num == 0.0 else math.inf
    else:
        ratio = num / den
    success = (not abort) and ratio <= config.eps
    return TrialRecord(
        trial=-1,
        seed=seed,
        descriptor={
            "kind": config.kind, "n": config.n, "k": config.k,
            "eps": config.eps, "d": config.d, "w": params.w,
            "noise": config.noise, "repetitions": config.repetitions,
        },
        error_ratio=ratio,
        success=success,
        abort=abort,
        wall_time_s=wall,
    )


def _run_peelability_trial(config: ExperimentConfig, seed: int) -> TrialRecord:
    d = config.d
    w = 2 * d * (d - 1) * config.k
    p = sketch.SketchParams(
        n=config.k, k=config.k, eps=1.0, d=d, norm=sketch.NORM_L2, seed=seed, w=w
    )
    mat = sketch.build_matrix(p)
    support = np.arange(config.k)
    report = hypergraph.components(mat, support)
    all_good = hypergraph.peelable(report)
    zero = sketch.Sketch(np.zeros(w), p)
    t0 = time.perf_counter()
    abort = False
    try:
        decoder.recover(mat, zero, support, rng=np.random.default_rng(seed))
    except decoder.RecoveryError:
        abort = True
    wall = time.perf_counter() - t0
    # The certificate is sound unless an all-good instance aborted.
    success = not (all_good and abort)
    counts = report.class_counts
    return TrialRecord(
        trial=-1,
        seed=seed,
        descriptor={"kind": config.kind, "k": config.k, "d": d, "w": w},
        error_ratio=0.0,
        success=success,
        abort=abort,
        wall_time_s=wall,
        diagnostics={
            "all_good": all_good,
            "class_counts": counts,
            "max_component_size": report.max_component_size,
        },
    )


def _run_zipfian_trial(config: ExperimentConfig, seed: int) -> TrialRecord:
    rng = np.random.default_rng(seed)
    x = signals.gen_zipfian(config.n, config.alpha, scale=1.0, seed=seed)
    cs_params = countsketch.derive_cs_params(
        config.n, config.k, config.eps, seed=seed,
        candidate_multiplier=config.candidate_multiplier,
    )
    table = countsketch.cs_apply(cs_params, x)
    shortlist = config.candidate_multiplier * config.k
    eps_sq = config.eps / (3.0 * math.sqrt(math.log2(max(config.n, 2))))
    sq_params = sketch.derive_params(
        config.n, min(shortlist, config.n), min(eps_sq, 1.0), sketch.NORM_L2, config.d
    )
    matrices = []
    sketches = []
    for rep in range(config.repetitions):
        p = sketch.SketchParams(
            n=sq_params.n, k=sq_params.k, eps=sq_params.eps, d=sq_params.d,
            norm=sq_params.norm, seed=_matrix_seed(seed, rep), w=sq_params.w,
        )
        mat = sketch.build_matrix(p)
        matrices.append(mat)
        sketches.append(sketch.apply(mat, x))

    t0 = time.perf_counter()
    abort = False
    candidates = countsketch.locate_candidates(table, config.k)
    try:
        estimate = countsketch.recover_zipfian(
            table, matrices, sketches, config.k, rng=rng
        )
    except decoder.RecoveryError:
        abort = True
        estimate = np.zeros(config.n)
    wall = time.perf_counter() - t0

    err_k = signals.err_topk(x, config.k)
    err = float(np.linalg.norm(estimate - x))
    ratio = err / err_k if err_k > 0 else (0.0 if err == 0 else math.inf)
    top_k_true = np.argsort(-np.abs(x), kind="stable")[: config.k]
    contained = bool(np.isin(top_k_true, candidates.indices).all())
    success = (not abort) and ratio <= 1.0 + config.eps
    return TrialRecord(
        trial=-1,
        seed=seed,
        descriptor={
            "kind": config.kind, "n": config.n, "k": config.k,
            "eps": config.eps, "alpha": config.alpha, "w": sq_params.w,
            "cs_rows": cs_params.rows, "cs_width": cs_params.width,
        },
        error_ratio=ratio,
        success=success,
        abort=abort,
        wall_time_s=wall,
        diagnostics={"candidates_contain_top_k": contained},
    )


def _run_block_sparse_trial(config: ExperimentConfig, seed: int) -> TrialRecord:
    rng = np.random.default_rng(seed)
    s = config.k // config.b
    norms = rng.uniform(3.0, 6.0, size=s)
    x = signals.gen_block_sparse(
        config.n, config.b, config.k, norms,
        noise_sigma=config.noise_sigma / math.sqrt(config.n),
        seed=seed,
    )
    bp = blocks.derive_block_params(
        config.n, config.b, config.k, config.eps, seed=seed
    )
    structure = blocks.bhh_apply(blocks.bhh_build(bp), x)

    t0 = time.perf_counter()
    support = blocks.bhh_locate(structure)
    err_kb = blocks.err_block(x, config.k, config.b)
    x_head = np.zeros_like(x)
    x_head[support.indices] = x[support.indices]
    located_err = float(np.linalg.norm(x - x_head))
    located_ok = located_err <= (1.0 + config.eps) * err_kb if err_kb > 0 else True

    eps_sq = config.eps / 3.0
    sq_params = sketch.derive_params(
        config.n, config.k, eps_sq, sketch.NORM_L2, config.d
    )
    matrices = []
    sketches = []
    for rep in range(config.repetitions):
        p = sketch.SketchParams(
            n=sq_params.n, k=sq_params.k, eps=sq_params.eps, d=sq_params.d,
            norm=sq_params.norm, seed=_matrix_seed(seed, rep), w=sq_params.w,
        )
        mat = sketch.build_matrix(p)
        matrices.append(mat)
        sketches.append(sketch.apply(mat, x))
    abort = False
    try:
        estimate = blocks.recover_block_sparse(structure, matrices, sketches, rng=rng)
    except decoder.RecoveryError:
        abort = True
        estimate = np.zeros(config.n)
    wall = time.perf_counter() - t0

    err = float(np.linalg.norm(estimate - x))
    ratio = err / err_kb if err_kb > 0 else (0.0 if err == 0 else math.inf)
    success = (not abort) and ratio <= 1.0 + config.eps
    return TrialRecord(
        trial=-1,
        seed=seed,
        descriptor={
            "kind": config.kind, "n": config.n, "b": config.b, "k": config.k,
            "eps": config.eps, "m": bp.m, "l": bp.l, "w": sq_params.w,
        },
        error_ratio=ratio,
        success=success,
        abort=abort,
        wall_time_s=wall,
        diagnostics={"located_within_bound": located_ok},
    )


def _time_recover(k: int, d: int, seed: int) -> float:
    w = 2 * d * (d - 1) * k
    p = sketch.SketchParams(
        n=k, k=k, eps=1.0, d=d, norm=sketch.NORM_L2, seed=seed, w=w
    )
    mat = sketch.build_matrix(p)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=k)
    sk = sketch.apply(mat, x)
    t0 = time.perf_counter()
    decoder.recover(mat, sk, np.arange(k), rng=rng)
    return time.perf_counter() - t0


def _run_runtime_trial(config: ExperimentConfig, seed: int) -> TrialRecord:
    k_small = config.k
    k_big = config.k * config.scale_factor
    t_small = _time_recover(k_small, config.d, seed)
    t_big = _time_recover(k_big, config.d, seed)
    return TrialRecord(
        trial=-1,
        seed=seed,
        descriptor={
            "kind": config.kind, "k_small": k_small, "k_big": k_big, "d": config.d,
        },
        error_ratio=0.0,
        success=True,
        abort=False,
        wall_time_s=t_small + t_big,
        diagnostics={"t_small_s": t_small, "t_big_s": t_big},
    )


_TRIAL_RUNNERS = {
    "set_query_l2": _run_set_query_trial,
    "set_query_l1": _run_set_query_trial,
    "zipfian": _run_zipfian_trial,
    "block_sparse": _run_block_sparse_trial,
    "peelability": _run_peelability_trial,
    "runtime_scaling": _run_runtime_trial,
}


def _run_trial(config: ExperimentConfig, trial: int) -> TrialRecord:
    record = _TRIAL_RUNNERS[config.kind](config, trial_seed(config.seed, trial))
    record.trial = trial
    return record


def quantile(values, q: float) -> float:
    """Linear interpolation between order statistics (numpy convention)."""
    return float(np.quantile(np.asarray(values, dtype=np.float64), q))


def summarize(config: ExperimentConfig, records: list[TrialRecord]) -> dict:
    summary: dict = {
        "kind": config.kind,
        "trials": len(records),
        "success_rate": None,
        "abort_rate": None,
        "mean_wall_time_s": None,
        "threshold_met": True,
    }
    if not records:
        return summary
    successes = np.array([r.success for r in records])
    aborts = np.array([r.abort for r in records])
    ratios = np.array([r.error_ratio for r in records])
    summary["success_rate"] = float(successes.mean())
    summary["abort_rate"] = float(aborts.mean())
    summary["mean_wall_time_s"] = float(np.mean([r.wall_time_s for r in records]))
    finite = ratios[np.isfinite(ratios)]
    for q in (0.1, 0.25, 0.5, 0.75, 0.9):
        summary[f"error_ratio_q{int(q * 100)}"] = (
            quantile(finite, q) if len(finite) else None
        )
    if config.kind == "runtime_scaling":
        med_small = quantile([r.diagnostics["t_small_s"] for r in records], 0.5)
        med_big = quantile([r.diagnostics["t_big_s"] for r in records], 0.5)
        ratio = med_big / med_small if med_small > 0 else math.inf
        summary["runtime_ratio"] = ratio
        summary["threshold_met"] = config.ratio_min <= ratio <= config.ratio_max
    else:
        summary["threshold_met"] = (
            summary["success_rate"] >= config.success_threshold
        )
    return summary


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run all trials, write the trial log and summary, return the report."""
    config.validate()
    indices = range(config.trials)
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_trial, [config] * config.trials, indices))
    else:
        records = [_run_trial(config, i) for i in indices]
    records.sort(key=lambda r: r.trial)
    summary = summarize(config, records)
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trials_jsonl(records, out / "trials.jsonl")
        write_summary_csv(summary, out / "summary.csv")
    return ExperimentReport(config=config, records=records, summary=summary)


def write_trials_jsonl(records, path):
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")


def read_trials_jsonl(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_summary_csv(summary: dict, path):
    keys = list(summary.keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        writer.writerow([summary[key] for key in keys])


PLOT_QUANTILES = (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)


def report_plot_data(records, path=None) -> list[tuple[str, float, float]]:
    """Columnar (metric, quantile, value) rows for external plotting.

    ``records`` may be TrialRecords or dicts read back from a trial log.
    """
    rows: list[tuple[str, float, float]] = []
    metrics: dict[str, list[float]] = {"error_ratio": [], "wall_time_s": []}
    for record in records:
        if isinstance(record, TrialRecord):
            ratio, wall = record.error_ratio, record.wall_time_s
        else:
            ratio, wall = record.get("error_ratio"), record.get("wall_time_s")
        if ratio is not None and math.isfinite(ratio):
            metrics["error_ratio"].append(ratio)
        if wall is not None:
            metrics["wall_time_s"].append(wall)
    for metric, values in metrics.items():
        if not values:
            continue
        for q in PLOT_QUANTILES:
            rows.append((metric, q, quantile(values, q)))
    if path is not None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "quantile", "value"])
            writer.writerows(rows)
    return rows


def config_to_dict(config: ExperimentConfig) -> dict:
    return asdict(config)
