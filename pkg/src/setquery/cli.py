"""Command-line interface: gen, sketch, recover, experiment, report.

Exit codes: 0 success, 1 threshold/decoding failure, 2 usage error.
Experiment settings come from an optional key=value config file with
command-line flags taking precedence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import blocks  # noqa: F401  (registers the block sketch decoder)
from . import decoder, experiment, signals, sketch


def _save_signal(x: np.ndarray, path: str, as_json: bool):
    if as_json or path.endswith(".json"):
        Path(path).write_text(json.dumps([float(v) for v in x]))
    else:
        np.save(path, x)


def _load_signal(path: str) -> np.ndarray:
    if path.endswith(".json"):
        return np.asarray(json.loads(Path(path).read_text()), dtype=np.float64)
    return np.load(path)


def _cmd_gen(args) -> int:
    if args.kind == "zipfian":
        x = signals.gen_zipfian(args.n, args.alpha, scale=args.scale, seed=args.seed)
    elif args.kind == "geometric":
        x = signals.gen_geometric(args.n, args.ratio, scale=args.scale, seed=args.seed)
    elif args.kind == "block":
        norms = [float(v) for v in args.block_norms.split(",")]
        k = len(norms) * args.b
        x = signals.gen_block_sparse(
            args.n, args.b, k, norms, noise_sigma=args.noise_sigma, seed=args.seed
        )
    else:
        raise ValueError(f"unknown signal kind {args.kind!r}")
    _save_signal(x, args.out, args.json)
    return 0


def _cmd_sketch(args) -> int:
    x = _load_signal(args.signal)
    params = sketch.derive_params(
        len(x), args.k, args.eps, args.norm, args.d, seed=args.seed
    )
    matrix = sketch.build_matrix(params)
    sk = sketch.apply(matrix, x)
    Path(args.out_matrix).write_bytes(sketch.serialize_matrix(matrix))
    Path(args.out_sketch).write_bytes(sketch.serialize_sketch(sk))
    if args.json:
        print(json.dumps({"n": params.n, "k": params.k, "w": params.w,
                          "d": params.d, "eps": params.eps, "norm": params.norm,
                          "seed": params.seed}, sort_keys=True))
    return 0


def _parse_support(args, n: int) -> decoder.SupportSet:
    if args.support is not None:
        indices = [int(v) for v in args.support.split(",") if v.strip()]
    elif args.support_file is not None:
        indices = json.loads(Path(args.support_file).read_text())
    else:
        raise ValueError("one of --support / --support-file is required")
    return decoder.SupportSet(indices, n=n)


def _cmd_recover(args) -> int:
    matrix = sketch.deserialize_matrix(Path(args.matrix).read_bytes())
    sk = sketch.deserialize_sketch(Path(args.sketch).read_bytes())
    support = _parse_support(args, matrix.n)
    rng = np.random.default_rng(args.seed)
    try:
        result = decoder.recover(matrix, sk, support, rng=rng)
    except decoder.RecoveryError as exc:
        print(f"recover: {exc}", file=sys.stderr)
        return 1
    payload = {
        "indices": result.estimate.indices.tolist(),
        "values": result.estimate.values.tolist(),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, sort_keys=True))
    if args.peel_log:
        with open(args.peel_log, "w") as fh:
            for entry in result.peel_log:
                fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
    if args.json or not args.out:
        print(json.dumps(payload, sort_keys=True))
    return 0


def _coerce(value: str):
    text = value.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_config_file(path) -> dict:
    """key = value lines; blank lines and # comments ignored."""
    out: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        out[key.strip()] = _coerce(value)
    return out


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(experiment.ExperimentConfig)}


def build_config(args) -> experiment.ExperimentConfig:
    settings: dict = {}
    if args.config:
        file_settings = parse_config_file(args.config)
        unknown = set(file_settings) - _CONFIG_FIELDS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update(file_settings)
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    return experiment.ExperimentConfig(**settings)


def _cmd_experiment(args) -> int:
    config = build_config(args)
    report = experiment.run_experiment(config)
    if args.json:
        print(json.dumps(report.summary, sort_keys=True))
    else:
        for key, value in report.summary.items():
            print(f"{key}: {value}")
    return 0 if report.passed else 1


def _cmd_report(args) -> int:
    records = experiment.read_trials_jsonl(args.infile)
    rows = experiment.report_plot_data(records, path=args.out)
    if args.json:
        print(json.dumps([list(r) for r in rows]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setquery",
        description="Sparse-sketch known-support estimation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic signal")
    p_gen.add_argument("--kind", choices=["zipfian", "geometric", "block"],
                       default="zipfian")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--alpha", type=float, default=1.0)
    p_gen.add_argument("--ratio", type=float, default=0.5)
    p_gen.add_argument("--scale", type=float, default=1.0)
    p_gen.add_argument("--b", type=int, default=16)
    p_gen.add_argument("--block-norms", default="5,3")
    p_gen.add_argument("--noise-sigma", type=float, default=0.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--json", action="store_true")
    p_gen.set_defaults(func=_cmd_gen)

    p_sketch = sub.add_parser("sketch", help="sketch a signal file")
    p_sketch.add_argument("--signal", required=True)
    p_sketch.add_argument("--k", type=int, required=True)
    p_sketch.add_argument("--eps", type=float, default=1.0)
    p_sketch.add_argument("--norm", choices=[sketch.NORM_L2, sketch.NORM_L1],
                          default=sketch.NORM_L2)
    p_sketch.add_argument("--d", type=int, default=7)
    p_sketch.add_argument("--seed", type=int, default=0)
    p_sketch.add_argument("--out-matrix", required=True)
    p_sketch.add_argument("--out-sketch", required=True)
    p_sketch.add_argument("--json", action="store_true")
    p_sketch.set_defaults(func=_cmd_sketch)

    p_rec = sub.add_parser("recover", help="peel a sketch over a support set")
    p_rec.add_argument("--matrix", required=True)
    p_rec.add_argument("--sketch", required=True)
    p_rec.add_argument("--support")
    p_rec.add_argument("--support-file")
    p_rec.add_argument("--seed", type=int, default=0)
    p_rec.add_argument("--out")
    p_rec.add_argument("--peel-log")
    p_rec.add_argument("--json", action="store_true")
    p_rec.set_defaults(func=_cmd_recover)

    p_exp = sub.add_parser("experiment", help="run a seeded experiment")
    p_exp.add_argument("--config", help="key=value config file (flags win)")
    p_exp.add_argument("--kind", choices=list(experiment.KINDS))
    p_exp.add_argument("--n", type=int)
    p_exp.add_argument("--k", type=int)
    p_exp.add_argument("--eps", type=float)
    p_exp.add_argument("--d", type=int)
    p_exp.add_argument("--trials", type=int)
    p_exp.add_argument("--seed", type=int)
    p_exp.add_argument("--noise", choices=list(experiment.NOISE_MODELS))
    p_exp.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p_exp.add_argument("--head-sigma", dest="head_sigma", type=float)
    p_exp.add_argument("--repetitions", type=int)
    p_exp.add_argument("--b", type=int)
    p_exp.add_argument("--alpha", type=float)
    p_exp.add_argument("--workers", type=int)
    p_exp.add_argument("--success-threshold", dest="success_threshold", type=float)
    p_exp.add_argument("--out", dest="out_dir")
    p_exp.add_argument("--json", action="store_true")
    p_exp.set_defaults(func=_cmd_experiment)

    p_rep = sub.add_parser("report", help="emit plot data from a trial log")
    p_rep.add_argument("--in", dest="infile", required=True)
    p_rep.add_argument("--out")
    p_rep.add_argument("--json", action="store_true")
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, sketch.CodecError) as exc:
        print(f"setquery {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
