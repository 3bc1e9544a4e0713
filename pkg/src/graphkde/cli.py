"""Command-line entry point: generate, perturb, train, score, eval, synthbench.

Every command writes a resolved-config JSON beside its primary output and is
deterministic given that config. Exit codes: 0 success, 1 validation or
usage, 2 I/O, 3 numerical failure.

Heavy imports stay inside command handlers so the thread cap (``--threads``
or the GRAPHKDE_THREADS environment variable) can reach the numeric
libraries before they start their worker pools.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import (
    DataFormatError,
    GraphKdeError,
    NumericalError,
    ValidationError,
)

THREADS_ENV = "GRAPHKDE_THREADS"
_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap(argv) -> str | None:
    """Export the worker cap before numeric libraries load; None on success."""
    explicit = None
    for i, token in enumerate(argv):
        if token == "--threads":
            if i + 1 >= len(argv):
                return "--threads requires a value"
            explicit = argv[i + 1]
        elif token.startswith("--threads="):
            explicit = token.split("=", 1)[1]
    cap = explicit if explicit is not None else os.environ.get(THREADS_ENV)
    if cap is None:
        return None
    try:
        value = int(cap)
    except ValueError:
        value = 0
    if value < 1:
        return f"thread cap must be a positive integer, got {cap!r}"
    for var in _THREAD_VARS:
        if explicit is not None:
            os.environ[var] = str(value)
        else:
            os.environ.setdefault(var, str(value))
    return None


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{value} is not positive")
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="graphkde", description=__doc__.split("\n")[0])
    parser.add_argument(
        "--threads",
        type=_positive_int,
        default=None,
        help="cap numeric worker threads (default from GRAPHKDE_THREADS)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic graph batch")
    gen.add_argument("--family", required=True, choices=("er", "ba", "ws", "sbm"))
    gen.add_argument("--count", type=_positive_int, required=True)
    gen.add_argument("--nodes", type=int, nargs=2, default=(20, 50), metavar=("MIN", "MAX"))
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--anomaly-mode", default=None)
    gen.add_argument("--beta-a", type=float, default=2.0)
    gen.add_argument("--beta-b", type=float, default=2.0)
    gen.add_argument("--fixed-p", type=float, default=None)
    gen.add_argument("--ba-m", type=int, default=3)
    gen.add_argument("--ws-k", type=int, default=4)
    gen.add_argument("--ws-p", type=float, default=0.20)
    gen.add_argument("--communities", type=int, default=3)
    gen.add_argument("--p-in", type=float, nargs=2, default=(0.4, 0.8), metavar=("LO", "HI"))
    gen.add_argument("--p-out", type=float, nargs=2, default=(0.01, 0.10), metavar=("LO", "HI"))
    gen.add_argument("--out", required=True)

    pert = sub.add_parser("perturb", help="write perturbed counterparts")
    pert.add_argument("--data", required=True)
    pert.add_argument("--out", required=True)
    pert.add_argument("--r-swap", type=float, default=0.1)
    pert.add_argument("--tau1", type=float, default=0.5)
    pert.add_argument("--tau2", type=float, default=0.75)
    pert.add_argument("--p-pert", type=float, default=0.3)
    pert.add_argument("--r-max", type=float, default=10.0)
    pert.add_argument("--n-pert", type=_positive_int, default=2)
    pert.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="fit a density model on a graph file")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--batch-size", type=_positive_int, default=128)
    tr.add_argument("--max-epochs", type=_positive_int, default=500)
    tr.add_argument("--patience", type=_positive_int, default=10)
    tr.add_argument("--grad-clip", type=float, default=5.0)
    tr.add_argument("--warmup-epochs", type=int, default=10)
    tr.add_argument("--epsilon", type=float, default=1e-6)
    tr.add_argument("--val-fraction", type=float, default=0.1)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--hidden-dim", type=_positive_int, default=64)
    tr.add_argument("--output-dim", type=_positive_int, default=32)
    tr.add_argument("--lr-logits-scale", type=float, default=1.0)
    tr.add_argument(
        "--bandwidths", type=float, nargs="+", default=(0.01, 0.1, 1.0, 10.0, 100.0)
    )
    tr.add_argument("--r-swap", type=float, default=0.1)
    tr.add_argument("--tau1", type=float, default=0.5)
    tr.add_argument("--tau2", type=float, default=0.75)
    tr.add_argument("--p-pert", type=float, default=0.3)
    tr.add_argument("--r-max", type=float, default=10.0)
    tr.add_argument("--n-pert", type=_positive_int, default=2)
    tr.add_argument("--resume", default=None, help="checkpoint to continue from")

    def add_scoring_flags(p):
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--queries", required=True)
        p.add_argument("--reference", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--sample", choices=("none", "stratified", "importance"), default="none")
        p.add_argument("--ratio", type=float, default=1.0)
        p.add_argument("--seed", type=int, default=0)

    sc = sub.add_parser("score", help="write per-graph anomaly scores as CSV")
    add_scoring_flags(sc)

    ev = sub.add_parser("eval", help="write an evaluation report as JSON")
    add_scoring_flags(ev)
    ev.add_argument("--gamma-percentile", type=float, default=10.0)

    bench = sub.add_parser("synthbench", help="density recovery report for one family")
    bench.add_argument("--family", required=True, choices=("er", "ba", "ws", "sbm"))
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", required=True)
    bench.add_argument("--train-count", type=_positive_int, default=150)
    bench.add_argument("--anomaly-count", type=_positive_int, default=30)
    bench.add_argument("--nodes", type=int, nargs=2, default=(20, 40), metavar=("MIN", "MAX"))
    bench.add_argument("--epochs", type=_positive_int, default=15)
    bench.add_argument("--batch-size", type=_positive_int, default=32)
    bench.add_argument("--hidden-dim", type=_positive_int, default=32)
    bench.add_argument("--output-dim", type=_positive_int, default=16)

    return parser


def _write_config(args, primary_output: Path) -> None:
    """Resolved-run record next to the primary output."""
    record = {"command": args.command}
    for key, value in sorted(vars(args).items()):
        if key == "command":
            continue
        if isinstance(value, tuple):
            value = list(value)
        record[key] = value
    path = primary_output.with_name(primary_output.stem + ".config.json")
    with open(path, "w") as handle:
        json.dump(record, handle, sort_keys=True, indent=1)
        handle.write("\n")


def cmd_generate(args) -> int:
    from .graphs import save_jsonl
    from .synth import GenSpec, generate

    spec = GenSpec(
        family=args.family,
        count=args.count,
        node_range=tuple(args.nodes),
        seed=args.seed,
        anomaly_mode=args.anomaly_mode,
        beta_a=args.beta_a,
        beta_b=args.beta_b,
        fixed_p=args.fixed_p,
        ba_m=args.ba_m,
        ws_k=args.ws_k,
        ws_p=args.ws_p,
        communities=args.communities,
        p_in_range=tuple(args.p_in),
        p_out_range=tuple(args.p_out),
    )
    graphs, params = generate(spec)
    out = Path(args.out)
    save_jsonl(graphs, out)
    sidecar = out.with_name(out.stem + ".params.json")
    with open(sidecar, "w") as handle:
        json.dump(params, handle, sort_keys=True, indent=1)
        handle.write("\n")
    _write_config(args, out)
    print(f"wrote {len(graphs)} graphs to {out}")
    return 0


def cmd_perturb(args) -> int:
    import numpy as np

    from .graphs import load_jsonl, save_jsonl
    from .perturb import PerturbationConfig, generate_sample

    config = PerturbationConfig(
        r_swap=args.r_swap,
        tau1=args.tau1,
        tau2=args.tau2,
        p_pert=args.p_pert,
        r_max=args.r_max,
        n_pert=args.n_pert,
        seed=args.seed,
    )
    graphs = load_jsonl(args.data)
    rng = np.random.default_rng(args.seed)
    samples = [
        generate_sample(g, config, rng) for g in graphs for _ in range(config.n_pert)
    ]
    out = Path(args.out)
    save_jsonl(samples, out)
    _write_config(args, out)
    print(f"wrote {len(samples)} perturbed graphs to {out}")
    return 0


def _read_log_entries(path: Path) -> list[dict]:
    entries = []
    with open(path) as handle:
        for line in handle:
            if line.strip():
                entries.append(json.loads(line))
    return entries


def cmd_train(args) -> int:
    from .graphs import load_jsonl
    from .model import DensityModel, default_model
    from .perturb import PerturbationConfig
    from .train import TrainConfig, save_log, train

    dataset = load_jsonl(args.data)
    if len(dataset) == 0:
        raise ValidationError(f"no graphs in {args.data}")
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        grad_clip=args.grad_clip,
        warmup_epochs=args.warmup_epochs,
        epsilon=args.epsilon,
        perturbation=PerturbationConfig(
            r_swap=args.r_swap,
            tau1=args.tau1,
            tau2=args.tau2,
            p_pert=args.p_pert,
            r_max=args.r_max,
            n_pert=args.n_pert,
            seed=args.seed,
        ),
        seed=args.seed,
        val_fraction=args.val_fraction,
        hidden_dim=args.hidden_dim,
        output_dim=args.output_dim,
        lr_logits_scale=args.lr_logits_scale,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "checkpoint.json"
    log_path = out_dir / "train_log.jsonl"

    start_epoch = 0
    prior_log: list[dict] = []
    if args.resume is not None:
        model = DensityModel.load(args.resume)
        if log_path.exists():
            prior_log = _read_log_entries(log_path)
            if prior_log:
                start_epoch = int(prior_log[-1]["epoch"]) + 1
    else:
        feature_dim = dataset[0].features.shape[1]
        model = default_model(
            feature_dim,
            args.hidden_dim,
            args.output_dim,
            seed=args.seed,
            bandwidths=tuple(args.bandwidths),
        )

    result = train(dataset, config, model=model, start_epoch=start_epoch)
    result.model.save(checkpoint_path)
    save_log(log_path, prior_log + result.log)
    _write_config(args, checkpoint_path)
    if result.aborted:
        print(
            f"training aborted ({result.abort_reason}); "
            f"last-good checkpoint written to {checkpoint_path}",
            file=sys.stderr,
        )
        return 3
    print(
        f"trained {len(result.log)} epochs (best epoch {result.best_epoch}); "
        f"checkpoint written to {checkpoint_path}"
    )
    return 0


def _load_scoring_inputs(args):
    from .graphs import load_jsonl
    from .model import DensityModel

    model = DensityModel.load(args.checkpoint)
    queries = load_jsonl(args.queries)
    reference = load_jsonl(args.reference)
    return model, queries, reference


def cmd_score(args) -> int:
    from .evaluate import save_scores_csv, score

    model, queries, reference = _load_scoring_inputs(args)
    result = score(
        queries, reference, model, sample=args.sample, ratio=args.ratio, seed=args.seed
    )
    out = Path(args.out)
    save_scores_csv(out, [g.graph_id for g in queries], result)
    _write_config(args, out)
    print(f"wrote {len(queries)} scores to {out}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import evaluate, save_report

    model, queries, reference = _load_scoring_inputs(args)
    labels = [g.label for g in queries]
    if any(label is None for label in labels):
        missing = sum(label is None for label in labels)
        print(
            f"notice: {missing} of {len(labels)} queries unlabeled; "
            "ranking metrics omitted",
            file=sys.stderr,
        )
        labels = None
    report = evaluate(
        queries,
        reference,
        model,
        labels=labels,
        gamma_percentile=args.gamma_percentile,
        sample=args.sample,
        ratio=args.ratio,
        seed=args.seed,
    )
    out = Path(args.out)
    save_report(out, report)
    _write_config(args, out)
    if report.auroc is not None:
        print(
            f"auroc {report.auroc:.4f} auprc {report.auprc:.4f} "
            f"fpr95 {report.fpr95:.4f}"
        )
    print(f"wrote report to {out}")
    return 0


DENSITY_BINS = ((0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 0.8), (0.8, 1.0))


def cmd_synthbench(args) -> int:
    import numpy as np

    from .evaluate import auroc, reference_densities, score
    from .model import default_model
    from .perturb import PerturbationConfig
    from .synth import ANOMALY_MODES, GenSpec, generate, target_density
    from .train import TrainConfig, train

    node_range = tuple(args.nodes)
    normal, params = generate(
        GenSpec(args.family, args.train_count, node_range, seed=args.seed)
    )
    anomalies = []
    modes = ANOMALY_MODES[args.family]
    per_mode = [args.anomaly_count // len(modes)] * len(modes)
    per_mode[0] += args.anomaly_count - sum(per_mode)
    for mode, count in zip(modes, per_mode):
        if count == 0:
            continue
        batch, _ = generate(
            GenSpec(
                args.family,
                count,
                node_range,
                seed=args.seed + 1,
                anomaly_mode=mode,
            )
        )
        anomalies.extend(batch)

    config = TrainConfig(
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        patience=args.epochs,
        warmup_epochs=min(3, args.epochs),
        seed=args.seed,
        hidden_dim=args.hidden_dim,
        output_dim=args.output_dim,
        perturbation=PerturbationConfig(seed=args.seed),
    )
    result = train(normal, config, model=None)
    model = result.model

    densities = reference_densities(normal, model)
    report: dict = {
        "family": args.family,
        "seed": args.seed,
        "train_count": args.train_count,
        "anomaly_count": len(anomalies),
        "epochs_run": len(result.log),
    }

    if args.family == "er":
        true_p = [rec["p"] for rec in params]
        table = []
        for lo, hi in DENSITY_BINS:
            member = [
                float(densities[i])
                for i, p in enumerate(true_p)
                if lo <= p < hi or (hi == 1.0 and p == 1.0)
            ]
            table.append(
                {
                    "p_range": [lo, hi],
                    "count": len(member),
                    "mean_density": float(np.mean(member)) if member else None,
                }
            )
        report["density_by_p_bin"] = table
    targets = [target_density(args.family, g, rec) for g, rec in zip(normal, params)]
    report["target_density_correlation"] = float(
        np.corrcoef(densities, targets)[0, 1]
    )

    queries = list(normal) + anomalies
    scored = score(queries, normal, model)
    labels = np.concatenate([np.zeros(len(normal)), np.ones(len(anomalies))])
    report["detection_auroc"] = auroc(scored.scores, labels)

    out = Path(args.out)
    with open(out, "w") as handle:
        json.dump(report, handle, sort_keys=True, indent=1)
        handle.write("\n")
    _write_config(args, out)
    print(f"wrote benchmark report to {out}")
    return 0


_HANDLERS = {
    "generate": cmd_generate,
    "perturb": cmd_perturb,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "synthbench": cmd_synthbench,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    problem = _apply_thread_cap(argv)
    if problem is not None:
        print(f"graphkde: error: {problem}", file=sys.stderr)
        return 1
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as err:
        print(f"graphkde: file error: {err}", file=sys.stderr)
        return 2
    except DataFormatError as err:
        print(f"graphkde: data error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"graphkde: numerical failure: {err}", file=sys.stderr)
        return 3
    except GraphKdeError as err:
        print(f"graphkde: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
