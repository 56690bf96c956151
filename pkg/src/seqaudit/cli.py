"""``seqaudit`` command line.

Every subcommand prints its JSON summary to stdout and writes it, plus its
CSV tables, to the output directory (``--out``, else ``$SEQAUDIT_OUTPUT_DIR``,
else ``./seqaudit_out``).

Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 no threshold
satisfies the requested FDR.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from seqaudit.config import ConfigError, RunConfig, parse_config, serialize
from seqaudit.null_rank import NullRankSumDistribution, UnsatisfiableThresholdError, threshold_for_fdr
from seqaudit.results import (
    LCDF_COLUMNS,
    TRACE_COLUMNS,
    TRIAL_COLUMNS,
    AuditRecord,
    dumps_json,
    emit_results,
    output_dir,
)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_UNSATISFIABLE = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ints(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    if "," in text or " " in text:
        return [int(x) for x in text.replace(",", " ").split()]
    return [int(c) for c in text]


def _args_text(args: argparse.Namespace) -> str:
    d = {k: v for k, v in vars(args).items() if k not in ("func", "out", "timing")}
    return json.dumps(d, sort_keys=True, default=str)


# -- subcommands ------------------------------------------------------------


def cmd_pmf(args) -> AuditRecord:
    dist = NullRankSumDistribution(args.q, args.n)
    rs = [args.r] if args.r is not None else list(dist.support)
    values = {r: dist.pmf(r) for r in rs}
    table = [(r, float(v), v) for r, v in values.items()]
    summary = {"q": args.q, "n": args.n, "pmf": {str(r): v for r, v in values.items()}}
    return AuditRecord("pmf", _args_text(args), summary, {"pmf": (("r", "pmf", "pmf_rational"), table)}, args.seed)


def cmd_threshold(args) -> AuditRecord:
    thr = threshold_for_fdr(args.q, args.n, args.p, args.alpha)
    summary = {"q": args.q, "n": args.n, "p": args.p, "alpha": args.alpha, "T": thr.T, "tail": thr.tail, "budget": thr.budget}
    return AuditRecord("threshold", _args_text(args), summary, {}, args.seed)


def cmd_pprm_trace(args) -> AuditRecord:
    from seqaudit.pprm import interval_trace

    bits = _ints(Path(args.bits_file).read_text()) if args.bits_file else _ints(args.bits or "")
    if any(b not in (0, 1) for b in bits):
        raise UsageError("bits must be 0 or 1")
    if len(bits) > args.N:
        raise UsageError(f"{len(bits)} bits exceed the population size N={args.N}")
    prior = np.load(args.prior) if args.prior else None
    rows = interval_trace(bits, args.N, args.alpha, prior=prior, intersect=not args.no_intersect)
    summary = {"N": args.N, "alpha": args.alpha, "t": len(rows), "interval": list(rows[-1][2:]) if rows else [0, args.N]}
    return AuditRecord("pprm-trace", _args_text(args), summary, {"trace": (TRACE_COLUMNS, rows)}, args.seed)


def cmd_mark(args) -> AuditRecord:
    from seqaudit.extractors import build_extractor
    from seqaudit.marking import MarkingConfig, RawInstance, mark_dataset, min_pairwise_feature_distance
    from seqaudit.rng import make_rng
    from seqaudit.sim.task import SyntheticTask, TaskConfig

    if args.images:
        images = np.load(args.images)
    elif args.synthetic:
        images, _ = SyntheticTask(TaskConfig(seed=args.seed)).sample(args.synthetic, make_rng(args.seed, "cli-mark"))
    else:
        raise UsageError("give --images or --synthetic")
    if images.ndim != 4:
        raise UsageError(f"images must be (m, C, H, W), got shape {images.shape}")
    extractor = build_extractor(args.extractor, images.shape[1:], args.feature_dim, seed=args.seed)
    cfg = MarkingConfig(steps=args.steps, mode=args.mode, dispersion_iterations=args.dispersion_iterations)
    raw = [RawInstance(img, id=str(i)) for i, img in enumerate(images)]
    marked = mark_dataset(raw, extractor, args.n, args.epsilon, cfg, seed=args.seed)
    rows = []
    for i, fam in enumerate(marked.families):
        fam.check()
        rows.append((i, fam.published_index, min_pairwise_feature_distance(fam.variants, extractor), int(np.abs(fam.marks).max())))
    out = output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "variants.npy", np.stack([f.variants for f in marked.families]))
    summary = {
        "m": len(raw),
        "n": args.n,
        "epsilon": args.epsilon,
        "mode": args.mode,
        "published_index": marked.published_index,
        "mean_min_feature_distance": float(np.mean([r[2] for r in rows])),
        "variants_file": "variants.npy",
    }
    cols = ("instance", "published_j", "min_feature_distance", "max_abs_mark")
    return AuditRecord("mark", _args_text(args), summary, {"marks": (cols, rows)}, args.seed)


def cmd_score(args) -> AuditRecord:
    from seqaudit.scoring import averaged_classifier_score

    probs = np.load(args.probs)
    if probs.ndim == 2:
        probs = probs[None]
    if probs.ndim != 3:
        raise UsageError("probs must be (m, C) or (k, m, C)")
    labels = np.load(args.labels) if args.labels.endswith(".npy") else np.asarray(_ints(args.labels))
    if labels.shape != (probs.shape[1],):
        raise UsageError(f"need {probs.shape[1]} labels, got {labels.size}")
    scores = [averaged_classifier_score(list(probs[:, i]), int(labels[i])) for i in range(probs.shape[1])]
    summary = {"m": len(scores), "k": int(probs.shape[0]), "score": "neg_modified_entropy"}
    return AuditRecord("score", _args_text(args), summary, {"scores": (("index", "score"), list(enumerate(scores)))}, args.seed)


def cmd_detect(args) -> AuditRecord:
    from seqaudit.detector import AuditInput, detect
    from seqaudit.rng import make_rng
    from seqaudit.scoring import ScoreOracle

    table = np.load(args.scores)
    if table.ndim != 2 or table.shape[1] < 2:
        raise UsageError("scores must be a (q, n) array with n >= 2")
    published = _ints(args.published)
    q, n = table.shape
    if len(published) != q or any(not 0 <= j < n for j in published):
        raise UsageError(f"--published needs {q} variant indices in 0..{n - 1}")
    threshold_for_fdr(q, n, args.p, args.alpha)  # fail early with exit 3
    audit = AuditInput.from_score_keys(q, n, published)
    oracle = ScoreOracle(lambda key: float(table[key]), k=args.k)
    out = detect(audit, oracle, args.p, args.alpha, make_rng(args.seed, "detect"), sampling=args.sampling, intersect=not args.no_intersect)
    summary = out.as_dict()
    summary["l"] = out.queries_marked
    return AuditRecord("detect", _args_text(args), summary, {"trace": (TRACE_COLUMNS, out.trace)}, args.seed)


def _load_config(args) -> RunConfig:
    text = Path(args.config).read_text() if args.config else "{}"
    cfg = parse_config(text)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    if changes:
        cfg = parse_config(serialize(cfg.replace(**changes)))
    return cfg


def cmd_simulate(args) -> AuditRecord:
    from seqaudit.sim.experiment import run_trials, summarize

    cfg = _load_config(args)
    thr = threshold_for_fdr(cfg.q, cfg.n, cfg.p, cfg.alpha)
    arms = (0, 1) if args.arm is None else (args.arm,)
    results = run_trials(cfg.experiment(), cfg.trials, arms, workers=cfg.workers)
    rates = {f"b{b}": summarize(results, b).as_dict() for b in arms}
    summary = {"T": thr.T, "threshold_tail": thr.tail, "config": json.loads(serialize(cfg)), "arms": rates}
    if len(arms) == 2:
        summary["tdr_minus_fdr"] = rates["b1"]["rate"] - rates["b0"]["rate"]
    lcdf_rows = [(int(r["b"]), l, f) for r in rates.values() for l, f in r["l_cdf"]]
    tables = {
        "trials": (TRIAL_COLUMNS, [r.row() for r in results]),
        "l_cdf": (LCDF_COLUMNS, lcdf_rows),
    }
    return AuditRecord("simulate", serialize(cfg), summary, tables, cfg.seed)


def cmd_unlearn_verify(args) -> AuditRecord:
    from seqaudit.sim.unlearning import tau_sweep

    cfg = _load_config(args)
    if cfg.oracle != "toy":
        raise UsageError("unlearn-verify needs oracle = 'toy'")
    u = cfg.unlearning
    exp = cfg.experiment()
    reports = tau_sweep(exp, u.method, u.taus, cfg.trials, batch_size=u.batch_size)
    if u.include_exact:
        reports += tau_sweep(exp, "exact", [0.0], cfg.trials)
    rows = [
        (r.spec.method, r.spec.tau, t.trial, t.pre_detected, t.post_detected, t.l_post, t.acc_before, t.acc_after)
        for r in reports
        for t in r.trials
    ]
    cols = ("method", "tau", "trial", "b_prime_before", "b_prime_after", "l_after", "acc_before", "acc_after")
    summary = {"config": json.loads(serialize(cfg)), "reports": [r.as_dict() for r in reports]}
    return AuditRecord("unlearn-verify", serialize(cfg), summary, {"unlearning": (cols, rows)}, cfg.seed)


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqaudit", description="Sequential data-use auditing with a bounded false-detection rate.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, seed_default=0):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--seed", type=int, default=seed_default, help="master seed (recorded in the output)")
        sp.add_argument("--out", help="output directory (default: $SEQAUDIT_OUTPUT_DIR or ./seqaudit_out)")
        sp.add_argument("--timing", action="store_true", help="add wall-clock seconds to the JSON summary")
        sp.set_defaults(func=func)
        return sp

    sp = add("pmf", cmd_pmf, "exact null distribution of the rank sum")
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--r", type=int, help="a single rank sum (default: whole support)")

    sp = add("threshold", cmd_threshold, "smallest detection threshold T meeting the FDR bound")
    for name, typ in (("--q", int), ("--n", int), ("--p", float), ("--alpha", float)):
        sp.add_argument(name, type=typ, required=True)

    sp = add("pprm-trace", cmd_pprm_trace, "confidence sequence for the count of ones in a finite population")
    sp.add_argument("--N", type=int, required=True, help="population size")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--bits", help="observed bits, e.g. 1101 or 1,1,0,1")
    sp.add_argument("--bits-file")
    sp.add_argument("--prior", help=".npy prior over 0..N (default uniform)")
    sp.add_argument("--no-intersect", action="store_true", help="report raw sets, not the running intersection")

    sp = add("mark", cmd_mark, "generate n marked variants per image and publish one")
    sp.add_argument("--images", help=".npy array (m, C, H, W) of integer pixels")
    sp.add_argument("--synthetic", type=int, help="draw this many synthetic images instead")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--epsilon", type=float, default=10.0)
    sp.add_argument("--extractor", choices=("mlp", "linear"), default="mlp")
    sp.add_argument("--feature-dim", type=int, default=64)
    sp.add_argument("--mode", choices=("ouv+om", "ruv+om", "rm"), default="ouv+om")
    sp.add_argument("--steps", type=int, default=40)
    sp.add_argument("--dispersion-iterations", type=int, default=500)

    sp = add("score", cmd_score, "memorization scores from classifier outputs")
    sp.add_argument("--probs", required=True, help=".npy (m, C) or (k, m, C) confidence vectors")
    sp.add_argument("--labels", required=True, help=".npy of m labels or a comma list")

    sp = add("detect", cmd_detect, "sequential audit over a precomputed (q, n) score table")
    sp.add_argument("--scores", required=True, help=".npy (q, n) memorization scores")
    sp.add_argument("--published", required=True, help="published variant index per instance, comma separated")
    sp.add_argument("--p", type=float, default=0.05)
    sp.add_argument("--alpha", type=float, default=0.001)
    sp.add_argument("--k", type=int, default=1, help="model queries per scored item")
    sp.add_argument("--sampling", choices=("uniform", "round_robin"), default="uniform")
    sp.add_argument("--no-intersect", action="store_true")

    for name, func, text in (
        ("simulate", cmd_simulate, "Monte Carlo estimate of detection rates with and without training on the data"),
        ("unlearn-verify", cmd_unlearn_verify, "audit models after approximate or exact unlearning"),
    ):
        sp = add(name, func, text, seed_default=None)
        sp.add_argument("--config", help="JSON run configuration (default: all defaults)")
        sp.add_argument("--trials", type=int)
        if name == "simulate":
            sp.add_argument("--workers", type=int)
            sp.add_argument("--arm", type=int, choices=(0, 1), help="run one arm only")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        started = time.perf_counter()
        record = args.func(args)
        record.wall_clock = time.perf_counter() - started
        emit_results(record, output_dir(args.out), include_timing=args.timing)
        sys.stdout.write(dumps_json(record.document(include_timing=args.timing)))
        return EXIT_OK
    except UnsatisfiableThresholdError as exc:
        _fail("unsatisfiable", exc)
        return EXIT_UNSATISFIABLE
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UsageError, ValueError, FileNotFoundError) as exc:
        _fail("invalid input", exc)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        _fail("runtime error", exc)
        return EXIT_RUNTIME


def _fail(kind: str, exc: Exception) -> None:
    print(f"seqaudit: {kind}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
