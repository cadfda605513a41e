"""Command-line entry point: ``synthts-bench <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import refgen
from .container import fingerprint, read_canonical, write_canonical
from .distribution import EmbeddingConfig, EntropyConfig, KernelConfig, embedding_csv, embedding_svg, tag_points, \
    tsne_embed, check_perplexity
from .nn import ARCHITECTURES, TrainingConfig
from .nn.models import ShapeError
from .nn.train import TrainingError
from .pipeline import DatasetManifest, PipelineError, build_dataset, format_summary, normalize, summarize
from .protocols import MODES, QUALITY_METRICS, DEFAULT_SEEDS, ProtocolConfig, ProtocolError, QualityConfig, \
    RunLedger, evaluate_quality, evaluate_utility
from .reports import FORMATS, QualityReport, ReportError, UtilityReport, assemble_reports, read_report, write_report
from .sample_metrics import DEFAULT_PAIR_CAP, MetricError, PairPlan

log = logging.getLogger("synthts_bench")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (PipelineError, MetricError, TrainingError, ShapeError, ProtocolError, ReportError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text):
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common flags")
    g.add_argument("--seed", type=int, default=0,
                   help="seed for sampling, degradations and embeddings (default 0)")
    g.add_argument("--seeds", type=_int_list, default=list(DEFAULT_SEEDS),
                   help="comma-separated seeds for classifier protocols (default 1,2,3)")
    g.add_argument("--out", type=Path, help="output directory")
    g.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel protocol runs (default: number of CPUs)")
    g.add_argument("--pairs-cap", type=int, default=DEFAULT_PAIR_CAP,
                   help=f"max real/synthetic pairs per class for sample metrics, 0 = all pairs "
                        f"(default {DEFAULT_PAIR_CAP})")
    g.add_argument("--classifiers", type=_csv_list, default=list(ARCHITECTURES),
                   help=f"comma-separated subset of {','.join(ARCHITECTURES)} (default all)")
    g.add_argument("--metrics", type=_csv_list, default=None,
                   help=f"comma-separated subset of {','.join(m.lower() for m in QUALITY_METRICS)} (default all)")
    g.add_argument("--format", type=_csv_list, default=list(FORMATS), dest="formats",
                   help="comma-separated report formats among json,csv,md (default all)")
    g.add_argument("--epochs", type=int, default=TrainingConfig().epochs,
                   help="training epochs per classifier run (default 100)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="synthts-bench",
                     description="Evaluate synthetic wearable-sensor time series against real data.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("prepare", parents=[common], help="build a canonical dataset from a manifest")
    p.add_argument("manifest", type=Path, help="dataset manifest (JSON)")
    p.add_argument("--no-normalize", action="store_true", help="keep raw amplitudes (skip z-scoring)")

    p = sub.add_parser("refgen", parents=[common], help="write a degraded copy of a canonical dataset")
    p.add_argument("real", type=Path, help="real canonical dataset directory")
    p.add_argument("--kind", required=True, choices=refgen.KINDS, help="degradation to apply")
    p.add_argument("--sigma", type=float, default=0.0, help="jitter noise standard deviation")
    p.add_argument("--alpha", type=float, default=1.0, help="amplitude-scale factor (> 0)")
    p.add_argument("--shift", type=int, default=0, help="circular shift in samples")

    p = sub.add_parser("toy", parents=[common], help="write the separable two-class toy dataset")
    spec = refgen.ToyTaskSpec()
    p.add_argument("--n-per-class", type=_int_list, default=[spec.counts[0]],
                   help="windows per class; one value or two comma-separated counts (default 100)")
    p.add_argument("--length", type=int, default=spec.length, help="window length in samples (default 256)")
    p.add_argument("--rate", type=float, default=spec.rate, help="sampling rate in Hz (default 64)")
    p.add_argument("--channels", type=int, default=spec.channels, help="channel count (default 2)")
    p.add_argument("--f0", type=float, default=spec.f0, help="class-0 tone in Hz (default 2)")
    p.add_argument("--f1", type=float, default=None, help="class-1 tone in Hz (default: white noise)")
    p.add_argument("--noise", type=float, default=spec.noise, help="noise standard deviation (default 0.5)")
    p.add_argument("--z-score", action="store_true", help="z-score channels before writing")

    p = sub.add_parser("eval-quality", parents=[common], help="quality metrics per modality and class")
    p.add_argument("real", type=Path)
    p.add_argument("synth", type=Path)
    p.add_argument("--config-id", help="label for this configuration (default: synthetic directory name)")
    p.add_argument("--pairing", choices=("capped", "all", "diagonal"), default="capped",
                   help="real/synthetic pairs for sample metrics: seeded sample capped by --pairs-cap, "
                        "every pair, or window i with window i (default capped)")
    p.add_argument("--band-radius", type=int, default=None, help="Sakoe-Chiba radius for DTWD (default none)")
    p.add_argument("--entropy-agg", choices=("sum", "mean"), default="sum",
                   help="aggregation of per-window spectral entropy (default sum)")
    p.add_argument("--pooled", action="store_true", help="ignore class labels (single pooled class)")
    p.add_argument("--mmd-features", action="store_true", help="MMD on feature vectors instead of raw windows")

    p = sub.add_parser("eval-utility", parents=[common], help="TRTR baseline, TSTR and augmentation policies")
    p.add_argument("real", type=Path)
    p.add_argument("synth", type=Path)
    p.add_argument("--mode", type=_csv_list, default=["tstr"],
                   help=f"comma-separated among {','.join(MODES)} or 'all' (default tstr)")
    p.add_argument("--config-id", help="label for this configuration (default: synthetic directory name)")

    p = sub.add_parser("embed", parents=[common], help="t-SNE coordinates per modality and class")
    p.add_argument("real", type=Path)
    p.add_argument("synth", type=Path)
    cfg = EmbeddingConfig()
    p.add_argument("--perplexity", type=float, default=cfg.perplexity, help="t-SNE perplexity (default 30)")
    p.add_argument("--iterations", type=int, default=cfg.iterations, help="gradient steps (default 1000)")
    p.add_argument("--max-points", type=int, default=cfg.max_points_per_tag,
                   help="subsample cap per real/synthetic tag (default 1000)")
    p.add_argument("--svg", action="store_true", help="also write an SVG scatter per file")
    p.add_argument("--features", action="store_true", help="embed feature vectors instead of raw windows")

    p = sub.add_parser("report", parents=[common], help="merge JSON reports into combined tables")
    p.add_argument("reports", type=Path, nargs="+", help="quality/utility JSON reports")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _need_out(args) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command} needs --out")
    return args.out


def _formats(args):
    bad = [f for f in args.formats if f not in FORMATS]
    if bad or not args.formats:
        raise UsageError(f"--format accepts json, csv, md; got {','.join(args.formats)}")
    return args.formats


def _protocol_config(args) -> ProtocolConfig:
    bad = [c for c in args.classifiers if c not in ARCHITECTURES]
    if bad or not args.classifiers:
        raise UsageError(f"--classifiers accepts {','.join(ARCHITECTURES)}; got {','.join(args.classifiers)}")
    if not args.seeds:
        raise UsageError("--seeds must list at least one seed")
    if args.epochs < 1 or args.workers < 1:
        raise UsageError("--epochs and --workers must be >= 1")
    return ProtocolConfig(tuple(args.classifiers), tuple(args.seeds), TrainingConfig(epochs=args.epochs),
                          workers=args.workers)


def _load_pair(args):
    real, synth = read_canonical(args.real), read_canonical(args.synth)
    if real.data.shape[1:] != synth.data.shape[1:] or real.n_classes != synth.n_classes \
            or real.rate != synth.rate:
        raise ProtocolError(f"datasets are not compatible: real {real.data.shape[1:]} at {real.rate} Hz with "
                            f"{real.n_classes} classes, synthetic {synth.data.shape[1:]} at {synth.rate} Hz with "
                            f"{synth.n_classes} classes")
    return real, synth


def cmd_prepare(args):
    out = _need_out(args)
    manifest = DatasetManifest.load(args.manifest)
    ds = build_dataset(manifest, scheme="none" if args.no_normalize else "z-score")
    write_canonical(ds, out)
    print(format_summary(summarize(ds)))
    print(f"wrote {out}")


def cmd_refgen(args):
    out = _need_out(args)
    real = read_canonical(args.real)
    spec = refgen.DegradationSpec(args.kind, args.sigma, args.alpha, args.shift, args.seed)
    write_canonical(refgen.generate(real, spec), out)
    print(f"wrote {out}")


def cmd_toy(args):
    out = _need_out(args)
    counts = args.n_per_class[0] if len(args.n_per_class) == 1 else tuple(args.n_per_class)
    spec = refgen.ToyTaskSpec(counts, args.length, args.rate, args.channels, args.f0, args.f1,
                              noise=args.noise, seed=args.seed)
    ds = refgen.make_toy_task(spec)
    if args.z_score:
        ds = normalize(ds)
    write_canonical(ds, out)
    print(f"wrote {out}")


def _metrics(args):
    if args.metrics is None:
        return QUALITY_METRICS
    lookup = {m.lower(): m for m in QUALITY_METRICS}
    bad = [m for m in args.metrics if m.lower() not in lookup]
    if bad or not args.metrics:
        raise UsageError(f"--metrics accepts {','.join(lookup)}; got {','.join(args.metrics)}")
    return tuple(lookup[m.lower()] for m in args.metrics)


def cmd_eval_quality(args):
    out = _need_out(args)
    formats = _formats(args)
    metrics = _metrics(args)
    if args.pairs_cap < 0:
        raise UsageError("--pairs-cap must be >= 0")
    real, synth = _load_pair(args)
    if args.pairing == "diagonal":
        plan = PairPlan("diagonal")
    elif args.pairing == "all" or args.pairs_cap == 0:
        plan = PairPlan()
    else:
        plan = PairPlan.capped(args.pairs_cap, args.seed)
    cfg = QualityConfig(metrics, plan, args.band_radius, KernelConfig(seed=args.seed),
                        EntropyConfig(args.entropy_agg), args.pooled, args.mmd_features,
                        _protocol_config(args) if "DS" in metrics else ProtocolConfig())
    results = evaluate_quality(real, synth, cfg, RunLedger())
    cid = args.config_id or args.synth.resolve().name
    report = QualityReport.from_results(results, cid, cfg.to_dict(), fingerprint(real), fingerprint(synth))
    for path in write_report(report, out, formats):
        print(f"wrote {path}")


def cmd_eval_utility(args):
    out = _need_out(args)
    formats = _formats(args)
    modes = list(MODES) if args.mode == ["all"] else args.mode
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise UsageError(f"--mode accepts {','.join(MODES)} or all; got {','.join(args.mode)}")
    cfg = _protocol_config(args)
    real, synth = _load_pair(args)
    result = evaluate_utility(real, synth, modes, cfg, RunLedger())
    cid = args.config_id or args.synth.resolve().name
    config = {"modes": modes, **cfg.to_dict()}
    report = UtilityReport.from_result(result, cid, config, fingerprint(real), fingerprint(synth))
    for path in write_report(report, out, formats):
        print(f"wrote {path}")


def cmd_embed(args):
    out = _need_out(args)
    real, synth = _load_pair(args)
    cfg = EmbeddingConfig(perplexity=args.perplexity, iterations=args.iterations, seed=args.seed,
                          max_points_per_tag=args.max_points)
    if cfg.iterations < 1 or cfg.max_points_per_tag < 1:
        raise UsageError("--iterations and --max-points must be >= 1")
    jobs = []
    for ch in real.channel_names:
        for c in range(real.n_classes):
            R, S = real.channel(ch)[real.labels == c], synth.channel(ch)[synth.labels == c]
            if len(R) == 0 or len(S) == 0:
                log.warning("class %d absent from one dataset; no embedding for %s", c, ch)
                continue
            if args.features:
                from .sample_metrics import extract_features_batch
                R, S = extract_features_batch(R), extract_features_batch(S)
            tagged = tag_points(R, S, c, cfg)
            check_perplexity(len(tagged.points), cfg.perplexity)
            jobs.append((ch, c, tagged))
    out.mkdir(parents=True, exist_ok=True)
    for ch, c, tagged in jobs:
        emb, _ = tsne_embed(tagged, cfg)
        stem = out / f"embed_{ch}_class{c}"
        Path(f"{stem}.csv").write_text(embedding_csv(emb, tagged), encoding="utf-8")
        print(f"wrote {stem}.csv")
        if args.svg:
            Path(f"{stem}.svg").write_text(embedding_svg(emb, tagged, f"{ch} class {c}"), encoding="utf-8")
            print(f"wrote {stem}.svg")


def cmd_report(args):
    out = _need_out(args)
    formats = _formats(args)
    quality, utility = assemble_reports(read_report(p) for p in args.reports)
    for rep in (quality, utility):
        if rep is not None:
            for path in write_report(rep, out, formats):
                print(f"wrote {path}")


COMMANDS = {"prepare": cmd_prepare, "refgen": cmd_refgen, "toy": cmd_toy, "eval-quality": cmd_eval_quality,
            "eval-utility": cmd_eval_utility, "embed": cmd_embed, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"synthts-bench {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"synthts-bench {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - anything else is a bug
        print(f"synthts-bench {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
