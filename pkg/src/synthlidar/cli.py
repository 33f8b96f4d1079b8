"""Command-line entry point.

Human-readable reports go to stdout. ``--report PATH`` additionally writes a
CSV report to PATH and a figure next to it (same name, ``.png``).
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
from pathlib import Path

from . import distribution as dist_mod
from . import kittiio, pipeline
from .evalseg import evaluate_dirs, iou_report
from .scene import get_template
from .sensor import LidarConfig
from .taxonomy import default_taxonomy, read_taxonomy


class CliError(Exception):
    pass


def _taxonomy(args):
    return read_taxonomy(args.taxonomy) if getattr(args, "taxonomy", None) else default_taxonomy()


def _write_report(path, rows, header) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    p.write_text(buf.getvalue(), encoding="utf-8")
    return p


def _dist_rows(d):
    return [[n, int(c), repr(float(p))] for n, c, p in zip(d.class_names, d.counts, d.proportions)]


def _load_distribution(path, tax):
    """A dataset directory is measured; anything else is read as a distribution file."""
    p = Path(path)
    if p.is_dir():
        return dist_mod.measure(p, tax)
    if not p.exists():
        raise CliError(f"{p}: no such file or directory")
    return dist_mod.read_distribution(p, tuple(tax.validation_classes))


def _set_jobs(n: int | None) -> int:
    n = n or pipeline.default_jobs()
    if n < 1:
        raise CliError("--jobs must be >= 1")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


# ---------------------------------------------------------------- subcommands

def cmd_generate(args) -> int:
    job = pipeline.read_job_config(args.config, args.out, seed=args.seed)
    if args.dry_run:
        sys.stdout.write(pipeline.render_manifest(job))
        return 0
    jobs = _set_jobs(args.jobs)
    rep = pipeline.run_generation(job, jobs=jobs)
    for r, s in zip(rep.results, job.sequences):
        print(f"sequence {r.name}  template {s.template.name:<12} scans {r.n_scans:>6}  points {r.points:>12}")
    print(f"total: {rep.total_scans} scans, {rep.total_points} points")
    print()
    print(dist_mod.format_distribution(rep.distribution()), end="")
    if args.report:
        from .plotting import figure_path, plot_distributions
        rows = [[r.name, s.template.name, r.n_scans, r.points, s.seed]
                for r, s in zip(rep.results, job.sequences)]
        _write_report(args.report, rows, ["sequence", "template", "scans", "points", "seed"])
        plot_distributions([rep.distribution()], ["generated"], figure_path(args.report))
    return 0


def cmd_stats(args) -> int:
    tax = _taxonomy(args)
    d = dist_mod.measure(args.dataset, tax)
    print(dist_mod.format_distribution(d), end="")
    if args.report:
        from .plotting import figure_path, plot_distributions
        _write_report(args.report, _dist_rows(d), ["class", "count", "proportion"])
        plot_distributions([d], [str(args.dataset)], figure_path(args.report))
    return 0


def cmd_compare(args) -> int:
    tax = _taxonomy(args)
    a = _load_distribution(args.a, tax)
    b = _load_distribution(args.b, tax)
    per, total = dist_mod.divergence(a, b)
    width = max(len(n) for n in a.class_names)
    print(f"{'class':<{width}}  {'a':>12}  {'b':>12}  {'|dlog10|':>9}")
    for n, pa, pb, v in zip(a.class_names, a.proportions, b.proportions, per):
        print(f"{n:<{width}}  {pa:>12.4e}  {pb:>12.4e}  {v:>9.4f}")
    print(f"total divergence: {total:.6f}")
    if args.report:
        from .plotting import figure_path, plot_distributions
        rows = [[n, repr(float(pa)), repr(float(pb)), repr(float(v))]
                for n, pa, pb, v in zip(a.class_names, a.proportions, b.proportions, per)]
        rows.append(["total", "", "", repr(total)])
        _write_report(args.report, rows, ["class", "proportion_a", "proportion_b", "divergence"])
        plot_distributions([a, b], ["a", "b"], figure_path(args.report))
    return 0


def cmd_plan(args) -> int:
    tax = _taxonomy(args)
    target = _load_distribution(args.target, tax)
    yields = dist_mod.YieldTable.from_csv(Path(args.yields).read_text(encoding="utf-8"))
    bounds = dist_mod.read_bounds(args.bounds, tax)
    plan = dist_mod.plan_spawns(target, yields, bounds, tax)
    text = pipeline.format_plan(plan, tax)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    j0 = dist_mod.plan_objective({}, target, yields, tax)
    j1 = dist_mod.plan_objective(plan, target, yields, tax)
    print(f"objective: {j1:.6f} (zero plan {j0:.6f})")
    if args.report:
        from .plotting import figure_path, plot_distributions
        pred = dist_mod.predicted_distribution(plan, yields, tax)
        pd = dist_mod.ClassDistribution.from_proportions(pred if pred.sum() > 0 else pred + 1,
                                                         class_names=target.class_names)
        rows = [[tax.by_id(r).name, n, bounds.get(r, 0)] for r, n in sorted(plan.items())]
        _write_report(args.report, rows, ["class", "count", "bound"])
        plot_distributions([target, pd], ["target", "predicted"], figure_path(args.report))
    return 0


def _lidar_from(path) -> LidarConfig:
    if not path:
        return LidarConfig()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.read_string(Path(path).read_text(encoding="utf-8"))
    return LidarConfig.from_mapping(dict(cp["lidar"])) if "lidar" in cp else LidarConfig()


def cmd_calibrate(args) -> int:
    tax = _taxonomy(args)
    _set_jobs(args.jobs)
    tpl = get_template(args.template)
    yt = dist_mod.calibrate_yields(tpl, _lidar_from(args.config), tax, args.scans, args.seed)
    text = yt.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    if args.report:
        from .plotting import figure_path, plot_distributions
        rows = [[k, rid, yt.names.get(rid, ""), repr(v)]
                for k, tab in (("yield", yt.yields), ("baseline", yt.baseline)) for rid, v in sorted(tab.items())]
        _write_report(args.report, rows, ["kind", "raw_id", "name", "points_per_scan"])
        base = dist_mod.predicted_distribution({}, yt, tax)
        plot_distributions([dist_mod.ClassDistribution(base.round().astype(int), tuple(tax.validation_classes))],
                           ["zero-actor baseline"], figure_path(args.report))
    return 0


def cmd_validate(args) -> int:
    rep = kittiio.validate_layout(args.dataset)
    for seq, n in rep.sequences.items():
        print(f"sequence {seq}: {n} scans, {rep.points.get(seq, 0)} points")
    manifest = Path(args.dataset) / pipeline.MANIFEST
    if not manifest.exists():
        print(f"note: no {pipeline.MANIFEST}; output may be partial")
    if args.report:
        rows = [[s, n, rep.points.get(s, 0)] for s, n in rep.sequences.items()]
        rows += [["error", "", e] for e in rep.errors]
        _write_report(args.report, rows, ["sequence", "scans", "points"])
    if not rep.ok:
        for e in rep.errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    print("layout ok")
    return 0


def cmd_eval(args) -> int:
    tax = _taxonomy(args)
    rep = iou_report(evaluate_dirs(args.gt, args.pred, tax))
    width = max(len(n) for n in rep.class_names)
    for name, v in rep.rows():
        print(f"{name:<{width}}  {'n/a' if v is None else f'{v * 100:6.1f}'}")
    print(f"{'mIoU':<{width}}  {rep.miou * 100:6.1f}")
    if args.report:
        from .plotting import figure_path, plot_iou
        rows = [[n, "" if v is None else repr(v * 100), int(tp), int(fp), int(fn)]
                for (n, v), tp, fp, fn in zip(rep.rows(), rep.tp, rep.fp, rep.fn)]
        rows.append(["mIoU", repr(rep.miou * 100), "", "", ""])
        _write_report(args.report, rows, ["class", "iou_percent", "tp", "fp", "fn"])
        plot_iou(rep, figure_path(args.report))
    return 0


def cmd_lt_index(args) -> int:
    rep = kittiio.validate_layout(args.dataset, require_labels=False)
    seqs = list(rep.sequences)
    ranges = kittiio.select_lt([rep.sequences[s] for s in seqs], args.n)
    lines = [f"{s} {kittiio.scan_name(i)}" for s, r in zip(seqs, ranges) for i in r]
    text = "".join(ln + "\n" for ln in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"{len(lines)} scans from {len(seqs)} sequences", file=sys.stderr)
    if args.report:
        _write_report(args.report, [[s, r.start, r.stop] for s, r in zip(seqs, ranges)],
                      ["sequence", "start", "stop"])
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed for all randomness (default 0)")
    common.add_argument("--jobs", type=int, default=None, help="worker cap (default: available cores)")
    common.add_argument("--report", help="write a CSV report here and a .png figure next to it")
    common.add_argument("--taxonomy", help="taxonomy config (default: shipped default)")

    p = argparse.ArgumentParser(prog="synthlidar", description="Synthetic LiDAR segmentation dataset tools.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="generate a dataset from a config file")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--dry-run", action="store_true", help="print the manifest header without generating")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", parents=[common], help="class distribution of a dataset")
    s.add_argument("--dataset", required=True)
    s.set_defaults(func=cmd_stats)

    c = sub.add_parser("compare", parents=[common], help="log-divergence between two datasets or distribution files")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.set_defaults(func=cmd_compare)

    pl = sub.add_parser("plan", parents=[common], help="plan actor counts toward a target distribution")
    pl.add_argument("--target", required=True)
    pl.add_argument("--yields", required=True)
    pl.add_argument("--bounds", required=True)
    pl.add_argument("--out", help="write the plan file here")
    pl.set_defaults(func=cmd_plan)

    ca = sub.add_parser("calibrate", parents=[common], help="estimate per-actor point yields")
    ca.add_argument("--template", required=True)
    ca.add_argument("--scans", type=int, required=True)
    ca.add_argument("--config", help="generation config whose [lidar] section to use")
    ca.add_argument("--out", help="write the yield table here")
    ca.set_defaults(func=cmd_calibrate)

    v = sub.add_parser("validate", parents=[common], help="check a dataset layout")
    v.add_argument("--dataset", required=True)
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("eval", parents=[common], help="per-class IoU and mIoU of predictions")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.set_defaults(func=cmd_eval)

    lt = sub.add_parser("lt-index", parents=[common], help="list the scans of the LT subset")
    lt.add_argument("--dataset", required=True)
    lt.add_argument("--n", type=int, default=kittiio.LT_SCANS, help="scans per sequence")
    lt.add_argument("--out", help="write the index list here")
    lt.set_defaults(func=cmd_lt_index)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    if args.jobs is not None and args.jobs < 1:
        parser.print_usage(sys.stderr)
        print("synthlidar: error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"synthlidar {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
