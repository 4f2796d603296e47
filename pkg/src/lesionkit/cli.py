"""Command-line entry point.

Human-readable output goes to stderr; machine-readable artifacts are written
only to user-specified paths, or to stdout when ``--out -``.  Exit codes:
0 = success, 1 = fatal error or usage problem, 2 = partial failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import FORMAT_VERSIONS, __version__


def _log(*parts) -> None:
    print(*parts, file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        _log(f"{self.prog}: error: {message}")
        raise SystemExit(1)


def _emit(doc: dict, out: str | None) -> None:
    blob = json.dumps(doc, indent=2) + "\n"
    if out is None or out == "-":
        sys.stdout.write(blob)
    else:
        Path(out).write_text(blob)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lesionkit", description=__doc__)
    p.add_argument(
        "--version", action="store_true", help="print tool and file-format versions"
    )
    sub = p.add_subparsers(dest="command")

    pre = sub.add_parser("preprocess", parents=[], help="run the batch preprocessing pipeline")
    pre.add_argument("--config", required=True, help="pipeline config JSON")
    pre.add_argument("--subjects", required=True, help="directory of subject subdirectories")
    pre.add_argument("--parallel", type=int, default=1, metavar="N")

    ev = sub.add_parser("evaluate", help="instance-wise evaluation of a prediction against a reference")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--ref", required=True)
    ev.add_argument("--threshold", type=float, default=0.5)
    ev.add_argument("--connectivity", type=int, default=None)
    ev.add_argument("--surface", action="store_true", help="per-pair surface distances")
    ev.add_argument("--centerline", action="store_true", help="global centerline dice")
    ev.add_argument("--subject", default=None, help="subject id recorded in the report")
    ev.add_argument("--out", required=True, help="report path ('-' for stdout)")
    ev.add_argument("--format", choices=("json", "csv"), default="json")

    sc = sub.add_parser("sort-scan", help="scan an inbox of raw files")
    sc.add_argument("--inbox", required=True)
    sc.add_argument("--out", default=None, help="write scan JSON here ('-' for stdout)")

    sa = sub.add_parser("sort-apply", help="apply a manifest headlessly (copy files)")
    sa.add_argument("--manifest", required=True)
    sa.add_argument("--out", required=True, help="output root for the sorted tree")

    ss = sub.add_parser("sort-serve", help="serve the tagging API and board UI")
    ss.add_argument("--inbox", required=True)
    ss.add_argument("--out", required=True)
    ss.add_argument("--bind", default="127.0.0.1:8000", metavar="HOST:PORT")
    ss.add_argument("--ui-dir", default=None, help="override the bundled UI assets")

    tr = sub.add_parser("transform", help="apply a saved rigid transform to an image")
    tr.add_argument("--apply", required=True, metavar="TRANSFORM", help="transform file")
    tr.add_argument("--in", dest="input", required=True, metavar="IMAGE")
    tr.add_argument("--target", required=True, help="volume defining the output grid")
    tr.add_argument("--out", required=True)
    tr.add_argument("--interp", choices=("trilinear", "nearest"), default="trilinear")
    tr.add_argument("--fill", type=float, default=0.0)
    tr.add_argument(
        "--mask", action="store_true", help="treat the input as a binary mask"
    )

    return p


def _cmd_preprocess(args) -> int:
    from .pipeline import ConfigError, discover_subjects, load_config, run_batch

    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        _log(f"config error at {e.pointer or '<root>'}: {e}")
        return 1
    try:
        _, warnings = discover_subjects(args.subjects)
        for w in warnings:
            _log(f"warning: {w}")
        summary = run_batch(args.subjects, cfg, parallelism=args.parallel)
    except ValueError as e:
        _log(f"error: {e}")
        return 1
    for subject, info in sorted(summary.details.items()):
        line = f"{subject}: {info['status']}"
        if info["message"]:
            line += f" ({info['message']})"
        _log(line)
    _log(
        f"done: {len(summary.succeeded)} ok, {len(summary.flagged)} flagged, "
        f"{len(summary.failed)} failed"
    )
    return summary.exit_code


def _cmd_evaluate(args) -> int:
    from .evaluation import EvalOptions, evaluate_semantic_pair, write_report
    from .evaluation.report import report_to_dict
    from .volume import NiftiFormatError, read_nifti

    try:
        pred = read_nifti(args.pred)
        ref = read_nifti(args.ref)
    except NiftiFormatError as e:
        _log(f"error: {e}")
        return 1
    opts = EvalOptions(
        threshold=args.threshold,
        connectivity=args.connectivity,
        surface=args.surface,
        centerline=args.centerline,
    )
    try:
        report = evaluate_semantic_pair(pred, ref, opts)
    except ValueError as e:
        _log(f"error: {e}")
        return 1
    if args.subject:
        from dataclasses import replace

        report = replace(report, subject=args.subject)
    if args.format == "json":
        if args.out == "-":
            _emit(report_to_dict(report), "-")
        else:
            write_report(report, args.out, "json")
    else:
        if args.out == "-":
            _log("error: CSV output requires a file path")
            return 1
        write_report(report, args.out, "csv")
    defined = {k: v for k, v in report.macro.items() if v is not None}
    _log("macro: " + ", ".join(f"{k}={v:.4f}" for k, v in sorted(defined.items())))
    return 0


def _cmd_sort_scan(args) -> int:
    from dataclasses import asdict

    from .tagging import scan_inbox

    try:
        candidates = scan_inbox(args.inbox)
    except ValueError as e:
        _log(f"error: {e}")
        return 1
    for c in candidates:
        if c.kind == "nifti":
            _log(f"{c.name}: {c.dims} spacing={c.spacing} dtype={c.disk_dtype}")
        else:
            _log(f"{c.name}: unclassifiable ({c.reason})")
    if args.out is not None:
        _emit({"files": [asdict(c) for c in candidates]}, args.out)
    return 0


def _cmd_sort_apply(args) -> int:
    from .tagging import commit, load_manifest, save_manifest

    try:
        manifest = load_manifest(args.manifest)
    except (OSError, ValueError) as e:
        _log(f"error: cannot load manifest: {e}")
        return 1
    updated, report = commit(manifest, args.out)
    save_manifest(updated, args.manifest)
    failures = 0
    for path, status in report.statuses:
        _log(f"{path}: {status}")
        if status.startswith("failed"):
            failures += 1
    _log(f"done: {len(report.statuses) - failures} ok, {failures} failed")
    return 0 if failures == 0 else 2


def _cmd_sort_serve(args) -> int:
    import uvicorn

    from .tagging.service import create_app

    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        _log(f"error: --bind must be HOST:PORT, got {args.bind!r}")
        return 1
    try:
        app = create_app(args.inbox, args.out, ui_dir=args.ui_dir)
    except ValueError as e:
        _log(f"error: {e}")
        return 1
    _log(f"serving tagging UI on http://{args.bind}/ (inbox: {args.inbox})")
    try:
        uvicorn.run(app, host=host, port=int(port), log_level="warning")
    except OSError as e:  # port in use
        _log(f"error: {e}")
        return 1
    return 0


def _cmd_transform(args) -> int:
    from .transforms import TransformFormatError, load_transform
    from .volume import NiftiFormatError, read_nifti, resample, write_nifti

    try:
        t = load_transform(args.apply)
        image = read_nifti(args.input)
        target = read_nifti(args.target)
    except (TransformFormatError, NiftiFormatError) as e:
        _log(f"error: {e}")
        return 1
    if args.mask:
        image = image.with_intent("mask")
    out = resample(image, target.grid, t, interp=args.interp, fill=args.fill)
    write_nifti(out, args.out)
    _log(f"wrote {args.out} ({out.dims[0]}x{out.dims[1]}x{out.dims[2]})")
    return 0


_COMMANDS = {
    "preprocess": _cmd_preprocess,
    "evaluate": _cmd_evaluate,
    "sort-scan": _cmd_sort_scan,
    "sort-apply": _cmd_sort_apply,
    "sort-serve": _cmd_sort_serve,
    "transform": _cmd_transform,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.version:
        _emit({"lesionkit": __version__, "formats": FORMAT_VERSIONS}, "-")
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except KeyboardInterrupt:
        _log("interrupted")
        return 1


if __name__ == "__main__":
    sys.exit(main())
