"""Command line front end.

Commands: rasterize, reconstruct, generate, analyze, sweep, export-heatmap.
Flags mirror config keys; a --config file supplies defaults and flags win.

Exit codes: 0 success, 2 configuration or input error, 3 runtime numeric
failure, 4 partially failed sweep.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .coreattn import ScoreMode, save_scores
from .errors import GlyphFlowError, NonFiniteActivation, ZeroRowMass
from .glyphs import Layout, glyph_mask_patches, rasterize_text
from .manifest import VERSION
from .model import init_model
from .netpbm import write_pgm
from .pipeline import (
    export_heatmap,
    load_dataset,
    prepare_glyph,
    run_analyze,
    run_generate,
    run_sweep,
    write_error_manifest,
)
from .runconfig import RunConfig, describe_keys, parse_file
from .sampler import AttentionTrace, reconstruct_capture
from .tensorio import read_tensors


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--steps", type=int, help="sampler steps")
    parser.add_argument("--guidance", type=float, help="CFG scale")
    parser.add_argument("--ratio", type=float, help="top-k core token ratio")
    parser.add_argument("--cutoff", type=int, help="inject through this step")
    parser.add_argument(
        "--mode", choices=[m.value for m in ScoreMode], help="token scoring mode"
    )
    parser.add_argument(
        "--no-averaging",
        action="store_true",
        help="select per layer instead of from the cumulative mean",
    )
    parser.add_argument("--seed-weights", type=int, help="weight PRNG seed")
    parser.add_argument("--seed-noise", type=int, help="noise PRNG seed")
    parser.add_argument("--word", help="target text")
    parser.add_argument("--style", help="prompt style phrase")
    parser.add_argument(
        "--layout", choices=[l.value for l in Layout], help="glyph layout"
    )
    parser.add_argument("--scale", type=int, help="glyph bitmap scale factor")
    parser.add_argument("--out-dir", help="output directory")


def _build_config(args) -> RunConfig:
    cfg = parse_file(args.config) if args.config else RunConfig()

    model = cfg.model
    if args.seed_weights is not None:
        model = replace(model, seed=args.seed_weights)

    sampler = cfg.sampler
    updates = {}
    if args.steps is not None:
        updates["steps"] = args.steps
    if args.guidance is not None:
        updates["guidance"] = args.guidance
    if args.cutoff is not None:
        updates["cutoff_step"] = args.cutoff
    if args.seed_noise is not None:
        updates["noise_seed"] = args.seed_noise
    if updates:
        sampler = replace(sampler, **updates)

    injection = cfg.injection
    updates = {}
    if args.ratio is not None:
        updates["ratio"] = args.ratio
    if args.mode is not None:
        updates["mode"] = ScoreMode(args.mode)
    if args.no_averaging:
        updates["averaging"] = False
    if updates:
        injection = replace(injection, **updates)

    io_cfg = cfg.io
    updates = {}
    if args.word is not None:
        updates["word"] = args.word
    if args.style is not None:
        updates["style"] = args.style
    if args.layout is not None:
        updates["layout"] = Layout(args.layout)
    if args.scale is not None:
        updates["scale"] = args.scale
    if args.out_dir is not None:
        updates["out_dir"] = args.out_dir
    if getattr(args, "dataset", None):
        records = load_dataset(args.dataset)
        index = getattr(args, "record", 0)
        if not 0 <= index < len(records):
            raise GlyphFlowError(f"dataset record {index} out of range 0..{len(records) - 1}")
        updates["word"] = records[index].word
        updates["style"] = records[index].style
    if getattr(args, "predicted", None) is not None:
        updates["predicted"] = args.predicted
    if getattr(args, "save_trace", False):
        updates["save_trace"] = True
    if updates:
        io_cfg = replace(io_cfg, **updates)

    return replace(cfg, model=model, sampler=sampler, injection=injection, io=io_cfg)


def cmd_rasterize(args) -> int:
    glyph = rasterize_text(
        args.text,
        layout=Layout(args.layout_value),
        width=args.canvas,
        height=args.canvas,
        scale=args.scale_value,
        patch=args.patch,
    )
    for warning in glyph.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    write_pgm(args.out, glyph.pixels)
    if args.mask_out:
        write_pgm(args.mask_out, glyph.mask.astype(float))
    print(f"wrote {args.out}")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _build_config(args)
    glyph = prepare_glyph(cfg)
    weights = init_model(cfg.model)
    trace = reconstruct_capture(weights, glyph, cfg.io.recon_prompt, cfg.sampler)
    trace.save(args.out)
    print(f"wrote {args.out} ({trace.steps} steps, checksum {trace.checksum()[:12]})")
    return 0


def cmd_generate(args) -> int:
    cfg = _build_config(args)
    try:
        manifest, _ = run_generate(cfg, baseline=args.no_injection)
    except GlyphFlowError as exc:
        write_error_manifest(args.out_dir or cfg.io.out_dir, cfg, exc)
        raise
    injected = sum(1 for log in manifest.step_logs if log.injected_layer_count)
    print(
        f"wrote {manifest.outputs['image']} "
        f"(checksum {manifest.checksums['image'][:12]}, "
        f"{injected} injected steps, config {manifest.config_hash[:12]})"
    )
    return 0


def cmd_analyze(args) -> int:
    cfg = _build_config(args)
    out_dir = args.out_dir or cfg.io.out_dir
    trace = AttentionTrace.load(args.trace)
    glyph = prepare_glyph(cfg)
    mask_frac = glyph_mask_patches(glyph, cfg.model.patch)
    result = run_analyze(
        trace,
        mask_frac,
        cfg.injection.ratio,
        mode=cfg.injection.mode,
        averaging=cfg.injection.averaging,
    )
    os.makedirs(out_dir, exist_ok=True)
    shift_path = os.path.join(out_dir, "shift.csv")
    with open(shift_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.shift_csv)
    raw_path = os.path.join(out_dir, "scores_raw.bin")
    save_scores(raw_path, result.raw_scores)
    sel_path = os.path.join(out_dir, "scores_selection.bin")
    save_scores(sel_path, result.selection_scores)
    print(f"wrote {shift_path}, {raw_path}, {sel_path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    if args.full_runs:
        cfg = replace(cfg, sweep=replace(cfg.sweep, full_runs=True))
    result = run_sweep(cfg, out_dir=args.out_dir)
    n_cells = len(cfg.sweep.ratios) * len(cfg.sweep.steps)
    for path in (result.csv_paths[m] for m in sorted(result.csv_paths)):
        print(f"wrote {path}")
    for ratio, step, message in result.failures:
        print(f"cell ({ratio}, {step}) failed: {message}", file=sys.stderr)
    if result.failures and len(result.failures) == n_cells:
        return 3
    if result.failures:
        return 4
    return 0


def cmd_export_heatmap(args) -> int:
    tensors, _ = read_tensors(args.scores)
    if not tensors:
        raise GlyphFlowError(f"{args.scores} holds no tensors")
    name = args.name or next(iter(tensors))
    if name not in tensors:
        raise GlyphFlowError(f"tensor {name!r} not in {args.scores}")
    export_heatmap(tensors[name], args.grid, args.out)
    print(f"wrote {args.out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glyphflow",
        description="Glyph-conditioned toy diffusion transformer with core-token "
        "attention injection.",
        epilog="config keys:\n" + describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"glyphflow {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rasterize", help="render text to a glyph PGM")
    p.add_argument("--text", required=True)
    p.add_argument("--layout", dest="layout_value", default="horizontal",
                   choices=[l.value for l in Layout])
    p.add_argument("--scale", dest="scale_value", type=int, default=1)
    p.add_argument("--canvas", type=int, default=128)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out")
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("reconstruct", help="capture reconstruction attention to a trace file")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("generate", help="run the full injection pipeline")
    _add_common(p)
    p.add_argument("--no-injection", action="store_true", help="baseline run")
    p.add_argument("--predicted", help="externally recognized text for metrics")
    p.add_argument("--save-trace", action="store_true")
    p.add_argument("--dataset", help="JSON array of {word, style, lang} records")
    p.add_argument("--record", type=int, default=0, help="dataset record index")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="score a trace and report the attention shift")
    _add_common(p)
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="ratio x cutoff grid; CSV per metric")
    _add_common(p)
    p.add_argument("--full-runs", action="store_true",
                   help="also generate an image per cell")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-heatmap", help="score vector to min-max PGM")
    p.add_argument("--scores", required=True, help="tensor dump file")
    p.add_argument("--name", help="tensor name (default: first)")
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_heatmap)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NonFiniteActivation, ZeroRowMass) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GlyphFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
