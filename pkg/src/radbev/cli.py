"""Command line entry point: ``radbev <subcommand> ...``.

Stages communicate through files: scenes and submissions as JSON, radar
points as JSON, BEV grids as header-plus-binary dumps. Exit codes: 0 on
success, 1 on invalid input (including bad flags), 2 on I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from decimal import ROUND_HALF_DOWN, Decimal
from dataclasses import replace
from typing import Sequence

from . import io
from . import pipeline as pl
from .boxes import transform_box
from .errors import SchemaError, ShapeMismatch, ValidationError
from .geometry import invert
from .metrics import MTP_KEYS, evaluate, nds
from .synth import generate_scene


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so that usage errors map to exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _config(args) -> pl.PipelineConfig:
    cfg = pl.PipelineConfig.from_dict(io.load_config(args.config))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, scene=replace(cfg.scene, seed=args.seed))
    return cfg


def _check_classes(grid, cfg, what):
    if grid.spec.channels != len(cfg.classes):
        raise ShapeMismatch(f"{what} has {grid.spec.channels} channels, config names {len(cfg.classes)} classes")


# Subcommands


def cmd_simulate(args):
    cfg = _config(args)
    io.write_scene(generate_scene(cfg.scene), args.output)


def cmd_preprocess(args):
    cfg = _config(args)
    io.write_points(pl.preprocess(io.parse_scene(args.input), cfg), args.output)


def cmd_heatmap(args):
    cfg = _config(args)
    io.write_grid(pl.radar_heat(io.parse_points(args.input), cfg), args.output)


def cmd_liftsplat(args):
    cfg = _config(args)
    io.write_grid(pl.image_bev(io.parse_scene(args.input), cfg), args.output)


def cmd_fuse(args):
    cfg = _config(args)
    img = io.read_grid(args.input)
    points = io.parse_points(args.points)
    rheat = io.read_grid(args.radar_heat) if args.radar_heat else pl.radar_heat(points, cfg)
    kernels = pl.build_kernels(cfg)
    if args.kernels:
        kernels.update(io.parse_kernels(args.kernels))
    fo = pl.fuse(img, pl.radar_features(points, cfg), rheat, kernels)
    _check_classes(fo.heat, cfg, "fused heatmap")
    io.write_grid(fo.heat, args.output)
    if args.features:
        io.write_grid(fo.fused, args.features)


def cmd_decode(args):
    cfg = _config(args)
    heat = io.read_grid(args.input)
    _check_classes(heat, cfg, "heatmap")
    scene = io.parse_scene(args.scene)
    fo = pl.FusionOutput(io.read_grid(args.features), heat, heat)
    dets = pl.detect(fo, io.parse_points(args.points), scene.ground_z_ref(), cfg, scene.camera_models())
    to_global = scene.ref_to_global()
    io.write_submission({args.sample: [transform_box(to_global, b) for b in dets]}, args.output)


def cmd_loss(args):
    cfg = _config(args)
    heat = io.read_grid(args.heat)
    _check_classes(heat, cfg, "heatmap")
    fo = pl.FusionOutput(io.read_grid(args.features), heat, heat)
    io.write_json(args.output, pl.compute_losses(io.parse_scene(args.input), fo, io.parse_points(args.points), cfg))


def _metric_rows(doc) -> list[dict]:
    rows = doc.get("rows") if isinstance(doc, dict) else None
    if not isinstance(rows, list):
        raise SchemaError("/rows", "expected a list of pre-aggregated metric rows")
    out = []
    for i, row in enumerate(rows):
        missing = [k for k in ("mAP", *MTP_KEYS) if not isinstance(row.get(k) if isinstance(row, dict) else None,
                                                                     (int, float))]
        if missing:
            raise SchemaError(f"/rows/{i}", f"missing numeric fields {missing}")
        # exact decimal arithmetic on the literals as written (repr round-trips them)
        exact = {k: Decimal(repr(row[k])) for k in ("mAP", *MTP_KEYS)}
        value = nds(exact["mAP"], {k: exact[k] for k in MTP_KEYS})
        out.append({"name": str(row.get("name", i)), "NDS": value})
    return out


def cmd_eval(args):
    cfg = _config(args)
    doc = io.read_json(args.input)
    if isinstance(doc, dict) and "rows" in doc:
        rows = _metric_rows(doc)
        for r in rows:
            # ties at the third decimal round down, matching published tables
            print(f"{r['name']}\tNDS {r['NDS'].quantize(Decimal('0.001'), ROUND_HALF_DOWN)}")
        if args.output:
            io.write_json(args.output, {"rows": [{**r, "NDS": float(r["NDS"])} for r in rows]})
        return
    if not args.gt:
        raise UsageError("eval: --gt is required for a submission file")
    preds = io.parse_submission(args.input)
    gts = {}
    for spec in args.gt:
        sample, _, path = spec.rpartition("=")
        gts[sample or args.sample] = list(io.parse_scene(path).keyframe.annotations)
    report = evaluate(preds, gts, cfg.eval.config(cfg.classes))
    print(f"mAP {report['mAP']:.4f}\tNDS {report['NDS']:.4f}")
    if args.output:
        io.write_json(args.output, report)


def cmd_pipeline(args):
    cfg = _config(args)
    if args.input:
        res = pl.run_scene(io.parse_scene(args.input), cfg, args.sample)
    else:
        res = pl.run_pipeline(cfg)
    io.write_json(args.output, res.report)
    print(f"mAP {res.report['mAP']:.4f}\tNDS {res.report['NDS']:.4f}\tdetections {res.report['num_detections']}")
    if args.plot:
        from .plot import plot_bev

        plot_bev(args.plot, res.fusion.heat, res.detections, res.scene.gt_boxes_ref(), "ROI-fused heatmap")


def cmd_plot(args):
    from .plot import plot_bev

    _config(args)  # validates --config even though plotting has no tunables
    grid = io.read_grid(args.input)
    dets, gts = [], []
    if args.scene:
        scene = io.parse_scene(args.scene)
        to_ref = invert(scene.ref_to_global())
        gts = scene.gt_boxes_ref()
        if args.detections:
            sub = io.parse_submission(args.detections)
            dets = [transform_box(to_ref, b) for boxes in sub.values() for b in boxes]
    elif args.detections:
        raise UsageError("plot: --detections needs --scene to place the boxes")
    plot_bev(args.output, grid, dets, gts, args.title)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radbev", description="Radar-camera BEV fusion pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help, input=True, seed=False, output_required=True):
        p = sub.add_parser(name, help=help)
        p.add_argument("--input", required=input is True, help="input file")
        p.add_argument("--output", required=output_required, help="output file")
        p.add_argument("--config", help="TOML or JSON config overlaid on the shipped defaults")
        if seed:
            p.add_argument("--seed", type=int, help="scene seed (overrides the config)")
        p.set_defaults(func=func)
        return p

    add("simulate", cmd_simulate, "generate a synthetic scene file", input=False, seed=True)
    add("preprocess", cmd_preprocess, "filter and accumulate radar sweeps into the reference frame")
    add("heatmap", cmd_heatmap, "radar Gaussian heatmap grid from a points file")
    add("liftsplat", cmd_liftsplat, "camera features lifted and splatted into a BEV grid")
    p = add("fuse", cmd_fuse, "point fusion, heatmap prediction and ROI fusion")
    p.add_argument("--points", required=True, help="points file from preprocess")
    p.add_argument("--radar-heat", help="radar heatmap grid (computed from the points if omitted)")
    p.add_argument("--kernels", help="JSON kernel fixture overriding pf/heat/roi")
    p.add_argument("--features", help="also write the point-fused feature grid here")
    p = add("decode", cmd_decode, "decode a fused heatmap into a submission")
    p.add_argument("--features", required=True, help="point-fused feature grid")
    p.add_argument("--points", required=True, help="points file from preprocess")
    p.add_argument("--scene", required=True, help="scene file (cameras and poses)")
    p.add_argument("--sample", default="sample-0", help="sample id in the submission")
    p = add("loss", cmd_loss, "detection losses of fused outputs against the scene's ground truth")
    p.add_argument("--heat", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--points", required=True)
    p = add("eval", cmd_eval, "evaluate a submission, or NDS of pre-aggregated metric rows", output_required=False)
    p.add_argument("--gt", action="append", help="ground-truth scene file, optionally SAMPLE=PATH; repeatable")
    p.add_argument("--sample", default="sample-0", help="sample id for a bare --gt path")
    p = add("pipeline", cmd_pipeline, "simulate (or read) a scene and run every stage through evaluation",
            input=False, seed=True)
    p.add_argument("--sample", default="sample-0", help="sample id when --input is given")
    p.add_argument("--plot", help="also write a PNG of the fused heatmap with boxes")
    p = add("plot", cmd_plot, "render a grid (and optionally boxes) as a PNG")
    p.add_argument("--scene", help="scene file for ground truth and frame placement")
    p.add_argument("--detections", help="submission file to overlay")
    p.add_argument("--title", default="")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
