"""Command-line interface.

Subcommands:
  gen-data   build a dataset manifest (optionally export renders)
  slice      cut a panorama PPM into N perspective views
  compose    build one model-input tensor from target + context PPMs
  train      train a model from a JSON experiment config
  eval       score a trained model on a dataset's test sets
  matrix     run the full format x transform grid
  baseline   score the NCC oracle on the same test sets
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset as ds
from . import experiment as ex
from . import model as nn
from .composer import FormatSpec, compose, save_composed
from .geometry import CameraModel, EquirectPanorama, SlicePlan, slice_all
from .imaging import read_ppm, write_ppm


def _cmd_gen_data(args) -> int:
    manifest = ds.build_dataset(args.locations, args.seed, args.out,
                                n_moments=args.moments,
                                pano_height=args.pano_height,
                                cell=args.cell)
    n_train = len(manifest.train_locations)
    print(f"wrote {ds.MANIFEST_NAME} with {manifest.n_locations} locations "
          f"({n_train} train / {manifest.n_locations - n_train} test)")
    if args.write_images:
        count = ds.export_images(manifest, Path(args.out) / "images")
        print(f"exported {count} image files")
    return 0


def _cmd_slice(args) -> int:
    pano = EquirectPanorama(image=read_ppm(args.pano))
    cam = CameraModel(hfov=args.hfov, out_w=args.size, out_h=args.size)
    plan = SlicePlan(n_slices=args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, img in enumerate(slice_all(pano, plan, cam)):
        write_ppm(out / f"slice_{k}.ppm", img)
    print(f"wrote {plan.n_slices} slices to {out}")
    return 0


def _cmd_compose(args) -> int:
    target = read_ppm(args.target)
    ppms = sorted(Path(args.contexts).glob("*.ppm"))
    if len(ppms) != 8:
        print(f"error: need exactly 8 context PPMs in {args.contexts}, "
              f"found {len(ppms)}", file=sys.stderr)
        return 2
    contexts = [read_ppm(p) for p in ppms]
    ci = compose(FormatSpec(args.format, args.cell), target, contexts)
    save_composed(ci, args.out)
    t, h, w, c = ci.spec.tensor_shape
    print(f"wrote {args.out} ({t}x{h}x{w}x{c} float32) and {args.out}.hdr")
    return 0


def _load_config(path) -> ex.ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return ex.config_from_dict(json.load(f))


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    manifest = ds.load_manifest(args.data)
    if manifest.cell != cfg.cell:
        print(f"note: dataset cell {manifest.cell} != config cell {cfg.cell}; "
              f"using dataset cell", file=sys.stderr)
        cfg = replace(cfg, cell=manifest.cell, model=None)
    mcfg, params = ex.train_model(cfg, manifest)
    extra = {"format": cfg.format, "cell": str(cfg.cell),
             "use_seg": "on" if cfg.use_seg else "off",
             "seed": str(cfg.seed), "epochs": str(cfg.epochs)}
    nn.save_params(mcfg, params, args.out, extra=extra)
    print(f"wrote model to {args.out} ({nn.param_count(mcfg)} parameters)")
    return 0


def _cmd_eval(args) -> int:
    manifest = ds.load_manifest(args.data)
    fields = nn.read_model_header(args.model)
    mcfg = nn.config_from_header(fields)
    params = nn.load_params(mcfg, args.model)
    cfg = ex.ExperimentConfig(
        format=fields.get("format", "d1"),
        cell=int(fields.get("cell", manifest.cell)),
        model=mcfg,
        use_style=args.style == "on",
        use_seg=args.seg == "on",
    )
    row = ex.run_experiment(cfg, manifest, trained=(mcfg, params))
    ex.write_results([row], args.out)
    print(f"upper {row.upper_bound_acc:.4f} full {row.full_acc:.4f} "
          f"day {row.day_acc:.4f} night {row.night_acc:.4f} "
          f"rain {row.rain_acc:.4f} -> {args.out}")
    return 0


def _cmd_matrix(args) -> int:
    manifest = ds.load_manifest(args.data)
    base = ex.ExperimentConfig(cell=manifest.cell, epochs=args.epochs,
                               seeds=tuple(args.seeds))
    formats = tuple(args.formats.split(","))
    rows = ex.run_matrix(manifest, base, formats=formats)
    ex.write_results(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_baseline(args) -> int:
    manifest = ds.load_manifest(args.data)
    rows = ex.baseline_rows(manifest)
    ex.write_results(rows, args.out)
    row = rows[0]
    print(f"ncc upper {row.upper_bound_acc:.4f} full {row.full_acc:.4f} "
          f"-> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panorient",
        description="Orientation detection from panorama context slices")
    parser.add_argument("--verbose", action="store_true",
                        help="log training progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="build a dataset manifest")
    p.add_argument("--locations", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--moments", type=int, default=ds.DEFAULT_N_MOMENTS)
    p.add_argument("--pano-height", type=int, default=ds.DEFAULT_PANO_HEIGHT)
    p.add_argument("--cell", type=int, default=ds.DEFAULT_CELL)
    p.add_argument("--write-images", action="store_true",
                   help="also export reference panoramas as PPM/PGM")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("slice", help="slice a panorama into perspective views")
    p.add_argument("--pano", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--hfov", type=float, default=90.0)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("compose", help="compose a model input tensor")
    p.add_argument("--format", required=True, choices=["d1", "d2", "d3", "d4"])
    p.add_argument("--cell", type=int, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--contexts", required=True,
                   help="directory holding exactly 8 context PPMs (sorted order)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--style", choices=["on", "off"], default="off")
    p.add_argument("--seg", choices=["on", "off"], default="off")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("matrix", help="run the transform/format grid")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--formats", default="d1",
                   help="comma-separated subset of d1,d2,d3,d4")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--epochs", type=int, default=20)
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser("baseline", help="run the NCC oracle")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
