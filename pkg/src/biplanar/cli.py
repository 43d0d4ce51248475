"""
Command-line front end.

    biplanar prepare IN_DIR --out OUT_DIR
    biplanar phantom cube --dims 64 --value 1024 --out cube.hdr
    biplanar synthesize VOLUME --out DIR
    biplanar forward --pa pa.hdr [--lat lat.hdr --biplanar] --out recon.hdr
    biplanar reconstruct --phantom cube --dims 16 --out recon.hdr
    biplanar evaluate PRED TARGET

Logs go to stderr; reports go to stdout; data go to files.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import generator
from .config import RunConfig
from .drr import load_geometry, make_biplanar
from .losses import PLANES, projection_loss_to, projections
from .metrics import aggregate, evaluate_case
from .phantoms import KINDS, phantom
from .recon import OptimizeSpec, reconstruct, save_trace
from .volume import (crop_metric_cube, load_image, load_volume, normalize,
                     resample_isotropic, round_half_up, save_image, save_volume)
from .weights import load_weights, save_weights

log = logging.getLogger("biplanar")


def split_cases(names, test_fraction: float, seed: int) -> dict[str, str]:
    """Seeded train/test split; ``round(N * test_fraction)`` cases go to test."""
    names = sorted(names)
    n_test = round_half_up(len(names) * test_fraction)
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(names))
    test = {names[i] for i in order[:n_test]}
    return {name: "test" if name in test else "train" for name in names}


def file_digest(path) -> str:
    h = hashlib.sha256()
    path = Path(path)
    h.update(path.read_bytes())
    raw = path.with_suffix(".raw")
    if raw.exists():
        h.update(raw.read_bytes())
    return h.hexdigest()


# -- commands -----------------------------------------------------------------------

def cmd_prepare(in_dir, out_dir, cfg: RunConfig) -> Path:
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    headers = sorted(in_dir.glob("*.hdr"))
    if not headers:
        raise FileNotFoundError(f"no volume headers (*.hdr) in {in_dir}")
    written = []
    for h in headers:
        try:
            vol = load_volume(h)
            vol = resample_isotropic(vol, cfg.spacing)
            vol = crop_metric_cube(vol, cfg.cube_mm)
            vol = normalize(vol, "to_unit")
            vol = vol.with_values(vol.values.astype(np.float32))
            save_volume(vol, out_dir / h.name)
            written.append(h.name)
            log.info("prepared %s -> dims %s", h.name, vol.dims)
        except (OSError, ValueError) as exc:
            log.error("skipping %s: %s", h, exc)
    if not written:
        raise RuntimeError("no volume could be prepared")
    labels = split_cases(written, cfg.test_fraction, cfg.seed)
    manifest = out_dir / "manifest.txt"
    manifest.write_text("".join(f"{out_dir / name} {labels[name]}\n" for name in sorted(written)))
    counts = {s: sum(v == s for v in labels.values()) for s in ("train", "test")}
    log.info("split: %d train, %d test", counts["train"], counts["test"])
    return manifest


def cmd_phantom(kind, dims, value, out, spacing=1.0) -> Path:
    vol = phantom(kind, dims, spacing=spacing, value=value) if kind != "ramp" else \
        phantom(kind, dims, spacing=spacing, high=value)
    return save_volume(vol, out)


def cmd_synthesize(volume_path, out_pa, out_lat, cfg: RunConfig, geometry_path=None,
                   normalized: bool = False) -> tuple[Path, Path]:
    vol = load_volume(volume_path)
    if normalized:
        vol = normalize(vol, "inverse")
    geom = load_geometry(geometry_path) if geometry_path else cfg.geometry()
    pa, lat = make_biplanar(
        vol, geom.detector_dims, geom.mode, cfg.attenuation(),
        detector_spacing=geom.detector_spacing, step_mm=geom.step_mm,
        source_to_detector_mm=geom.source_to_detector_mm,
        source_to_isocenter_mm=geom.source_to_isocenter_mm, isocenter=geom.isocenter)
    return save_image(pa, out_pa), save_image(lat, out_lat)


def cmd_forward(pa_path, lat_path, cfg: RunConfig, out, stats_path=None, weights_dir=None,
                save_weights_dir=None, dtype=np.float64) -> Path:
    gcfg = cfg.generator_config()
    report = generator.audit_shapes(gcfg)
    weights = load_weights(weights_dir) if weights_dir else generator.init_weights(gcfg, cfg.seed)
    if save_weights_dir:
        save_weights(weights, save_weights_dir)
    pa = load_image(pa_path)
    lat = load_image(lat_path) if lat_path else None
    vol = generator.generator_forward(pa, lat, gcfg, weights, dtype=dtype)
    out = save_volume(vol.with_values(vol.values.astype(np.float64)), out)
    stats_path = Path(stats_path) if stats_path else out.with_suffix(".stats.txt")
    lines = [f"min = {float(vol.values.min())!r}", f"max = {float(vol.values.max())!r}",
             f"mean = {float(vol.values.mean())!r}", f"seed = {cfg.seed}", f"biplanar = {str(gcfg.biplanar).lower()}"]
    lines += [f"shape.{name} = {'x'.join(map(str, shape))}" for name, shape in report.items()]
    stats_path.write_text("\n".join(lines) + "\n")
    return out


def _load_targets(targets_dir) -> dict:
    d = Path(targets_dir)
    return {plane: load_image(d / f"{plane}.hdr").values for plane in PLANES}


def cmd_reconstruct(cfg: RunConfig, out, trace_path=None, targets_dir=None, phantom_kind=None,
                    dims=16, value=1.0, ground_truth=None) -> tuple[Path, Path]:
    gt = load_volume(ground_truth) if ground_truth else None
    if targets_dir:
        targets = _load_targets(targets_dir)
        # axial is [x, y], sagittal is [y, z]
        shape = (targets["axial"].shape[0], targets["axial"].shape[1], targets["sagittal"].shape[1])
    elif phantom_kind:
        ph = phantom(phantom_kind, dims, value=value) if phantom_kind != "ramp" else phantom("ramp", dims, high=value)
        targets, shape = projections(ph), ph.dims
    elif gt is not None:
        targets, shape = None, gt.dims
    else:
        raise ValueError("reconstruct needs --targets, --phantom or --ground-truth")
    spec = OptimizeSpec(iterations=cfg.iterations, step_size=cfg.step, weights=cfg.loss_weights(),
                        init=cfg.init, seed=cfg.seed, targets=targets, ground_truth=gt)
    vol, trace = reconstruct(spec, shape)
    if targets is not None:
        log.info("final projection residual %.3e", projection_loss_to(vol, targets))
    out = save_volume(vol, out)
    trace_path = Path(trace_path) if trace_path else out.with_suffix(".trace.txt")
    save_trace(trace, trace_path)
    return out, trace_path


def _pairs(pred, target) -> list[tuple[str, Path, Path]]:
    pred, target = Path(pred), Path(target)
    if pred.is_dir() != target.is_dir():
        raise ValueError("pred and target must both be files or both be directories")
    if not pred.is_dir():
        return [(pred.stem, pred, target)]
    p = {h.name: h for h in pred.glob("*.hdr")}
    t = {h.name: h for h in target.glob("*.hdr")}
    unpaired = sorted(set(p) ^ set(t))
    if unpaired:
        raise ValueError(f"unpaired files: {', '.join(unpaired)}")
    if not p:
        raise ValueError(f"no *.hdr volumes in {pred}")
    return [(Path(name).stem, p[name], t[name]) for name in sorted(p)]


def cmd_evaluate(pred, target, normalized: bool = False) -> str:
    cases = [evaluate_case(load_volume(a), load_volume(b), cid, normalized) for cid, a, b in _pairs(pred, target)]
    return aggregate(cases).text()


# -- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="biplanar", description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="resample, crop, normalize and split volumes")
    p.add_argument("in_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--spacing", type=float)
    p.add_argument("--cube-mm", type=float)
    p.add_argument("--test-fraction", type=float)

    p = sub.add_parser("phantom", parents=[common], help="write an analytic phantom volume")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--value", type=float, default=1024.0)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synthesize", parents=[common], help="render PA and lateral radiographs")
    p.add_argument("volume")
    p.add_argument("--geometry", help="key = value projection geometry file")
    p.add_argument("--detector", type=int)
    p.add_argument("--mode", choices=("parallel", "cone"))
    p.add_argument("--normalized", action="store_true", help="volume holds [0, 1] values")
    p.add_argument("--out", help="output directory for pa.hdr and lateral.hdr")
    p.add_argument("--out-pa")
    p.add_argument("--out-lat")

    p = sub.add_parser("forward", parents=[common], help="run the generator on radiographs")
    p.add_argument("--pa", required=True)
    p.add_argument("--lat")
    p.add_argument("--biplanar", action="store_true", default=None)
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--weights", help="load a weight bundle instead of seeded init")
    p.add_argument("--save-weights")
    p.add_argument("--stats")
    p.add_argument("--float32", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("reconstruct", parents=[common], help="projection-matching gradient descent")
    p.add_argument("--targets", help="directory with axial/coronal/sagittal .hdr projections")
    p.add_argument("--phantom", choices=KINDS)
    p.add_argument("--dims", type=int, default=16)
    p.add_argument("--value", type=float, default=1.0)
    p.add_argument("--ground-truth")
    p.add_argument("--iterations", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--trace")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="PSNR/SSIM report")
    p.add_argument("pred")
    p.add_argument("target")
    p.add_argument("--normalized", action="store_true", help="volumes hold [0, 1] values")
    p.add_argument("--out", help="also write the report here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "spacing", "cube_mm", "test_fraction", "detector", "mode", "biplanar",
                  "iterations", "step", "preset")}
    if args.command == "phantom":
        overrides.pop("spacing")
    if args.command == "forward":
        if args.biplanar and not args.lat:
            parser.error("--biplanar requires --lat")
        if args.lat and args.biplanar is None:
            overrides["biplanar"] = True
    try:
        cfg = RunConfig.load(args.config, overrides)
        if args.command == "prepare":
            cmd_prepare(args.in_dir, args.out, cfg)
        elif args.command == "phantom":
            cmd_phantom(args.kind, args.dims, args.value, args.out, args.spacing)
        elif args.command == "synthesize":
            if args.out_pa and args.out_lat:
                out_pa, out_lat = args.out_pa, args.out_lat
            elif args.out:
                out_pa, out_lat = Path(args.out) / "pa.hdr", Path(args.out) / "lateral.hdr"
            else:
                parser.error("synthesize needs --out or both --out-pa and --out-lat")
            cmd_synthesize(args.volume, out_pa, out_lat, cfg, args.geometry, args.normalized)
        elif args.command == "forward":
            cmd_forward(args.pa, args.lat, cfg, args.out, args.stats, args.weights, args.save_weights,
                        np.float32 if args.float32 else np.float64)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, args.out, args.trace, args.targets, args.phantom, args.dims,
                            args.value, args.ground_truth)
        elif args.command == "evaluate":
            text = cmd_evaluate(args.pred, args.target, args.normalized)
            sys.stdout.write(text)
            if args.out:
                Path(args.out).write_text(text)
    except (OSError, ValueError, RuntimeError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
