"""
Subcommands: synth, annotate, infer, eval, check-grad, bench-pose.

Exit codes: 0 success, 1 invalid input or failed check, 2 runtime failure.
Reports go to standard output, diagnostics to standard error.
"""
import argparse
import dataclasses
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from datasets.kitti import (
    kitti_object_from_result, load_kitti_frame, load_kitti_ground_truth, parse_calib_text, write_kitti_labels,
)
from datasets.noise import perturb_records
from datasets.records import (
    ground_truth_for_eval, read_detections, read_ground_truth, read_header, read_records, read_weak_annotations,
    write_ground_truth, write_records, write_results, write_weak_annotations,
)
from datasets.synthetic import generate_scenes, gt_to_records, model_indices_from_ids, scene_weaks
from evaluation.report import evaluate, evaluate_all_levels, write_pr_curve_csv
from geometry.camera import CameraIntrinsics
from models.shape_bank import ShapeBank, load_bank
from services.annotation_service import AnnotationService, Scene
from services.inference_service import InferenceService
from services.pose_benchmark import run_pose_benchmark
from training.grad_check import run_gradient_suite
from utils.errors import ConfigError, ValidationError, Vehicle3DError
from utils.logging_setup import configure_logging
from utils.utils import dump_json, ensure_dir, read_json, write_json
from .config import RunConfig, load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def derive_seeds(seed: int, n: int) -> List[int]:
    """Independent child seeds of the run seed."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n)]


def resolve_camera(args: argparse.Namespace, cfg: RunConfig, header: Optional[Dict[str, Any]] = None) -> CameraIntrinsics:
    """--camera file, then --calib / paths.calib, then the input file header, then the camera section."""
    if getattr(args, "camera", None):
        return CameraIntrinsics.from_dict(read_json(args.camera))
    if cfg.paths.calib and Path(cfg.paths.calib).is_file():
        calib = Path(cfg.paths.calib)
        return parse_calib_text(calib.read_text(), cfg.camera.img_w, cfg.camera.img_h, str(calib))
    if header and "camera" in header:
        return CameraIntrinsics.from_dict(header["camera"])
    return cfg.camera


def _header(cfg: RunConfig, camera: CameraIntrinsics, bank: ShapeBank) -> Dict[str, Any]:
    return {"seed": cfg.run.seed, "camera": camera.to_dict(), "bank": bank.ids}


def _out_dir(cfg: RunConfig) -> Path:
    return ensure_dir(cfg.paths.out)


def cmd_synth(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Synthetic scenes, their ground truth and (optionally noisy) ideal records."""
    bank = load_bank(cfg.paths.bank)
    camera = resolve_camera(args, cfg)
    scene_seed, noise_seed = derive_seeds(cfg.run.seed, 2)
    spec = dataclasses.replace(cfg.scene, seed=scene_seed)
    scenes = generate_scenes(spec, bank, cfg.run.n_images, camera)
    service = AnnotationService(bank, camera, cfg.annotation.use_dataset_box, cfg.annotation.epsilon)

    weaks, model_ids, gts, records = {}, {}, {}, []
    for image_id, scene in scenes.items():
        weaks[image_id], model_ids[image_id] = scene_weaks(scene)
        gts[image_id] = service.annotate_scene(scene)
        records.extend(gt_to_records(gts[image_id], bank, image_id))
    if not cfg.noise.is_zero:
        records = perturb_records(records, cfg.noise, noise_seed)

    out = _out_dir(cfg)
    header = _header(cfg, camera, bank)
    write_weak_annotations(out / "scene.jsonl", weaks, model_ids, header=header)
    write_ground_truth(out / "gt.jsonl", gts, header=header)
    write_records(out / "records.jsonl", records, header=header)
    n_gt = sum(len(v) for v in gts.values())
    print(f"synth: {len(scenes)} images, {n_gt} vehicles, {len(records)} records -> {out}")
    return EXIT_OK


def _annotate_kitti(args, cfg: RunConfig, bank: ShapeBank, service_for) -> Dict[str, list]:
    label_path = Path(args.kitti_label)
    label_files = [label_path] if label_path.is_file() else sorted(label_path.glob("*.txt"))
    calib = Path(cfg.paths.calib) if cfg.paths.calib else None
    gts = {}
    for label_file in label_files:
        calib_file = calib / f"{label_file.stem}.txt" if calib is not None and calib.is_dir() else calib
        if calib_file is None and not getattr(args, "camera", None):
            raise ConfigError("annotating KITTI labels needs --calib or --camera")
        frame = load_kitti_frame(label_file, calib_file, img_size=(cfg.camera.img_w, cfg.camera.img_h))
        camera = CameraIntrinsics.from_dict(read_json(args.camera)) if getattr(args, "camera", None) else frame.camera
        gts[label_file.stem] = service_for(camera).annotate(frame.weak_annotations())
    return gts


def cmd_annotate(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Ground truth from weak 3D boxes (JSON lines or KITTI labels)."""
    bank = load_bank(cfg.paths.bank)

    def service_for(camera: CameraIntrinsics) -> AnnotationService:
        return AnnotationService(bank, camera, cfg.annotation.use_dataset_box, cfg.annotation.epsilon)

    agreement = []
    if args.kitti_label:
        gts = _annotate_kitti(args, cfg, bank, service_for)
        camera = None
    elif args.input:
        header, grouped = read_weak_annotations(args.input)
        camera = resolve_camera(args, cfg, header)
        service = service_for(camera)
        gts = {}
        for image_id in sorted(grouped):
            weaks = [w for w, _ in grouped[image_id]]
            indices = model_indices_from_ids(bank, [m for _, m in grouped[image_id]])
            scene = Scene(camera, weaks, bank, model_indices=indices)
            gts[image_id] = service.annotate_scene(scene)
            if args.zbuffer_check:
                agreement.append(service.agreement_with_zbuffer(scene))
    else:
        raise ConfigError("annotate needs --input or --kitti-label")

    out = _out_dir(cfg)
    header = {"seed": cfg.run.seed, "bank": bank.ids}
    if camera is not None:
        header["camera"] = camera.to_dict()
    write_ground_truth(out / "gt.jsonl", gts, header=header)
    print(f"annotate: {sum(len(v) for v in gts.values())} vehicles over {len(gts)} images -> {out / 'gt.jsonl'}")
    if agreement:
        print(f"ray-cast / z-buffer agreement: {float(np.mean(agreement)):.4f}")
    return EXIT_OK


def cmd_infer(cfg: RunConfig, args: argparse.Namespace) -> int:
    """3D recovery for every detection record."""
    bank = load_bank(cfg.paths.bank)
    records = read_records(args.records)
    header = read_header(args.records)
    camera = resolve_camera(args, cfg, header)
    service = InferenceService(bank, camera, cfg.pnp, cfg.inference.nms_threshold, cfg.inference.max_proposals)
    outputs = service.run(records)

    out = _out_dir(cfg)
    write_results(out / "results.jsonl", outputs, header=_header(cfg, camera, bank))
    if args.kitti_out:
        kitti_dir = ensure_dir(args.kitti_out)
        for image_id, pairs in outputs.items():
            objects = [kitti_object_from_result(rec.box.box, rec3d.box3d, rec.score) for rec, rec3d in pairs]
            write_kitti_labels(kitti_dir / f"{image_id}.txt", objects)
    stats = service.stats.to_dict()
    logger.info(f"Inference stats: {stats}")
    print(f"infer: {stats['n_recovered']} vehicles from {stats['n_records']} records over "
          f"{stats['n_images']} images (median {stats['median_latency_ms']:.2f} ms/vehicle) -> {out / 'results.jsonl'}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Metric report of detections against ground truth."""
    detections = read_detections(args.detections)
    if args.kitti_gt:
        ground_truth = load_kitti_ground_truth(args.kitti_gt)
    elif args.gt:
        ground_truth = ground_truth_for_eval(read_ground_truth(args.gt))
    else:
        raise ConfigError("eval needs --gt or --kitti-gt")

    out = _out_dir(cfg)
    if args.all_levels:
        levels = evaluate_all_levels(detections, ground_truth, cfg.eval)
        doc: Dict[str, Any] = {"config": cfg.to_dict(), "mean": levels["mean"]}
        for name in ("easy", "moderate", "hard"):
            doc[name] = {k: v for k, v in levels[name].to_dict().items() if k != "config"}
            write_pr_curve_csv(out / f"pr_curve_{name}.csv", levels[name].curve, cfg.eval.alp_distances)
            print(levels[name].format_text(title=f"[{name}]"))
        print(f"[mean] {dump_json(levels['mean']).strip()}")
        write_json(out / "metrics.json", doc)
        return EXIT_OK

    report = evaluate(detections, ground_truth, cfg.eval)
    write_json(out / "metrics.json", report.to_dict(cfg.to_dict()))
    write_pr_curve_csv(out / "pr_curve.csv", report.curve, cfg.eval.alp_distances)
    print(report.format_text(title=f"[{cfg.eval.difficulty}]"))
    return EXIT_OK


def cmd_check_grad(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Finite-difference check of every loss gradient; exit 1 on failure."""
    report = run_gradient_suite(cfg.run.seed, n_points=cfg.run.grad_points, weights=cfg.loss)
    write_json(_out_dir(cfg) / "grad_check.json", report.to_dict())
    for name, err in report.errors.items():
        print(f"{name:<20} {err:.3e}")
    print(f"gating {'ok' if report.gating_ok else 'FAILED'}; {'passed' if report.passed else 'FAILED'}")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_bench_pose(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Latency and accuracy of the pose pipeline on random synthetic vehicles."""
    bank = load_bank(cfg.paths.bank)
    camera = resolve_camera(args, cfg)
    bench = run_pose_benchmark(bank, camera, cfg.run.trials, derive_seeds(cfg.run.seed, 1)[0], cfg.pnp,
                               part_sigma=cfg.noise.part_sigma, with_oracle=args.oracle)
    summary = bench.summary()
    write_json(_out_dir(cfg) / "bench_pose.json", summary)
    for key, value in summary.items():
        print(f"{key:<28} {value}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "annotate": cmd_annotate,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "check-grad": cmd_check_grad,
    "bench-pose": cmd_bench_pose,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: LOG_LEVEL or INFO)")
    common.add_argument("--bank", help="shape bank JSON")
    common.add_argument("--calib", help="KITTI calib file (or directory for annotate)")
    common.add_argument("--camera", help="JSON file with fx, fy, cx, cy, img_w, img_h")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="vehicle3d", description="Many-task vehicle analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="generate synthetic scenes, GT and records")
    synth.add_argument("--n-images", type=int)
    synth.add_argument("--n-vehicles", type=int)
    synth.add_argument("--noise-parts-sigma", type=float)
    synth.add_argument("--noise-box-sigma", type=float)
    synth.add_argument("--noise-template-sigma", type=float)
    synth.add_argument("--noise-vis-flip", type=float)

    annotate = sub.add_parser("annotate", parents=[common], help="ground truth from weak 3D boxes")
    annotate.add_argument("--input", help="weak boxes (JSON lines)")
    annotate.add_argument("--kitti-label", help="KITTI label file or directory")
    annotate.add_argument("--use-dataset-box", action="store_true", default=None)
    annotate.add_argument("--zbuffer-check", action="store_true")

    infer = sub.add_parser("infer", parents=[common], help="3D recovery from detection records")
    infer.add_argument("--records", required=True)
    infer.add_argument("--nms", type=float)
    infer.add_argument("--max-proposals", type=int)
    infer.add_argument("--pnp-mode", choices=["yaw", "6dof"])
    infer.add_argument("--kitti-out", help="also write KITTI-format results to this directory")

    ev = sub.add_parser("eval", parents=[common], help="metric report")
    ev.add_argument("--detections", required=True, help="results JSON lines from infer")
    ev.add_argument("--gt", help="ground truth JSON lines")
    ev.add_argument("--kitti-gt", help="KITTI label file or directory")
    ev.add_argument("--iou", type=float)
    ev.add_argument("--interp", type=int, choices=[11, 41])
    ev.add_argument("--difficulty", choices=["easy", "moderate", "hard", "all"])
    ev.add_argument("--all-levels", action="store_true")

    grad = sub.add_parser("check-grad", parents=[common], help="finite-difference gradient check")
    grad.add_argument("--points", type=int)

    bench = sub.add_parser("bench-pose", parents=[common], help="pose solver latency and accuracy")
    bench.add_argument("--trials", type=int)
    bench.add_argument("--noise-parts-sigma", type=float)
    bench.add_argument("--pnp-mode", choices=["yaw", "6dof"])
    bench.add_argument("--oracle", action="store_true")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Config sections set by command-line flags; unset flags are None and ignored."""
    def get(name):
        return getattr(args, name, None)

    return {
        "paths": {"bank": get("bank"), "calib": get("calib"), "out": get("out")},
        "run": {"seed": get("seed"), "n_images": get("n_images"), "trials": get("trials"),
                "grad_points": get("points")},
        "scene": {"n_vehicles": get("n_vehicles")},
        "noise": {"part_sigma": get("noise_parts_sigma"), "box_sigma": get("noise_box_sigma"),
                  "template_sigma": get("noise_template_sigma"), "vis_flip_prob": get("noise_vis_flip")},
        "annotation": {"use_dataset_box": get("use_dataset_box")},
        "inference": {"nms_threshold": get("nms"), "max_proposals": get("max_proposals")},
        "pnp": {"mode": get("pnp_mode")},
        "eval": {"iou_threshold": get("iou"), "interpolation": get("interp"), "difficulty": get("difficulty")},
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        cfg = load_run_config(args.config, overrides_from_args(args))
        return COMMANDS[args.command](cfg, args)
    except ValidationError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_VALIDATION
    except (Vehicle3DError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
