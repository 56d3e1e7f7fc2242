"""Batch entry points over the whole engine.

Commands: render, animate, optimize, align, label-person, compose,
convert, serve, selftest. Exit codes: 0 ok, 2 usage, 3 input parse,
4 invariant violation, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import (
    InvalidInputError,
    InvariantError,
    NumericalError,
    ParseError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INVARIANT = 4
EXIT_NUMERICAL = 5


def _emit_config(target: Path, config) -> None:
    """Write the fully-resolved config alongside a command's outputs."""
    from .config import save_config

    target = Path(target)
    if target.suffix:
        out = target.with_name(target.name + ".config.json")
    else:
        target.mkdir(parents=True, exist_ok=True)
        out = target / "config.resolved.json"
    save_config(out, config)


def _cmd_render(args) -> int:
    from .config import load_config
    from .rasters import save_png, save_raster
    from .scene import load_camera_file, load_scene_bundle
    from .headmodel import head_params_from_dict

    config = load_config(args.config)
    scene = load_scene_bundle(args.scene)
    camera = load_camera_file(args.camera) if args.camera else None
    params = None
    if args.params:
        import json

        with open(args.params) as fh:
            params = head_params_from_dict(json.load(fh), model=scene.model)
    output = scene.render(params=params, camera=camera, options=config.rasterizer)
    save_png(args.out, output.color)
    if args.depth:
        save_raster(args.depth, output.depth)
    if args.alpha:
        save_raster(args.alpha, output.alpha)
    if args.mesh_depth:
        from .headmodel import pose_mesh
        from .meshraster import rasterize_mesh_depth

        mesh = pose_mesh(scene.model, params or scene.params)
        save_raster(args.mesh_depth, rasterize_mesh_depth(mesh, camera or scene.camera))
    _emit_config(Path(args.out), config)
    print(f"rendered {args.out}")
    return EXIT_OK


def _cmd_animate(args) -> int:
    from .config import load_config
    from .rasters import save_png
    from .scene import load_scene_bundle
    from .track import load_track

    config = load_config(args.config)
    scene = load_scene_bundle(args.scene)
    track = load_track(args.track, model=scene.model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(track.frames):
        output = scene.render(
            params=frame.params, camera=frame.camera, options=config.rasterizer
        )
        save_png(out_dir / f"frame_{k:06d}.png", output.color)
    _emit_config(out_dir, config)
    print(f"wrote {len(track)} frames to {out_dir}")
    return EXIT_OK


def _cmd_optimize(args) -> int:
    from dataclasses import replace

    from .config import load_config
    from .guidance import load_guidance_dir
    from .optimizer import optimize_appearance, save_loss_history
    from .scene import load_scene_bundle
    from .splatio import save_splat_file

    config = load_config(args.config)
    opt = config.optimizer
    if args.iterations:
        opt = replace(opt, iterations=args.iterations)
    opt = replace(opt, seed=args.seed)
    scene = load_scene_bundle(args.scene)
    guidance = load_guidance_dir(args.guidance, model=scene.model)
    result = optimize_appearance(
        scene.head_cloud,
        scene.binding,
        scene.model,
        guidance,
        config=opt,
        options=config.rasterizer,
        snapshot_dir=args.snapshot_dir,
    )
    save_splat_file(result.cloud, args.out)
    if args.history:
        save_loss_history(args.history, result.history)
    _emit_config(Path(args.out), config)
    final = result.history[-1]
    print(
        f"optimized {int(np.count_nonzero(result.trainable))} of {result.cloud.count}"
        f" Gaussians over {opt.iterations} iterations; final loss {final['total']:.6g}"
    )
    return EXIT_OK


def _cmd_align(args) -> int:
    from .alignment import load_problem_file, save_transform_file, solve_alignment

    problem = load_problem_file(args.problem)
    solution = solve_alignment(problem)
    if args.out:
        save_transform_file(args.out, solution)
        print(f"wrote {args.out}")
    else:
        for row in solution.as_matrix():
            print(" ".join(f"{v:.17g}" for v in row))
    return EXIT_OK


def _cmd_label_person(args) -> int:
    from .camera import load_cameras
    from .cloud import save_labels
    from .config import load_config
    from .rasters import load_mask_png
    from .scenetools import (
        MaskVoteConfig,
        label_person_gaussians,
        removal_report,
        remove_flagged,
        save_removal_report,
    )
    from .splatio import load_splat_file, save_splat_file

    config = load_config(args.config)
    cloud = load_splat_file(args.cloud)
    cameras = load_cameras(args.cameras)
    masks_dir = Path(args.masks_dir)
    masks = []
    for cam in cameras:
        mask_path = masks_dir / f"{cam.view_id}.png"
        if not mask_path.exists():
            raise ParseError(f"missing mask for view {cam.view_id!r}: {mask_path}")
        masks.append(load_mask_png(mask_path))
    vote = MaskVoteConfig(
        inlier_threshold=args.tau,
        min_views=args.min_views,
        depth_tolerance=args.depth_tolerance,
        dilation_radius=args.dilation,
    )
    flags = label_person_gaussians(cloud, masks, cameras, vote, config.rasterizer)
    cloud.person_flag = flags
    save_labels(args.out_labels, cloud)
    if args.report:
        save_removal_report(
            args.report, removal_report(cloud, flags, cameras, config.rasterizer)
        )
    if args.out_cloud:
        save_splat_file(remove_flagged(cloud, flags), args.out_cloud)
    print(f"flagged {int(flags.sum())} of {cloud.count} Gaussians as person")
    return EXIT_OK


def _cmd_compose(args) -> int:
    from .alignment import load_transform_file
    from .cloud import merge_scenes
    from .rigid import RigidTransform
    from .splatio import load_splat_file, save_splat_file

    head = load_splat_file(args.head, group="head")
    background = load_splat_file(args.background)
    transform = load_transform_file(args.transform) if args.transform else RigidTransform.identity()
    merged = merge_scenes(head, background, transform)
    save_splat_file(merged, args.out)
    print(f"composed {head.count} head + {background.count} background -> {args.out}")
    return EXIT_OK


def _cmd_convert_synth_scene(args) -> int:
    import json

    from .binding import bind_to_mesh, save_binding
    from .camera import save_cameras
    from .headmodel import HeadParams, make_synthetic_head, pose_mesh, save_head_asset
    from .scene import orbit_camera, save_scene_bundle
    from .splatio import save_splat_file

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = make_synthetic_head(
        seed=args.seed,
        num_vertices=args.vertices,
        num_joints=args.joints,
        num_shape=args.shape_dims,
        num_expression=args.expression_dims,
    )
    mesh = pose_mesh(model, HeadParams.neutral(model))
    cloud, binding, _ = bind_to_mesh(mesh, gaussians_per_triangle=args.per_triangle)
    rng = np.random.default_rng(args.seed)
    cloud.sh[:, 0, :] = rng.uniform(-0.8, 0.8, (cloud.count, 3))

    save_head_asset(model, out_dir / "head.blob")
    save_splat_file(cloud, out_dir / "head.ply")
    save_binding(out_dir / "binding.blob", binding)
    camera = orbit_camera(
        target=[0.0, 0.0, 0.0], azimuth=0.0, elevation=0.0, radius=0.45,
        width=args.size, height=args.size,
    )
    save_cameras(out_dir / "camera.json", [camera])
    save_scene_bundle(
        out_dir / "bundle.json",
        {
            "head_asset": "head.blob",
            "head_cloud": "head.ply",
            "binding": "binding.blob",
            "camera": "camera.json",
        },
    )
    with open(out_dir / "params.json", "w") as fh:
        from .headmodel import head_params_to_dict

        json.dump(head_params_to_dict(HeadParams.neutral(model)), fh, indent=2)
    print(f"synthetic scene written to {out_dir}")
    return EXIT_OK


def _cmd_convert_splat(args) -> int:
    from .splatio import load_splat_file, save_splat_file

    save_splat_file(load_splat_file(args.infile), args.out)
    print(f"normalized {args.infile} -> {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .config import load_config
    from .scene import load_scene_bundle
    from .service import serve

    config = load_config(args.config)
    scene = load_scene_bundle(args.scene)
    serve(
        scene,
        bind=args.bind,
        options=config.rasterizer,
        fps_cap=args.fps_cap,
        fmt=args.format,
        ui_dir=args.ui,
    )
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .selfcheck import run_all

    results = run_all(include_benchmark=not args.quick)
    all_passed = True
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
        all_passed &= result.passed
    return EXIT_OK if all_passed else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="headsplat",
        description="Animatable Gaussian-splat head scenes: render, optimize, align, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene bundle to a PNG still")
    p.add_argument("--scene", required=True, help="scene bundle JSON")
    p.add_argument("--camera", help="camera file overriding the bundle camera")
    p.add_argument("--params", help="head parameter JSON overriding the bundle params")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--depth", help="also write expected-depth raster here")
    p.add_argument("--alpha", help="also write alpha raster here")
    p.add_argument("--mesh-depth", help="also write mesh depth raster here")
    p.add_argument("--config", help="engine config JSON")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("animate", help="play an animation track to an image sequence")
    p.add_argument("--scene", required=True)
    p.add_argument("--track", required=True, help="animation track JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_animate)

    p = sub.add_parser("optimize", help="fit head appearance to guidance imagery")
    p.add_argument("--scene", required=True)
    p.add_argument("--guidance", required=True, help="guidance set directory")
    p.add_argument("--out", required=True, help="output splat file")
    p.add_argument("--iterations", type=int, help="override configured iteration count")
    p.add_argument("--seed", type=int, required=True, help="run seed (reproducibility)")
    p.add_argument("--history", help="write loss history CSV here")
    p.add_argument("--snapshot-dir", help="periodic cloud snapshots directory")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("align", help="solve head-to-background alignment from a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--out", help="write the 4x4 transform here instead of stdout")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("label-person", help="flag person Gaussians by multi-view mask voting")
    p.add_argument("--cloud", required=True, help="splat file")
    p.add_argument("--cameras", required=True, help="cameras.json with view ids")
    p.add_argument("--masks-dir", required=True, help="directory of <view_id>.png masks")
    p.add_argument("--out-labels", required=True, help="sidecar label file to write")
    p.add_argument("--out-cloud", help="write the cloud with flagged points removed")
    p.add_argument("--report", help="removal coverage CSV")
    p.add_argument("--tau", type=float, default=0.6, help="inlier vote threshold")
    p.add_argument("--min-views", type=int, default=1)
    p.add_argument("--depth-tolerance", type=float, default=0.05, help="meters")
    p.add_argument("--dilation", type=int, default=3, help="mask dilation radius, pixels")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_label_person)

    p = sub.add_parser("compose", help="merge a head cloud into a background scene")
    p.add_argument("--head", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--transform", help="4x4 alignment file (default identity)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("convert", help="asset conversion utilities")
    conv = p.add_subparsers(dest="converter", required=True)
    c = conv.add_parser("synth-scene", help="generate a synthetic demo scene bundle")
    c.add_argument("--out-dir", required=True)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--vertices", type=int, default=82)
    c.add_argument("--joints", type=int, default=4)
    c.add_argument("--shape-dims", type=int, default=6)
    c.add_argument("--expression-dims", type=int, default=8)
    c.add_argument("--per-triangle", type=int, default=1)
    c.add_argument("--size", type=int, default=128, help="camera image size")
    c.set_defaults(func=_cmd_convert_synth_scene)
    c = conv.add_parser("splat", help="normalize a splat file through load + save")
    c.add_argument("--in", dest="infile", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_convert_splat)

    p = sub.add_parser("serve", help="start the live reenactment endpoint")
    p.add_argument("--scene", required=True)
    p.add_argument("--bind", default="127.0.0.1:8787")
    p.add_argument("--fps-cap", type=float, default=30.0)
    p.add_argument("--format", choices=("raw", "png"), default="png")
    p.add_argument("--ui", help="serve this directory as the browser panel")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("selftest", help="run the built-in verification suites")
    p.add_argument("--quick", action="store_true", help="skip the throughput benchmark")
    p.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"parse error: missing input file: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InvalidInputError, InvariantError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
