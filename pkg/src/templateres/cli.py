"""Command-line driver for the registration/resolution pipeline.

Subcommands:

* ``register``     groupwise-register a stack (IDX or field files) and
                   persist template, registered images and transforms
* ``resolve``      run the bandwidth sweep on a registered stack
* ``visualize``    draw the bar overlay and a heatmap for a field
* ``model-check``  closed-form 1d diagnostics plus an end-to-end check
                   that the sweep recovers a known shift scale
* ``synth3d``      generate a randomly perturbed 3d phantom stack

Every subcommand that writes files also writes a ``manifest.txt`` with
the resolved parameters, input hashes, seed and tool version; re-running
with the same manifest reproduces all outputs byte for byte. Exit codes:
0 success, 2 usage error, 3 file-format error, 4 resolution sweep hit the
bandwidth cap (outputs are still written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import struct
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FormatError, InvalidInputError, TemplateResError
from .grid import ImageGrid, ImageStack
from .io import (
    IDX_IMAGE_MAGIC,
    load_field,
    load_idx_images,
    load_idx_labels,
    save_field,
)
from .model import (
    EdgeSampleSpec,
    edge_max_diff,
    point_mass_max_diff_approx,
    point_mass_max_diff_exact,
    sample_edges,
)
from .registration import RegistrationConfig, Transform, groupwise_register, warp
from .resolution import ResolutionConfig, resolution_measure, threshold_value
from .smoothing import smooth_array
from .viz import SliceSpec, build_overlay, render_heatmap, render_overlay_svg

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_CAPPED = 4


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, params: dict, inputs) -> None:
    lines = [f"command: {command}", f"version: {__version__}"]
    for key in sorted(params):
        lines.append(f"{key}: {params[key]}")
    for path in inputs:
        lines.append(f"input: {path} sha256:{_sha256(Path(path))}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _looks_like_idx_images(path: Path) -> bool:
    try:
        with open(path, "rb") as handle:
            head = handle.read(4)
    except OSError:
        return False
    return head == struct.pack(">I", IDX_IMAGE_MAGIC)


def _load_input_stack(args, parser) -> ImageStack:
    paths = [Path(p) for p in args.input]
    if len(paths) == 1 and _looks_like_idx_images(paths[0]):
        if args.digit is not None:
            if args.labels is None:
                parser.error("--digit requires --labels")
            labels = load_idx_labels(args.labels)
            stack = load_idx_images(paths[0])
            wanted = np.flatnonzero(labels[: len(stack)] == args.digit)[: args.limit]
            if wanted.size == 0:
                raise InvalidInputError(f"no images with digit {args.digit}")
            return ImageStack(stack.data[wanted])
        return load_idx_images(paths[0], count_limit=args.limit)
    if args.digit is not None:
        parser.error("--digit only applies to IDX inputs")
    grids = [load_field(p)[0] for p in paths[: args.limit]]
    return ImageStack.from_grids(grids)


def _registered_paths(directory: Path) -> list[Path]:
    paths = sorted(directory.glob("registered_*.raw"))
    if not paths:
        raise InvalidInputError(f"no registered_*.raw files in {directory}")
    return paths


def _load_registered_stack(directory: Path) -> ImageStack:
    return ImageStack.from_grids(load_field(p)[0] for p in _registered_paths(directory))


def _parse_slice(text: str | None) -> SliceSpec | None:
    if text is None:
        return None
    try:
        axis, index = text.split(":")
        return SliceSpec(axis=int(axis), index=int(index))
    except ValueError as exc:
        raise InvalidInputError(f"--slice expects AXIS:INDEX, got {text!r}") from exc


def _transform_record(index: int, t: Transform, scale: float) -> str:
    record = {
        "index": index,
        "kind": t.kind,
        "matrix": t.matrix.tolist(),
        "translation": t.translation.tolist(),
        "angles": None if t.angles is None else t.angles.tolist(),
        "intensity_scale": scale,
    }
    return json.dumps(record, sort_keys=True)


# --- subcommands ------------------------------------------------------------


def cmd_register(args, parser) -> int:
    stack = _load_input_stack(args, parser)
    cfg = RegistrationConfig(
        transform_kind=args.transform,
        norm=args.norm,
        lam=args.lam,
        outer_iterations=args.iters,
        fit_intensity_scale=args.fit_intensity_scale,
        seed=args.seed,
        max_workers=args.threads,
    )
    result = groupwise_register(stack, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(result.template, out / "template.raw", label="template")
    for i in range(len(result.registered)):
        save_field(result.registered[i], out / f"registered_{i:03d}.raw", label="image")
    lines = [
        _transform_record(i, t, float(result.intensity_scales[i]))
        for i, t in enumerate(result.transforms)
    ]
    (out / "transforms.txt").write_text("\n".join(lines) + "\n")

    trace_lines = []
    for level, trace in enumerate(result.coarse_energy_traces):
        trace_lines.append(f"# level {level} (coarse)")
        trace_lines.extend(repr(e) for e in trace)
    trace_lines.append("# final level")
    trace_lines.extend(repr(e) for e in result.energy_trace)
    for level, outer, image in result.freeze_events:
        trace_lines.append(f"# frozen level={level} iteration={outer} image={image}")
    (out / "energy_trace.txt").write_text("\n".join(trace_lines) + "\n")

    params = {
        "digit": args.digit,
        "fit_intensity_scale": args.fit_intensity_scale,
        "iters": args.iters,
        "lambda": args.lam,
        "limit": args.limit,
        "norm": args.norm,
        "out": args.out,
        "seed": args.seed,
        "transform": args.transform,
    }
    inputs = list(args.input) + ([args.labels] if args.labels else [])
    _write_manifest(out, "register", params, inputs)

    print(f"registered {len(stack)} images ({args.transform}, {args.norm})")
    print(f"final energy: {result.energy_trace[-1]:.6g} "
          f"after {len(result.energy_trace) - 1} outer iterations")
    if result.freeze_events:
        print(f"line-search freezes: {len(result.freeze_events)}")
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_resolve(args, parser) -> int:
    directory = Path(args.registered)
    stack = _load_registered_stack(directory)
    cfg = ResolutionConfig(
        eta=args.eta, p0=args.p0, p1=args.p1, step=args.step, sigma_cap=args.sigma_cap
    )
    field = resolution_measure(stack, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(field.sigma_star, out / "sigma_star.raw", label="sigma_star")
    heat_slice = SliceSpec(0, stack.image_shape[0] // 2) if stack.dim == 3 else None
    (out / "sigma_star.ppm").write_bytes(render_heatmap(field.sigma_star, heat_slice))

    params = {
        "eta": args.eta,
        "out": args.out,
        "p0": args.p0,
        "p1": args.p1,
        "registered": args.registered,
        "sigma_cap": args.sigma_cap,
        "step": args.step,
    }
    _write_manifest(out, "resolve", params, _registered_paths(directory))

    values = field.sigma_star.data
    positive = values[values > 0]
    mean_pos = float(positive.mean()) if positive.size else 0.0
    print(f"quantile-range target: {threshold_value(cfg):.6g}")
    print(f"max sigma*: {float(values.max()):.6g} px")
    print(f"mean sigma* over {positive.size} positive pixels: {mean_pos:.6g} px")
    print(f"iterations: {field.iterations_used}, capped pixels: {field.capped_pixels}")

    if args.sensitivity:
        for p0_alt, p1_alt in ((0.15, 0.85), (0.05, 0.95)):
            alt = resolution_measure(
                stack,
                ResolutionConfig(eta=args.eta, p0=p0_alt, p1=p1_alt,
                                 step=args.step, sigma_cap=args.sigma_cap),
            )
            alt_vals = alt.sigma_star.data
            alt_pos = alt_vals[alt_vals > 0]
            alt_mean = float(alt_pos.mean()) if alt_pos.size else 0.0
            print(f"sensitivity (p0={p0_alt}, p1={p1_alt}): "
                  f"max {float(alt_vals.max()):.6g}, mean+ {alt_mean:.6g}")

    if field.capped:
        print("warning: bandwidth cap reached before all pixels settled",
              file=sys.stderr)
        return EXIT_CAPPED
    return EXIT_OK


def cmd_visualize(args, parser) -> int:
    template, _ = load_field(args.template)
    sigma_star, _ = load_field(args.sigma_star)
    slice_spec = _parse_slice(args.slice)
    overlay = build_overlay(
        template,
        sigma_star,
        sigma_g=args.sigma_g,
        eps_grad=args.eps_grad,
        stride=args.stride,
        slice_spec=slice_spec,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    svg = render_overlay_svg(template, overlay)
    (out / "overlay.svg").write_bytes(svg)
    (out / "sigma_star_heatmap.ppm").write_bytes(render_heatmap(sigma_star, slice_spec))

    params = {
        "eps_grad": args.eps_grad,
        "out": args.out,
        "sigma_g": args.sigma_g,
        "sigma_star": args.sigma_star,
        "slice": args.slice,
        "stride": args.stride,
        "template": args.template,
    }
    _write_manifest(out, "visualize", params, [args.template, args.sigma_star])
    print(f"{len(overlay.bars)} bars drawn; outputs in {out}")
    return EXIT_OK


def cmd_model_check(args, parser) -> int:
    print("shifted-edge theory: peak difference after smoothing")
    for ratio in (0.5, 1.0, 2.0, 4.0):
        value = edge_max_diff(ratio, 1.0)
        note = "  <- matched smoothing (sigma = tau)" if ratio == 1.0 else ""
        print(f"  tau/sigma = {ratio:<4g} max difference = {value:.4f}{note}")
    print("shifted point masses: rescaled peak difference, exact vs linearized")
    for ratio in (5.0, 10.0, 20.0):
        exact = point_mass_max_diff_exact(1.0, ratio)
        approx = point_mass_max_diff_approx(1.0, ratio)
        rel = abs(exact - approx) / exact
        print(f"  sigma/tau = {ratio:<4g} exact = {exact:.6f} "
              f"linearized = {approx:.6f} rel. err = {rel:.2%}")

    if args.tau == 0:
        stack = sample_edges(EdgeSampleSpec(n=args.n, tau=0.0, seed=args.seed))
        field = resolution_measure(
            stack, ResolutionConfig(eta=1.0, p0=args.p0, p1=args.p1, step=args.step)
        )
        print(f"tau = 0: all edges identical, max sigma* = "
              f"{float(field.sigma_star.data.max()):.6g}")
        return EXIT_OK

    spec = EdgeSampleSpec(n=args.n, tau=args.tau, seed=args.seed)
    stack = sample_edges(spec)
    cfg = ResolutionConfig(eta=1.0, p0=args.p0, p1=args.p1, step=args.step)
    field = resolution_measure(stack, cfg)
    values = field.sigma_star.data
    center = spec.extent // 2
    ratio = float(values[center]) / args.tau
    print(f"edge sample: n = {args.n}, shift sd = {args.tau} px, seed = {args.seed}")
    print(f"sigma* at the sample center: {float(values[center]):.6g} px "
          f"(center / tau = {ratio:.3f})")
    print(f"pixels needing smoothing: {int(np.count_nonzero(values))}, "
          f"max sigma*: {float(values.max()):.6g} px, "
          f"iterations: {field.iterations_used}")
    return EXIT_OK


def _phantom_volume(size: int) -> np.ndarray:
    """Ellipsoid shell with two interior cavities, mildly smoothed."""
    coords = np.indices((size, size, size), dtype=np.float64)
    center = (size - 1) / 2.0
    radii = np.array([0.42, 0.36, 0.30]) * size
    normalized = (coords - center) / radii[:, None, None, None]
    r = np.sqrt((normalized**2).sum(axis=0))
    volume = np.where(r <= 0.95, 0.9, 0.0)
    for offset, cavity_r in (((0.16, 0.10, 0.0), 0.10), ((-0.14, -0.12, 0.06), 0.08)):
        delta = coords - (center + np.array(offset) * size)[:, None, None, None]
        dist = np.sqrt((delta**2).sum(axis=0))
        volume[dist <= cavity_r * size] = 0.0
    volume[r <= 0.55] = np.maximum(volume[r <= 0.55] - 0.6, 0.0)
    return smooth_array(volume, 0.7)


def cmd_synth3d(args, parser) -> int:
    base = _phantom_volume(args.size)
    rng = np.random.Generator(np.random.Philox(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    radius = args.size / 2.0
    for i in range(args.n):
        linear = rng.normal(0.0, args.perturb / radius, size=(3, 3))
        shift = rng.normal(0.0, args.perturb, size=3)
        if args.perturb == 0:
            volume = ImageGrid(base)
        else:
            t = Transform.affine(np.eye(3) + linear, shift)
            volume = warp(ImageGrid(base), t)
        save_field(volume, out / f"registered_{i:03d}.raw", label="image")

    params = {
        "n": args.n,
        "out": args.out,
        "perturb": args.perturb,
        "seed": args.seed,
        "size": args.size,
    }
    _write_manifest(out, "synth3d", params, [])
    print(f"wrote {args.n} phantom volumes of shape "
          f"({args.size}, {args.size}, {args.size}) to {out}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="templateres",
        description="Quantify and visualize the local resolution of a "
                    "template built by groupwise image registration.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")
    parsers = {}

    p = sub.add_parser("register", help="groupwise-register an image stack")
    p.add_argument("--input", nargs="+", required=True,
                   help="IDX image file or a list of field files")
    p.add_argument("--labels", help="IDX label file (needed with --digit)")
    p.add_argument("--digit", type=int, help="keep only images with this label")
    p.add_argument("--limit", type=int, default=100,
                   help="use at most this many images (default 100)")
    p.add_argument("--transform", choices=("affine", "rigid"), default="affine")
    p.add_argument("--norm", choices=("l2", "l1"), default="l2")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4,
                   help="regularization weight (default 1e-4)")
    p.add_argument("--iters", type=int, default=50,
                   help="outer iterations per pyramid level (default 50)")
    p.add_argument("--fit-intensity-scale", action="store_true",
                   help="fit one intensity factor per image")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for per-image updates (results are "
                        "identical regardless)")
    p.add_argument("--out", required=True)
    parsers["register"] = p

    p = sub.add_parser("resolve", help="compute per-pixel resolution bandwidths")
    p.add_argument("--registered", required=True,
                   help="directory with registered_*.raw field files")
    p.add_argument("--eta", type=float, default=0.6,
                   help="effective edge height (default 0.6, suited to [0,1] "
                        "digit images)")
    p.add_argument("--p0", type=float, default=0.1)
    p.add_argument("--p1", type=float, default=0.9)
    p.add_argument("--step", type=float, default=0.25)
    p.add_argument("--sigma-cap", type=float, default=None,
                   help="bandwidth cap (default: twice the grid extent)")
    p.add_argument("--sensitivity", action="store_true",
                   help="also report results for nearby quantile ranges")
    p.add_argument("--out", required=True)
    parsers["resolve"] = p

    p = sub.add_parser("visualize", help="render bar overlay and heatmap")
    p.add_argument("--template", required=True)
    p.add_argument("--sigma-star", required=True)
    p.add_argument("--slice", default=None, help="AXIS:INDEX plane for 3d fields")
    p.add_argument("--stride", type=int, default=None,
                   help="bar spacing in pixels (default 2 for 2d, 3 for 3d)")
    p.add_argument("--eps-grad", type=float, default=None,
                   help="gradient cutoff (default 1e-3 of intensity range)")
    p.add_argument("--sigma-g", type=float, default=1.0,
                   help="gradient estimation bandwidth")
    p.add_argument("--out", required=True)
    parsers["visualize"] = p

    p = sub.add_parser("model-check",
                       help="closed-form diagnostics and sweep self-check")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--tau", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p0", type=float, default=0.1)
    p.add_argument("--p1", type=float, default=0.9)
    p.add_argument("--step", type=float, default=0.25)
    parsers["model-check"] = p

    p = sub.add_parser("synth3d", help="generate a perturbed 3d phantom stack")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--perturb", type=float, default=0.5,
                   help="perturbation scale in pixels (0 gives identical copies)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    parsers["synth3d"] = p

    for name, sp in parsers.items():
        sp.add_argument("--config", default=None,
                        help="key: value file with defaults; explicit flags win")
    return parser, parsers


def _apply_config_file(subparser: argparse.ArgumentParser, path: str) -> None:
    text = Path(path).read_text()
    raw = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" in line:
            key, value = line.split(":", 1)
        elif "=" in line:
            key, value = line.split("=", 1)
        else:
            raise FormatError(f"{path}: malformed config line {line!r}")
        raw[key.strip().replace("-", "_")] = value.strip()

    defaults = {}
    for action in subparser._actions:
        if action.dest in raw:
            value = raw[action.dest]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[action.dest] = value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                defaults[action.dest] = action.type(value)
            else:
                defaults[action.dest] = value
    unknown = set(raw) - set(defaults)
    if unknown:
        raise InvalidInputError(f"{path}: unknown config keys {sorted(unknown)}")
    subparser.set_defaults(**defaults)


_HANDLERS = {
    "register": cmd_register,
    "resolve": cmd_resolve,
    "visualize": cmd_visualize,
    "model-check": cmd_model_check,
    "synth3d": cmd_synth3d,
}


def main(argv=None) -> int:
    parser, parsers = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if getattr(args, "config", None):
            _apply_config_file(parsers[args.command], args.config)
            args = parser.parse_args(argv)
        return _HANDLERS[args.command](args, parsers[args.command])
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TemplateResError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
