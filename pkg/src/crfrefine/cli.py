"""``crfrefine`` command line: refine, sweep, compare, eval and gen-fixture.

Exit codes: 0 success, 2 invalid flags or parameters, 3 file input/output
problems, 4 numerical failure.  Every written artefact gets a
``<name>.manifest.json`` sidecar holding the command, its flags and the
resolved parameters, enough to run it again.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .core import CrfParams, LabelMap, MODEL_KINDS, validate_params
from .evaluation import evaluate, sweep_report
from .fixtures import FIXTURE_KINDS, gen_fixture
from .inference import run_inference
from .raster_io import (
    CorruptRasterError,
    PaletteMismatchError,
    RasterFormatError,
    load_image,
    load_labels,
    resolve_palette,
    save_image,
    save_labels,
    write_json,
    write_report,
)
from .unary import unary_from_labels

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
DEFAULT_P_LIST = "0.70,0.80,0.90,0.95"

_DEFAULTS = CrfParams()


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _exit_codes(fn):
    """Translate library exceptions into the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, SystemExit):
            raise
        except (OSError, RasterFormatError, CorruptRasterError, PaletteMismatchError) as exc:
            _fail(EXIT_IO, str(exc))
        except (FloatingPointError, ArithmeticError) as exc:
            _fail(EXIT_NUMERIC, str(exc))
        except (ValueError, TypeError) as exc:
            _fail(EXIT_USAGE, str(exc))

    return wrapper


def _manifest(path: Path, command: str, flags: dict, **extra):
    payload = {"command": command, "flags": flags, "version": __version__}
    payload.update(extra)
    write_json(payload, Path(f"{path}.manifest.json"))


def _clean_flags(flags: dict) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()}


def model_options(fn):
    """Flags shared by every inference command; they mirror :class:`CrfParams`."""
    options = [
        click.option("--image", "image_path", required=True, type=click.Path(path_type=Path),
                     help="Reference image PNG."),
        click.option("--labels", "labels_path", required=True, type=click.Path(path_type=Path),
                     help="Initial colour-coded label PNG."),
        click.option("--palette", required=True, help="city_binary, potsdam, or a 'name R G B' file."),
        click.option("--iters", type=int, default=_DEFAULTS.iterations, show_default=True),
        click.option("--model", type=click.Choice(MODEL_KINDS), default=_DEFAULTS.model_kind, show_default=True),
        click.option("--theta-alpha", type=float, default=_DEFAULTS.theta_alpha, show_default=True),
        click.option("--theta-beta", type=float, default=_DEFAULTS.theta_beta, show_default=True),
        click.option("--theta-gamma", type=float, default=_DEFAULTS.theta_gamma, show_default=True),
        click.option("--w-app", type=float, default=_DEFAULTS.w_appearance, show_default=True),
        click.option("--w-sm", type=float, default=_DEFAULTS.w_smoothness, show_default=True),
        click.option("--w-grid", type=float, default=_DEFAULTS.w_grid, show_default=True),
        click.option("--damping", type=float, default=_DEFAULTS.damping, show_default=True,
                     help="Step size in (0, 1]; 1 means plain updates."),
        click.option("--early-exit/--no-early-exit", default=_DEFAULTS.early_exit, show_default=True),
        click.option("--gt", "gt_path", type=click.Path(path_type=Path), default=None,
                     help="Ground-truth label PNG for metrics."),
        click.option("--threads", type=click.IntRange(min=1), default=None,
                     help="Worker threads (default: all cores). 1 is bitwise deterministic."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _params(opts: dict, p: float, model: str | None = None) -> CrfParams:
    return CrfParams(
        p_label_confidence=p,
        theta_alpha=opts["theta_alpha"],
        theta_beta=opts["theta_beta"],
        theta_gamma=opts["theta_gamma"],
        w_appearance=opts["w_app"],
        w_smoothness=opts["w_sm"],
        iterations=opts["iters"],
        model_kind=model or opts["model"],
        w_grid=opts["w_grid"],
        damping=opts["damping"],
        early_exit=opts["early_exit"],
    )


def _load_inputs(opts: dict):
    palette = resolve_palette(opts["palette"])
    image = load_image(opts["image_path"])
    labels = load_labels(opts["labels_path"], palette)
    if (image.height, image.width) != labels.shape:
        raise ValueError(
            f"size mismatch: image is {image.height}x{image.width}, labels are {labels.shape[0]}x{labels.shape[1]}"
        )
    truth = None
    if opts["gt_path"] is not None:
        truth = load_labels(opts["gt_path"], palette)
        if truth.shape != labels.shape:
            raise ValueError(f"size mismatch: ground truth {truth.shape} vs labels {labels.shape}")
    return palette, image, labels, truth


def _threads(value):
    return value if value is not None else (os.cpu_count() or 1)


def _refine(image, labels: LabelMap, params: CrfParams, threads: int):
    validate_params(params, labels.num_classes)
    unary = unary_from_labels(labels, params.p_label_confidence)
    _, refined, _ = run_inference(unary, image, params, threads=threads)
    return refined


@click.group()
@click.version_option(__version__, prog_name="crfrefine")
def main():
    """Refine segmentation label maps with a fully connected CRF."""


@main.command()
@model_options
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Refined label PNG.")
@click.option("--p", "p", type=float, default=_DEFAULTS.p_label_confidence, show_default=True,
              help="Confidence given to each observed label.")
@click.option("--metrics", type=click.Path(path_type=Path), default=None,
              help="EvalReport JSON (needs --gt).")
@_exit_codes
def refine(**opts):
    """Refine one label map."""
    if opts["metrics"] is not None and opts["gt_path"] is None:
        raise click.UsageError("--metrics needs --gt")
    palette, image, labels, truth = _load_inputs(opts)
    params = _params(opts, opts["p"])
    refined = _refine(image, labels, params, _threads(opts["threads"]))
    save_labels(refined, palette, opts["out"])
    flags = _clean_flags(opts)
    _manifest(opts["out"], "refine", flags, params=params.as_dict())
    if truth is not None:
        metrics = opts["metrics"] or opts["out"].with_suffix(".metrics.json")
        write_report(evaluate(refined, truth), metrics)
        _manifest(metrics, "refine", flags, params=params.as_dict())


def _parse_p_list(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise click.BadParameter(f"not a comma-separated list of numbers: {text!r}", param_hint="--p-list")
    if not values:
        raise click.BadParameter("empty list", param_hint="--p-list")
    if len(set(values)) != len(values):
        raise click.BadParameter(f"duplicate p values in {text!r}", param_hint="--p-list")
    return values


@main.command()
@model_options
@click.option("--p-list", default=DEFAULT_P_LIST, show_default=True, help="Comma-separated confidences.")
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@_exit_codes
def sweep(**opts):
    """Refine at several label confidences and tabulate accuracy against p."""
    if opts["gt_path"] is None:
        raise click.UsageError("sweep needs --gt")
    ps = _parse_p_list(opts["p_list"])
    palette, image, labels, truth = _load_inputs(opts)
    for p in ps:
        validate_params(_params(opts, p), labels.num_classes)
    out_dir = opts["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    flags = _clean_flags(opts)
    reports = []
    for p in sorted(ps):
        params = _params(opts, p)
        refined = _refine(image, labels, params, _threads(opts["threads"]))
        out = out_dir / f"refined_p{p:.4g}.png"
        save_labels(refined, palette, out)
        _manifest(out, "sweep", flags, params=params.as_dict())
        reports.append((p, evaluate(refined, truth)))
    summary = sweep_report(reports)
    write_report(summary, out_dir / "sweep.json")
    _manifest(out_dir / "sweep.json", "sweep", flags)
    if not summary.accuracy_non_decreasing:
        click.echo("note: accuracy is not non-decreasing in p on this input", err=True)


@main.command()
@model_options
@click.option("--p", "p", type=float, default=_DEFAULTS.p_label_confidence, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@_exit_codes
def compare(**opts):
    """Run the dense and the grid model on the same unary and compare them."""
    if opts["gt_path"] is None:
        raise click.UsageError("compare needs --gt")
    palette, image, labels, truth = _load_inputs(opts)
    out_dir = opts["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    flags = _clean_flags(opts)
    result = {}
    for kind in MODEL_KINDS:
        params = _params(opts, opts["p"], model=kind)
        refined = _refine(image, labels, params, _threads(opts["threads"]))
        out = out_dir / f"{kind}.png"
        save_labels(refined, palette, out)
        _manifest(out, "compare", flags, params=params.as_dict())
        result[kind] = evaluate(refined, truth).as_dict()
    result["input"] = evaluate(labels, truth).as_dict()
    result["accuracy_delta"] = result["dense"]["pixel_accuracy"] - result["grid"]["pixel_accuracy"]
    write_json(result, out_dir / "compare.json")
    _manifest(out_dir / "compare.json", "compare", flags)


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(path_type=Path))
@click.option("--gt", "gt_path", required=True, type=click.Path(path_type=Path))
@click.option("--palette", required=True)
@click.option("--metrics", type=click.Path(path_type=Path), default=None,
              help="Write the report here instead of standard output.")
@_exit_codes
def eval_cmd(pred_path, gt_path, palette, metrics):
    """Score a label map against ground truth."""
    pal = resolve_palette(palette)
    report = evaluate(load_labels(pred_path, pal), load_labels(gt_path, pal))
    if metrics is None:
        click.echo(json.dumps(report.as_dict(), indent=2, sort_keys=True))
        return
    write_report(report, metrics)
    _manifest(metrics, "eval", {"pred": str(pred_path), "gt": str(gt_path), "palette": palette,
                                "metrics": str(metrics)})


def _parse_size(ctx, param, value):
    try:
        h, w = (int(v) for v in value.lower().split("x"))
    except ValueError:
        raise click.BadParameter(f"expected HxW, got {value!r}")
    return h, w


@main.command("gen-fixture")
@click.option("--kind", required=True, type=click.Choice(FIXTURE_KINDS))
@click.option("--size", required=True, callback=_parse_size, help="HxW, e.g. 128x128.")
@click.option("--noise", type=float, default=0.1, show_default=True, help="Fraction of labels flipped.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@_exit_codes
def gen_fixture_cmd(kind, size, noise, seed, out_dir):
    """Write image.png, clean.png and noisy.png for a synthetic scene."""
    h, w = size
    image, clean, noisy = gen_fixture(kind, h, w, noise, seed)
    palette = resolve_palette("city_binary" if kind == "binary_blobs" else "potsdam")
    out_dir.mkdir(parents=True, exist_ok=True)
    flags = {"kind": kind, "size": f"{h}x{w}", "noise": noise, "seed": seed, "out_dir": str(out_dir)}
    save_image(image, out_dir / "image.png")
    save_labels(clean, palette, out_dir / "clean.png")
    save_labels(noisy, palette, out_dir / "noisy.png")
    for name in ("image.png", "clean.png", "noisy.png"):
        _manifest(out_dir / name, "gen-fixture", flags, seed=seed)


if __name__ == "__main__":
    main()
