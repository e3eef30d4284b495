"""Command-line interface for perftensor."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, NoReturn

import numpy as np

from .complete import FitError, LossRegime, complete_tensor
from .config import FitConfig, get_default_workers, get_log_level, load_fit_config
from .constants import PREDICTION_COLUMN, REAL_FORMAT
from .infer import PerformanceModel, predict_batch, with_extrapolation
from .kernels import (
    KernelKind,
    SyntheticKernelSpec,
    get_available_kernels,
    get_kernel_description,
    get_kernel_preset,
    midpoint_observations,
    synthesize_observations,
)
from .metrics import DEFAULT_METRICS, evaluate_metrics, mlogq, parse_metric_list
from .persist import ModelFile, load_model, save_model
from .space import Grid, build_grid, load_space, parse_space_line
from .tensor import bin_observations, density, load_observations, read_configurations
from .tune import DEFAULT_REGS, select_model


if TYPE_CHECKING:
    from .space import ParameterSpec
    from .tensor import ObservationSet


__all__ = ["cli", "main"]

logger = logging.getLogger(__name__)


def _print_examples() -> None:
    """Print usage examples."""
    print(
        """
Performance Modeling with Tensor Completion
===========================================

Usage:
  perftensor <command> [options]

Examples:
  # Generate noise-free GEMM timings on a dense 8x8x8 grid
  perftensor synth --preset gemm --space gemm.space --midpoints --out gemm.csv

  # Sample 4096 noisy configurations log-uniformly
  perftensor synth --kernel gemm-analytic --noise 0.01 --samples 4096 \\
      --param m,log,32,4096,8 --param n,log,32,4096,8 --param k,log,32,4096,8 \\
      --out samples.csv

  # Fit a rank-4 log least-squares model
  perftensor train --space gemm.space --data samples.csv --rank 4 --loss ls-log \\
      --out gemm.model.json

  # Fit a positive model that extrapolates along m
  perftensor train --space gemm.space --data samples.csv --rank 1 --loss logq2 \\
      --extrapolate m --out gemm-extrap.model.json

  # Predict, evaluate and inspect
  perftensor predict --model gemm.model.json --input queries.csv --out predictions.csv
  perftensor evaluate --model gemm.model.json --data test.csv --metrics mlogq,mape
  perftensor info --model gemm.model.json

  # Choose rank and regularization on a 20% hold-out split
  perftensor tune --space gemm.space --data samples.csv --ranks 1,2,4,8 --loss ls-log

Space files:
  One parameter per line, in mode order:
    name,lin,lower,upper,cells
    name,log,lower,upper,cells
    name,cat,label1|label2|label3
  Lines starting with '#' are comments.

MLogQ (mean absolute log-ratio of prediction to measurement) is the
headline error metric.
"""
    )


def _add_fit_arguments(parser: argparse.ArgumentParser) -> None:
    """Arguments shared by commands that fit models."""
    parser.add_argument("--space", required=True, help="Parameter-space definition file")
    parser.add_argument("--data", required=True, help="Observation CSV with a 'time' column")
    parser.add_argument(
        "--loss",
        required=True,
        choices=[r.value for r in LossRegime],
        help="Loss regime: ls-log (ALS on log-times) or logq2 (positive, log-ratio)",
    )
    parser.add_argument("--reg", type=float, help="Regularization (default: 1e-4)")
    parser.add_argument("--sweeps", type=int, help="Maximum sweeps (default: 100)")
    parser.add_argument("--tol", type=float, help="Relative objective-change tolerance")
    parser.add_argument("--seed", type=int, help="Random seed (default: 0)")
    parser.add_argument(
        "--workers",
        type=int,
        help="Worker threads for binning and row solves (default: $PERFTENSOR_WORKERS or 1)",
    )
    parser.add_argument("--config", metavar="FILE", help="JSON fit-config file")
    parser.add_argument("--progress", action="store_true", help="Show sweep progress bars")


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser."""
    parser = argparse.ArgumentParser(
        prog="perftensor",
        description="Model execution time over parameter spaces with tensor completion",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  perftensor train --space app.space --data runs.csv --rank 4 --loss ls-log --out app.model.json
  perftensor predict --model app.model.json --input queries.csv --out predictions.csv
  perftensor evaluate --model app.model.json --data test.csv --metrics mlogq,mape
        """,
    )
    parser.add_argument("--version", action="store_true", help="Show version and exit")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", metavar="command")

    train = sub.add_parser("train", help="Fit a model to observations")
    _add_fit_arguments(train)
    train.add_argument("--rank", type=int, required=True, help="CP rank")
    train.add_argument("--out", required=True, help="Output model file")
    train.add_argument(
        "--extrapolate",
        nargs="+",
        metavar="NAME",
        help="Numerical parameters to build extrapolation models for (logq2 only)",
    )

    predict = sub.add_parser("predict", help="Predict times for configurations")
    predict.add_argument("--model", required=True, help="Model file")
    predict.add_argument("--input", required=True, help="Configuration CSV (no time column)")
    predict.add_argument("--out", required=True, help="Output CSV")

    evaluate = sub.add_parser("evaluate", help="Score a model on observations")
    evaluate.add_argument("--model", required=True, help="Model file")
    evaluate.add_argument("--data", required=True, help="Observation CSV with a 'time' column")
    evaluate.add_argument(
        "--metrics",
        default=",".join(DEFAULT_METRICS),
        help="Comma-separated metrics: mape,mae,mse,smape,lgmape,mlogq,mlogq2",
    )
    evaluate.add_argument("--per-point", metavar="CSV", help="Write per-point errors to CSV")

    synth = sub.add_parser("synth", help="Generate synthetic observations")
    synth.add_argument("--list-kernels", action="store_true", help="List kernel presets")
    synth.add_argument("--preset", help="Kernel preset name")
    synth.add_argument("--kernel", choices=[k.value for k in KernelKind], help="Kernel")
    synth.add_argument("--space", help="Parameter-space file giving parameter ranges")
    synth.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="SPEC",
        help="Parameter range as a space-file line, e.g. m,log,32,4096,8 (repeatable)",
    )
    synth.add_argument("--samples", type=int, default=1000, help="Sample count (default: 1000)")
    synth.add_argument(
        "--midpoints", action="store_true", help="Time every cell midpoint instead of sampling"
    )
    synth.add_argument("--seed", type=int, help="Random seed")
    synth.add_argument("--noise", type=float, help="Multiplicative noise sigma")
    synth.add_argument("--delta", type=float, help="gemm-analytic flop cost")
    synth.add_argument("--beta", type=float, help="gemm-analytic bandwidth cost")
    synth.add_argument("--cache-size", type=float, help="gemm-analytic cache size H")
    synth.add_argument("--exponents", help="separable-power exponents, comma-separated")
    synth.add_argument("--coefficient", type=float, help="Leading coefficient")
    synth.add_argument("--split", type=float, help="piecewise-bilinear split level")
    synth.add_argument("--ratio", type=float, help="piecewise-bilinear upper-regime ratio")
    synth.add_argument("--offset", type=float, help="piecewise-bilinear upper-regime offset")
    synth.add_argument("--out", help="Output CSV")

    info = sub.add_parser("info", help="Describe a model file")
    info.add_argument("--model", required=True, help="Model file")

    tune = sub.add_parser("tune", help="Select rank and regularization on a hold-out split")
    _add_fit_arguments(tune)
    tune.add_argument("--ranks", default="1,2,4,8", help="Comma-separated CP ranks")
    tune.add_argument(
        "--regs",
        default=",".join(f"{r:g}" for r in DEFAULT_REGS),
        help="Comma-separated regularization values",
    )
    tune.add_argument(
        "--holdout", type=float, default=0.2, help="Validation fraction (default: 0.2)"
    )

    return parser


def _load_grid(path: str) -> Grid:
    return build_grid(load_space(path))


def _fit_config(parsed: argparse.Namespace, rank: int) -> FitConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = FitConfig(rank=rank, workers=get_default_workers())
    if parsed.config:
        cfg = load_fit_config(parsed.config, base=cfg)
    flags: dict[str, Any] = {
        "reg": parsed.reg,
        "max_sweeps": parsed.sweeps,
        "tol": parsed.tol,
        "seed": parsed.seed,
        "workers": parsed.workers,
    }
    overrides = {key: value for key, value in flags.items() if value is not None}
    if parsed.progress:
        overrides["progress"] = True
    return replace(cfg, **overrides)


def _format_real(value: float) -> str:
    return format(value, REAL_FORMAT)


def _cmd_train(parsed: argparse.Namespace) -> int:
    regime = LossRegime(parsed.loss)
    if parsed.extrapolate and regime is not LossRegime.LOG_RATIO:
        print("Error: extrapolation requires logq2", file=sys.stderr)
        return 1

    grid = _load_grid(parsed.space)
    modes: list[int] = []
    for name in parsed.extrapolate or []:
        if name not in grid.names:
            print(f"Error: unknown parameter '{name}' for --extrapolate", file=sys.stderr)
            return 1
        modes.append(grid.names.index(name))

    cfg = _fit_config(parsed, parsed.rank)
    obs = load_observations(parsed.data, grid)
    tensor = bin_observations(obs, grid, workers=cfg.workers)
    result = complete_tensor(tensor, cfg, regime)

    model = PerformanceModel(grid, result.model)
    if modes:
        model = with_extrapolation(model, modes)

    cells = result.model.elements(tensor.indices)
    fitted = np.exp(cells) if regime is LossRegime.LOG_LS else cells
    train_mlogq = mlogq(np.maximum(fitted, np.finfo(np.float64).tiny), tensor.values)

    out = save_model(
        parsed.out,
        ModelFile(
            model,
            density=density(tensor),
            reg=cfg.reg,
            objective=result.objective,
            sweeps=result.sweeps,
            observations=len(obs),
        ),
    )
    print(f"density {density(tensor):.6g}")
    print(f"objective {result.objective:.10g}")
    print(f"sweeps {result.sweeps}")
    print(f"train_mlogq {train_mlogq:.6g}")
    print(f"model {out}")
    return 0


def _cmd_predict(parsed: argparse.Namespace) -> int:
    model = load_model(parsed.model).model
    raw, frame = read_configurations(parsed.input, model.grid)
    configurations = frame.itertuples(index=False, name=None)
    preds, failed = predict_batch(model, configurations)

    out = raw.copy()
    out[PREDICTION_COLUMN] = [_format_real(v) if np.isfinite(v) else "NA" for v in preds]
    out.to_csv(Path(parsed.out).expanduser(), index=False)
    if failed:
        logger.warning("%d rows could not be predicted and are marked NA", failed)
    logger.info("Wrote %d predictions to %s", len(out), parsed.out)
    return 0


def _cmd_evaluate(parsed: argparse.Namespace) -> int:
    names = parse_metric_list(parsed.metrics)
    model = load_model(parsed.model).model
    obs = load_observations(parsed.data, model.grid)
    preds, failed = predict_batch(model, obs.configurations())
    ok = np.isfinite(preds)
    if not np.any(ok):
        print("Error: no configuration in the dataset can be predicted", file=sys.stderr)
        return 1
    if failed:
        logger.warning("Evaluating %d of %d configurations", int(ok.sum()), len(obs))

    report = evaluate_metrics(preds[ok], obs.times[ok], names)
    for line in report.lines():
        print(line)

    if parsed.per_point:
        per_point = obs.frame.loc[ok].reset_index(drop=True)
        per_point["truth"] = obs.times[ok]
        per_point["prediction"] = preds[ok]
        per_point["log_ratio"] = np.log(preds[ok] / obs.times[ok])
        per_point.to_csv(Path(parsed.per_point).expanduser(), index=False, float_format="%.17g")
        logger.info("Wrote per-point errors to %s", parsed.per_point)
    return 0


def _synth_specs(parsed: argparse.Namespace) -> list[ParameterSpec]:
    specs = load_space(parsed.space) if parsed.space else []
    specs.extend(parse_space_line(line) for line in parsed.param)
    if not specs:
        raise ValueError("synth needs parameter ranges from --space or --param")
    return specs


def _synth_kernel(parsed: argparse.Namespace) -> SyntheticKernelSpec:
    if parsed.preset:
        if parsed.preset not in get_available_kernels():
            raise ValueError(
                f"Kernel preset '{parsed.preset}' not found. "
                f"Available presets: {', '.join(get_available_kernels())}"
            )
        kernel = get_kernel_preset(parsed.preset)
    elif parsed.kernel:
        kernel = SyntheticKernelSpec(KernelKind(parsed.kernel))
    else:
        raise ValueError("synth needs --kernel or --preset")

    flags: dict[str, Any] = {
        "kernel": KernelKind(parsed.kernel) if parsed.kernel else None,
        "delta": parsed.delta,
        "beta": parsed.beta,
        "cache_size": parsed.cache_size,
        "coefficient": parsed.coefficient,
        "split": parsed.split,
        "ratio": parsed.ratio,
        "offset": parsed.offset,
        "noise_sigma": parsed.noise,
        "seed": parsed.seed,
    }
    if parsed.exponents:
        flags["exponents"] = tuple(float(a) for a in parsed.exponents.split(","))
    return replace(kernel, **{k: v for k, v in flags.items() if v is not None})


def _list_kernels() -> None:
    """List kernel presets with descriptions."""
    print("\nAvailable Kernel Presets:")
    print("-" * 60)
    for name in get_available_kernels():
        print(f"  {name}")
        print(f"    {get_kernel_description(name)}")
    print()


def _cmd_synth(parsed: argparse.Namespace) -> int:
    if parsed.list_kernels:
        _list_kernels()
        return 0
    if not parsed.out:
        print("Error: synth needs --out", file=sys.stderr)
        return 1

    specs = _synth_specs(parsed)
    kernel = _synth_kernel(parsed)
    obs: ObservationSet
    if parsed.midpoints:
        obs = midpoint_observations(build_grid(specs), kernel)
    else:
        obs = synthesize_observations(specs, kernel, parsed.samples)
    obs.to_frame().to_csv(Path(parsed.out).expanduser(), index=False, float_format="%.17g")
    print(f"Wrote {len(obs)} observations to {parsed.out}")
    return 0


def _cmd_info(parsed: argparse.Namespace) -> int:
    mf = load_model(parsed.model)
    model = mf.model

    def show(value: float | int | None, fmt: str = ".6g") -> str:
        return "unknown" if value is None else format(value, fmt)

    print(f"dims {'x'.join(map(str, model.grid.dims))}")
    print(f"rank {model.cp.rank}")
    print(f"regime {model.cp.regime.value}")
    print(f"density {show(mf.density)}")
    print(f"reg {show(mf.reg)}")
    print(f"objective {show(mf.objective, '.10g')}")
    print(f"sweeps {show(mf.sweeps, 'd')}")
    print(f"size {model.size}")
    for spec in model.grid.specs:
        if spec.is_numerical:
            bounds = f"[{spec.lower:g}, {spec.upper:g}]"
            print(f"param {spec.name} {spec.kind.value} {bounds} {spec.cells} cells")
        else:
            print(f"param {spec.name} cat {'|'.join(spec.categories)}")
    extrapolated = [model.grid.names[m] for m in model.extrapolation]
    print(f"extrapolation {','.join(extrapolated) if extrapolated else 'none'}")
    return 0


def _cmd_tune(parsed: argparse.Namespace) -> int:
    ranks = [int(r) for r in parsed.ranks.split(",") if r.strip()]
    regs = [float(r) for r in parsed.regs.split(",") if r.strip()]
    grid = _load_grid(parsed.space)
    obs = load_observations(parsed.data, grid)
    cfg = _fit_config(parsed, rank=max(1, min(ranks, default=1)))
    result = select_model(
        obs, grid, LossRegime(parsed.loss), cfg, ranks, regs, holdout=parsed.holdout
    )
    print(f"train {result.train_size} validation {result.validation_size}")
    print(f"{'rank':>6} {'reg':>10} {'mlogq':>12} {'sweeps':>7}")
    for entry in result.entries:
        print(f"{entry.rank:>6d} {entry.reg:>10.0e} {entry.mlogq:>12.6f} {entry.sweeps:>7d}")
    print(f"best rank {result.best.rank} reg {result.best.reg:g} mlogq {result.best.mlogq:.6f}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
    "info": _cmd_info,
    "tune": _cmd_tune,
}


def cli(args: list[str] | None = None) -> int:
    """Run the CLI with the given arguments.

    Args:
        args: Command line arguments (defaults to sys.argv[1:]).

    Returns:
        Exit code (0 for success, non-zero for errors).
    """
    parser = create_parser()
    parsed = parser.parse_args(args)

    try:
        level = get_log_level(parsed.verbose)
    except ValueError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")

    if parsed.version:
        from . import __version__

        print(f"perftensor {__version__}")
        return 0

    if parsed.command is None:
        _print_examples()
        return 0

    try:
        return _COMMANDS[parsed.command](parsed)
    except (ValueError, FitError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 1


def main() -> NoReturn:
    """Main entry point."""
    sys.exit(cli())


if __name__ == "__main__":
    main()
