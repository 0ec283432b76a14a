"""Command-line entry point: ``geoaniso <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime or numerical failure.
CSV goes to ``--out`` (or standard output); diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .bench import (
    AICRow,
    BinSummary,
    EstimateRecord,
    ScanPixel,
    aic_experiment,
    aic_win_fractions,
    benchmark,
    bin_summaries,
    sample_dense_configs,
    window_scan,
    write_rows,
)
from .covariance import AnisotropyParams, MaternSpec
from .errors import GeoanisoError
from .grids import GridDomain, grid_to_csv_text, read_grid_csv
from .likelihood import fit_ml
from .models import TrainingConfig, estimate, load, prepare_inputs, save, train
from .simulate import (
    validation_param_grid,
    generate_dataset,
    read_dataset,
    simulate_grf,
    training_param_grid,
    write_dataset,
)
from .variogram import variogram_map, write_varmap_csv

log = logging.getLogger("geoaniso")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def _output(path, binary=False):
    if path is None or path == "-":
        if binary:
            raise UsageError("--out is required for binary output")
        yield sys.stdout
    else:
        with open(path, "wb" if binary else "w", newline=None if binary else "") as fh:
            yield fh


def _csv_list(text: str, conv=str) -> list:
    return [conv(t.strip()) for t in text.split(",") if t.strip()]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    params = AnisotropyParams(args.alpha, args.lam, args.theta, args.sigma2)
    field = simulate_grf(GridDomain(args.width, args.height), params, MaternSpec(args.nu), args.seed)
    with _output(args.out) as fh:
        fh.write(grid_to_csv_text(field))


def cmd_make_dataset(args):
    grid = training_param_grid() if args.grid == "training" else validation_param_grid()
    configs = None if args.full_grid else grid.subsample(args.configs, args.seed)
    n_cfg = grid.size if configs is None else len(configs)
    domain = GridDomain(16, 16)
    manifest = {
        "grid": args.grid,
        "grid_description": grid.describe(),
        "subsample": None if args.full_grid else {"configs": n_cfg, "seed": args.seed},
        "fields_per_config": args.replicates,
        "base_seed": args.seed,
        "nu": args.nu,
    }
    if args.out is None:
        raise UsageError("--out is required for make-dataset")
    samples = generate_dataset(grid, domain, MaternSpec(args.nu), args.replicates, args.seed, configs)
    n = write_dataset(args.out, samples, domain, manifest)
    log.info("wrote %d records (%d configs x %d)", n, n_cfg, args.replicates)


def cmd_varmap(args):
    vmap = variogram_map(read_grid_csv(args.field), args.max_lag)
    with _output(args.out) as fh:
        write_varmap_csv(vmap, fh)


def cmd_train(args):
    if args.out is None:
        raise UsageError("--out is required for train")
    fields, labels, meta = read_dataset(args.dataset)
    t0 = time.perf_counter()
    X = prepare_inputs(args.kind, fields)
    log.info("prepared %s inputs %s in %.1fs", args.kind, X.shape, time.perf_counter() - t0)
    epochs = args.epochs if args.epochs is not None else (50 if args.kind == "nf" else 100)
    cfg = TrainingConfig(
        epochs=epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        augment=args.augment,
        seed=args.seed,
        validation_fraction=args.validation_fraction,
    )
    dataset_info = {k: meta[k] for k in ("grid", "grid_description", "subsample", "base_seed", "nu",
                                          "fields_per_config", "records") if k in meta}
    artifact = train(X, labels, args.kind, cfg, manifest={"dataset": dataset_info})
    save(artifact, args.out)
    log.info("saved %s model to %s (final loss %.5f)", args.kind, args.out,
             artifact.manifest["training"]["final_loss"])


def cmd_estimate(args):
    field = read_grid_csv(args.field)
    method = args.method.upper()
    header = "method,alpha,lambda,theta,sigma2,converged,out_of_domain\n"
    if method == "ML":
        r = fit_ml(field, MaternSpec(args.nu))
        p = r.params
        row = [method, repr(p.alpha), repr(p.lam), repr(p.theta), repr(p.sigma2), "1" if r.converged else "0", "0"]
    else:
        if args.model is None:
            raise UsageError(f"--model is required for method {method}")
        art = load(args.model)
        if art.kind != method.lower():
            raise UsageError(f"model file holds a {art.kind.upper()} network, not {method}")
        e = estimate(art, field)
        row = [method, repr(e.alpha), repr(e.lam), repr(e.theta), "NaN", "1", "1" if e.out_of_domain else "0"]
    with _output(args.out) as fh:
        fh.write(header + ",".join(row) + "\n")


def _artifacts(args, methods) -> dict:
    out = {}
    for m in methods:
        if m == "ML":
            continue
        path = getattr(args, f"{m.lower()}_model")
        if path is None:
            raise UsageError(f"--{m.lower()}-model is required for method {m}")
        out[m] = load(path)
    return out


def cmd_bench(args):
    methods = [m.upper() for m in _csv_list(args.methods)]
    artifacts = _artifacts(args, methods)
    configs = sample_dense_configs(args.configs, args.seed)
    records = benchmark(methods, configs, args.replicates, args.seed, artifacts,
                        spec=MaternSpec(args.nu), workers=args.threads)
    with _output(args.out) as fh:
        write_rows(fh, EstimateRecord, records, exclude=("wall_time",))
    if args.summary:
        write_rows(args.summary, BinSummary, bin_summaries(records))
    if args.timing_out:
        with open(args.timing_out, "w") as fh:
            fh.write("method,config_index,replicate,wall_time\n")
            for r in records:
                fh.write(f"{r.method},{r.config_index},{r.replicate},{r.wall_time!r}\n")


def cmd_aic(args):
    lambdas = _csv_list(args.lambdas, float)
    rows = aic_experiment(lambdas, args.replicates, args.seed, args.alpha, args.theta,
                          spec=MaternSpec(args.nu), workers=args.threads)
    with _output(args.out) as fh:
        write_rows(fh, AICRow, rows)
    for lam, frac in aic_win_fractions(rows).items():
        log.info("lambda=%g: anisotropic model preferred in %.1f%% of replicates", lam, 100 * frac)


def cmd_scan(args):
    raster = read_grid_csv(args.raster)
    method = args.method.upper()
    artifact = None
    if method != "ML":
        if args.model is None:
            raise UsageError(f"--model is required for method {method}")
        artifact = load(args.model)
    pixels = window_scan(raster, method, artifact, args.window, MaternSpec(args.nu),
                         nv_max_missing=args.nv_max_missing, workers=args.threads)
    with _output(args.out) as fh:
        write_rows(fh, ScanPixel, pixels)


def cmd_inspect_model(args):
    art = load(args.model)
    spec = art.spec
    shapes = spec.output_shapes()
    counts = spec.layer_param_counts()
    out = sys.stdout
    out.write(f"model: {art.kind.upper()}  input: [-, {', '.join(map(str, spec.input_shape))}]  ({art.input_kind})\n")
    out.write(f"{'layer':<8}{'type':<16}{'output shape':<22}{'filters':>8}{'kernel':>8}  {'activation':<11}{'parameters':>12}\n")
    for i, (layer, shp, n) in enumerate(zip(spec.layers, shapes, counts)):
        kind = {"conv2d": "2D convolution", "dense": "dense", "flatten": "flatten"}[layer.kind]
        shape_txt = "[-, " + ", ".join(map(str, shp)) + "]"
        filt = str(layer.filters) if layer.kind == "conv2d" else ""
        kern = f"{layer.kernel}x{layer.kernel}" if layer.kind == "conv2d" else ""
        act = "ReLU" if layer.activation == "relu" else ("linear" if layer.kind != "flatten" else "")
        out.write(f"{i + 1:<8}{kind:<16}{shape_txt:<22}{filt:>8}{kern:>8}  {act:<11}{n:>12,}\n")
    out.write(f"total trainable parameters: {sum(counts):,}\n")
    t = art.manifest.get("training", {})
    if t:
        out.write(f"trained: epochs={t.get('epochs')} seed={t.get('seed')} final_loss={t.get('final_loss')}\n")
    out.write("normalizer mean: " + json.dumps(list(art.normalizer.mean)) + "\n")
    out.write("normalizer std:  " + json.dumps(list(art.normalizer.std)) + "\n")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

RECORD_SCHEMA = ("records CSV columns: method, config_index, replicate, true_alpha, true_lambda, true_theta, "
                 "est_alpha, est_lambda, est_theta, est_sigma2 (NaN for networks), alpha_error (circular), "
                 "converged, out_of_domain")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker processes / BLAS threads (default 1)")
    common.add_argument("--out", default=None, help="output path (default: standard output for CSV)")
    common.add_argument("--format", choices=["csv"], default="csv", help="output format")
    common.add_argument("--nu", type=float, default=1.5, help="Matérn smoothness (default 1.5)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")

    p = _Parser(prog="geoaniso", description="Simulate anisotropic Matérn fields and estimate (alpha, lambda, theta).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate one field as a CSV grid",
                       description="Simulate a zero-mean field. Output: one CSV row per lattice row "
                                   "(y = 1 first), one column per x.")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--theta", type=float, required=True)
    s.add_argument("--sigma2", type=float, default=1.0)
    s.add_argument("--width", type=int, default=16)
    s.add_argument("--height", type=int, default=16)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("make-dataset", parents=[common], help="write a labeled binary dataset",
                       description="Binary file of little-endian float64 records (256 field values then "
                                   "alpha, lambda, theta) plus <out>.manifest.json.")
    s.add_argument("--grid", choices=["training", "validation"], default="training")
    s.add_argument("--configs", type=int, default=20000, help="seeded subsample size (default 20000)")
    s.add_argument("--full-grid", action="store_true", help="use every configuration of the grid")
    s.add_argument("--replicates", type=int, default=1, help="fields per configuration")
    s.set_defaults(func=cmd_make_dataset)

    s = sub.add_parser("varmap", parents=[common], help="semivariogram map of a CSV field",
                       description="Output: 2K+1 rows (h_y = -K..K) by 2K+1 columns (h_x = -K..K); NaN where no pairs.")
    s.add_argument("--field", required=True)
    s.add_argument("--max-lag", type=int, default=6)
    s.set_defaults(func=cmd_varmap)

    s = sub.add_parser("train", parents=[common], help="train an NF or NV network")
    s.add_argument("--dataset", required=True)
    s.add_argument("--kind", choices=["nf", "nv"], required=True)
    s.add_argument("--epochs", type=int, default=None, help="default 50 (nf) / 100 (nv)")
    s.add_argument("--batch-size", type=int, default=500)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--weight-decay", type=float, default=0.01)
    s.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None,
                   help="180-degree rotation augmentation (default: on for nf, off for nv)")
    s.add_argument("--validation-fraction", type=float, default=0.0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("estimate", parents=[common], help="estimate parameters of one CSV field",
                       description="Output columns: method, alpha, lambda, theta, sigma2, converged, out_of_domain.")
    s.add_argument("--method", choices=["ml", "nf", "nv", "ML", "NF", "NV"], required=True)
    s.add_argument("--model")
    s.add_argument("--field", required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("bench", parents=[common], help="simulation benchmark (records + binned bias/std)",
                       description=RECORD_SCHEMA + ". Summary CSV: parameter, bin_index, bin_center, method, "
                                   "count, bias, std.")
    s.add_argument("--methods", default="ML", help="comma list of ML,NF,NV")
    s.add_argument("--nf-model")
    s.add_argument("--nv-model")
    s.add_argument("--configs", type=int, default=20, help="dense-region configurations (default 20)")
    s.add_argument("--replicates", type=int, default=5)
    s.add_argument("--summary", help="write binned bias/std CSV here")
    s.add_argument("--timing-out", help="write per-record wall times here")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("aic", parents=[common], help="isotropic vs anisotropic AIC experiment",
                       description="Output columns: lam, replicate, aic_isotropic, aic_anisotropic, "
                                   "anisotropic_preferred, error.")
    s.add_argument("--lambdas", default="0.25,0.5,0.75")
    s.add_argument("--replicates", type=int, default=100)
    s.add_argument("--alpha", type=float, default=math.pi / 4)
    s.add_argument("--theta", type=float, default=2.0)
    s.set_defaults(func=cmd_aic)

    s = sub.add_parser("scan", parents=[common], help="sliding-window estimation over a CSV raster",
                       description="Output columns: row, col, status, alpha, lam, theta, out_of_domain, "
                                   "missing_fraction.")
    s.add_argument("--raster", required=True)
    s.add_argument("--method", choices=["ml", "nf", "nv", "ML", "NF", "NV"], required=True)
    s.add_argument("--model")
    s.add_argument("--window", type=int, default=16)
    s.add_argument("--nv-max-missing", type=float, default=0.2)
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("inspect-model", parents=[common], help="print a model's layer table")
    s.add_argument("model")
    s.set_defaults(func=cmd_inspect_model)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except UsageError as exc:
        print(f"geoaniso: error: {exc}", file=sys.stderr)
        return 1
    except (GeoanisoError, ValueError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"geoaniso: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
