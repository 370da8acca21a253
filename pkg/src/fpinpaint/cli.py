"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .core import DataError, FingerprintMap
from .data.io import (
    ModelFormatError,
    atomic_output,
    load_map,
    load_model,
    load_points,
    map_to_csv_rows,
    model_kind,
    save_map,
    save_model,
)
from .data.patterns import apply_pattern, get_pattern
from .data.synthetic import SyntheticFieldConfig, generate_synthetic
from .evaluation import K_POS_DEFAULT, EvalReport, eval_inpainting, eval_positioning, reports_to_csv
from .gpr import FactorizationError, fit_gpr
from .i2ap import I2apConfig, I2apModel, train_i2ap
from .iap import IapConfig, train_iap
from .inpaint import predictor
from .mlpnet import NonFiniteError

log = logging.getLogger("fpinpaint")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model hyperparameters")
    g.add_argument("--k", type=int, help="I2AP neighbor count")
    g.add_argument("--dim-v", type=int, help="I2AP feature width per neighbor")
    g.add_argument("--alpha", type=float, help="IAP reconstruction weight / I2AP condition-loss weight")
    g.add_argument("--beta", type=float, help="IAP KL weight / I2AP position-loss weight")
    g.add_argument("--lambda-l1", type=float)
    g.add_argument("--lambda-adv", type=float)
    g.add_argument("--noise-sigma", type=float, help="dBm noise for location-head training pairs")
    g.add_argument("--gap-radius", type=float, help="meters; random neighbor masking during I2AP training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch", type=int)
    g.add_argument("--lr", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fpinpaint", description="WiFi fingerprint inpainting (GPR, IAP, I2AP)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic surveyed field")
    p.add_argument("config", nargs="?", help="SyntheticFieldConfig JSON (defaults if omitted)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="map CSV; the noiseless reference goes next to it as <stem>.oracle.csv")

    p = sub.add_parser("fit", help="train a model on a map (optionally minus a pattern)")
    p.add_argument("--model", choices=("gpr", "iap", "i2ap"), required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--pattern", help="built-in pattern name or PatternSpec JSON; its region is held out")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="train_log.csv path (default: next to --out)")
    _add_overrides(p)

    p = sub.add_parser("inpaint", help="predict fingerprints at query points")
    p.add_argument("--model", required=True)
    p.add_argument("--points", required=True, help="CSV with x,y header")
    p.add_argument("--map", help="reference map; checked against the model's AP count")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval-inpaint", help="heldout L1 of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--pattern", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval-position", help="KNN positioning CEP with and without inpainting")
    p.add_argument("--map", required=True)
    p.add_argument("--pattern", required=True)
    p.add_argument("--model", help="inpaint the heldout points with this model")
    p.add_argument("--k-pos", type=int, default=K_POS_DEFAULT)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="merge reports; emit plot-ready CSV")
    p.add_argument("--in", dest="inputs", action="append", required=True)
    p.add_argument("--plot-data", action="store_true", help="write flat CSV series instead of a table")
    p.add_argument("--out", help="output path (default: stdout)")
    return ap


def _run_config(args, model=None) -> dict:
    cfg = {k: v for k, v in vars(args).items() if v is not None}
    if model is not None:
        cfg["model_kind"] = model_kind(model)
        cfg["model_config"] = asdict(model.config) if hasattr(model, "config") else asdict(model.hyper)
    return cfg


def _write_json(path, doc) -> None:
    with atomic_output(path) as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True))
        fh.write("\n")


def _need_seed(args, model) -> np.random.Generator | None:
    if isinstance(model, I2apModel):
        if args.seed is None:
            raise UsageError(f"fpinpaint {args.command}: --seed is required for i2ap models")
        return np.random.default_rng(args.seed)
    return None


def _training_map(args) -> tuple[FingerprintMap, str | None]:
    fmap = load_map(args.map)
    if args.pattern:
        pat = get_pattern(args.pattern)
        return apply_pattern(fmap, pat)[0], pat.name
    return fmap, None


def cmd_synth(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = SyntheticFieldConfig.from_dict(json.load(fh))
    else:
        cfg = SyntheticFieldConfig()
    fmap, oracle = generate_synthetic(cfg, np.random.default_rng(args.seed))
    pts = fmap.distinct_points
    clean = FingerprintMap(pts, oracle.many(pts), rss_floor=cfg.rss_floor)
    save_map(fmap, args.out)
    save_map(clean, Path(args.out).with_suffix(".oracle.csv"))
    log.info("wrote %d samples at %d points, %d APs", len(fmap), len(pts), fmap.n_aps)
    return EXIT_OK


def _iap_config(args) -> IapConfig:
    kw = {"alpha": args.alpha, "beta": args.beta, "epochs": args.epochs, "batch_size": args.batch, "lr": args.lr}
    return IapConfig(**{k: v for k, v in kw.items() if v is not None})


def _i2ap_config(args) -> I2apConfig:
    kw = {
        "k": args.k,
        "dim_v": args.dim_v,
        "alpha": args.alpha,
        "beta": args.beta,
        "lambda_l1": args.lambda_l1,
        "lambda_adv": args.lambda_adv,
        "noise_sigma": args.noise_sigma,
        "gap_radius": args.gap_radius,
        "epochs": args.epochs,
        "batch_size": args.batch,
        "lr": args.lr,
    }
    return I2apConfig(**{k: v for k, v in kw.items() if v is not None})


def cmd_fit(args) -> int:
    fmap, _ = _training_map(args)
    rng = np.random.default_rng(args.seed)
    try:
        if args.model == "gpr":
            model, history, columns = fit_gpr(fmap), [], []
        elif args.model == "iap":
            cfg = _iap_config(args)
            model = train_iap(fmap, fit_gpr(fmap), cfg, rng)
            history, columns = model.history, ["L_rec", "L_KL", "loss"]
        else:
            cfg = _i2ap_config(args)
            cfg.check_for(fmap.n_aps, len(fmap.distinct_points))
            model = train_i2ap(fmap, cfg, rng)
            history, columns = model.history, ["L_gen", "L_l1", "L_adv", "L_condition", "L_position"]
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(f"fpinpaint fit: {exc}") from None
    save_model(model, args.out)
    if history:
        log_path = args.log or str(Path(args.out).with_name("train_log.csv"))
        with atomic_output(log_path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", *columns])
            for row in history:
                w.writerow([row["epoch"], *(repr(float(row[c])) for c in columns)])
    return EXIT_OK


def cmd_inpaint(args) -> int:
    model = load_model(args.model)
    ref = None
    if args.map:
        ref = load_map(args.map)
        n = model.n_aps
        if ref.n_aps != n:
            raise DataError(f"shape mismatch: model expects {n} APs, map {args.map} has {ref.n_aps}")
    rng = _need_seed(args, model)
    pts = load_points(args.points)
    fps = predictor(model, rng, ref)(pts)
    out = FingerprintMap(pts, fps, model_floor(model), model_ceiling(model))
    with atomic_output(args.out) as fh:
        csv.writer(fh, lineterminator="\n").writerows(map_to_csv_rows(out))
    return EXIT_OK


def model_floor(model) -> float:
    return model.rss_floor if hasattr(model, "rss_floor") else model.scaler.rss_floor


def model_ceiling(model) -> float:
    return model.rss_ceiling if hasattr(model, "rss_ceiling") else model.scaler.rss_ceiling


def cmd_eval_inpaint(args) -> int:
    model = load_model(args.model)
    fmap = load_map(args.map)
    if fmap.n_aps != model.n_aps:
        raise DataError(f"shape mismatch: model expects {model.n_aps} APs, map has {fmap.n_aps}")
    pat = get_pattern(args.pattern)
    train, heldout = apply_pattern(fmap, pat)
    rng = _need_seed(args, model)
    l1 = eval_inpainting(predictor(model, rng, train if isinstance(model, I2apModel) else None), heldout)
    report = EvalReport(model_kind(model), pat.name, l1=l1, extra={"heldout_points": int(len(heldout.distinct_points))})
    _write_json(args.out, {"run_config": _run_config(args, model), "seed": args.seed, "reports": [report.to_dict()]})
    return EXIT_OK


def cmd_eval_position(args) -> int:
    fmap = load_map(args.map)
    pat = get_pattern(args.pattern)
    train, heldout = apply_pattern(fmap, pat)
    reports = [eval_positioning(train, None, heldout, args.k_pos, "baseline", pat.name)]
    model = None
    if args.model:
        model = load_model(args.model)
        if fmap.n_aps != model.n_aps:
            raise DataError(f"shape mismatch: model expects {model.n_aps} APs, map has {fmap.n_aps}")
        rng = _need_seed(args, model)
        pts = heldout.distinct_points
        fps = predictor(model, rng, train if isinstance(model, I2apModel) else None)(pts)
        inpainted = FingerprintMap(pts, fps, train.rss_floor, train.rss_ceiling)
        reports.append(eval_positioning(train, inpainted, heldout, args.k_pos, model_kind(model), pat.name))
    _write_json(
        args.out,
        {"run_config": _run_config(args, model), "seed": args.seed, "reports": [r.to_dict() for r in reports]},
    )
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for path in args.inputs:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        reports += [EvalReport.from_dict(r) for r in doc.get("reports", [])]
    if args.plot_data:
        text = reports_to_csv(reports)
    else:
        lines = [f"{'method':<10} {'pattern':<12} {'L1':>8} {'CEP68':>8} {'CEP95':>8}"]
        fmt = lambda v: f"{v:8.3f}" if v is not None else f"{'-':>8}"  # noqa: E731
        for r in reports:
            lines.append(f"{r.method:<10} {r.pattern:<12} {fmt(r.l1)} {fmt(r.cep68)} {fmt(r.cep95)}")
        text = "\n".join(lines) + "\n"
    if args.out:
        with atomic_output(args.out) as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "inpaint": cmd_inpaint,
    "eval-inpaint": cmd_eval_inpaint,
    "eval-position": cmd_eval_position,
    "report": cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteError, FactorizationError, FloatingPointError) as exc:
        print(f"fpinpaint: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ModelFormatError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"fpinpaint: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
