"""Heldout L1 and positioning CEP of GPR, IAP and I2AP on the synthetic field.

    python scripts/run_synthetic_benchmark.py --seeds 0 1 2 3 4 --out results/synthetic
"""

import argparse
import json
import logging
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from fpinpaint.benchmark import METHODS, BenchmarkConfig, run_benchmark
from fpinpaint.data.patterns import BUILTIN_PATTERNS
from fpinpaint.evaluation import reports_to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--patterns", nargs="+", default=list(BUILTIN_PATTERNS))
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--positioning", action="store_true", help="also run KNN positioning")
    ap.add_argument("--out", default="results/synthetic")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = BenchmarkConfig()
    cfg = replace(base, iap=replace(base.iap, epochs=args.epochs), i2ap=replace(base.i2ap, epochs=args.epochs))
    results = run_benchmark(args.patterns, args.seeds, cfg, args.methods, args.positioning)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = [r for res in results for r in (*res.inpaint.values(), *res.position.values())]
    for res in results:
        for r in res.position.values():
            r.extra["seed"] = res.seed
    (out / "reports.csv").write_text(reports_to_csv(reports))
    doc = {
        "config": asdict(cfg),
        "seeds": args.seeds,
        "runs": [
            {
                "pattern": res.pattern,
                "seed": res.seed,
                "seconds": res.seconds,
                "inpaint": {k: v.to_dict() for k, v in res.inpaint.items()},
                "position": {k: {"cep68": v.cep68, "cep95": v.cep95} for k, v in res.position.items()},
            }
            for res in results
        ],
    }
    (out / "benchmark.json").write_text(json.dumps(doc, indent=1, default=str))

    print(f"{'pattern':<12}" + "".join(f"{m:>10}" for m in args.methods) + "   (median heldout L1, dBm)")
    for p in args.patterns:
        rows = [r for r in results if r.pattern == p]
        print(f"{p:<12}" + "".join(f"{np.median([r.l1(m) for r in rows]):10.3f}" for m in args.methods))
    if args.positioning:
        print("median CEP68 (m):")
        for p in args.patterns:
            rows = [r for r in results if r.pattern == p]
            names = rows[0].position.keys()
            print(f"{p:<12}" + "".join(f"{n}={np.median([r.position[n].cep68 for r in rows]):.3f} " for n in names))


if __name__ == "__main__":
    main()
