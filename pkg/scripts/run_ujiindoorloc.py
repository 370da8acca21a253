"""GPR vs I2AP heldout L1 per floor of UJIIndoorLoc (test split treated as unsurveyed).

    python scripts/run_ujiindoorloc.py --data /path/to/UJIndoorLoc --floors 0 1 2 3 4
"""

import argparse
import logging
from pathlib import Path

from fpinpaint.benchmark import uji_floor_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", required=True, help="directory with trainingData.csv and validationData.csv")
    ap.add_argument("--floors", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--building", type=int, default=None, help="restrict to one building (default: all)")
    ap.add_argument("--max-train", type=int, default=3000)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    data = Path(args.data)
    print(f"{'floor':>5} {'train':>6} {'test':>6} {'APs':>5} {'GPR':>9} {'I2AP':>9}  time(s)")
    wins = 0
    for floor in args.floors:
        r = uji_floor_comparison(
            data / "trainingData.csv", data / "validationData.csv", floor, args.seed, args.building,
            args.max_train, args.epochs,
        )
        wins += r.l1["i2ap"] < r.l1["gpr"]
        print(f"{floor:>5} {r.n_train:>6} {r.n_test:>6} {r.n_aps:>5} {r.l1['gpr']:9.4f} {r.l1['i2ap']:9.4f}  "
              f"{sum(r.seconds.values()):.0f}", flush=True)
    print(f"I2AP better than GPR on {wins}/{len(args.floors)} floors")


if __name__ == "__main__":
    main()
