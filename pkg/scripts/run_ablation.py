"""Train one network per compensation mode and print a PSNR table.

    python scripts/run_ablation.py --modes jubw,only-center,jubw-no-dist
    python scripts/run_ablation.py --config my.yaml --iterations 5000 --csv table.csv
"""
import argparse
import csv
import sys

from vsrmc.experiment import ExperimentConfig, run_ablation
from vsrmc.metrics import format_db


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="YAML experiment config (defaults to the built-in desk setup)")
    ap.add_argument("--modes", default="jubw,only-center,jubw-no-dist,no-warp,backward-warp,spmc-fw")
    ap.add_argument("--iterations", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--test-manifest")
    ap.add_argument("--csv", help="write per-item PSNR to this file")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    if args.iterations is not None:
        d["train"]["iterations"] = args.iterations
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(d)

    report = lambda r: print(f"{r.mode:>14}  {format_db(r.mean_psnr):>6} dB  ({r.seconds:.0f}s)", flush=True)
    rows = run_ablation(cfg, args.modes.split(","), args.test_manifest, callback=report)
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["mode", "item", "psnr"])
            for r in rows:
                for name, value in r.per_item:
                    w.writerow([r.mode, name, f"{value:.4f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
