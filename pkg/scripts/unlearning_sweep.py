"""Post-unlearning detection rate and test accuracy across unlearning rates."""

import argparse
from pathlib import Path

from seqaudit.results import dumps_csv
from seqaudit.sim.experiment import ExperimentConfig
from seqaudit.sim.unlearning import tau_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--method", choices=("gradient_based", "fine_tune"), default="gradient_based")
    ap.add_argument("--taus", default="0,0.3,1,3,10")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="runs/unlearning.csv")
    args = ap.parse_args()

    cfg = ExperimentConfig(seed=args.seed)
    reports = tau_sweep(cfg, args.method, [float(t) for t in args.taus.split(",")], args.trials)
    reports += tau_sweep(cfg, "exact", [0.0], args.trials)
    rows = []
    for r in reports:
        d = r.as_dict()
        rows.append((d["method"], d["tau"], d["pre_detection_rate"], d["post_detection_rate"], d["acc_before"], d["acc_after"], d["verdict"]))
        print(f"{d['method']:<15} tau={d['tau']:<5} TDR {d['post_detection_rate']:.3f}  Acc {d['acc_after']:.4f}  {d['verdict']}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = ("method", "tau", "tdr_before", "tdr_after", "acc_before", "acc_after", "verdict")
    out.write_text(dumps_csv(cols, rows))


if __name__ == "__main__":
    main()
