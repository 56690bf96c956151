"""Mean minimum pairwise feature distance of marked variants per marking mode."""

import argparse

import numpy as np

from seqaudit.extractors import build_extractor
from seqaudit.marking import MODES, MarkingConfig, generate_marks, min_pairwise_feature_distance
from seqaudit.rng import make_rng
from seqaudit.sim.task import SyntheticTask, TaskConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--epsilon", type=float, default=10.0)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--extractor", choices=("mlp", "linear"), default="mlp")
    args = ap.parse_args()

    task = SyntheticTask(TaskConfig())
    ext = build_extractor(args.extractor, task.image_shape, 64)
    for mode in MODES:
        d = []
        for s in range(args.seeds):
            x, _ = task.sample(1, make_rng(s, "ablation"))
            marks = generate_marks(x[0], ext, args.n, args.epsilon, seed=s, config=MarkingConfig(mode=mode, dispersion_iterations=300))
            d.append(min_pairwise_feature_distance(x[0][None] + marks, ext))
        print(f"{mode:<7} {np.mean(d):.4f} +- {np.std(d) / np.sqrt(len(d)):.4f}")


if __name__ == "__main__":
    main()
