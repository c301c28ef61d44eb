"""Label-noise injection: how many flipped labels does each undersampler remove?

Prints one row per seed and the averages.
"""
import argparse

import numpy as np

from hierattn.data import IHConfig, ImageRecord, instance_hardness, undersample_ih, undersample_random
from hierattn.data.synthetic import flip_labels, gaussian_clusters


def removed_mask(recs, kept):
    names = {r.path for r in kept}
    return np.array([r.path not in names for r in recs])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=800)
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--flip", type=float, default=0.1)
    ap.add_argument("--keep", type=float, default=0.75, help="fraction of each class kept")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    target = int(args.keep * args.n / args.classes)
    rows = []
    print("seed  ih_removed_flipped  random_removed_flipped  flipped_share_of_random_removals")
    for seed in range(args.seeds):
        X, y = gaussian_clusters(args.n, args.classes, args.classes, spread=1.0, separation=4.0, seed=seed)
        y, flipped = flip_labels(y, args.flip, args.classes, np.random.default_rng(seed))
        recs = [ImageRecord(f"r{i}", str(c)) for i, c in enumerate(y)]
        h = instance_hardness(X, y, IHConfig(seed=seed))
        ih = removed_mask(recs, undersample_ih(recs, X, target, hardness=h))
        rnd = removed_mask(recs, undersample_random(recs, target, np.random.default_rng(seed)))
        rows.append((ih[flipped].mean(), rnd[flipped].mean(), flipped[rnd].mean()))
        print(f"{seed:4d}  {rows[-1][0]:18.3f}  {rows[-1][1]:22.3f}  {rows[-1][2]:32.3f}")
    mean = np.mean(rows, axis=0)
    print(f"mean  {mean[0]:18.3f}  {mean[1]:22.3f}  {mean[2]:32.3f}")


if __name__ == "__main__":
    main()
