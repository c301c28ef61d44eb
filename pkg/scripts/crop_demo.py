"""Build a synthetic scope/full-frame corpus and run the crop command over it."""
import argparse
from pathlib import Path

import numpy as np

from hierattn.cli import main as cli
from hierattn.data import write_image
from hierattn.data.synthetic import full_frame_image, scope_image


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/crop_demo"))
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    for i in range(args.n):
        write_image(args.out / "scope" / f"s{i:03d}.png", scope_image(args.size, rng)[0])
        write_image(args.out / "photo" / f"p{i:03d}.jpg", full_frame_image(args.size, rng))
    for kind in ("scope", "photo"):
        print(kind, end=": ", flush=True)
        cli(["crop", "--in", str(args.out / kind), "--out", str(args.out / f"{kind}_cropped")])


if __name__ == "__main__":
    main()
