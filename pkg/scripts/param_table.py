"""Parameter totals and traced layer shapes for each variant at its native input size."""
import argparse

import numpy as np

from hierattn import Tensor, build_model, count_params, model_config
from hierattn.model import VARIANTS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variants", nargs="+", default=sorted(VARIANTS))
    ap.add_argument("--trace", action="store_true", help="also print per-layer output shapes")
    args = ap.parse_args()
    for v in args.variants:
        counts = {a: count_params(build_model(model_config(v, attention=a))) for a in ("sc", "none", "se")}
        print(f"{v:5s} total={counts['sc']:>10,}  no-attention={counts['none']:>10,}  se={counts['se']:>10,}")
        if args.trace:
            m = build_model(v).eval()
            size = m.cfg.input_size
            m(Tensor(np.zeros((1, 3, size, size))))
            for name, shape in m.trace:
                print(f"    {name:14s} {shape}")


if __name__ == "__main__":
    main()
