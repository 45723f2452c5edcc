"""Information limit of the desk experiment: match the data against the true hyper-volume.

Usage::

    python scripts/oracle_matching.py [--seed 0] [--images 1000]

Prints the rank correlation between true and estimated ``t`` when every
image is matched against the truth-fitted hyper-volume, with the best
template's ``t`` and with the posterior mean at several temperatures.
No reconstruction is involved, so this bounds what any volume estimate can
achieve with the same templates.
"""

import argparse

import numpy as np

from hypermol.config import RunConfig
from hypermol.evalreport import spearman_abs
from hypermol.pipeline import preprocess, simulate, truth_volume
from hypermol.reconstruct import match_all


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--images", type=int, default=1000)
    ap.add_argument("--temperatures", type=float, nargs="+", default=[2.0, 4.0, 8.0, 16.0])
    args = ap.parse_args()
    cfg = RunConfig(seed=args.seed, images=args.images).validate()
    stack = simulate(cfg)
    circles = preprocess(stack, cfg)
    truth = truth_volume(cfg)
    rcfg = cfg.recon_config()
    for temp in [None] + args.temperatures:
        res = match_all(truth, circles, rcfg, np.random.default_rng(0), temperature=temp)
        t_est = np.array([a.t for a in res.assignments])
        label = "best template" if temp is None else f"posterior mean, temperature {temp:g}"
        print(f"{label:40s} spearman {spearman_abs(stack.ts, t_est):.4f}", flush=True)


if __name__ == "__main__":
    main()
