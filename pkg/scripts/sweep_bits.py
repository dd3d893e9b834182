#!/usr/bin/env python3
"""Accuracy vs uplink precision: sweep the quantizer bit width."""

import argparse

import numpy as np

from fedsim import harness
from fedsim.harness import ExperimentConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--bits", type=int, nargs="+", default=[1, 2, 4, 8])
    parser.add_argument("--rounds", type=int, default=150)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = parser.parse_args()

    print(f"{'bits':>4} {'median acc':>11} {'uplink bits':>12}")
    for bits in args.bits:
        finals, uplinks = [], []
        for seed in args.seeds:
            rows = harness.run_experiment(ExperimentConfig(
                algorithm="fedqvr",
                dataset={"kind": "synthetic", "num_classes": 5, "dim": 20,
                         "samples_per_class": 200,
                         "test_samples_per_class": 100, "separation": 3.0},
                num_clients=20, sample_size=5, rounds=args.rounds,
                batch_size=50, eta=0.01, bits=bits, labels_per_client=1,
                eval_every=args.rounds, seed=seed))
            finals.append(rows[-1].test_accuracy)
            uplinks.append(rows[-1].cumulative_uplink_bits)
        print(f"{bits:>4} {np.median(finals):>11.4f} "
              f"{int(np.median(uplinks)):>12}")


if __name__ == "__main__":
    main()
