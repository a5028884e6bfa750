#!/usr/bin/env python3
"""Write a synthetic labelled face corpus with landmark sidecars."""

import argparse
import logging

from forgerykit.synthetic import make_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--size", type=int, default=192)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--landmark-fraction", type=float, default=0.5)
    p.add_argument("--corrupt", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)
    paths = make_corpus(args.out, args.n, args.size, args.seed,
                        landmark_fraction=args.landmark_fraction, corrupt=args.corrupt)
    for k, v in paths.items():
        print(f"{k}: {v}")


if __name__ == "__main__":
    main()
