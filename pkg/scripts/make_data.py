#!/usr/bin/env python3
"""Materialize the bundled synthetic benchmark CSVs under data/."""

import argparse

from fairsearch.synth import SPECS, ensure_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", default="data", help="output directory")
    parser.add_argument("--seed", type=int, default=20240)
    parser.add_argument("names", nargs="*", default=list(SPECS), help="datasets to generate")
    args = parser.parse_args()
    for name in args.names or list(SPECS):
        path = ensure_dataset(name, args.dir, args.seed)
        print(path)


if __name__ == "__main__":
    main()
