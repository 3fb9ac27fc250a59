"""Relative data errors per model for a range of seeds (Table-1 style)."""
import argparse

from geobayes import experiment
from geobayes.io_core import resolve_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--models", nargs="+", default=["layer2", "fault3", "channel"])
    args = ap.parse_args()

    datasets = [experiment.generate(resolve_manifest({"model": tag}), seed)
                for tag in args.models for seed in args.seeds]
    print(f"{'model':10s} {'mean %':>8s} {'min %':>8s} {'max %':>8s}")
    for tag, row in experiment.error_table(datasets).items():
        print(f"{tag:10s} {row['mean']:8.3f} {row['min']:8.3f} {row['max']:8.3f}")


if __name__ == "__main__":
    main()
