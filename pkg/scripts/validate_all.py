"""Run every numerical check and print a summary (same as ``geobayes validate``)."""
import sys

from geobayes.cli import main

if __name__ == "__main__":
    sys.exit(main(["validate", *sys.argv[1:]]))
