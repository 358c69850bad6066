#!/usr/bin/env python3
"""
Prepare a checkout for running the benchmarks: dataset and results folders,
plus a psnp.toml seeded from psnp.toml.example when none exists yet.
"""
import os
import shutil
import sys
from typing import List

# data/ holds LIBSVM files, results/ the metric CSVs and results/traces/ the per-iteration traces
BENCH_DIRS = ["data", "results", os.path.join("results", "traces")]
SETTINGS_TEMPLATE = "psnp.toml.example"
SETTINGS_FILE = "psnp.toml"


def create_bench_dirs(root: str) -> List[str]:
    """Create the benchmark folders under root and return the ones that were missing."""
    created = []
    for name in BENCH_DIRS:
        path = os.path.join(root, name)
        if not os.path.isdir(path):
            os.makedirs(path)
            created.append(path)
    return created


def seed_settings(root: str) -> bool:
    """Copy the settings template to psnp.toml unless one is already there."""
    target = os.path.join(root, SETTINGS_FILE)
    template = os.path.join(root, SETTINGS_TEMPLATE)
    if os.path.exists(target) or not os.path.exists(template):
        return False
    shutil.copyfile(template, target)
    return True


def create_project_structure(root: str = ".") -> None:
    for path in create_bench_dirs(root):
        print(f"Created {path}")
    if seed_settings(root):
        print(f"Wrote {SETTINGS_FILE} from {SETTINGS_TEMPLATE}; edit it to change solver defaults")


if __name__ == "__main__":
    create_project_structure(sys.argv[1] if len(sys.argv) > 1 else ".")
    print("\nReady. Try:\n")
    print("python -m src.cli bench-cs --m 200 --n 800 --s 20 --trials 20 --out results/bench_cs.csv")
