#!/usr/bin/env python3
"""Materialize the builtin scenario configs into scenarios/*.json."""

import json
from pathlib import Path

from dualgate.bench import builtin_scenario

OUT = Path(__file__).resolve().parent.parent / "scenarios"


def main():
    OUT.mkdir(exist_ok=True)
    for name in ("quad_case1", "quad_case2", "racing"):
        path = OUT / f"{name}.json"
        with open(path, "w") as fh:
            json.dump(builtin_scenario(name), fh, indent=2)
            fh.write("\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
