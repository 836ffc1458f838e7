#!/usr/bin/env python3
"""Run the normal/identity simulation scenario and write report files."""
import pathlib
import sys

from kinkfit.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main([
        "simulate",
        "--scenario", str(HERE / "scenarios" / "table1.scenario"),
        "--out", "table1",
    ]))
