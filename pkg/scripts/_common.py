"""Shared argument handling and output helpers for the experiment scripts."""

import argparse
import csv
from pathlib import Path


def parser(description: str, default_out: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--out", default=f"results/{default_out}", help="output directory")
    ap.add_argument("--quick", action="store_true", help="coarser grids for a fast look")
    ap.add_argument("--plot", action="store_true", help="save a PNG (needs matplotlib)")
    return ap


def outdir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path}")


def pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt
