"""Materialize the Pima and Cleveland CSV files from PyPI-hosted copies.

The UCI archive is the canonical source. Where it is unreachable, both datasets
ship inside wheels on PyPI:

* ``keel-ds`` carries the 768-row Pima Indians Diabetes table
  (``keel_ds/data/balanced/raw/pima.dat``), labels spelled
  ``tested_positive`` / ``tested_negative``.
* ``orange3`` carries the 303-row Cleveland table
  (``Orange/datasets/heart_disease.tab``) with categorical columns spelled out
  and the target already binarized.

This script downloads both wheels (``pip download --no-deps``), re-encodes them
into the UCI numeric layouts and writes::

    data/pima-indians-diabetes.csv   # 9 numeric columns, no header
    data/processed.cleveland.data    # 14 columns, '?' for missing

Usage: ``python scripts/fetch_datasets.py [--out data]``
"""

from __future__ import annotations

import argparse
import glob
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

CLEVELAND_CODES = {
    1: {"female": "0", "male": "1"},
    2: {"typical ang": "1", "atypical ang": "2", "non-anginal": "3", "asymptomatic": "4"},
    6: {"normal": "0", "ST-T abnormal": "1", "left vent hypertrophy": "2"},
    10: {"upsloping": "1", "flat": "2", "downsloping": "3"},
    12: {"normal": "3", "fixed defect": "6", "reversable defect": "7"},
}


def _wheel(package: str, workdir: Path) -> zipfile.ZipFile:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", package, "-d", str(workdir)],
        check=True,
    )
    (path,) = glob.glob(str(workdir / "*.whl"))
    return zipfile.ZipFile(path)


def pima_rows(text: str) -> list[str]:
    rows = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("@"):
            continue
        *features, label = [c.strip() for c in line.split(",")]
        rows.append(",".join(features + ["1" if label == "tested_positive" else "0"]))
    return rows


def cleveland_rows(text: str) -> list[str]:
    rows = []
    # three header lines: names, types, flags
    for line in text.splitlines()[3:]:
        if not line.strip():
            continue
        cells = line.split("\t")
        out = []
        for i, cell in enumerate(cells):
            if cell in ("?", ""):
                out.append("?")
            elif i in CLEVELAND_CODES:
                out.append(CLEVELAND_CODES[i][cell])
            else:
                out.append(cell)
        rows.append(",".join(out))
    return rows


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data")
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        keel = _wheel("keel-ds==0.2.5", Path(tmp) / "keel")
        pima = pima_rows(keel.read("keel_ds/data/balanced/raw/pima.dat").decode())
        orange = _wheel("orange3==3.39.0", Path(tmp) / "orange")
        heart = cleveland_rows(orange.read("Orange/datasets/heart_disease.tab").decode())

    (out / "pima-indians-diabetes.csv").write_text("\n".join(pima) + "\n")
    (out / "processed.cleveland.data").write_text("\n".join(heart) + "\n")
    print(f"wrote {len(pima)} Pima rows and {len(heart)} Cleveland rows to {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
