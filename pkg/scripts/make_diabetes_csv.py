"""Regenerate src/asfw/data/diabetes.csv from scikit-learn's bundled copy.

Development helper only; the package reads the CSV and never imports
scikit-learn. Predictors are centered and scaled to unit Euclidean norm.
"""

import csv
from pathlib import Path

from sklearn.datasets import load_diabetes

OUT = Path(__file__).resolve().parents[1] / "src" / "asfw" / "data" / "diabetes.csv"


def main():
    ds = load_diabetes(scaled=True)
    with OUT.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# standardized: predictors centered, unit Euclidean norm\n")
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + ["target"])
        for row, y in zip(ds.data, ds.target):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])
    print(f"wrote {OUT} ({len(ds.target)} rows)")


if __name__ == "__main__":
    main()
