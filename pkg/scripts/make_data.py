"""Regenerate the CSV files in data/.

Iris (Fisher, 1936) is in the public domain; the copy shipped with
scikit-learn is used as the source. The synthetic files come from
``anyloss.data.synth_imbalanced`` with fixed seeds.
"""

import csv
from pathlib import Path

from anyloss.data import synth_imbalanced

OUT = Path(__file__).resolve().parent.parent / "data"


def write(path, header, X, Y):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, y in zip(X, Y):
            w.writerow([f"{v:.6g}" for v in row] + [int(y)])


def main():
    from sklearn.datasets import load_iris

    OUT.mkdir(exist_ok=True)
    iris = load_iris()
    header = ["sepal_length", "sepal_width", "petal_length", "petal_width", "label"]
    write(OUT / "iris_virginica.csv", header, iris.data, iris.target == 2)
    write(OUT / "iris_versicolor.csv", header, iris.data, iris.target == 1)

    d = synth_imbalanced(n=1000, m=2, pos_fraction=0.1, class_separation=2.0, seed=11)
    write(OUT / "synth_9to1.csv", ["x1", "x2", "label"], d.X, d.Y)
    d = synth_imbalanced(n=600, m=5, pos_fraction=0.2, class_separation=1.5, seed=12)
    write(OUT / "synth_4to1_5d.csv", [f"x{i}" for i in range(1, 6)] + ["label"], d.X, d.Y)


if __name__ == "__main__":
    main()
