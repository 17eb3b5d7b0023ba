"""What the scoring functions actually compute, on hand-sized examples.

Walks a 2x2 confusion matrix through per-class precision/recall, the
macro averages, and the harmonic-mean macro-F1, then shows why that F1
differs from the mean of per-class F1 scores, and how multi-annotator
votes collapse to labels.
"""

import numpy as np

from abusekit.corpus import Vote, aggregate_label
from abusekit.metrics import (classification_report, confusion, macro_average,
                              macro_f1, per_class_pr)


def main():
    golds = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    preds = [1, 1, 1, 0, 0, 0, 0, 0, 1, 1]
    matrix = confusion(golds, preds, num_classes=2)
    print("confusion matrix (rows gold, cols predicted):")
    print(matrix)

    for c in (0, 1):
        p, r = per_class_pr(matrix, c)
        print(f"class {c}: precision {p:.3f}, recall {r:.3f}")

    map_, mar = macro_average(matrix)
    print(f"\nmacro precision {map_:.4f}, macro recall {mar:.4f}")
    print(f"macro-F1 (harmonic mean of the two): {macro_f1(map_, mar):.4f}")

    report = classification_report(golds, preds)
    print(f"class-mean F1 (mean of per-class F1s): "
          f"{report.macro_f1_class_mean:.4f}")
    print("the two disagree whenever precision and recall are unbalanced")

    print("\nvote aggregation (6 annotator cells per row):")
    rows = [
        ["1.0", "1.0", "0.0", "", "", ""],
        ["1.0", "0.0", "", "", "", ""],
        ["NL", "", "", "", "", ""],
        ["0.0", "0.0", "1.0", "NL", "", ""],
    ]
    for cells in rows:
        votes = [Vote.from_cell(c) for c in cells]
        label = aggregate_label(votes)
        shown = ",".join(c if c else "_" for c in cells)
        outcome = "dropped" if label is None else f"label {label}"
        print(f"  [{shown}] -> {outcome}")
    print("majority wins, exact ties go to 1, no countable votes drops the row")


if __name__ == "__main__":
    main()
