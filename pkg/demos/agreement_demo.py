"""Demo: inter-annotator agreement with confidence thresholding.

Builds a reliability table where one annotator answers at random with low
confidence, then shows how Krippendorff's alpha changes as low-confidence
responses are filtered out.

    python3 demos/agreement_demo.py
"""

import numpy as np

from evstruct.agreement import (
    ReliabilityMatrix, bootstrap_alpha_ci, krippendorff_alpha,
    pairwise_alpha_vs_panel, thresholded_alpha,
)


def main():
    rng = np.random.default_rng(0)
    table = ReliabilityMatrix()
    for k in range(60):
        signal = k % 4
        table.add(f"i{k}", "careful_1", signal, confidence=0.9)
        table.add(f"i{k}", "careful_2", signal, confidence=0.8)
        table.add(f"i{k}", "rushed", int(rng.integers(0, 4)),
                  confidence=0.15)

    print(f"alpha, all responses:        "
          f"{krippendorff_alpha(table, 'ordinal'):.3f}")
    for pt in thresholded_alpha(table, [0.0, 0.2, 0.5], "ordinal"):
        a = "undefined" if pt.alpha is None else f"{pt.alpha:.3f}"
        print(f"alpha above confidence {pt.threshold:.1f}: {a} "
              f"(coverage {pt.coverage:.2f})")

    lo, hi, n_def = bootstrap_alpha_ci(table, "ordinal", seed=0)
    print(f"bootstrap 95% interval:      [{lo:.3f}, {hi:.3f}] "
          f"({n_def} defined resamples)")

    panel = ReliabilityMatrix()
    rushed = ReliabilityMatrix()
    for (item, ann), value in table.responses.items():
        (rushed if ann == "rushed" else panel).add(item, ann, value)
    result = pairwise_alpha_vs_panel(panel, {"rushed": rushed}, "ordinal")
    print(f"rushed annotator vs panel:   {result['rushed']:.3f}")


if __name__ == "__main__":
    main()
