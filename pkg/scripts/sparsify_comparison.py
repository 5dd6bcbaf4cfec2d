#!/usr/bin/env python3
"""Compare the two sparsification methods on a skewed synthetic corpus.

Builds a corpus where some categories appear mostly as per-image
singletons (rare classes) and others in bulk, applies both the single
(per-image, at-least-one floor) and overall (dataset-wide exact ratio)
methods at the same sparse ratio, and prints the per-category retention
table with the relative difference of single over overall.

Usage:
    python scripts/sparsify_comparison.py --sparse 0.1 --images 300 --seed 0
"""

import argparse

import numpy as np

from spwood.dataset import (
    AnnotationRecord,
    AnnotationSet,
    compare_stats,
    sparsify_overall,
    sparsify_single,
)

RARE = ("BD", "GTF", "SBF", "RA", "HC")
BULK = ("PL", "SV", "LV", "SH", "ST", "HA", "SP")


def build_corpus(n_images: int, seed: int) -> AnnotationSet:
    rng = np.random.default_rng(seed)
    images = {}
    for i in range(n_images):
        image_id = f"img{i:05d}"
        records = []
        for cat in RARE:
            n = int(rng.random() < 0.35)  # usually absent, else a singleton
            records.extend(_make(rng, image_id, cat, n))
        for cat in BULK:
            records.extend(_make(rng, image_id, cat, int(rng.integers(0, 25))))
        images[image_id] = records
    return AnnotationSet(images)


def _make(rng, image_id, cat, n):
    out = []
    for _ in range(n):
        x, y = rng.uniform(0, 999, 2)
        out.append(
            AnnotationRecord(
                image_id, ((x, y), (x + 12, y), (x + 12, y + 6), (x, y + 6)), cat
            )
        )
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sparse", type=float, default=0.1)
    parser.add_argument("--images", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="optional stats CSV path")
    args = parser.parse_args()

    corpus = build_corpus(args.images, args.seed)
    single = sparsify_single(corpus, args.sparse, seed=args.seed)
    overall = sparsify_overall(corpus, args.sparse, seed=args.seed)
    stats = compare_stats(single, overall)

    totals = corpus.category_counts()
    print(f"corpus: {len(corpus)} records, {args.images} images, ratio {args.sparse}")
    print(f"{'category':>9} {'total':>6} {'single':>7} {'overall':>8} {'rel diff':>9}")
    for row in stats.rows:
        rel = (
            "undef"
            if row.relative_difference_percent is None
            else f"{row.relative_difference_percent:+.1f}%"
        )
        print(
            f"{row.category:>9} {totals.get(row.category, 0):>6} "
            f"{row.count_single:>7} {row.count_overall:>8} {rel:>9}"
        )
    kept_single, kept_overall = len(single), len(overall)
    print(
        f"\ntotals: single keeps {kept_single} ({100 * kept_single / len(corpus):.1f}%), "
        f"overall keeps {kept_overall} ({100 * kept_overall / len(corpus):.1f}%)"
    )
    print(
        "rare categories retain far above the nominal ratio under the single "
        "method; the overall method holds every category at the exact ratio."
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(stats.to_csv())
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
