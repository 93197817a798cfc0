"""Gesture-personalization ablation at desk scale.

For every gesture class and synthetic user profile, synthesize a detector
from that user's examples, tune its hyperparameters by grid search, and
compare its F1 against the same program shape with every hyperparameter
fixed at mid-range. The contrast mirrors the personalized-vs-fixed
comparison on human recordings, on synthetic data.
"""

from __future__ import annotations

import io

from .gateway import Gateway, make_gateway
from .gesture_data import GESTURE_CLASSES, USER_PROFILES, class_description, example_set
from .gesture_synth import midpoint_baseline, score, synthesize

CSV_COLUMNS = ("gesture_class", "profile", "seed", "f1_tuned", "f1_fixed",
               "accuracy_tuned", "accuracy_fixed")


def run_ablation(seeds=(0,), classes=GESTURE_CLASSES, profiles=USER_PROFILES,
                 gateway=None):
    """Rows of per-(class, profile, seed) F1 for tuned vs fixed-midpoint."""
    gateway = gateway or make_gateway()
    rows = []
    for gesture_class in classes:
        for profile in profiles:
            for seed in seeds:
                positives, negatives = example_set(gesture_class, profile, seed)
                examples = positives + negatives
                program = synthesize(class_description(gesture_class),
                                     positives, negatives, gateway)
                acc_tuned, f1_tuned = score(program, examples)
                baseline = midpoint_baseline(program)
                acc_fixed, f1_fixed = score(baseline, examples)
                rows.append({
                    "gesture_class": gesture_class,
                    "profile": profile.name,
                    "seed": seed,
                    "f1_tuned": round(f1_tuned, 4),
                    "f1_fixed": round(f1_fixed, 4),
                    "accuracy_tuned": round(acc_tuned, 4),
                    "accuracy_fixed": round(acc_fixed, 4),
                })
    return rows


def summarize(rows):
    n = len(rows)
    mean_tuned = sum(r["f1_tuned"] for r in rows) / n
    mean_fixed = sum(r["f1_fixed"] for r in rows) / n
    return {
        "runs": n,
        "mean_f1_tuned": round(mean_tuned, 4),
        "mean_f1_fixed": round(mean_fixed, 4),
        "gap": round(mean_tuned - mean_fixed, 4),
    }


def to_csv(rows):
    import csv

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()
