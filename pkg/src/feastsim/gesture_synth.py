"""Gesture-detector synthesis: propose, validate, and tune.

The gateway proposes a DSL program with bounded hyperparameters; each
candidate is tuned by grid search (10 values per dimension) maximizing
classification accuracy on the user's positive and negative examples, and
the loop retries with failure information before returning the best-seen
candidate.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import EvalError, InvariantError, SynthesisFailed
from .gestures import SignalView, detections

GRID_POINTS_PER_DIMENSION = 10
MAX_PROPOSAL_ATTEMPTS = 4       # first attempt + 3 retries

DSL_REFERENCE = """\
Detector programs are one boolean s-expression evaluated per frame over the
perception stream. Numeric positions take literals or (hp NAME) references.
Forms:
  (signal NAME)                          NAME: x y z yaw pitch roll
                                         mouth_open_ratio eye_aspect_left
                                         eye_aspect_right eyebrow_raise
  (min|max|mean|range|std SIGNAL W)      statistic over the last W seconds
  (> A B) (>= A B) (< A B) (<= A B)      threshold predicates
  (oscillation_count SIGNAL AMP W)       alternating swings of size AMP in W
  (hold P D)                             P continuously true for D seconds
  (sequence P1 P2 W)                     P1 then P2 within W seconds
  (debounce P TOL)                       P true within the last TOL frames
  (and P...) (or P...) (not P)           boolean connectives
Each (hp NAME) must be declared with a lower and an upper bound.
"""


def _classify(program, view, hp_values):
    """Fired flag for one example; EvalError propagates to the caller."""
    return bool(detections(program, view, hp_values).any())


def _outcomes(program, views, hp_values=None):
    """(fired, error) per example; errors count as misclassifications."""
    out = []
    for view, _positive in views:
        try:
            out.append((_classify(program, view, hp_values), False))
        except EvalError:
            out.append((False, True))
    return out


def _views(examples):
    return [(SignalView.of(ex), ex.positive) for ex in examples]


def score(program, examples, hp_values=None):
    """(accuracy, f1) of the program on labelled examples."""
    views = examples if examples and isinstance(examples[0], tuple) else _views(examples)
    outcomes = _outcomes(program, views, hp_values)
    correct = tp = fp = fn = 0
    for (fired, error), (_, positive) in zip(outcomes, views):
        predicted = fired and not error
        if error:
            pass                      # misclassified by definition
        elif predicted == positive:
            correct += 1
        if positive and predicted:
            tp += 1
        elif positive and not predicted:
            fn += 1
        elif not positive and predicted:
            fp += 1
    accuracy = correct / len(views) if views else 0.0
    f1 = (2 * tp / (2 * tp + fp + fn)) if (2 * tp + fp + fn) else 0.0
    return accuracy, f1


def grid_assignments(program):
    """All hyperparameter assignments, in lexicographic grid order."""
    dims = []
    for hp in program.hyperparameters:
        if hp.lo == hp.hi:
            dims.append([hp.lo])
        else:
            dims.append(list(np.linspace(hp.lo, hp.hi, GRID_POINTS_PER_DIMENSION)))
    names = [hp.name for hp in program.hyperparameters]
    return [dict(zip(names, combo)) for combo in itertools.product(*dims)]


def optimize_hyperparameters(program, examples):
    """Argmax-accuracy grid assignment; ties keep the earliest grid point."""
    views = _views(examples)
    best_assignment = None
    best_key = (-1.0, -1.0)
    for assignment in grid_assignments(program):
        acc, f1 = score(program, views, assignment or program.hp_values())
        if (acc, f1) > best_key:
            best_key = (acc, f1)
            best_assignment = assignment
    tuned = program.with_values(best_assignment or {})
    return tuned.with_metrics({"accuracy": best_key[0], "f1": best_key[1]})


def midpoint_baseline(program):
    """The same program shape with every dimension fixed at mid-range."""
    return program.with_values(
        {hp.name: (hp.lo + hp.hi) / 2.0 for hp in program.hyperparameters})


def _failure_report(program, views):
    lines = []
    for i, (view, positive) in enumerate(views):
        label = "positive" if positive else "negative"
        try:
            fired = _classify(program, view, program.hp_values())
        except EvalError as exc:
            lines.append(f"example {i} ({label}): evaluation error: {exc}")
            continue
        if fired != positive:
            lines.append(f"example {i} ({label}): "
                         + ("did not fire" if positive else "fired"))
    return "; ".join(lines) or "all examples classified correctly"


def _check_counts(positives, negatives):
    if not 3 <= len(positives) <= 5 or not 3 <= len(negatives) <= 5:
        raise InvariantError(
            "gesture synthesis needs 3-5 positive and 3-5 negative examples")
    if any(not ex.positive for ex in positives) or any(ex.positive for ex in negatives):
        raise InvariantError("example labels do not match their lists")


def synthesize(description, positives, negatives, gateway):
    """Propose/tune/validate loop returning the best-seen program."""
    _check_counts(positives, negatives)
    examples = list(positives) + list(negatives)
    views = _views(examples)
    failures = []
    best = None
    for _attempt in range(MAX_PROPOSAL_ATTEMPTS):
        try:
            candidate = gateway.propose_gesture_program(
                description, DSL_REFERENCE, positives, negatives, tuple(failures))
        except SynthesisFailed as exc:
            failures.append(str(exc))
            continue
        tuned = optimize_hyperparameters(candidate, examples)
        if best is None or tuned.metrics["accuracy"] > best.metrics["accuracy"]:
            best = tuned
        if tuned.metrics["accuracy"] >= 1.0:
            break
        failures.append(_failure_report(tuned, views))
    if best is None:
        raise SynthesisFailed(
            f"no gesture program candidate parsed for {description!r}")
    return best
