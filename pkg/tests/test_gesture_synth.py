import itertools

import numpy as np
import pytest

from feastsim import gesture_data as gd
from feastsim import gesture_synth as gs
from feastsim.errors import InvariantError, SynthesisFailed
from feastsim.gateway import Gateway
from feastsim.gateway_stub import StubAdapter
from feastsim.gestures import GestureProgram, Hyperparameter, evaluate


@pytest.fixture
def gateway():
    return Gateway(StubAdapter())


def two_hp_program():
    return GestureProgram(
        name="shake", description="shaking head",
        source="(>= (oscillation_count (signal yaw) (hp amp) (hp win)) 3)",
        hyperparameters=(Hyperparameter("amp", 0.1, 0.7, 0.4),
                         Hyperparameter("win", 1.5, 6.0, 3.75)))


class TestGridSearch:
    def test_one_dimension_has_exactly_ten_points(self):
        program = GestureProgram(
            name="open", description="mouth open",
            source="(> (mean (signal mouth_open_ratio) 0.3) (hp th))",
            hyperparameters=(Hyperparameter("th", 0.2, 0.9, 0.5),))
        assert len(gs.grid_assignments(program)) == 10

    def test_zero_dimensions_unchanged(self):
        program = GestureProgram(
            name="open", description="mouth open",
            source="(> (mean (signal mouth_open_ratio) 0.3) 0.6)")
        assert gs.grid_assignments(program) == [{}]
        pos, neg = gd.example_set("mouth_open", gd.USER_PROFILES[0], 0, 3, 3)
        tuned = gs.optimize_hyperparameters(program, pos + neg)
        assert tuned.source == program.source
        assert tuned.metrics is not None

    def test_fixed_dimension_collapses(self):
        program = GestureProgram(
            name="open", description="mouth open",
            source="(> (mean (signal mouth_open_ratio) 0.3) (hp th))",
            hyperparameters=(Hyperparameter("th", 0.5, 0.5, 0.5),))
        assert gs.grid_assignments(program) == [{"th": 0.5}]

    def test_two_dimensions_match_exhaustive_oracle(self):
        # independent exhaustive evaluation over the same 100-point grid
        program = two_hp_program()
        profile = gd.USER_PROFILES[1]
        pos, neg = gd.example_set("head_shake", profile, 2, 4, 4)
        examples = pos + neg
        tuned = gs.optimize_hyperparameters(program, examples)

        best_acc = -1.0
        best_assignment = None
        for amp, win in itertools.product(np.linspace(0.1, 0.7, 10),
                                          np.linspace(1.5, 6.0, 10)):
            correct = 0
            for ex in examples:
                try:
                    fired = evaluate(program, ex, {"amp": amp, "win": win})
                except gs.EvalError:
                    continue   # evaluation errors count as misclassifications
                correct += int(fired == ex.positive)
            acc = correct / len(examples)
            if acc > best_acc:
                best_acc = acc
                best_assignment = {"amp": amp, "win": win}
        assert tuned.metrics["accuracy"] == pytest.approx(best_acc)
        assert tuned.hp_values() == pytest.approx(best_assignment)

    def test_returned_accuracy_dominates_every_grid_point(self):
        program = two_hp_program()
        pos, neg = gd.example_set("head_shake", gd.USER_PROFILES[2], 1, 4, 4)
        examples = pos + neg
        tuned = gs.optimize_hyperparameters(program, examples)
        for assignment in gs.grid_assignments(program):
            acc, _ = gs.score(program, examples, assignment)
            assert tuned.metrics["accuracy"] >= acc


class TestSynthesize:
    def test_continuous_mouth_open(self, gateway):
        pos, neg = gd.example_set("mouth_continuously_open", gd.USER_PROFILES[1], 0)
        program = gs.synthesize("Mouth open for five seconds", pos, neg, gateway)
        assert "hold" in program.source
        assert program.metrics is not None and "accuracy" in program.metrics

    def test_head_nod_reaches_full_training_accuracy(self, gateway):
        pos, neg = gd.example_set("head_nod", gd.USER_PROFILES[0], 0)
        program = gs.synthesize("head nod (up-down)", pos, neg, gateway)
        assert program.metrics["accuracy"] == 1.0

    def test_indistinguishable_classes_stay_at_chance(self, gateway):
        pos, _ = gd.example_set("head_nod", gd.USER_PROFILES[0], 5)
        negatives = [gd.GestureExample("negative", ex.frames) for ex in pos[:4]]
        program = gs.synthesize("nodding my head", pos[:4], negatives, gateway)
        assert program.metrics["accuracy"] <= 0.5 + 1e-9

    def test_example_count_enforced(self, gateway):
        pos, neg = gd.example_set("head_nod", gd.USER_PROFILES[0], 0, 2, 5)
        with pytest.raises(InvariantError):
            gs.synthesize("nod", pos, neg, gateway)

    def test_unknown_description_fails_after_retries(self, gateway):
        pos, neg = gd.example_set("head_nod", gd.USER_PROFILES[0], 0)
        with pytest.raises(SynthesisFailed):
            gs.synthesize("zzqq", pos, neg, gateway)

    def test_deterministic(self, gateway):
        pos, neg = gd.example_set("three_blinks", gd.USER_PROFILES[2], 3)
        a = gs.synthesize("blinking three times", pos, neg, gateway)
        b = gs.synthesize("blinking three times", pos, neg, gateway)
        assert a == b
        assert a.to_doc() == b.to_doc()


class TestAblationProperty:
    def test_tuned_beats_midpoint_baseline(self, gateway):
        # desk-scale analogue over a seed subset; the acceptance suite runs
        # the full 8x3x5 sweep
        tuned_scores, base_scores = [], []
        for cls in gd.GESTURE_CLASSES[:4]:
            for profile in gd.USER_PROFILES:
                pos, neg = gd.example_set(cls, profile, 0)
                program = gs.synthesize(gd.class_description(cls), pos, neg, gateway)
                _, f1_tuned = gs.score(program, pos + neg)
                _, f1_base = gs.score(gs.midpoint_baseline(program), pos + neg)
                tuned_scores.append(f1_tuned)
                base_scores.append(f1_base)
        assert np.mean(tuned_scores) >= 0.85
        assert np.mean(tuned_scores) - np.mean(base_scores) >= 0.1
