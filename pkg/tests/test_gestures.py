import numpy as np
import pytest

from feastsim import gesture_data as gd
from feastsim import gestures
from feastsim.errors import EvalError, InvariantError, SchemaError, UnknownGesture
from feastsim.gestures import (
    DetectorRun,
    GestureExample,
    GestureProgram,
    Hyperparameter,
    PerceptionFrame,
    builtin,
    detections,
    evaluate,
    run_detector,
)


def frames_from(t, **signals):
    """Build frames from parallel arrays."""
    out = []
    for i, ti in enumerate(t):
        fields = {k: float(v[i]) for k, v in signals.items()}
        out.append(PerceptionFrame(t=float(ti), **fields))
    return tuple(out)


def ramp_example(peak=0.9, duration=5.0):
    t = np.arange(0, duration, 0.1)
    ratio = np.clip(np.linspace(0, peak, len(t)), 0, 1)
    return GestureExample("positive", frames_from(t, mouth_open_ratio=ratio))


def flat_example(duration=5.0):
    t = np.arange(0, duration, 0.1)
    return GestureExample("negative", frames_from(t, mouth_open_ratio=np.zeros(len(t))))


class TestFrameTypes:
    def test_ratio_bounds_enforced(self):
        with pytest.raises(InvariantError):
            PerceptionFrame(t=0.0, mouth_open_ratio=1.4)

    def test_example_needs_increasing_times(self):
        f = [PerceptionFrame(t=0.0), PerceptionFrame(t=0.0)]
        with pytest.raises(InvariantError):
            GestureExample("positive", tuple(f))

    def test_example_duration_bounds(self):
        f = [PerceptionFrame(t=0.0), PerceptionFrame(t=0.5)]
        with pytest.raises(InvariantError):
            GestureExample("positive", tuple(f))

    def test_round_trip(self):
        ex = ramp_example()
        assert GestureExample.from_doc(ex.to_doc()) == ex


class TestEvaluate:
    def test_mouth_open_fires_on_ramp(self):
        assert evaluate(builtin("mouth_open"), ramp_example()) is True

    def test_mouth_open_silent_on_zeros(self):
        assert evaluate(builtin("mouth_open"), flat_example()) is False

    def test_head_shake_on_synthetic_sinusoid(self):
        # oracle: count full oscillation cycles by zero crossings of the
        # clean signal; the detector must agree that >= 3 cycles happened
        t = np.arange(0, 5.0, 0.1)
        yaw = 0.4 * np.sin(2 * np.pi * 1.0 * t)
        crossings = np.count_nonzero(np.diff(np.sign(yaw + 1e-12)))
        assert crossings / 2 >= 3
        program = GestureProgram(
            name="head_shake", description="shaking head",
            source="(>= (oscillation_count (signal yaw) (hp amp) (hp win)) 3)",
            hyperparameters=(Hyperparameter("amp", 0.1, 0.7, 0.3),
                             Hyperparameter("win", 1.5, 6.0, 4.0)))
        example = GestureExample("positive", frames_from(t, yaw=yaw))
        assert evaluate(program, example) is True

    def test_oscillation_ignores_single_sweep(self):
        t = np.arange(0, 5.0, 0.1)
        yaw = 0.4 * np.sin(2 * np.pi * 0.1 * t)   # half a cycle
        program = GestureProgram(
            name="head_shake", description="shaking head",
            source="(>= (oscillation_count (signal yaw) (hp amp) (hp win)) 3)",
            hyperparameters=(Hyperparameter("amp", 0.1, 0.7, 0.3),
                             Hyperparameter("win", 1.5, 6.0, 4.0)))
        example = GestureExample("negative", frames_from(t, yaw=yaw))
        assert evaluate(program, example) is False

    def test_window_longer_than_example_raises(self):
        program = GestureProgram(
            name="x", description="x",
            source="(> (mean (signal yaw) 20.0) 0.5)")
        with pytest.raises(EvalError):
            evaluate(program, ramp_example(duration=5.0))

    def test_hold_requires_sustained_truth(self):
        program = GestureProgram(
            name="hold_open", description="mouth open for a while",
            source="(hold (> (signal mouth_open_ratio) 0.5) 2.0)")
        t = np.arange(0, 6.0, 0.1)
        sustained = np.where((t > 1.0) & (t < 4.0), 0.9, 0.0)
        brief = np.where((t > 1.0) & (t < 2.0), 0.9, 0.0)
        assert evaluate(program, GestureExample(
            "positive", frames_from(t, mouth_open_ratio=sustained))) is True
        assert evaluate(program, GestureExample(
            "negative", frames_from(t, mouth_open_ratio=brief))) is False

    def test_hold_progress_invalidated_by_gap(self):
        program = GestureProgram(
            name="hold_open", description="mouth open for a while",
            source="(hold (> (signal mouth_open_ratio) 0.5) 2.0)")
        # 1.5 s of truth, a 1.5 s dropout, 1.5 s of truth: never 2 s continuous
        t = np.concatenate([np.arange(0, 1.5, 0.1), np.arange(3.0, 4.5, 0.1)])
        ratio = np.full(len(t), 0.9)
        assert evaluate(program, GestureExample(
            "positive", frames_from(t, mouth_open_ratio=ratio))) is False

    def test_invalid_frames_do_not_fire(self):
        t = np.arange(0, 5.0, 0.1)
        frames = [PerceptionFrame(t=float(ti), mouth_open_ratio=0.9, valid=False)
                  for ti in t]
        assert evaluate(builtin("mouth_open"),
                        GestureExample("positive", tuple(frames))) is False

    def test_threshold_monotonicity_for_mouth_open(self):
        # raising the threshold must never turn a non-firing example into firing
        examples = [flat_example(), ramp_example(0.5), ramp_example(0.9),
                    gd.generate_synthetic_gesture("mouth_open", 3, "negative")]
        program = builtin("mouth_open")
        thresholds = np.linspace(0.2, 0.9, 8)
        for example in examples:
            fired = [evaluate(program, example, {"open_threshold": th})
                     for th in thresholds]
            for lo_fired, hi_fired in zip(fired, fired[1:]):
                assert not (hi_fired and not lo_fired)


class TestDsl:
    def test_parse_rejects_unknown_forms(self):
        with pytest.raises(SchemaError):
            GestureProgram(name="x", description="x", source="(frobnicate 1 2)")

    def test_parse_rejects_unbalanced(self):
        with pytest.raises(SchemaError):
            GestureProgram(name="x", description="x", source="(> (signal yaw) 0.5")

    def test_undeclared_hyperparameter_rejected(self):
        with pytest.raises(InvariantError):
            GestureProgram(name="x", description="x",
                           source="(> (signal yaw) (hp mystery))")

    def test_hyperparameter_value_within_bounds(self):
        with pytest.raises(InvariantError):
            Hyperparameter("a", 0.0, 1.0, 2.0)

    def test_sequence_and_debounce_and_booleans(self):
        program = GestureProgram(
            name="combo", description="nod then open",
            source="(sequence (> (signal pitch) 0.2) "
                   "(debounce (> (signal mouth_open_ratio) 0.5) 2) 3.0)")
        t = np.arange(0, 6.0, 0.1)
        pitch = np.where(t < 1.0, 0.4, 0.0)
        mouth = np.where((t > 2.0) & (t < 2.5), 0.9, 0.0)
        ex = GestureExample("positive", frames_from(t, pitch=pitch,
                                                    mouth_open_ratio=mouth))
        assert evaluate(program, ex) is True
        late_mouth = np.where(t > 5.0, 0.9, 0.0)
        ex2 = GestureExample("negative", frames_from(t, pitch=pitch,
                                                     mouth_open_ratio=late_mouth))
        assert evaluate(program, ex2) is False

    def test_program_doc_round_trip(self):
        program = builtin("head_nod").with_metrics({"accuracy": 1.0, "f1": 1.0})
        again = GestureProgram.from_doc(program.to_doc())
        assert again == program


class TestBuiltins:
    def test_mouth_open_default_threshold(self):
        program = builtin("mouth_open")
        assert program.hp_values()["open_threshold"] == pytest.approx(0.6)

    def test_mouth_open_ignores_talking(self):
        # talking stays below 0.5 open ratio by construction; the shipped
        # threshold must not fire on it
        for seed in range(5):
            ex = gd.generate_synthetic_gesture("mouth_open", seed, "negative")
            assert evaluate(builtin("mouth_open"), ex) is False

    def test_head_nod_is_pitch_oscillation(self):
        assert "pitch" in builtin("head_nod").source
        ex = gd.generate_synthetic_gesture("head_nod", 0, "positive")
        assert evaluate(builtin("head_nod"), ex) is True

    def test_unknown_builtin(self):
        with pytest.raises(UnknownGesture):
            builtin("wave")


class TestDetectorRun:
    def test_fires_at_first_qualifying_frame(self):
        t = np.arange(0, 5.0, 0.1)
        ratio = np.where(t >= 1.0, 0.95, 0.0)
        frames = frames_from(t, mouth_open_ratio=ratio)
        outcome = run_detector(builtin("mouth_open"), frames, timeout_s=10.0)
        assert outcome.status == gestures.FIRED
        assert outcome.fired_at == pytest.approx(1.3, abs=0.2)

    def test_timeout_on_inert_stream(self):
        t = np.arange(0, 8.0, 0.1)
        frames = frames_from(t, mouth_open_ratio=np.zeros(len(t)))
        outcome = run_detector(builtin("mouth_open"), frames, timeout_s=5.0)
        assert outcome.status == gestures.TIMED_OUT

    def test_cancel_before_fire(self):
        t = np.arange(0, 8.0, 0.1)
        frames = frames_from(t, mouth_open_ratio=np.zeros(len(t)))
        cancel_at = {"n": 0}

        def cancel():
            cancel_at["n"] += 1
            return cancel_at["n"] > 20   # ~2 s in

        outcome = run_detector(builtin("mouth_open"), frames, timeout_s=30.0,
                               cancel_signal=cancel)
        assert outcome.status == gestures.CANCELLED
        assert outcome.fired_at is None

    def test_stream_end_raises(self):
        t = np.arange(0, 3.0, 0.1)
        frames = frames_from(t, mouth_open_ratio=np.zeros(len(t)))
        with pytest.raises(gestures.StreamEnded):
            run_detector(builtin("mouth_open"), frames, timeout_s=30.0)

    def test_incremental_feed(self):
        run = DetectorRun(builtin("mouth_open"), timeout_s=10.0)
        for i in range(30):
            outcome = run.feed(PerceptionFrame(t=i * 0.1, mouth_open_ratio=0.0))
            assert outcome is None
        outcome = None
        i = 30
        while outcome is None:
            outcome = run.feed(PerceptionFrame(t=i * 0.1, mouth_open_ratio=0.95))
            i += 1
        assert outcome.status == gestures.FIRED


class TestSyntheticGenerator:
    def test_deterministic(self):
        a = gd.generate_synthetic_gesture("head_shake", 7, "positive")
        b = gd.generate_synthetic_gesture("head_shake", 7, "positive")
        assert a == b

    def test_head_shake_positive_has_three_cycles(self):
        # generator-spec oracle: zero crossings of the yaw signal
        ex = gd.generate_synthetic_gesture("head_shake", 7, "positive")
        yaw = np.array([f.yaw for f in ex.frames])
        yaw = yaw - yaw.mean()
        big = yaw[np.abs(yaw) > 0.05]
        crossings = np.count_nonzero(np.diff(np.sign(big)))
        assert crossings / 2 >= 3

    def test_head_still_negative_moves(self):
        ex = gd.generate_synthetic_gesture("head_still", 1, "negative")
        yaw = np.array([f.yaw for f in ex.frames])
        still_pos = gd.generate_synthetic_gesture("head_still", 1, "positive")
        still_yaw = np.array([f.yaw for f in still_pos.frames])
        assert yaw.std() > 3 * still_yaw.std()

    def test_unknown_class(self):
        with pytest.raises(InvariantError):
            gd.generate_synthetic_gesture("wave", 0, "positive")

    def test_profiles_scale_amplitude(self):
        big = gd.generate_synthetic_gesture("head_shake", 3, "positive",
                                            gd.USER_PROFILES[0])
        small = gd.generate_synthetic_gesture("head_shake", 3, "positive",
                                              gd.USER_PROFILES[2])
        spread = lambda ex: np.ptp([f.yaw for f in ex.frames])
        assert spread(big) > 2 * spread(small)
