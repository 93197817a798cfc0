"""Synthetic gesture recordings for desk-scale experiments.

Eight gesture classes over three synthetic "users" with different motion
amplitudes and noise levels. Positives carry the class's kinematic
signature plus bounded noise; negatives are distractors (idle motion,
talking, looking around, a near-miss like a single blink). Everything is
deterministic per (class, user, seed, label, index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .gestures import GestureExample, PerceptionFrame

GESTURE_CLASSES = (
    "head_nod",
    "head_shake",
    "head_tilt",
    "head_still",
    "mouth_open",
    "mouth_continuously_open",
    "three_blinks",
    "three_eyebrow_raises",
)

DT = 0.1   # ~10 Hz sampling


@dataclass(frozen=True)
class UserMotionProfile:
    name: str
    amplitude: float    # scales gesture range of motion
    noise: float        # scales idle head noise


USER_PROFILES = (
    UserMotionProfile("u0", 1.0, 1.0),
    UserMotionProfile("u1", 0.55, 1.3),
    UserMotionProfile("u2", 0.3, 0.8),
)


def _rng(gesture_class, profile, seed, label, index):
    key = [GESTURE_CLASSES.index(gesture_class),
           [p.name for p in USER_PROFILES].index(profile.name)
           if any(p.name == profile.name for p in USER_PROFILES) else 97,
           seed, 0 if label == "positive" else 1, index]
    return np.random.default_rng(np.random.SeedSequence(key))


class _Clip:
    """Mutable signal buffers for one example being synthesized."""

    def __init__(self, rng, duration, noise_scale):
        self.rng = rng
        self.n = int(round(duration / DT)) + 1
        self.t = np.arange(self.n) * DT
        sigma = 0.018 * noise_scale
        self.yaw = rng.normal(0, sigma, self.n)
        self.pitch = rng.normal(0, sigma, self.n)
        self.roll = rng.normal(0, sigma, self.n)
        self.x = rng.normal(0, 0.004, self.n)
        self.y = rng.normal(0, 0.004, self.n)
        self.z = 0.6 + rng.normal(0, 0.004, self.n)
        self.mouth = np.clip(0.04 + np.abs(rng.normal(0, 0.01, self.n)), 0, 1)
        self.eye_l = np.clip(0.75 + rng.normal(0, 0.008, self.n), 0, 1)
        self.eye_r = np.clip(0.75 + rng.normal(0, 0.008, self.n), 0, 1)
        self.brow = np.clip(0.1 + np.abs(rng.normal(0, 0.01, self.n)), 0, 1)

    def segment(self, start_s, length_s):
        mask = (self.t >= start_s) & (self.t <= start_s + length_s)
        return mask

    def oscillate(self, signal, start_s, length_s, amplitude, freq_hz):
        mask = self.segment(start_s, length_s)
        local = self.t[mask] - start_s
        getattr(self, signal)[mask] += amplitude * np.sin(2 * np.pi * freq_hz * local)

    def plateau(self, signal, start_s, length_s, level, ramp_s=0.3):
        arr = getattr(self, signal)
        for i, t in enumerate(self.t):
            u = t - start_s
            if u < 0 or u > length_s:
                continue
            edge = min(u, length_s - u)
            shape = min(edge / ramp_s, 1.0)
            arr[i] = max(arr[i], level * shape)

    def dip(self, signal, center_s, width_s, floor):
        arr = getattr(self, signal)
        mask = np.abs(self.t - center_s) <= width_s / 2
        arr[mask] = floor

    def bump(self, signal, center_s, width_s, level):
        arr = getattr(self, signal)
        mask = np.abs(self.t - center_s) <= width_s / 2
        arr[mask] = np.maximum(arr[mask], level)

    def calm_head(self, sigma=0.003):
        self.yaw = self.rng.normal(0, sigma, self.n)
        self.pitch = self.rng.normal(0, sigma, self.n)
        self.roll = self.rng.normal(0, sigma, self.n)

    def frames(self):
        out = []
        for i in range(self.n):
            out.append(PerceptionFrame(
                t=float(self.t[i]),
                x=float(self.x[i]), y=float(self.y[i]), z=float(self.z[i]),
                yaw=float(self.yaw[i]), pitch=float(self.pitch[i]),
                roll=float(self.roll[i]),
                mouth_open_ratio=float(np.clip(self.mouth[i], 0, 1)),
                eye_aspect_left=float(np.clip(self.eye_l[i], 0, 1)),
                eye_aspect_right=float(np.clip(self.eye_r[i], 0, 1)),
                eyebrow_raise=float(np.clip(self.brow[i], 0, 1)),
            ))
        return tuple(out)


def _mouth_level(profile):
    return min(0.35 + 0.5 * profile.amplitude, 0.95)


def _apply_signature(clip, gesture_class, profile, rng):
    a = profile.amplitude
    start = 1.2 + rng.uniform(0, 0.8)
    if gesture_class == "head_nod":
        clip.oscillate("pitch", start, 2.5, 0.35 * a, 1.1)
    elif gesture_class == "head_shake":
        clip.oscillate("yaw", start, 2.8, 0.4 * a, 1.2)
    elif gesture_class == "head_tilt":
        clip.oscillate("roll", start, 2.8, 0.3 * a, 0.9)
    elif gesture_class == "head_still":
        clip.calm_head()
    elif gesture_class == "mouth_open":
        clip.plateau("mouth", start, 2.0, _mouth_level(profile))
    elif gesture_class == "mouth_continuously_open":
        clip.plateau("mouth", start, 5.5, _mouth_level(profile))
    elif gesture_class == "three_blinks":
        floor = max(0.75 - 0.6 * a, 0.02)
        for k in range(3):
            center = start + k * (0.9 + rng.uniform(0, 0.2))
            clip.dip("eye_l", center, 0.3, floor)
            clip.dip("eye_r", center, 0.3, floor)
    elif gesture_class == "three_eyebrow_raises":
        level = min(0.1 + 0.7 * a, 0.98)
        for k in range(3):
            center = start + k * (1.0 + rng.uniform(0, 0.2))
            clip.bump("brow", center, 0.4, level)
    else:
        raise InvariantError(f"unknown gesture class {gesture_class!r}")


_DISTRACTORS = {
    "head_nod": ("idle", "talking", "look_around", "cross_shake"),
    "head_shake": ("idle", "talking", "look_around", "cross_nod"),
    "head_tilt": ("idle", "talking", "look_around", "cross_nod"),
    "head_still": ("restless", "look_around", "talking_restless"),
    "mouth_open": ("idle", "talking", "talking", "look_around"),
    "mouth_continuously_open": ("talking", "short_open", "idle", "talking"),
    "three_blinks": ("idle", "single_blink", "talking", "look_around"),
    "three_eyebrow_raises": ("idle", "single_raise", "talking", "look_around"),
}


def _apply_distractor(clip, kind, profile, rng):
    a = profile.amplitude
    start = 1.2 + rng.uniform(0, 0.8)
    if kind == "idle":
        return
    if kind == "talking":
        for _ in range(rng.integers(3, 6)):
            center = rng.uniform(0.8, clip.t[-1] - 0.8)
            clip.bump("mouth", center, rng.uniform(0.2, 0.5), rng.uniform(0.15, 0.3))
        return
    if kind == "look_around":
        # one slow sweep to a side and back: a single excursion, not an oscillation
        clip.oscillate("yaw", start, 4.0, 0.35 * max(a, 0.5), 0.125)
        clip.oscillate("pitch", start, 4.0, 0.15 * max(a, 0.5), 0.125)
        return
    if kind == "restless":
        clip.oscillate("yaw", 0.2, clip.t[-1] - 0.4, 0.06, 0.2)
        clip.yaw += clip.rng.normal(0, 0.02, clip.n)
        clip.pitch += clip.rng.normal(0, 0.02, clip.n)
        return
    if kind == "talking_restless":
        _apply_distractor(clip, "talking", profile, rng)
        _apply_distractor(clip, "restless", profile, rng)
        return
    if kind == "cross_shake":
        clip.oscillate("yaw", start, 2.8, 0.4 * a, 1.2)
        return
    if kind == "cross_nod":
        clip.oscillate("pitch", start, 2.5, 0.35 * a, 1.1)
        return
    if kind == "short_open":
        clip.plateau("mouth", start, 1.3, _mouth_level(profile))
        return
    if kind == "single_blink":
        clip.dip("eye_l", start, 0.3, max(0.75 - 0.6 * a, 0.02))
        clip.dip("eye_r", start, 0.3, max(0.75 - 0.6 * a, 0.02))
        return
    if kind == "single_raise":
        clip.bump("brow", start, 0.4, min(0.1 + 0.7 * a, 0.98))
        return
    raise InvariantError(f"unknown distractor {kind!r}")


def generate_synthetic_gesture(gesture_class, rng_seed, label,
                               profile=USER_PROFILES[0], index=0) -> GestureExample:
    """One deterministic synthetic example of the given class and label."""
    if gesture_class not in GESTURE_CLASSES:
        raise InvariantError(f"unknown gesture class {gesture_class!r}")
    rng = _rng(gesture_class, profile, rng_seed, label, index)
    minimum = 7.2 if gesture_class in ("head_still", "mouth_continuously_open") else 5.5
    duration = rng.uniform(minimum, minimum + 2.0)
    clip = _Clip(rng, duration, profile.noise)
    if label == "positive":
        _apply_signature(clip, gesture_class, profile, rng)
    else:
        kinds = _DISTRACTORS[gesture_class]
        _apply_distractor(clip, kinds[int(rng.integers(len(kinds)))], profile, rng)
    return GestureExample(label, clip.frames())


def example_set(gesture_class, profile, seed, n_pos=5, n_neg=5):
    """The (positives, negatives) lists used for synthesis and the ablation."""
    positives = [generate_synthetic_gesture(gesture_class, seed, "positive", profile, i)
                 for i in range(n_pos)]
    negatives = [generate_synthetic_gesture(gesture_class, seed, "negative", profile, i)
                 for i in range(n_neg)]
    return positives, negatives


def class_description(gesture_class):
    return {
        "head_nod": "nodding my head up and down",
        "head_shake": "shaking my head from left to right",
        "head_tilt": "tilting my head from side to side",
        "head_still": "holding my head still for five seconds",
        "mouth_open": "opening my mouth wide",
        "mouth_continuously_open": "keeping my mouth open for five seconds",
        "three_blinks": "blinking three times in a row",
        "three_eyebrow_raises": "raising my eyebrows three times",
    }[gesture_class]
