"""User profiles: safety configuration, seeded tree values, gesture library.

A profile is what carries personalization across meals: the trees a new
session starts with are the defaults overlaid with the profile's stored
parameter values, and all safety checks run against the profile's narrowed
domains.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import bt, defaults
from .errors import SchemaError
from .safety import SafetyConfig

PROFILE_IDS = ("default", "cr1", "cr2", "ot")


@dataclass(frozen=True)
class Profile:
    profile_id: str
    safety: SafetyConfig
    tree_values: dict = field(default_factory=dict)   # tree id -> {param: value}
    gestures: tuple = ()                              # gesture program docs

    def to_doc(self):
        return {
            "profile_id": self.profile_id,
            "safety": self.safety.to_doc(),
            "tree_values": self.tree_values,
            "gestures": list(self.gestures),
        }

    @staticmethod
    def from_doc(doc):
        if not isinstance(doc, dict):
            raise SchemaError("profile must be an object")
        extra = set(doc) - {"profile_id", "safety", "tree_values", "gestures"}
        if extra:
            raise SchemaError(f"profile has unknown fields: {sorted(extra)}")
        return Profile(
            profile_id=doc["profile_id"],
            safety=SafetyConfig.from_doc(doc.get("safety", {})),
            tree_values=doc.get("tree_values", {}),
            gestures=tuple(doc.get("gestures", ())),
        )


def _approach_override(lo, hi):
    return bt.RealRange(lo, hi, "m")


def build_profiles():
    """The shipped profiles; documents under profiles/ are generated from these."""
    tested = frozenset(defaults.TESTED_RETRACT_CONFIGS)

    def overrides(utensil, mug, wiper):
        return {
            "TransferUtensil.ApproachDistance": _approach_override(*utensil),
            "TransferMug.ApproachDistance": _approach_override(*mug),
            "TransferWiper.ApproachDistance": _approach_override(*wiper),
        }

    standard = overrides((0.07, 0.15), (0.07, 0.15), (0.07, 0.15))
    profiles = {
        "default": Profile("default", SafetyConfig(tested, dict(standard))),
        "cr1": Profile("cr1", SafetyConfig(tested, dict(standard))),
        "cr2": Profile(
            "cr2", SafetyConfig(tested, dict(standard)),
            tree_values={"TransferUtensil": {"InsideMouthTransfer": True}}),
        # The occupational-therapist profile keeps the wipe further out.
        "ot": Profile(
            "ot",
            SafetyConfig(tested, overrides((0.07, 0.15), (0.07, 0.15), (0.15, 0.25))),
            tree_values={"TransferWiper": {"ApproachDistance": 0.2}}),
    }
    return profiles


def load_profile(name) -> Profile:
    path = resources.files("feastsim").joinpath(f"profiles/{name}.json")
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise SchemaError(f"unknown profile {name!r}") from None
    return Profile.from_doc(json.loads(text))


def load_profile_file(path) -> Profile:
    return Profile.from_doc(json.loads(Path(path).read_text()))


def trees_for_profile(profile) -> dict:
    """Default trees overlaid with the profile's stored parameter values."""
    trees = defaults.load_default_trees()
    # stored gestures widen the gesture-choice domains before value seeding,
    # otherwise a saved custom-gesture binding would fail validation
    gesture_names = [doc["name"] for doc in profile.gestures]
    for tree_id in list(trees):
        tree = trees[tree_id]
        for pid in ("TransferInitiationGesture", "TransferCompletionGesture"):
            if pid in tree.parameters:
                for name in gesture_names:
                    tree = bt.extend_enum_domain(tree, pid, name)
        trees[tree_id] = tree
    for tree_id, values in profile.tree_values.items():
        if tree_id not in trees:
            raise SchemaError(f"profile seeds unknown tree {tree_id!r}")
        trees[tree_id] = bt.seed_parameter_values(trees[tree_id], values)
    return trees
