"""On-disk persistence: transcripts, user profiles, gesture libraries.

A finished meal flushes its transcript and writes back the user's profile
(final tree parameter values, synthesized gestures, runtime safety
overrides), so that the next meal for the same profile starts from those
settings.
"""

from __future__ import annotations

import os
from pathlib import Path

from . import config
from .canon import canon_document
from .errors import FeastError, SchemaError
from .gestures import builtin_names
from .safety import SafetyConfig


def data_dir_from_env(default="./feast-data"):
    return Path(os.environ.get("FEAST_DATA_DIR", default))


def profile_after(session) -> config.Profile:
    """The profile a finished session leaves behind."""
    tree_values = {}
    for tree_id in sorted(session.trees):
        tree = session.trees[tree_id]
        tree_values[tree_id] = {pid: tree.parameters[pid].current
                                for pid in sorted(tree.parameters)}
    gestures = tuple(session.gesture_library[name].to_doc()
                     for name in sorted(session.gesture_library)
                     if name not in builtin_names())
    return config.Profile(
        profile_id=session.profile.profile_id,
        safety=session.safety_cfg,
        tree_values=tree_values,
        gestures=gestures,
    )


def persist(session, directory) -> dict:
    """Flush the transcript and the updated profile; returns written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meal_id = session.spec and session.transcript.header["scenario"].get(
        "meal_id", "meal")
    suffix = "" if session.finished else ".aborted"
    transcript_path = directory / f"{meal_id}{suffix}.transcript.jsonl"
    transcript_path.write_text(session.transcript.to_jsonl())
    profile = profile_after(session)
    profile_path = directory / f"profile-{profile.profile_id}.json"
    profile_path.write_text(canon_document(profile.to_doc()))
    return {"transcript": str(transcript_path), "profile": str(profile_path)}


def load_profile(profile_id, directory=None) -> config.Profile:
    """Stored profile from the data directory, else the shipped one."""
    if directory is not None:
        path = Path(directory) / f"profile-{profile_id}.json"
        if path.exists():
            return config.load_profile_file(path)
    try:
        return config.load_profile(profile_id)
    except SchemaError:
        # unseen profile ids start from the shipped defaults
        shipped = config.load_profile("default")
        return config.Profile(profile_id, shipped.safety, {}, ())
