"""Builders for the shipped default skill trees.

These construct the seven skill trees plus the task-selection page tree.
The canonical JSON documents under ``feastsim/trees/`` are generated from
these builders (see ``python -m feastsim.gen_data``); ``load_default_trees``
reads the shipped documents so the on-disk schema is what actually runs.
"""

from __future__ import annotations

import json
from importlib import resources

from .bt import (
    BehaviorTree,
    BoolDomain,
    BTNode,
    BTParameter,
    EnumDomain,
    IntRange,
    RealRange,
    load_tree,
)

SKILL_IDS = (
    "PickTool",
    "PlaceTool",
    "AcquireBite",
    "TransferUtensil",
    "TransferMug",
    "TransferWiper",
    "Retract",
)
# Task-selection page behavior is parameterized the same way as a skill.
TREE_IDS = SKILL_IDS + ("TaskSelection",)

TRANSFER_TREES = ("TransferUtensil", "TransferMug", "TransferWiper")

# Arm configurations from which an added Retract step has been vetted.
TESTED_RETRACT_CONFIGS = ("ready-to-transfer", "tool-mount", "retract")

BUILTIN_GESTURES = ("mouth_open", "head_nod")


def _speed(what):
    return BTParameter(
        id="Speed", name="Speed",
        description=f"How fast the robot arm moves {what}.",
        domain=EnumDomain(("low", "medium", "high")),
        default="medium", current="medium")


def _confirm(what):
    return BTParameter(
        id="AskUserForConfirmation", name="Ask User For Confirmation",
        description=f"Whether a confirmation page asks the user to continue before {what}.",
        domain=BoolDomain(), default=True, current=True)


def _autocontinue(what):
    return BTParameter(
        id="TimeToWaitBeforeAutocontinue", name="Time To Wait Before Autocontinue",
        description=f"Seconds the {what} waits before automatically continuing.",
        domain=IntRange(5, 100, "s"), default=10, current=10)


def _voice():
    return BTParameter(
        id="VoicePromptsEnabled", name="Voice Prompts Enabled",
        description="Whether the robot announces its steps out loud during this skill.",
        domain=BoolDomain(), default=True, current=True)


def _initiation():
    return BTParameter(
        id="TransferInitiationInteraction", name="Transfer Initiation Interaction",
        description="How the user signals readiness for the tool to approach the "
                    "mouth: a gesture, a button press, or automatically.",
        domain=EnumDomain(("gesture", "button", "auto")),
        default="gesture", current="gesture")


def _initiation_gesture():
    return BTParameter(
        id="TransferInitiationGesture", name="Transfer Initiation Gesture",
        description="Gesture that starts the approach when initiation is set to gesture.",
        domain=EnumDomain(BUILTIN_GESTURES), default="mouth_open", current="mouth_open")


def _completion(sense_means):
    return BTParameter(
        id="TransferCompletionInteraction", name="Transfer Completion Interaction",
        description="How the robot decides the transfer is finished: sense "
                    f"({sense_means}), button, or auto_timeout.",
        domain=EnumDomain(("sense", "button", "auto_timeout")),
        default="sense", current="sense")


def _completion_gesture(what):
    return BTParameter(
        id="TransferCompletionGesture", name="Transfer Completion Gesture",
        description=f"Gesture that signals the {what} is finished when completion "
                    "is set to sense.",
        domain=EnumDomain(("head_nod", "mouth_open")),
        default="head_nod", current="head_nod")


def _approach(tool):
    return BTParameter(
        id="ApproachDistance", name="Approach Distance",
        description=f"Distance from the mouth, in meters, at which the {tool} stops "
                    "during outside-mouth transfer.",
        domain=RealRange(0.0, 0.25, "m"), default=0.1, current=0.1)


def build_pick_tool():
    params = [_speed("while picking up a tool")]
    root = BTNode(
        id="pick_tool", kind="Sequence", name="pick tool",
        description="Grasp the requested tool and engage its connectors.",
        children=(
            BTNode(id="locate_tool", kind="Action", name="locate the tool",
                   description="Finds the requested tool: fixed mount position for "
                               "the utensil and wiper, marker detection for the mug."),
            BTNode(id="grasp_tool", kind="Action", name="grasp the tool",
                   description="Executes the grasp and engages the tool connectors.",
                   param_refs=("Speed",), config_label="tool-mount"),
        ))
    return _tree("PickTool", root, params)


def build_place_tool():
    params = [_speed("while returning a tool")]
    root = BTNode(
        id="place_tool", kind="Sequence", name="place tool",
        description="Return the held tool to its last known location.",
        children=(
            BTNode(id="stow_tool", kind="Action", name="return the tool",
                   description="Returns the held tool: the mount for the utensil and "
                               "wiper, the original pickup position for the mug.",
                   param_refs=("Speed",), config_label="tool-mount"),
        ))
    return _tree("PlaceTool", root, params)


def build_acquire_bite():
    params = [
        _speed("while picking up food from the plate"),
        _autocontinue("bite-acquisition page"),
        _confirm("the robot picks up a bite"),
        BTParameter(
            id="DippingDepth", name="Dipping Depth",
            description="How deep a food item is dipped into a sauce, in meters.",
            domain=RealRange(0.0, 0.05, "m"), default=0.02, current=0.02),
        BTParameter(
            id="SkewerAngle", name="Skewer Angle",
            description="Orientation of the fork tines when skewering a food item.",
            domain=EnumDomain(("horizontal", "vertical")),
            default="horizontal", current="horizontal"),
    ]
    root = BTNode(
        id="acquire_bite", kind="Sequence", name="acquire bite",
        description="Pick the next bite up from the plate.",
        children=(
            BTNode(id="holding_utensil", kind="Condition", name="holding utensil",
                   description="Checks that the feeding utensil is mounted in the gripper."),
            BTNode(id="detect_plate", kind="Action", name="detect plate",
                   description="Looks at the plate and identifies the food items on it.",
                   config_label="above-plate"),
            BTNode(id="select_bite", kind="Action", name="select next bite",
                   description="Chooses the next bite according to the user's ordering "
                               "preference and bite history."),
            BTNode(id="confirm_acquisition", kind="Action",
                   name="await acquisition confirmation",
                   description="Shows the bite-acquisition page and waits for the user "
                               "to confirm or override, or for the countdown to elapse.",
                   param_refs=("AskUserForConfirmation", "TimeToWaitBeforeAutocontinue")),
            BTNode(id="execute_acquisition", kind="Action", name="pick up the bite",
                   description="Runs the selected manipulation action (skewer, scoop, "
                               "twirl, or dip) to load the bite onto the fork.",
                   param_refs=("Speed", "DippingDepth", "SkewerAngle"),
                   config_label="above-plate"),
        ))
    return _tree("AcquireBite", root, params)


def _build_transfer(skill_id, tool, at_mouth_label, near_user_label, *,
                    inside_mouth=False, completion_gesture=None, sense_means=""):
    params = [
        _speed(f"while bringing the {tool} to the user"),
        _confirm(f"the {tool} transfer starts"),
        _autocontinue("transfer confirmation page"),
        _voice(),
        _initiation(),
        _initiation_gesture(),
        _completion(sense_means),
        _approach(tool),
    ]
    if completion_gesture:
        params.append(_completion_gesture(completion_gesture))
    if inside_mouth:
        params.append(BTParameter(
            id="InsideMouthTransfer", name="Inside Mouth Transfer",
            description="Whether the bite is placed inside the mouth under compliant "
                        "control instead of stopping outside.",
            domain=BoolDomain(), default=False, current=False))

    completion_refs = ["TransferCompletionInteraction"]
    if completion_gesture:
        completion_refs.append("TransferCompletionGesture")
    approach_refs = ["Speed", "ApproachDistance"]
    if inside_mouth:
        approach_refs.append("InsideMouthTransfer")

    root = BTNode(
        id=skill_id.lower(), kind="Sequence", name=f"transfer {tool}",
        description=f"Bring the {tool} to the user's mouth and finish the transfer.",
        children=(
            BTNode(id="confirm_transfer", kind="Action",
                   name="await transfer confirmation",
                   description="Shows the transfer confirmation page and waits for the "
                               "user to confirm readiness.",
                   param_refs=("AskUserForConfirmation", "TimeToWaitBeforeAutocontinue")),
            BTNode(id="move_ready", kind="Action", name="move to ready-to-transfer",
                   description="Moves the arm to the ready-to-transfer configuration "
                               "near the user.",
                   param_refs=("Speed",), config_label="ready-to-transfer"),
            BTNode(id="announce_open", kind="Action", name="announce readiness prompt",
                   description="Says 'Please open your mouth when ready.'",
                   param_refs=("VoicePromptsEnabled",)),
            BTNode(id="await_initiation", kind="WaitForGesture",
                   name="wait for transfer initiation",
                   description="Waits for the configured gesture, a button press, or "
                               "continues automatically, per the initiation interaction.",
                   param_refs=("TransferInitiationInteraction",
                               "TransferInitiationGesture")),
            BTNode(id="approach_mouth", kind="Action", name="approach the mouth",
                   description=f"Brings the {tool} to the configured distance from "
                               "the mouth.",
                   param_refs=tuple(approach_refs), config_label=at_mouth_label),
            BTNode(id="announce_ready", kind="Action", name="announce ready",
                   description="Says 'Ready for transfer.'",
                   param_refs=("VoicePromptsEnabled",)),
            BTNode(id="await_completion", kind="Action", name="wait for completion",
                   description="Waits for the transfer to finish per the completion "
                               "interaction.",
                   param_refs=tuple(completion_refs)),
            BTNode(id="withdraw", kind="Action", name="withdraw",
                   description="Moves the arm back after the transfer.",
                   param_refs=("Speed",), config_label=near_user_label),
        ))
    return _tree(skill_id, root, params)


def build_transfer_utensil():
    return _build_transfer(
        "TransferUtensil", "fork", "at-mouth", "ready-to-transfer",
        inside_mouth=True, sense_means="bite detected by the force sensor")


def build_transfer_mug():
    return _build_transfer(
        "TransferMug", "straw", "mug-at-mouth", "mug-near-user",
        completion_gesture="sip", sense_means="completion gesture detected")


def build_transfer_wiper():
    return _build_transfer(
        "TransferWiper", "wipe", "wiper-at-mouth", "wiper-near-user",
        completion_gesture="wipe", sense_means="completion gesture detected")


def build_retract():
    params = [_speed("while retracting")]
    root = BTNode(
        id="retract", kind="Sequence", name="retract",
        description="Move the arm to the retract configuration with an empty gripper.",
        children=(
            BTNode(id="move_retract", kind="Action", name="move to retract",
                   description="Moves the arm to the retract configuration.",
                   param_refs=("Speed",), config_label="retract"),
        ))
    return _tree("Retract", root, params)


def build_task_selection():
    params = [
        _autocontinue("task-selection page"),
        BTParameter(
            id="AutoContinueEnabled", name="Auto Continue Enabled",
            description="Whether the task-selection page automatically repeats the "
                        "last bite or sip when the countdown elapses.",
            domain=BoolDomain(), default=True, current=True),
    ]
    root = BTNode(
        id="task_selection", kind="Sequence", name="task selection",
        description="Present the task-selection page.",
        children=(
            BTNode(id="await_task", kind="Action", name="await task selection",
                   description="Shows the task-selection page with bite, sip, wipe, "
                               "and finish buttons.",
                   param_refs=("TimeToWaitBeforeAutocontinue", "AutoContinueEnabled")),
        ))
    return _tree("TaskSelection", root, params)


def _tree(skill_id, root, params):
    return BehaviorTree(skill_id=skill_id, root=root,
                        parameters={p.id: p for p in params}, version=0)


_BUILDERS = {
    "PickTool": build_pick_tool,
    "PlaceTool": build_place_tool,
    "AcquireBite": build_acquire_bite,
    "TransferUtensil": build_transfer_utensil,
    "TransferMug": build_transfer_mug,
    "TransferWiper": build_transfer_wiper,
    "Retract": build_retract,
    "TaskSelection": build_task_selection,
}


def build_default_trees():
    return {tree_id: _BUILDERS[tree_id]() for tree_id in TREE_IDS}


def load_default_trees():
    """Load the shipped tree documents (canonical JSON under trees/)."""
    trees = {}
    for tree_id in TREE_IDS:
        text = resources.files("feastsim").joinpath(f"trees/{tree_id}.json").read_text()
        trees[tree_id] = load_tree(json.loads(text))
    return trees
