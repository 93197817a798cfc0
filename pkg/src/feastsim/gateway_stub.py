"""Deterministic rule-based adapter.

An ordered table of normalized-phrase rules maps personalization requests to
canned structured updates; transparency queries are answered from structural
facts in the snapshot (current parameter values, domains, log tails) and
never from invented state. Identical inputs produce identical outputs, which
is what makes session transcripts byte-replayable.
"""

from __future__ import annotations

import json
import re

from . import gateway as gw
from .canon import canon_line


def normalize(text):
    return re.sub(r"[^a-z0-9 ]+", " ", text.lower()).split()


def norm_text(text):
    return " ".join(normalize(text))


def slugify(text):
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def _set(tree, param, value):
    return {"kind": "set_parameter", "tree": tree, "param": param, "value": value}


def _retract_spec():
    return {
        "kind": "Retract",
        "name": "retract after transfer",
        "description": "Moves the arm to the retract configuration after the transfer.",
        "config_label": "retract",
    }


def _add_retract(trees, tree_id):
    tree = trees[tree_id]
    return {"kind": "add_node", "tree": tree_id, "parent": tree.root.id,
            "index": len(tree.root.children), "node": _retract_spec()}


def _effective_lo(trees, cfg, tree_id, param_id):
    lo = trees[tree_id].parameters[param_id].domain.lo
    override = cfg.override_for(tree_id, param_id) if cfg is not None else None
    if override is not None:
        lo = max(lo, override.lo)
    return round(lo, 4)


TRANSFERS = ("TransferUtensil", "TransferMug", "TransferWiper")


# --- builders for the recorded personalization requests ---------------------

def _speed_partial_failure(p):
    # over-eager batch: real speed updates for drinks and wipes, a
    # misremembered parameter name for the utensil pipeline
    return [
        _set("TransferMug", "Speed", "high"),
        _set("TransferWiper", "Speed", "high"),
        _set("AcquireBite", "FeedingSpeed", "high"),
        _set("TransferUtensil", "FeedingSpeed", "high"),
    ]


def _utensil_speed_high(p):
    return [_set("AcquireBite", "Speed", "high")]


def _skip_confirmations(p):
    return [
        _set("AcquireBite", "AskUserForConfirmation", False),
        _set("TransferMug", "AskUserForConfirmation", False),
        _set("TransferWiper", "AskUserForConfirmation", False),
        _set("TransferUtensil", "SkipConfirmation", True),
    ]


def _as_close_as_possible(p):
    return [_set(t, "ApproachDistance",
                 _effective_lo(p["trees"], p.get("cfg"), t, "ApproachDistance"))
            for t in TRANSFERS]


def _completion(value):
    def build(p):
        return [_set(t, "TransferCompletionInteraction", value) for t in TRANSFERS]
    return build


def _completion_mixed(utensil, mug, wiper):
    def build(p):
        return [_set("TransferUtensil", "TransferCompletionInteraction", utensil),
                _set("TransferMug", "TransferCompletionInteraction", mug),
                _set("TransferWiper", "TransferCompletionInteraction", wiper)]
    return build


def _initiation_gesture(value):
    def build(p):
        return [_set(t, "TransferInitiationGesture", value) for t in TRANSFERS]
    return build


def _dipping(value):
    def build(p):
        return [_set("AcquireBite", "DippingDepth", value)]
    return build


def _voice_off(p):
    return [_set(t, "VoicePromptsEnabled", False) for t in TRANSFERS]


def _five_second_timer(p):
    # the wipe update carries a misremembered parameter name
    return [
        _set("AcquireBite", "TimeToWaitBeforeAutocontinue", 5),
        _set("TransferUtensil", "TimeToWaitBeforeAutocontinue", 5),
        _set("TransferMug", "TimeToWaitBeforeAutocontinue", 5),
        _set("TransferWiper", "AutoContinueTimer", 5),
    ]


def _per_item_continue(p):
    # per-food confirmation settings do not exist; both updates are malformed
    return [
        _set("AcquireBite", "ShowContinueAfterPickup", False),
        _set("TransferMug", "ShowContinueAfterPickup", False),
    ]


def _confirm(value, trees=("AcquireBite", "TransferMug", "TransferWiper")):
    def build(p):
        return [_set(t, "AskUserForConfirmation", value) for t in trees]
    return build


def _confirm_before_transfer(p):
    return [
        _set("TransferMug", "AskUserForConfirmation", True),
        _set("TransferWiper", "AskUserForConfirmation", True),
        _set("TransferUtensil", "ShowConfirmationPage", True),
    ]


def _faster_bites(p):
    return [_set("AcquireBite", "Speed", "high"),
            _set("TransferUtensil", "Speed", "high")]


def _retract_all_transfers(p):
    return [_add_retract(p["trees"], t) for t in TRANSFERS]


def _retract_utensil_only(p):
    return [_add_retract(p["trees"], "TransferUtensil")]


def _autocontinue_100(p):
    # again a bad name for the wipe tree
    return [
        _set("AcquireBite", "TimeToWaitBeforeAutocontinue", 100),
        _set("TransferMug", "TimeToWaitBeforeAutocontinue", 100),
        _set("TransferWiper", "WipeAutoContinue", 100),
    ]


def _all_speed_high(p):
    return [_set(t, "Speed", "high")
            for t in ("PickTool", "PlaceTool", "AcquireBite",
                      "TransferUtensil", "TransferMug", "TransferWiper")]


def _button_everything(p):
    out = []
    for t in TRANSFERS:
        out.append(_set(t, "TransferInitiationInteraction", "button"))
        out.append(_set(t, "TransferCompletionInteraction", "button"))
    return out


def _wipe_distance(value):
    def build(p):
        return [_set("TransferWiper", "ApproachDistance", value)]
    return build


def _wipe_as_close(p):
    return [_set("TransferWiper", "ApproachDistance",
                 _effective_lo(p["trees"], p.get("cfg"), "TransferWiper",
                               "ApproachDistance"))]


def _head_still_wipe_completion(p):
    return [_set("TransferWiper", "TransferCompletionGesture", "head_still")]


def _continuous_mouth_bad_name(p):
    return [_set("TransferMug", "TransferInitiationGesture", "continuous_mouth")]


def _utensil_confirm_off(p):
    return [_set("TransferUtensil", "AskUserForConfirmation", False)]


def _acquire_confirm_off(p):
    return [_set("AcquireBite", "AskUserForConfirmation", False)]


def _auto_initiation(p):
    return [_set("TransferUtensil", "TransferInitiationInteraction", "auto")]


def _skewer_vertical(p):
    return [_set("AcquireBite", "SkewerAngle", "vertical")]


def _bite_autocontinue_5(p):
    return [_set("AcquireBite", "TimeToWaitBeforeAutocontinue", 5)]


# Exact normalized request -> builder. These are the recorded in-home and
# therapist-session requests; free-form console input falls through to the
# keyword rules below.
_EXACT_RULES = {
    "feed me as fast as you can": _speed_partial_failure,
    "increase speed to high when feeding with a utensil": _utensil_speed_high,
    "skip confirmation screens": _skip_confirmations,
    "bring everything as close to my mouth as possible": _as_close_as_possible,
    "use button when completing a transfer when taking a sip": _completion("button"),
    "use the sense interaction when completing a transfer bite": _completion("sense"),
    "use the button to complete a transfer only when taking a sip": _completion("button"),
    "use sensory to complete bite transactions but not for sips or face wiping":
        _completion_mixed("sense", "auto_timeout", "auto_timeout"),
    "use sensors to end transaction with utensil use the button to end transactions "
    "when taking a sip use the button to end transaction for face wipe":
        _completion_mixed("sense", "button", "button"),
    "initiate transfers with open mouth gesture": _initiation_gesture("mouth_open"),
    "dip the strawberry deeper into the whipped cream": _dipping(0.03),
    "be silent": _voice_off,
    "change automatic timer to every five seconds": _five_second_timer,
    "don t show continue after picking up apples or chicken nuggets on plate or drink":
        _per_item_continue,
    "top show continue confirmation pages on the web interface": _confirm(True),
    "don t show continue pages on the web interface": _confirm(False),
    "dip chicken and ketchup more": _dipping(0.03),
    "go faster in between picking up bites of apple": _faster_bites,
    "do not dip apple and ketchup": _dipping(0.0),
    "show confirmation page before transfer": _confirm_before_transfer,
    "turn off voice": _voice_off,
    "use continuous mouth to detect i m ready for a drink": _continuous_mouth_bad_name,
    "use continuous mouth open to detect for transfers":
        _initiation_gesture("continuous_mouth_open"),
    "head still for transfer completion of mouth wiping but do not make this change "
    "for drinking and eating": _head_still_wipe_completion,
    "be quiet and do not talk at all": _voice_off,
    "bring back confirmation page": _confirm(True),
    "move to retract position after every bite": _retract_all_transfers,
    "increase auto continue time on the webpage to 100 seconds": _autocontinue_100,
    "be quiet": _voice_off,
    # therapist scenarios
    "move robot closer for transfer": _as_close_as_possible,
    "dip food item less in ketchup": _dipping(0.01),
    "skewer item vertically": _skewer_vertical,
    "decrease auto continue time for bite pick up to five seconds": _bite_autocontinue_5,
    "used button to initiate and show completion of transfer": _button_everything,
    "get rid of confirmation page for bite transfer": _utensil_confirm_off,
    "continue initiating bite transfer without my signal": _utensil_confirm_off,
    "don t wait for my signal to transfer the bite": _acquire_confirm_off,
    "auto initiate bite transfer instead of waiting for me to open my mouth":
        _auto_initiation,
    "bring wipe 3 cm from my face before transfer": _wipe_distance(0.03),
    "bring the wipe as close as possible to my mouth before transfer": _wipe_as_close,
    "make the robot as fast as possible": _all_speed_high,
    "retract after every bite transfer": _retract_utensil_only,
    "always move as fast as possible": _all_speed_high,
}

# (required keyword groups, builder): every group must have a member in the text
_KEYWORD_RULES = (
    ((("fast", "faster", "speed", "quick", "quickly"),), _all_speed_high),
    ((("quiet", "silent", "silence", "mute", "voice"),), _voice_off),
    ((("confirmation", "confirm", "continue"), ("skip", "remove", "without", "no",
                                                "don", "stop", "off", "rid")),
     _confirm(False)),
    ((("confirmation", "confirm", "continue"),), _confirm(True)),
    ((("retract",), ("bite", "every", "after")), _retract_utensil_only),
    ((("dip", "deeper", "dipping"), ("more", "deeper")), _dipping(0.03)),
    ((("dip", "dipping"), ("less", "lightly", "not", "don")), _dipping(0.01)),
    ((("closer", "close"), ("mouth", "face", "transfer")), _as_close_as_possible),
)


def translate(request_text, payload):
    text = norm_text(request_text)
    builder = _EXACT_RULES.get(text)
    if builder is not None:
        return builder(payload)
    tokens = set(normalize(request_text))
    for groups, rule_builder in _KEYWORD_RULES:
        if all(any(k in tokens for k in group) for group in groups):
            return rule_builder(payload)
    return None


# --- transparency ------------------------------------------------------------

_TOOL_TREES = (
    (("wipe", "wiper", "wiping", "face"), "TransferWiper", "wipe"),
    (("drink", "sip", "mug", "straw", "shake"), "TransferMug", "straw"),
    (("bite", "utensil", "fork", "food", "feeding", "feed"), "TransferUtensil", "fork"),
)

_COMPLETION_MEANING = {
    "sense": "the robot detects completion automatically",
    "button": "the robot waits for a button press to confirm that the "
              "transfer is complete",
    "auto_timeout": "the transfer ends after a set time",
}


def _tool_tree(tokens):
    for keywords, tree_id, noun in _TOOL_TREES:
        if any(k in tokens for k in keywords):
            return tree_id, noun
    return None, None


def answer(query, snapshot, qa_history):
    tokens = set(normalize(query))
    trees = snapshot.trees

    if {"speed"} & tokens and ({"up"} & tokens or "faster" in tokens):
        pipeline = [t for t in ("PickTool", "AcquireBite", "TransferUtensil",
                                "PlaceTool") if "Speed" in trees[t].parameters]
        parts = [f"{t} (currently {trees[t].value('Speed')})" for t in pipeline]
        return ("To speed up feeding with the utensil, set the 'Speed' parameter "
                "to high for: " + ", ".join(parts) +
                ". You can request this from the personalization page.")

    if ({"ways", "besides", "else", "other"} & tokens
            and {"end", "complete", "finish"} & tokens and "transfer" in tokens):
        domain = trees["TransferUtensil"].parameters[
            "TransferCompletionInteraction"].domain.values
        listing = "; ".join(f"'{v}' ({_COMPLETION_MEANING[v]})" for v in domain)
        return "A transfer can be completed via " + listing + "."

    if {"complete", "end", "finish"} & tokens and "transfer" in tokens:
        currents = {t: trees[t].value("TransferCompletionInteraction")
                    for t in TRANSFERS}
        values = sorted(set(currents.values()))
        if len(values) == 1:
            v = values[0]
            return (f"The current action to complete a transfer is the {v} "
                    f"interaction: {_COMPLETION_MEANING[v]}.")
        listing = "; ".join(f"{t}: {v} ({_COMPLETION_MEANING[v]})"
                            for t, v in sorted(currents.items()))
        return "Transfer completion is currently set per tool: " + listing + "."

    if {"close", "closer", "near"} & tokens and {"can", "how"} & tokens:
        tree_id, noun = _tool_tree(tokens)
        if tree_id:
            lo = snapshot.effective_lo(tree_id, "ApproachDistance")
            return (f"The {noun} can come as close as {lo * 100:.0f} centimeters "
                    f"({lo} m) from your mouth before transfer.")

    if {"signal", "automatically"} & tokens and {"transfer", "bite"} & tokens:
        interaction = trees["TransferUtensil"].value("TransferInitiationInteraction")
        if interaction == "gesture":
            gesture = trees["TransferUtensil"].value("TransferInitiationGesture")
            noun = gesture.replace("_", " ")
            return (f"You need to signal by {'opening your mouth' if gesture == 'mouth_open' else 'the ' + noun + ' gesture'} "
                    "to have the robot transfer a bite; it does not transfer "
                    "automatically without your signal.")
        if interaction == "auto":
            return ("Bite transfers currently start automatically: the robot does "
                    "not wait for a signal from you.")
        return ("Bite transfers currently start when you press the button; the "
                "robot does not watch for a gesture.")

    best = _best_parameter_match(tokens, trees)
    if best is not None:
        tree_id, param = best
        from .bt import render_value
        return (f"'{param.name}' on {tree_id} is currently "
                f"{render_value(param.current)} (allowed {param.domain.render()}). "
                f"{param.description}")

    return ("I cannot answer that from the current system state. Try asking about "
            "a specific skill or setting.")


_STOP_TOKENS = {"the", "a", "to", "for", "of", "is", "on", "in", "my", "i", "me",
                "robot", "what", "how", "can", "do", "does", "when", "it", "with"}


def _best_parameter_match(tokens, trees):
    tokens = tokens - _STOP_TOKENS
    best = None
    best_score = 0
    for tree_id in sorted(trees):
        tree = trees[tree_id]
        tree_tokens = set(normalize(re.sub(r"(?<!^)(?=[A-Z])", " ", tree_id)))
        for pid in sorted(tree.parameters):
            param = tree.parameters[pid]
            param_tokens = set(normalize(param.name)) | set(
                normalize(re.sub(r"(?<!^)(?=[A-Z])", " ", pid)))
            param_tokens -= _STOP_TOKENS
            score = 2 * len(tokens & param_tokens) + len(tokens & tree_tokens)
            if score > best_score and len(tokens & param_tokens) >= 2:
                best_score = score
                best = (tree_id, param)
    return best


# --- summaries ---------------------------------------------------------------

def summarize_verdicts(verdicts):
    applied = [v for v in verdicts if v.accepted]
    rejected = [v for v in verdicts if not v.accepted]
    if not verdicts:
        return ("No changes were made: the request could not be turned into any "
                "system update.")
    sentences = []
    if applied:
        sentences.append("The system was updated: "
                         + "; ".join(v.update.describe() for v in applied) + ".")
    else:
        sentences.append("No changes were made.")
    if rejected:
        sentences.append("However, these requests could not be applied: "
                         + "; ".join(f"{v.update.describe()} ({v.reason})"
                                     for v in rejected) + ".")
    return " ".join(sentences)


def explain_differences(differences, executed):
    parts = []
    for d in differences:
        if d["kind"] == "parameter_changed":
            parts.append(f"{d['tree']}.{d['subject']} changed ({d['detail']})")
        elif d["kind"] == "node_added":
            parts.append(f"a step was added to {d['tree']} ({d['detail']})")
        elif d["kind"] == "node_removed":
            parts.append(f"a step was removed from {d['tree']} ({d['detail']})")
        else:
            parts.append(f"{d['tree']}.{d['subject']}: {d['detail']}")
    if executed:
        parts.append("skills executed: " + ", ".join(executed))
    return "Since the last check: " + "; ".join(parts) + "."


# --- gesture templates --------------------------------------------------------

def _template(expression, *hps):
    return {
        "expression": expression,
        "hyperparameters": [
            {"name": n, "lo": lo, "hi": hi, "value": (lo + hi) / 2.0}
            for n, lo, hi in hps
        ],
    }


_GESTURE_TEMPLATES = {
    "head_tilt": _template(
        "(>= (oscillation_count (signal roll) (hp tilt_amplitude) (hp window_secs)) 3)",
        ("tilt_amplitude", 0.1, 0.6), ("window_secs", 1.5, 6.0)),
    "head_still": _template(
        "(hold (and (< (range (signal yaw) 1.0) (hp still_band)) "
        "(< (range (signal pitch) 1.0) (hp still_band))) (hp hold_duration))",
        ("still_band", 0.01, 0.3), ("hold_duration", 2.0, 6.0)),
    "three_blinks": _template(
        "(>= (oscillation_count (signal eye_aspect_left) (hp blink_depth) "
        "(hp window_secs)) 5)",
        ("blink_depth", 0.1, 0.7), ("window_secs", 1.5, 6.0)),
    "three_eyebrow_raises": _template(
        "(>= (oscillation_count (signal eyebrow_raise) (hp raise_depth) "
        "(hp window_secs)) 5)",
        ("raise_depth", 0.1, 0.8), ("window_secs", 1.5, 6.0)),
    "mouth_continuously_open": _template(
        "(hold (> (signal mouth_open_ratio) (hp open_threshold)) (hp hold_duration))",
        ("open_threshold", 0.2, 0.9), ("hold_duration", 2.0, 6.0)),
    "mouth_open": _template(
        "(> (mean (signal mouth_open_ratio) 0.3) (hp open_threshold))",
        ("open_threshold", 0.2, 0.9)),
    "head_nod": _template(
        "(>= (oscillation_count (signal pitch) (hp nod_amplitude) (hp window_secs)) 3)",
        ("nod_amplitude", 0.1, 0.6), ("window_secs", 1.5, 6.0)),
    "head_shake": _template(
        "(>= (oscillation_count (signal yaw) (hp head_shake_threshold) "
        "(hp window_secs)) 3)",
        ("head_shake_threshold", 0.1, 0.7), ("window_secs", 1.5, 6.0)),
}

# matched in order; keyword prefixes cover morphological variants
_TEMPLATE_KEYWORDS = (
    ("head_tilt", ("tilt",)),
    ("head_still", ("still",)),
    ("three_blinks", ("blink",)),
    ("three_eyebrow_raises", ("eyebrow", "brow")),
    ("mouth_continuously_open", ("mouth continuous", "continuous mouth",
                                 "mouth open for", "keep", "hold")),
    ("mouth_open", ("mouth",)),
    ("head_nod", ("nod", "up and down", "up down")),
    ("head_shake", ("shak", "left to right", "right to left", "side to side")),
)


def gesture_template_for(description):
    text = norm_text(description)
    for name, keywords in _TEMPLATE_KEYWORDS:
        if any(k in text for k in keywords):
            return name
    return None


def propose_gesture_doc(description):
    name = gesture_template_for(description)
    if name is None:
        return None
    template = _GESTURE_TEMPLATES[name]
    return {
        "name": name,
        "description": description,
        "expression": template["expression"],
        "hyperparameters": template["hyperparameters"],
    }


# --- the adapter ---------------------------------------------------------------


class StubAdapter:
    """Rule-table adapter; pure and reentrant."""

    def complete(self, request, payload=None):
        payload = payload or {}
        context = dict(request.context)
        if request.task == gw.TASK_TRANSLATE:
            docs = translate(context.get("request", ""), payload)
            if docs is None:
                return "UNRECOGNIZED REQUEST"   # deliberately unparseable
            return canon_line(docs)
        if request.task == gw.TASK_SUMMARIZE:
            if "verdicts" in payload:
                return summarize_verdicts(payload["verdicts"])
            return explain_differences(payload.get("differences", ()),
                                       payload.get("executed", ()))
        if request.task == gw.TASK_ANSWER:
            return answer(context.get("query", ""), payload["snapshot"],
                          payload.get("qa_history", ()))
        if request.task == gw.TASK_GESTURE:
            doc = propose_gesture_doc(context.get("description", ""))
            if doc is None:
                return "NO MATCHING DETECTOR TEMPLATE"
            return json.dumps(doc, sort_keys=True)
        if request.task == gw.TASK_NEXT_BITE:
            available = sorted(payload.get("available", ()))
            history = payload.get("history", ())
            if not available:
                return ""
            return available[len(history) % len(available)]
        return ""
