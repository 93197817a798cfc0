"""Scenario fixtures: the six recorded meals and ten therapist scenarios.

Each fixture is a scenario document plus expectations: the accepted/rejected
pattern of every personalization request (as reported in the recorded
responses), substrings of transparency answers, and meal-level outcomes.
``python -m feastsim.gen_data`` writes them under fixtures/ with a frozen
final state hash.
"""

from __future__ import annotations

A = "accepted"
RS = "rejected_static"
RJ = "rejected_safety"


def _plate(*groups, dips=()):
    items = []
    n = 0
    for food_type, count in groups:
        for _ in range(count):
            items.append({"id": f"i{n:02d}", "food_type": food_type,
                          "position": [0.02 * n, 0.01 * (n % 3)]})
            n += 1
    for dip in dips:
        items.append({"id": f"d{n:02d}", "food_type": dip, "is_dip": True,
                      "skewerable": False, "dippable": False})
        n += 1
    return items


def _spec(food_types, preference, profile, tools=("utensil", "mug", "wiper")):
    return {"food_types": list(food_types), "preference": preference,
            "tools": list(tools), "profile_id": profile}


def _seq(start, step, events):
    out = []
    t = start
    for event in events:
        event = dict(event)
        event.setdefault("t", t)
        t = event["t"] + step
        out.append(event)
    return out


def _p(text):
    return {"kind": "personalize", "text": text}


def _q(text):
    return {"kind": "transparency", "text": text}


def _task(name):
    return {"kind": "task", "task": name}


def meal1():
    requests = [
        ("Feed me As fast as you can", [A, A, RS, RS]),
        ("Increase speed to high when feeding with a utensil", [A]),
        ("Skip confirmation screens", [A, A, A, RS]),
        ("Bring everything as close to my mouth as possible", [A, A, A]),
        ("Use button when completing a transfer when taking a sip", [A, A, A]),
        ("Use the sense interaction when completing a transfer Bite", [A, A, A]),
        ("Use the button to complete a transfer only when taking a sip", [A, A, A]),
        ("Use sensory to complete bite transactions but not for sips or face wiping",
         [A, A, A]),
        ("Use sensors to end transaction with utensil use the button to end "
         "transactions when taking a sip use the button to end transaction for "
         "face wipe", [A, A, A]),
        ("Initiate transfers with open mouth gesture", [A, A, A]),
    ]
    timeline = _seq(2.0, 3.0, [
        _p(requests[0][0]),
        _q("How can I speed up Feeding me with a utensil"),
        _p(requests[1][0]),
        _p(requests[2][0]),
        _p(requests[3][0]),
        _p(requests[4][0]),
        _q("What is the default action to complete a transfer"),
        _q("What other ways can I end a transfer besides pushing the button"),
        _p(requests[5][0]),
        _p(requests[6][0]),
        _p(requests[7][0]),
        _p(requests[8][0]),
        _p(requests[9][0]),
        # outside-mouth limit lowered for this user (7 cm -> 6 cm)
        {"kind": "override_profile", "param": "TransferUtensil.ApproachDistance",
         "domain": {"type": "real_range", "lo": 0.06, "hi": 0.15, "unit": "m"}},
        _task("bite"),
        _task("bite"),
        # damaged mug marker: drink acquisition keeps failing
        {"kind": "fault", "fault": {"at": 48.0, "kind": "marker_damaged"},
         "t": 48.0},
        _task("sip"),
        _task("sip"),
        {"kind": "caregiver", "action": "repair_marker", "t": 130.0},
        _task("sip"),
        _task("wipe"),
        _task("finish"),
    ])
    return {
        "meal_id": "meal1",
        "seed": 101,
        "profile": "cr1",
        "spec": _spec(["chicken nugget", "potato wedge"],
                      "Chicken nugget dipped in ranch dipping sauce then potato "
                      "wedge without dipping", "cr1"),
        "plate": _plate(("chicken nugget", 3), ("potato wedge", 3), dips=("ranch",)),
        "timeline": timeline,
        "expected": {
            "patterns": [[t, p] for t, p in requests],
            "qa_contains": [
                ["How can I speed up Feeding me with a utensil", "Speed"],
                ["What is the default action to complete a transfer", "button"],
                ["What other ways can I end a transfer besides pushing the button",
                 "auto_timeout"],
            ],
            "status": "finished",
            "min_bites": 2,
            "skill_failures": ["PickTool(mug)"],
        },
    }


def meal2():
    requests = [
        ("Dip the strawberry deeper into the whipped cream", [A]),
        ("Be silent", [A, A, A]),
        ("Change automatic timer to every five seconds", [A, A, A, RS]),
    ]
    timeline = _seq(2.0, 3.0, [
        _p(requests[0][0]),
        _p(requests[1][0]),
        _p(requests[2][0]),
        _task("bite"),
        # camera glitch while the user looks away, plus a slipped bite
        {"kind": "fault", "fault": {"at": 30.0, "kind": "sensor_stall",
                                    "detail": {"sensor": "head_camera",
                                               "duration_s": 0.3}}, "t": 30.0},
        {"kind": "fault", "fault": {"at": 31.0, "kind": "skill_failure",
                                    "detail": {"skill": "AcquireBite"}}, "t": 31.0},
        _task("bite"),
        _task("bite"),
        _task("sip"),
        _task("finish"),
    ])
    return {
        "meal_id": "meal2",
        "seed": 102,
        "profile": "cr1",
        "spec": _spec(["strawberry"],
                      "Please feed me strawberries dipped and whipped cream", "cr1"),
        "plate": _plate(("strawberry", 4), dips=("whipped cream",)),
        "timeline": timeline,
        "expected": {
            "patterns": [[t, p] for t, p in requests],
            "status": "finished",
            "min_bites": 2,
            "skill_failures": ["AcquireBite"],
            "parameter_values": [["AcquireBite", "DippingDepth", 0.03],
                                 ["TransferUtensil", "VoicePromptsEnabled", False]],
        },
    }


def meal3():
    requests = [
        ("Don't show continue after picking up apples or chicken nuggets on "
         "plate or drink", [RS, RS]),
        ("Top show continue confirmation pages on the web interface", [A, A, A]),
        ("Don't show continue pages on the web interface", [A, A, A]),
        ("Dip chicken and ketchup more", [A]),
        ("Go faster in between picking up bites of apple", [A, A]),
        ("Do not dip apple and ketchup", [A]),
    ]
    timeline = _seq(2.0, 3.0, [
        _p(requests[0][0]),
        _p(requests[1][0]),
        _p(requests[2][0]),
        _p(requests[3][0]),
        _task("bite"),
        _task("bite"),
        _task("bite"),
        _p(requests[4][0]),
        _p(requests[5][0]),
        _task("bite"),
        _task("sip"),
        _task("finish"),
    ])
    return {
        "meal_id": "meal3",
        "seed": 103,
        "profile": "cr2",
        "user_amplitude": 0.3,
        "spec": _spec(["chicken nugget", "apple slice"],
                      "Dip chicken nuggets and ketchup and give apple slices "
                      "after two bites of chicken nuggets", "cr2"),
        "plate": _plate(("chicken nugget", 4), ("apple slice", 2), dips=("ketchup",)),
        "timeline": timeline,
        "expected": {
            "patterns": [[t, p] for t, p in requests],
            "status": "finished",
            "min_bites": 4,
            "bite_prefix": ["chicken nugget", "chicken nugget", "apple slice"],
        },
    }


def meal4():
    requests = [
        ("Show confirmation page before transfer", [A, A, RS]),
        ("Turn off voice", [A, A, A]),
        ("Use continuous mouth to detect I'm ready for a drink", [RJ]),
        ("Use continuous mouth open to detect for transfers", [A, A, A]),
    ]
    timeline = _seq(2.0, 3.0, [
        {"kind": "gesture_add", "name": "Continuous mouth open",
         "description": "Mouth open for five seconds",
         "gesture_class": "mouth_continuously_open", "seed": 4},
        _p(requests[0][0]),
        _p(requests[1][0]),
        _p(requests[2][0]),
        _p(requests[3][0]),
        _task("sip"),
        _task("sip"),
        {"kind": "caregiver", "action": "refill_mug", "t": 120.0},
        _task("sip"),
        # controller fault after a drink transfer; reset and continue
        {"kind": "fault", "fault": {"at": 170.0, "kind": "torque_anomaly",
                                    "detail": {"magnitude": 9.0}}, "t": 170.0},
        {"kind": "caregiver", "action": "reset", "t": 175.0},
        _task("sip"),
        _task("finish"),
    ])
    return {
        "meal_id": "meal4",
        "seed": 104,
        "profile": "cr2",
        "user_amplitude": 0.3,
        "spec": _spec([], "", "cr2", tools=("mug", "wiper")),
        "plate": [],
        "timeline": timeline,
        "expected": {
            "patterns": [[t, p] for t, p in requests],
            "status": "finished",
            "gestures": ["continuous_mouth_open"],
            "safety_stop": True,
            "parameter_values": [
                ["TransferMug", "TransferInitiationGesture", "continuous_mouth_open"],
            ],
        },
    }


def meal5():
    requests = [
        ("Head still for transfer completion of mouth wiping but do not make "
         "this change for drinking and eating", [A]),
        ("Be quiet and do not talk at all", [A, A, A]),
        ("Bring back confirmation page", [A, A, A]),
    ]
    timeline = _seq(2.0, 3.0, [
        {"kind": "gesture_add", "name": "Head still",
         "description": "Hold head still for five seconds",
         "gesture_class": "head_still", "seed": 5},
        _p(requests[0][0]),
        _p(requests[1][0]),
        _p(requests[2][0]),
        _task("bite"),
        _task("bite"),
        _task("sip"),
        _task("bite"),
        _task("wipe"),
        _task("finish"),
    ])
    return {
        "meal_id": "meal5",
        "seed": 105,
        "profile": "cr2",
        "user_amplitude": 0.3,
        "spec": _spec(["general tso chicken", "broccoli"], "", "cr2"),
        "plate": _plate(("general tso chicken", 3), ("broccoli", 2)),
        "timeline": timeline,
        "expected": {
            "patterns": [[t, p] for t, p in requests],
            "status": "finished",
            "gestures": ["head_still"],
            "min_bites": 3,
            "parameter_values": [
                ["TransferWiper", "TransferCompletionGesture", "head_still"],
            ],
        },
    }


def meal6():
    requests = [
        ("Move to retract position after every bite", [A, RJ, RJ]),
        ("Increase auto continue time On the webpage to 100 seconds", [A, A, RS]),
        ("Be quiet", [A, A, A]),
    ]
    bites = [_task("bite") for _ in range(12)]
    timeline = _seq(2.0, 3.0, [
        _p(requests[0][0]),
        _p(requests[1][0]),
        _p(requests[2][0]),
        # the acquisition auto-continue bug: the task-selection page timer is
        # updated by hand
        {"kind": "intervention",
         "note": "manually updated the task-selection auto-continue to 100",
         "updates": [{"kind": "set_parameter", "tree": "TaskSelection",
                      "param": "TimeToWaitBeforeAutocontinue", "value": 100}]},
        *bites[:5],
        _task("sip"),
        *bites[5:9],
        _task("sip"),
        *bites[9:],
        _task("wipe"),
        _task("finish"),
    ])
    return {
        "meal_id": "meal6",
        "seed": 106,
        "profile": "cr1",
        "spec": _spec(["chicken strip", "hash brown"],
                      "Alternate one bite of each", "cr1"),
        "plate": _plate(("chicken strip", 6), ("hash brown", 6)),
        "timeline": timeline,
        "expected": {
            "patterns": [[t, p] for t, p in requests],
            "status": "finished",
            "bites": 12,
            "retract_after_bite": True,
            "intervention_patterns": [[A]],
        },
    }


def _ot_scenario(n, seed, requests, timeline_extra=(), plate=None, expected_extra=None,
                 preference=""):
    timeline = _seq(2.0, 3.0, [
        *[_p(text) if kind == "p" else _q(text)
          for kind, text, _pattern in requests],
        *timeline_extra,
        _task("finish"),
    ])
    expected = {
        "patterns": [[text, pattern] for kind, text, pattern in requests
                     if kind == "p"],
        "qa_contains": [[text, pattern] for kind, text, pattern in requests
                        if kind == "q" and pattern],
        "status": "finished",
    }
    expected.update(expected_extra or {})
    return {
        "meal_id": f"scenario{n}",
        "seed": seed,
        "profile": "ot",
        "spec": _spec(["chicken nugget"], preference, "ot"),
        "plate": plate if plate is not None
        else _plate(("chicken nugget", 2), dips=("ketchup",)),
        "timeline": timeline,
        "expected": expected,
    }


def ot_scenarios():
    out = {}
    out["scenario1"] = _ot_scenario(
        1, 201,
        [("p", "Move robot closer for transfer", [A, A, A])],
        expected_extra={"parameter_values": [
            ["TransferUtensil", "ApproachDistance", 0.07],
            ["TransferWiper", "ApproachDistance", 0.15],
        ]})
    out["scenario2"] = _ot_scenario(
        2, 202, [("p", "Dip food item less in ketchup", [A])],
        expected_extra={"parameter_values": [
            ["AcquireBite", "DippingDepth", 0.01]]})
    out["scenario3"] = _ot_scenario(
        3, 203, [("p", "Skewer item vertically", [A])],
        expected_extra={"parameter_values": [
            ["AcquireBite", "SkewerAngle", "vertical"]]})
    out["scenario4"] = _ot_scenario(
        4, 204,
        [("p", "Decrease auto continue time for bite pick up to five seconds", [A])],
        expected_extra={"parameter_values": [
            ["AcquireBite", "TimeToWaitBeforeAutocontinue", 5]]})
    out["scenario5"] = _ot_scenario(
        5, 205,
        [("p", "Used button to initiate and show completion of transfer",
          [A, A, A, A, A, A])],
        timeline_extra=[_task("bite")])
    out["scenario6"] = _ot_scenario(
        6, 206, [("p", "Get rid of confirmation page for bite transfer", [A])])
    out["scenario7"] = _ot_scenario(
        7, 207,
        [("p", "Continue initiating bite transfer without my signal", [A]),
         ("p", "Don't wait for my signal to transfer the bite", [A]),
         ("q", "Do I need to signal with opening my mouth to have it transfer a "
               "bite or can it automatically transfer with no signal from me",
          "signal by opening your mouth"),
         ("p", "Auto initiate bite transfer instead of waiting for me to open "
               "my mouth", [A])],
        timeline_extra=[_task("bite")],
        expected_extra={"parameter_values": [
            ["TransferUtensil", "TransferInitiationInteraction", "auto"]]})
    out["scenario8"] = _ot_scenario(
        8, 208,
        [("p", "Bring wipe 3 cm from my face before transfer", [RJ]),
         ("q", "How close can you bring the wipe to my mouth before transfer",
          "15 centimeters"),
         ("p", "Bring the wipe as close as possible to my mouth before transfer",
          [A])],
        expected_extra={"parameter_values": [
            ["TransferWiper", "ApproachDistance", 0.15]]})
    out["scenario9"] = _ot_scenario(
        9, 209, [("p", "Make the robot as fast as possible", [A] * 6)],
        expected_extra={"parameter_values": [
            ["PickTool", "Speed", "high"], ["PlaceTool", "Speed", "high"],
            ["TransferWiper", "Speed", "high"]]})
    out["scenario10"] = _ot_scenario(
        10, 210, [("p", "Retract after every bite transfer", [A])],
        timeline_extra=[_task("bite")],
        expected_extra={"retract_after_bite": True})
    return out


def build_fixtures():
    fixtures = {
        "meal1": meal1(),
        "meal2": meal2(),
        "meal3": meal3(),
        "meal4": meal4(),
        "meal5": meal5(),
        "meal6": meal6(),
    }
    fixtures.update(ot_scenarios())
    return fixtures
