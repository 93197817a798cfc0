"""Propositional skill sequencing.

The seven skills are encoded as STRIPS-style operators over a small set of
ground atoms; plans come from uniform-cost forward search with a
deterministic lexicographic tie-break. The whole reachable space is a few
hundred states, so optimal search is instantaneous.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .errors import InvariantError, PreconditionViolated, Unsolvable

TOOLS = ("utensil", "mug", "wiper")

TASK_GOALS = {
    "Bite": frozenset({"BiteTransferred"}),
    "Sip": frozenset({"SipTransferred"}),
    "Wipe": frozenset({"WipeTransferred"}),
    "Finish": frozenset({"AtRetract", "GripperFree"}),
    "RecordGesture": frozenset({"AtMouth", "GripperFree"}),
}

DELIVERED_ATOMS = frozenset({"BiteTransferred", "SipTransferred", "WipeTransferred"})


def holding(tool):
    return f"Holding({tool})"


def reachable(tool):
    return f"Reachable({tool})"


@dataclass(frozen=True)
class PlannerState:
    atoms: frozenset

    def __post_init__(self):
        held = [t for t in TOOLS if holding(t) in self.atoms]
        if len(held) > 1:
            raise InvariantError(f"holding more than one tool: {held}")
        if ("GripperFree" in self.atoms) == bool(held):
            raise InvariantError("GripperFree must hold exactly when no tool is held")
        if "BiteLoaded" in self.atoms and holding("utensil") not in self.atoms:
            raise InvariantError("BiteLoaded requires Holding(utensil)")

    def satisfies(self, goal):
        return set(goal) <= self.atoms

    def key(self):
        return tuple(sorted(self.atoms))


def state(*atoms):
    return PlannerState(frozenset(atoms))


def initial_state(tools=TOOLS):
    return PlannerState(frozenset(
        {"GripperFree", "AtRetract"} | {reachable(t) for t in tools}))


@dataclass(frozen=True)
class GroundAction:
    name: str
    obj: str | None
    pre_pos: frozenset
    pre_neg: frozenset
    add: frozenset
    delete: frozenset
    cost: int = 1

    def __post_init__(self):
        if self.add & self.delete:
            raise InvariantError(f"{self.label}: add and delete lists overlap")

    @property
    def label(self):
        return f"{self.name}({self.obj})" if self.obj else self.name

    @property
    def sort_key(self):
        return (self.name, self.obj or "")

    def applicable(self, st):
        return self.pre_pos <= st.atoms and not (self.pre_neg & st.atoms)


def _action(name, obj=None, pre=(), pre_neg=(), add=(), delete=()):
    return GroundAction(name, obj, frozenset(pre), frozenset(pre_neg),
                        frozenset(add), frozenset(delete))


def domain(tools=TOOLS):
    """All ground actions, sorted by (name, object)."""
    actions = []
    for t in tools:
        actions.append(_action(
            "PickTool", t,
            pre={"GripperFree", reachable(t)},
            add={holding(t)},
            delete={"GripperFree", reachable(t)}))
        # Stowing the utensil abandons any loaded bite; otherwise BiteLoaded
        # could outlive Holding(utensil).
        place_deletes = {holding(t)} | ({"BiteLoaded"} if t == "utensil" else set())
        actions.append(_action(
            "PlaceTool", t,
            pre={holding(t)},
            add={"GripperFree", reachable(t)},
            delete=place_deletes))
    actions.append(_action(
        "AcquireBite",
        pre={holding("utensil")}, pre_neg={"BiteLoaded"},
        add={"BiteLoaded"}))
    actions.append(_action(
        "TransferUtensil",
        pre={holding("utensil"), "BiteLoaded"},
        add={"BiteTransferred"}, delete={"BiteLoaded"}))
    actions.append(_action(
        "TransferMug", pre={holding("mug")}, add={"SipTransferred"}))
    actions.append(_action(
        "TransferWiper", pre={holding("wiper")}, add={"WipeTransferred"}))
    actions.append(_action(
        "EmulateTransfer", pre={"GripperFree"},
        add={"AtMouth"}, delete={"AtRetract"}))
    actions.append(_action(
        "Retract", pre={"GripperFree"},
        add={"AtRetract"}, delete={"AtMouth"}))
    return sorted(actions, key=lambda a: a.sort_key)


def apply(st, action) -> PlannerState:
    if not action.applicable(st):
        raise PreconditionViolated(f"{action.label} preconditions unmet")
    return PlannerState((st.atoms - action.delete) | action.add)


@dataclass(frozen=True)
class Plan:
    steps: tuple
    cost: int = field(default=0)

    def labels(self):
        return [a.label for a in self.steps]

    def execute(self, st):
        for action in self.steps:
            st = apply(st, action)
        return st


def plan(initial, goal, actions=None) -> Plan:
    """Minimal-cost plan via uniform-cost search; ties broken lexicographically."""
    goal = frozenset(goal)
    if initial.satisfies(goal):
        return Plan((), 0)
    actions = actions if actions is not None else domain()
    start_key = initial.key()
    frontier = [(0, (), start_key, initial, ())]
    best = {start_key: 0}
    while frontier:
        cost, tie, key, st, steps = heapq.heappop(frontier)
        if cost > best.get(key, float("inf")):
            continue
        for action in actions:
            if not action.applicable(st):
                continue
            nxt = apply(st, action)
            nxt_key = nxt.key()
            nxt_cost = cost + action.cost
            if nxt_cost < best.get(nxt_key, float("inf")):
                nxt_steps = steps + (action,)
                if nxt.satisfies(goal):
                    return Plan(nxt_steps, nxt_cost)
                best[nxt_key] = nxt_cost
                heapq.heappush(frontier, (
                    nxt_cost, tie + (action.sort_key,), nxt_key, nxt, nxt_steps))
    raise Unsolvable(f"goal {sorted(goal)} unreachable")


def goal_for(task) -> frozenset:
    try:
        return TASK_GOALS[task]
    except KeyError:
        raise InvariantError(f"unknown task {task!r}") from None


def clear_delivered(st) -> PlannerState:
    """Drop the ephemeral delivered markers so the next request replans."""
    return PlannerState(st.atoms - DELIVERED_ATOMS)


def reachable_states(start=None, actions=None):
    """Breadth-first closure of the domain from `start`."""
    start = start or initial_state()
    actions = actions if actions is not None else domain()
    seen = {start.key(): start}
    queue = [start]
    while queue:
        st = queue.pop(0)
        for action in actions:
            if action.applicable(st):
                nxt = apply(st, action)
                if nxt.key() not in seen:
                    seen[nxt.key()] = nxt
                    queue.append(nxt)
    return list(seen.values())


def to_pddl(tools=TOOLS) -> str:
    """Domain dump in standard PDDL for cross-checking with external planners."""
    lines = [
        "(define (domain mealtime-assistance)",
        "  (:requirements :strips :typing :negative-preconditions)",
        "  (:types tool)",
        "  (:constants " + " ".join(tools) + " - tool)",
        "  (:predicates (GripperFree) (Holding ?t - tool) (Reachable ?t - tool)",
        "               (BiteLoaded) (AtMouth) (AtRetract)",
        "               (BiteTransferred) (SipTransferred) (WipeTransferred))",
    ]
    schemas = [
        ("PickTool", "(?t - tool)",
         "(and (GripperFree) (Reachable ?t))",
         "(and (Holding ?t) (not (GripperFree)) (not (Reachable ?t)))"),
        ("PlaceTool", "(?t - tool)",
         "(and (Holding ?t))",
         "(and (GripperFree) (Reachable ?t) (not (Holding ?t)))"),
        ("AcquireBite", "()",
         "(and (Holding utensil) (not (BiteLoaded)))",
         "(and (BiteLoaded))"),
        ("TransferUtensil", "()",
         "(and (Holding utensil) (BiteLoaded))",
         "(and (BiteTransferred) (not (BiteLoaded)))"),
        ("TransferMug", "()", "(and (Holding mug))", "(and (SipTransferred))"),
        ("TransferWiper", "()", "(and (Holding wiper))", "(and (WipeTransferred))"),
        ("EmulateTransfer", "()",
         "(and (GripperFree))", "(and (AtMouth) (not (AtRetract)))"),
        ("Retract", "()",
         "(and (GripperFree))", "(and (AtRetract) (not (AtMouth)))"),
    ]
    for name, params, pre, eff in schemas:
        lines += [
            f"  (:action {name}",
            f"    :parameters {params}",
            f"    :precondition {pre}",
            f"    :effect {eff}",
            "  )",
        ]
    lines.append(")")
    return "\n".join(lines) + "\n"
