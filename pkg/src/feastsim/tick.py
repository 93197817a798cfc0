"""Behavior-tree execution.

A `TreeRunner` ticks one tree against a world interface. The world is duck
typed; it must provide:

    now() -> float                      # monotone clock, seconds
    leaf_status(tree, node, params, entered_at) -> "success"|"failure"|"running"
                                        # Action / Condition / Retract leaves
    await_gesture(tree, node, params, entered_at)
        -> "fired" | "pending" | "cancelled" | "timed_out"
    log_node(record: dict)              # node-execution log sink

Composites resume where they left off across ticks (sequences with memory),
so a tree that returned `running` continues from the same leaf on the next
tick. Pause leaves are timed against `world.now()` only.
"""

from __future__ import annotations

from .errors import WorldUnavailable

SUCCESS = "success"
FAILURE = "failure"
RUNNING = "running"


def pause_duration(tree, node):
    """Duration of a Pause leaf: its first referenced parameter, else 1 s."""
    for ref in node.param_refs:
        value = tree.parameters[ref].current
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    return 1.0


def gesture_settings(tree, node):
    """(gesture_name, timeout_s) for a WaitForGesture leaf.

    The gesture is the first string-valued referenced parameter, the timeout
    the first numeric one (default 60 s).
    """
    gesture = None
    timeout = 60.0
    for ref in node.param_refs:
        value = tree.parameters[ref].current
        if isinstance(value, str) and gesture is None:
            gesture = value
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            timeout = float(value)
    return gesture, timeout


class TreeRunner:
    """Stateful executor for one tree; reusable after completion."""

    def __init__(self, tree):
        self.tree = tree
        self._cursor = {}      # composite node id -> running child index
        self._entered = {}     # leaf node id -> entry time

    def reset(self):
        self._cursor.clear()
        self._entered.clear()

    def tick(self, world):
        status = self._tick_node(self.tree.root, world)
        if status != RUNNING:
            self.reset()
        return status

    def run_to_completion(self, world, step, max_ticks=100000):
        """Tick until terminal, calling `step()` between running ticks."""
        for _ in range(max_ticks):
            status = self.tick(world)
            if status != RUNNING:
                return status
            step()
        raise WorldUnavailable(
            f"tree {self.tree.skill_id} did not terminate in {max_ticks} ticks")

    # -- internals ---------------------------------------------------------

    def _tick_node(self, node, world):
        if node.kind == "Sequence":
            return self._tick_composite(node, world, stop_on=FAILURE)
        if node.kind == "Selector":
            return self._tick_composite(node, world, stop_on=SUCCESS)
        return self._tick_leaf(node, world)

    def _tick_composite(self, node, world, stop_on):
        index = self._cursor.get(node.id, 0)
        while index < len(node.children):
            status = self._tick_node(node.children[index], world)
            if status == RUNNING:
                self._cursor[node.id] = index
                return RUNNING
            if status == stop_on:
                self._cursor.pop(node.id, None)
                return status
            index += 1
        self._cursor.pop(node.id, None)
        # sequence exhausted children without failure; selector without success
        return SUCCESS if stop_on == FAILURE else FAILURE

    def _tick_leaf(self, node, world):
        entered_at = self._entered.get(node.id)
        if entered_at is None:
            entered_at = world.now()
            self._entered[node.id] = entered_at
            world.log_node(self._record(world, node, "enter"))

        detail = ""
        if node.kind == "Pause":
            duration = pause_duration(self.tree, node)
            status = SUCCESS if world.now() - entered_at >= duration else RUNNING
        elif node.kind == "WaitForGesture":
            params = self._params(node)
            outcome = world.await_gesture(self.tree, node, params, entered_at)
            if outcome == "fired":
                status = SUCCESS
            elif outcome == "pending":
                status = RUNNING
            elif outcome in ("cancelled", "timed_out"):
                status, detail = FAILURE, outcome
            else:
                raise WorldUnavailable(f"bad gesture outcome {outcome!r}")
        else:  # Action, Condition, Retract
            params = self._params(node)
            status = world.leaf_status(self.tree, node, params, entered_at)
            if status not in (SUCCESS, FAILURE, RUNNING):
                raise WorldUnavailable(f"bad leaf status {status!r}")

        if status != RUNNING:
            self._entered.pop(node.id, None)
            world.log_node(self._record(world, node, "exit", status, detail))
        return status

    def _params(self, node):
        return {ref: self.tree.parameters[ref].current for ref in node.param_refs}

    def _record(self, world, node, phase, status=None, detail=""):
        record = {
            "t": world.now(),
            "tree": self.tree.skill_id,
            "node": node.id,
            "name": node.name,
            "kind": node.kind,
            "phase": phase,
        }
        if status is not None:
            record["status"] = status
        if detail:
            record["detail"] = detail
        return record


def tick(tree, world):
    """One-shot tick (fresh runner); for trees that finish in a single tick."""
    return TreeRunner(tree).tick(world)
