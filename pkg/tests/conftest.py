import pytest

from feastsim import defaults
from feastsim.tick import RUNNING, SUCCESS


class ScriptedWorld:
    """Minimal world for driving trees in tests.

    Leaf behaviors are keyed by node id; unscripted Action/Condition/Retract
    leaves succeed immediately. Gestures fire when their name is added to
    `fired`; `cancelled` forces the cancel path.
    """

    def __init__(self, dt=0.1, behaviors=None):
        self.t = 0.0
        self.dt = dt
        self.behaviors = behaviors or {}
        self.node_log = []
        self.fired = set()
        self.cancelled = False

    def now(self):
        return self.t

    def step(self):
        self.t += self.dt

    def leaf_status(self, tree, node, params, entered_at):
        fn = self.behaviors.get(node.id)
        if fn is None:
            return SUCCESS
        return fn(self, tree, node, params, entered_at)

    def await_gesture(self, tree, node, params, entered_at):
        if self.cancelled:
            return "cancelled"
        interaction = params.get("TransferInitiationInteraction", "gesture")
        if interaction == "auto":
            return "fired"
        if interaction == "button":
            return "fired" if "button" in self.fired else "pending"
        gesture = params.get("TransferInitiationGesture")
        if gesture is None:
            gesture = next((v for v in params.values() if isinstance(v, str)), None)
        if gesture in self.fired:
            return "fired"
        timeout = next((v for v in params.values()
                        if isinstance(v, (int, float)) and not isinstance(v, bool)),
                       60.0)
        if self.t - entered_at >= timeout:
            return "timed_out"
        return "pending"

    def log_node(self, record):
        self.node_log.append(record)


def run_tree(runner, world, max_ticks=10000):
    status = runner.tick(world)
    ticks = 1
    while status == RUNNING and ticks < max_ticks:
        world.step()
        status = runner.tick(world)
        ticks += 1
    return status, ticks


@pytest.fixture
def trees():
    return defaults.load_default_trees()


@pytest.fixture
def world():
    return ScriptedWorld()
