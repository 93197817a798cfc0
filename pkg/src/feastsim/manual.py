"""User-manual generation (transparency level 1).

Renders a markdown document covering the meal procedure, every skill's
behavior tree with its adjustable settings, the gesture library, and the
safety monitors, all derived from the live tree descriptions so the manual
never drifts from the system.
"""

from __future__ import annotations

from . import bt, defaults
from .gestures import builtin_names

PROCEDURE = """\
## How a meal works

1. **New meal.** Tell the system what food is on the plate and how you like
   your bites ordered (for example: "alternate one bite of each").
2. **Task selection.** Large buttons request a bite, a sip, or a mouth wipe,
   or finish the meal. After a bite or sip, a countdown repeats the previous
   task automatically unless you choose something else.
3. **Bite acquisition.** The robot shows the bite it plans to pick up. You
   can accept it, switch to a different bite, or open the manual page to pick
   the exact spot and action yourself. If you do nothing, the robot continues
   on its own after the countdown.
4. **Transfer.** The robot asks you to confirm, moves near your mouth,
   announces itself, waits for your start signal (a gesture, a button, or
   automatic), and finishes the transfer using the configured completion
   interaction (sensing, a button press, or a timeout).
5. **Personalization.** At any time you can type requests like "be quiet" or
   "move faster with the utensil"; the system applies the safe subset and
   reports back what changed. You can also ask questions about what the
   robot is doing and why.
6. **Gestures.** You can record a personal gesture (a few positive and a few
   negative examples) and use it to control transfers.
"""

SAFETY = """\
## Safety monitors

- **Pose filtering.** Detections outside the calibrated zones (plate, drink,
  your head's range of motion) put the robot into a safety stop during
  transfers.
- **Collision monitoring.** Unexpected torque while moving stops the robot.
- **Compliant mode.** Inside-mouth transfers run under compliant control and
  can be pushed away with minimal force.
- **Breakaway utensil.** The fork holder yields under excessive force so that
  only the soft tip stays near you.
- **Emergency stops.** Your button and the caregiver's button stop the robot
  immediately, always.
- **Watchdog.** If any sensor stops reporting, the robot stops.
- Every personalization change is validated against your safety profile
  before it is applied; node additions are limited to pause, wait-for-gesture,
  and retract steps at vetted arm configurations.
"""


def render_manual(trees=None, gesture_names=None) -> str:
    trees = trees or defaults.load_default_trees()
    gesture_names = gesture_names or builtin_names()
    lines = ["# Mealtime-assistance system manual", "", PROCEDURE, SAFETY,
             "## Skills and their settings", ""]
    for tree_id in sorted(trees):
        tree = trees[tree_id]
        lines.append(f"### {tree_id}")
        lines.append("")
        lines.append("```")
        lines.append(bt.describe(tree).rstrip())
        lines.append("```")
        lines.append("")
    lines.append("## Gestures available")
    lines.append("")
    for name in gesture_names:
        lines.append(f"- {name.replace('_', ' ')}")
    lines.append("")
    return "\n".join(lines)
