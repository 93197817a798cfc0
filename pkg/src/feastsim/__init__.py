"""Desk-scale mealtime-assistance orchestration.

Parameterized behavior-tree skills, a natural-language personalization
pipeline with safety validation, STRIPS skill sequencing, gesture-detector
synthesis, and transparency reporting, all running against a deterministic
simulated robot and environment.
"""

__version__ = "0.1.0"
