"""Head-gesture detection over perception time series.

Detectors are closed-DSL expressions evaluated per frame over a sliding
window of head poses and facial signals (sampled at roughly 10 Hz). The DSL
is deliberately small: signal selectors, window statistics, threshold
predicates, oscillation counting, hold/sequence/debounce temporal operators,
and boolean connectives. Numeric positions may be literals or references to
named hyperparameters carrying (lo, hi) bounds, which is what the tuner
optimizes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EvalError, InvariantError, SchemaError, StreamEnded, UnknownGesture

SIGNALS = ("x", "y", "z", "yaw", "pitch", "roll", "mouth_open_ratio",
           "eye_aspect_left", "eye_aspect_right", "eyebrow_raise")

RATIO_SIGNALS = ("mouth_open_ratio", "eye_aspect_left", "eye_aspect_right",
                 "eyebrow_raise")

# A sampling gap longer than this invalidates hold() progress.
MAX_HOLD_GAP_S = 1.0


@dataclass(frozen=True)
class PerceptionFrame:
    t: float
    x: float = 0.0
    y: float = 0.0
    z: float = 0.6
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    mouth_open_ratio: float = 0.0
    eye_aspect_left: float = 0.75
    eye_aspect_right: float = 0.75
    eyebrow_raise: float = 0.1
    valid: bool = True

    def __post_init__(self):
        for name in RATIO_SIGNALS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvariantError(f"{name}={value} outside [0, 1]")

    def to_doc(self):
        doc = {name: getattr(self, name) for name in ("t",) + SIGNALS}
        doc["valid"] = self.valid
        return doc

    @staticmethod
    def from_doc(doc):
        return PerceptionFrame(**doc)


@dataclass(frozen=True)
class GestureExample:
    label: str                      # "positive" | "negative"
    frames: tuple

    def __post_init__(self):
        if self.label not in ("positive", "negative"):
            raise InvariantError(f"bad example label {self.label!r}")
        if len(self.frames) < 2:
            raise InvariantError("an example needs at least 2 frames")
        times = [f.t for f in self.frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvariantError("frame times must be strictly increasing")
        duration = times[-1] - times[0]
        if not 1.0 <= duration <= 30.0:
            raise InvariantError(f"example duration {duration:.2f}s outside [1, 30]")

    @property
    def positive(self):
        return self.label == "positive"

    def to_doc(self):
        return {"label": self.label, "frames": [f.to_doc() for f in self.frames]}

    @staticmethod
    def from_doc(doc):
        return GestureExample(doc["label"],
                              tuple(PerceptionFrame.from_doc(f) for f in doc["frames"]))


class SignalView:
    """Cached per-signal arrays for one frame sequence."""

    def __init__(self, frames):
        if not frames:
            raise EvalError("empty frame stream")
        self.frames = tuple(frames)
        self.times = np.array([f.t for f in frames], dtype=float)
        self.duration = float(self.times[-1] - self.times[0])
        self._signals = {}

    @staticmethod
    def of(example_or_frames):
        if isinstance(example_or_frames, SignalView):
            return example_or_frames
        if isinstance(example_or_frames, GestureExample):
            return SignalView(example_or_frames.frames)
        return SignalView(tuple(example_or_frames))

    def signal(self, name):
        if name not in self._signals:
            if name not in SIGNALS:
                raise EvalError(f"unknown signal {name!r}")
            self._signals[name] = np.array(
                [getattr(f, name) for f in self.frames], dtype=float)
        return self._signals[name]

    def window_starts(self, width_s):
        """Index of the first frame inside (t_i - width, t_i] for each i."""
        if width_s > self.duration + 1e-9:
            raise EvalError(
                f"window of {width_s:.2f}s longer than example ({self.duration:.2f}s)")
        return np.searchsorted(self.times, self.times - width_s, side="right")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Hyperparameter:
    name: str
    lo: float
    hi: float
    value: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvariantError(f"hyperparameter {self.name}: lo > hi")
        if not self.lo <= self.value <= self.hi:
            raise InvariantError(
                f"hyperparameter {self.name}: value {self.value} outside "
                f"[{self.lo}, {self.hi}]")

    def to_doc(self):
        return {"name": self.name, "lo": self.lo, "hi": self.hi, "value": self.value}


class _Ctx:
    def __init__(self, view, hp_values):
        self.view = view
        self.hp = hp_values


def _num(node, ctx):
    """Evaluate a numeric position: float or per-frame float array."""
    if isinstance(node, (int, float)):
        return float(node)
    return node.eval_num(ctx)


@dataclass(frozen=True)
class HpRef:
    name: str

    def eval_num(self, ctx):
        return float(ctx.hp[self.name])


@dataclass(frozen=True)
class Signal:
    name: str

    def eval_num(self, ctx):
        return ctx.view.signal(self.name)


@dataclass(frozen=True)
class WindowStat:
    stat: str          # min | max | mean | range | std
    signal: Signal
    width: object      # literal or HpRef

    def eval_num(self, ctx):
        values = self.signal.eval_num(ctx)
        starts = ctx.view.window_starts(_num(self.width, ctx))
        n = len(values)
        out = np.empty(n)
        if self.stat in ("mean", "std"):
            csum = np.concatenate(([0.0], np.cumsum(values)))
            csq = np.concatenate(([0.0], np.cumsum(values ** 2)))
            idx = np.arange(1, n + 1)
            count = idx - starts
            total = csum[idx] - csum[starts]
            mean = total / count
            if self.stat == "mean":
                return mean
            var = np.maximum((csq[idx] - csq[starts]) / count - mean ** 2, 0.0)
            return np.sqrt(var)
        # min/max/range via a monotonic scan (windows share a left-to-right order)
        lo = np.empty(n)
        hi = np.empty(n)
        for i in range(n):
            seg = values[starts[i]:i + 1]
            lo[i] = seg.min()
            hi[i] = seg.max()
        if self.stat == "min":
            return lo
        if self.stat == "max":
            return hi
        return hi - lo


@dataclass(frozen=True)
class OscillationCount:
    signal: Signal
    amplitude: object
    width: object

    def eval_num(self, ctx):
        values = self.signal.eval_num(ctx)
        theta = _num(self.amplitude, ctx)
        center = (values.min() + values.max()) / 2.0
        high = values >= center + theta / 2.0
        low = values <= center - theta / 2.0
        # alternation events: sign flips of the band sequence, zeros skipped
        signs = np.where(high, 1, np.where(low, -1, 0))
        nonzero = np.flatnonzero(signs)
        n = len(values)
        if len(nonzero) < 2:
            return np.zeros(n)
        banded = signs[nonzero]
        event_idx = nonzero[1:][banded[1:] != banded[:-1]]
        if len(event_idx) == 0:
            return np.zeros(n)
        starts = ctx.view.window_starts(_num(self.width, ctx))
        # count events whose frame index falls inside [starts[i], i]
        upto = np.searchsorted(event_idx, np.arange(n), side="right")
        before = np.searchsorted(event_idx, starts, side="left")
        return (upto - before).astype(float)


@dataclass(frozen=True)
class Compare:
    op: str            # > | >= | < | <=
    left: object
    right: object

    def eval_bool(self, ctx):
        a = _num(self.left, ctx)
        b = _num(self.right, ctx)
        if isinstance(a, float) and isinstance(b, float):
            a = np.full(len(ctx.view.times), a)
        if self.op == ">":
            return a > b
        if self.op == ">=":
            return a >= b
        if self.op == "<":
            return a < b
        return a <= b


@dataclass(frozen=True)
class Hold:
    predicate: object
    duration: object

    def eval_bool(self, ctx):
        flags = self.predicate.eval_bool(ctx)
        duration = _num(self.duration, ctx)
        times = ctx.view.times
        out = np.zeros(len(flags), dtype=bool)
        run_start = None
        prev_t = None
        for i, (t, ok) in enumerate(zip(times, flags)):
            if prev_t is not None and t - prev_t > MAX_HOLD_GAP_S:
                run_start = None   # perception dropout: progress invalidated
            if ok:
                if run_start is None:
                    run_start = t
                out[i] = t - run_start >= duration
            else:
                run_start = None
            prev_t = t
        return out


@dataclass(frozen=True)
class SequenceOp:
    first: object
    second: object
    within: object

    def eval_bool(self, ctx):
        a = self.first.eval_bool(ctx)
        b = self.second.eval_bool(ctx)
        within = _num(self.within, ctx)
        times = ctx.view.times
        out = np.zeros(len(a), dtype=bool)
        last_first = -np.inf
        for i, t in enumerate(times):
            if a[i]:
                last_first = t
            out[i] = b[i] and (t - last_first) <= within
        return out


@dataclass(frozen=True)
class Debounce:
    predicate: object
    tolerance: object   # frames

    def eval_bool(self, ctx):
        flags = self.predicate.eval_bool(ctx)
        tol = int(round(_num(self.tolerance, ctx)))
        out = np.zeros(len(flags), dtype=bool)
        last_true = -10 ** 9
        for i, ok in enumerate(flags):
            if ok:
                last_true = i
            out[i] = (i - last_true) <= tol
        return out


@dataclass(frozen=True)
class BoolOp:
    op: str            # and | or | not
    operands: tuple

    def eval_bool(self, ctx):
        parts = [p.eval_bool(ctx) for p in self.operands]
        if self.op == "not":
            return ~parts[0]
        out = parts[0]
        for p in parts[1:]:
            out = (out & p) if self.op == "and" else (out | p)
        return out


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_STATS = ("min", "max", "mean", "range", "std")


def _tokenize(text):
    return _TOKEN.findall(text)


def _read(tokens, pos):
    if pos >= len(tokens):
        raise SchemaError("unexpected end of expression")
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            item, pos = _read(tokens, pos)
            items.append(item)
        if pos >= len(tokens):
            raise SchemaError("unbalanced parentheses")
        return items, pos + 1
    if tok == ")":
        raise SchemaError("unexpected ')'")
    try:
        return float(tok), pos + 1
    except ValueError:
        return tok, pos + 1


def _numeric(sexp, hp_names):
    if isinstance(sexp, float):
        return sexp
    if isinstance(sexp, list) and sexp:
        head = sexp[0]
        if head == "hp":
            if len(sexp) != 2 or not isinstance(sexp[1], str):
                raise SchemaError("(hp NAME) takes one name")
            hp_names.add(sexp[1])
            return HpRef(sexp[1])
        if head == "signal":
            if len(sexp) != 2 or sexp[1] not in SIGNALS:
                raise SchemaError(f"(signal NAME) with NAME in {SIGNALS}")
            return Signal(sexp[1])
        if head in _STATS:
            if len(sexp) != 3:
                raise SchemaError(f"({head} SIGNAL WIDTH) takes two arguments")
            sig = _numeric(sexp[1], hp_names)
            if not isinstance(sig, Signal):
                raise SchemaError(f"{head} applies to a signal selector")
            return WindowStat(head, sig, _numeric(sexp[2], hp_names))
        if head == "oscillation_count":
            if len(sexp) != 4:
                raise SchemaError("(oscillation_count SIGNAL AMPLITUDE WIDTH)")
            sig = _numeric(sexp[1], hp_names)
            if not isinstance(sig, Signal):
                raise SchemaError("oscillation_count applies to a signal selector")
            return OscillationCount(sig, _numeric(sexp[2], hp_names),
                                    _numeric(sexp[3], hp_names))
    raise SchemaError(f"not a numeric expression: {sexp!r}")


def _predicate(sexp, hp_names):
    if not isinstance(sexp, list) or not sexp:
        raise SchemaError(f"not a predicate: {sexp!r}")
    head = sexp[0]
    if head in (">", ">=", "<", "<="):
        if len(sexp) != 3:
            raise SchemaError(f"({head} A B) takes two arguments")
        return Compare(head, _numeric(sexp[1], hp_names), _numeric(sexp[2], hp_names))
    if head == "hold":
        if len(sexp) != 3:
            raise SchemaError("(hold PREDICATE DURATION)")
        return Hold(_predicate(sexp[1], hp_names), _numeric(sexp[2], hp_names))
    if head == "sequence":
        if len(sexp) != 4:
            raise SchemaError("(sequence FIRST SECOND WITHIN)")
        return SequenceOp(_predicate(sexp[1], hp_names),
                          _predicate(sexp[2], hp_names),
                          _numeric(sexp[3], hp_names))
    if head == "debounce":
        if len(sexp) != 3:
            raise SchemaError("(debounce PREDICATE TOLERANCE)")
        return Debounce(_predicate(sexp[1], hp_names), _numeric(sexp[2], hp_names))
    if head in ("and", "or"):
        if len(sexp) < 3:
            raise SchemaError(f"({head} ...) takes at least two predicates")
        return BoolOp(head, tuple(_predicate(s, hp_names) for s in sexp[1:]))
    if head == "not":
        if len(sexp) != 2:
            raise SchemaError("(not PREDICATE)")
        return BoolOp("not", (_predicate(sexp[1], hp_names),))
    raise SchemaError(f"unknown predicate form: {head!r}")


def parse_expression(text):
    """Parse DSL source into (ast, referenced hyperparameter names)."""
    tokens = _tokenize(text)
    if not tokens:
        raise SchemaError("empty expression")
    sexp, pos = _read(tokens, 0)
    if pos != len(tokens):
        raise SchemaError("trailing tokens after expression")
    hp_names = set()
    ast = _predicate(sexp, hp_names)
    return ast, hp_names


# ---------------------------------------------------------------------------
# programs


@dataclass(frozen=True)
class GestureProgram:
    name: str
    description: str
    source: str
    hyperparameters: tuple = ()
    metrics: dict | None = None
    ast: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        ast, referenced = parse_expression(self.source)
        declared = {h.name for h in self.hyperparameters}
        if referenced - declared:
            raise InvariantError(
                f"undeclared hyperparameters: {sorted(referenced - declared)}")
        object.__setattr__(self, "ast", ast)

    def hp_values(self):
        return {h.name: h.value for h in self.hyperparameters}

    def with_values(self, assignment):
        hps = tuple(replace(h, value=float(assignment.get(h.name, h.value)))
                    for h in self.hyperparameters)
        return replace(self, hyperparameters=hps)

    def with_metrics(self, metrics):
        return replace(self, metrics=dict(metrics))

    def to_doc(self):
        doc = {
            "name": self.name,
            "description": self.description,
            "expression": self.source,
            "hyperparameters": [h.to_doc() for h in self.hyperparameters],
        }
        if self.metrics is not None:
            doc["metrics"] = self.metrics
        return doc

    @staticmethod
    def from_doc(doc):
        return GestureProgram(
            name=doc["name"], description=doc["description"], source=doc["expression"],
            hyperparameters=tuple(Hyperparameter(**h) for h in doc["hyperparameters"]),
            metrics=doc.get("metrics"))


def detections(program, frames_or_example, hp_values=None):
    """Boolean fire flag per frame."""
    view = SignalView.of(frames_or_example)
    ctx = _Ctx(view, hp_values if hp_values is not None else program.hp_values())
    flags = program.ast.eval_bool(ctx)
    invalid = np.array([not f.valid for f in view.frames])
    return flags & ~invalid


def evaluate(program, example, hp_values=None) -> bool:
    """True iff the detector fires at some frame of the example."""
    return bool(detections(program, example, hp_values).any())


# ---------------------------------------------------------------------------
# live detection


FIRED = "fired"
NOT_YET = "not_yet"
TIMED_OUT = "timed_out"
CANCELLED = "cancelled"


@dataclass(frozen=True)
class DetectionOutcome:
    status: str
    fired_at: float | None = None

    def __post_init__(self):
        if (self.status == FIRED) != (self.fired_at is not None):
            raise InvariantError("fired_at present iff status is fired")


class DetectorRun:
    """Incremental detector over a live stream; bounded frame memory."""

    def __init__(self, program, timeout_s, buffer_s=30.0):
        self.program = program
        self.timeout_s = timeout_s
        self.buffer_s = buffer_s
        self.frames = []
        self.started_at = None
        self.outcome = None

    def feed(self, frame):
        """Feed one frame; returns a DetectionOutcome once terminal."""
        if self.outcome is not None:
            return self.outcome
        if self.started_at is None:
            self.started_at = frame.t
        self.frames.append(frame)
        while self.frames and frame.t - self.frames[0].t > self.buffer_s:
            self.frames.pop(0)
        if len(self.frames) >= 2:
            try:
                flags = detections(self.program, self.frames)
            except EvalError:
                flags = None    # not enough history for the program's windows yet
            if flags is not None and flags[-1]:
                self.outcome = DetectionOutcome(FIRED, fired_at=frame.t)
                return self.outcome
        if frame.t - self.started_at >= self.timeout_s:
            self.outcome = DetectionOutcome(TIMED_OUT)
        return self.outcome

    def cancel(self):
        if self.outcome is None:
            self.outcome = DetectionOutcome(CANCELLED)
        return self.outcome


def run_detector(program, live_stream, timeout_s, cancel_signal=None):
    """Consume a frame stream until the program fires, times out, or is cancelled."""
    run = DetectorRun(program, timeout_s)
    for frame in live_stream:
        if cancel_signal is not None and cancel_signal():
            return run.cancel()
        outcome = run.feed(frame)
        if outcome is not None:
            return outcome
    raise StreamEnded("perception stream ended before a terminal outcome")


# ---------------------------------------------------------------------------
# builtins


def _builtin_mouth_open():
    return GestureProgram(
        name="mouth_open",
        description="Mouth opened wide, beyond normal talking.",
        source="(> (mean (signal mouth_open_ratio) 0.3) (hp open_threshold))",
        hyperparameters=(Hyperparameter("open_threshold", 0.2, 0.9, 0.6),),
    )


def _builtin_head_nod():
    return GestureProgram(
        name="head_nod",
        description="Nodding the head up and down a few times.",
        source="(>= (oscillation_count (signal pitch) (hp nod_amplitude) "
               "(hp window_secs)) 3)",
        hyperparameters=(Hyperparameter("nod_amplitude", 0.1, 0.6, 0.25),
                         Hyperparameter("window_secs", 1.5, 6.0, 3.0)),
    )


_BUILTINS = {
    "mouth_open": _builtin_mouth_open,
    "head_nod": _builtin_head_nod,
}


def builtin(name) -> GestureProgram:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise UnknownGesture(f"no builtin gesture {name!r}") from None


def builtin_names():
    return tuple(sorted(_BUILTINS))
