"""Asynchronous multi-stage frame pipeline.

The coordinator owns a bounded queue of grabbed frames. Every frame carries a
status per stage; workers poll for the newest frame their stage has not seen
whose prerequisite stages are all Done, process it, and attach the result to
the frame. Frames a stage jumps over are marked Skipped for that stage, so a
slow stage always works on fresh data and never goes backwards.

Two run modes share the same queue:

* ``sim``: a discrete-event loop on a simulated clock. Workers are stepped
  cooperatively in one thread and stage service times come from the config,
  so traces are bit-reproducible.
* ``real``: one thread per worker on the monotonic clock; the calling thread
  grabs frames.
"""

from __future__ import annotations

import graphlib
import heapq
import itertools
import json
import logging
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Iterator, Mapping

from .image import ImageBuffer
from .metrics import DONE, ERROR, SKIPPED, StageTraceEvent, ThroughputReport, throughput_report

log = logging.getLogger(__name__)

SOURCE_KIND = "source"
DEFAULT_CAPACITY = 8
DEFAULT_POLL_TIMEOUT_MS = 10.0


class PipelineError(Exception):
    pass


class ConfigError(PipelineError, ValueError):
    pass


class QueueClosed(PipelineError):
    pass


class InvalidClaim(PipelineError):
    pass


class UnknownStage(PipelineError, KeyError):
    pass


class StageError(PipelineError):
    """Recoverable per-frame failure: the frame is Skipped for the stage, the run goes on."""


class StagePanic(PipelineError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause!r}")
        self.stage = stage
        self.cause = cause


class StageStatus(Enum):
    UNPROCESSED = "Unprocessed"
    CLAIMED = "Claimed"
    DONE = "Done"
    SKIPPED = "Skipped"


@dataclass(frozen=True)
class ResultPayload:
    """A stage result: a type tag plus an opaque value (never mutated once attached)."""

    tag: str
    value: Any = None


@dataclass(eq=False)
class Frame:
    id: int
    grab_time: int
    image: ImageBuffer
    status: dict[str, StageStatus]
    results: dict[str, ResultPayload] = field(default_factory=dict)

    def result(self, stage: str) -> ResultPayload | None:
        return self.results.get(stage)


@dataclass(frozen=True)
class FrameClaim:
    stage: str
    frame_id: int
    frame: Frame
    token: int


@dataclass(frozen=True)
class QueueEvent:
    """Observer notification. ``kind`` is one of claim, done, skip, abandon, evict.

    ``statuses`` is a copy of the frame's stage statuses when the event fired.
    """

    kind: str
    stage: str | None
    frame_id: int
    t: int
    statuses: Mapping[str, StageStatus]


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StageDescriptor:
    name: str
    prerequisites: tuple[str, ...] = ()
    worker_count: int = 1
    priority: int = 0
    kind: str = "passthrough"
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def is_source(self) -> bool:
        return self.kind == SOURCE_KIND


@dataclass(frozen=True)
class ClockConfig:
    mode: str = "sim"
    source_fps: float = 30.0
    duration_s: float | None = None
    service_times: Mapping[str, float] = field(default_factory=dict)  # milliseconds

    def service_ns(self, stage: str) -> int:
        return int(round(float(self.service_times.get(stage, 0.0)) * 1e6))


@dataclass(frozen=True)
class PipelineConfig:
    stages: tuple[StageDescriptor, ...]
    queue_capacity: int = DEFAULT_CAPACITY
    clock: ClockConfig = field(default_factory=ClockConfig)
    poll_timeout_ms: float = DEFAULT_POLL_TIMEOUT_MS
    display_stage: str | None = None

    def stage(self, name: str) -> StageDescriptor:
        for s in self.stages:
            if s.name == name:
                return s
        raise UnknownStage(name)

    @property
    def source_stages(self) -> list[str]:
        return [s.name for s in self.stages if s.is_source]

    @property
    def display(self) -> str | None:
        """Stage whose completions count as displayed frames: explicit, else the last sink."""
        if self.display_stage is not None:
            return self.display_stage
        for s in reversed(self.stages):
            if s.kind == "overlay":
                return s.name
        workers = [s.name for s in self.stages if not s.is_source]
        return workers[-1] if workers else None

    def validate(self) -> "PipelineConfig":
        if not self.stages:
            raise ConfigError("pipeline declares no stages")
        if self.queue_capacity < 2:
            raise ConfigError(f"queue capacity must be >= 2, got {self.queue_capacity}")
        if self.poll_timeout_ms <= 0:
            raise ConfigError("poll timeout must be positive")
        names = [s.name for s in self.stages]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"duplicate stage names: {dupes}")
        graph = {}
        for s in self.stages:
            if s.worker_count < 1:
                raise ConfigError(f"stage {s.name!r}: worker_count must be >= 1")
            for p in s.prerequisites:
                if p not in names:
                    raise ConfigError(f"stage {s.name!r} requires undeclared stage {p!r}")
            if s.is_source and s.prerequisites:
                raise ConfigError(f"source stage {s.name!r} cannot have prerequisites")
            graph[s.name] = set(s.prerequisites)
        try:
            tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise ConfigError(f"prerequisite cycle: {' -> '.join(exc.args[1])}") from None
        if self.clock.mode not in ("sim", "real"):
            raise ConfigError(f"clock mode must be 'sim' or 'real', got {self.clock.mode!r}")
        if self.clock.source_fps <= 0:
            raise ConfigError("source_fps must be positive")
        for name in self.clock.service_times:
            if name not in names:
                raise ConfigError(f"service time given for undeclared stage {name!r}")
        if self.display_stage is not None and self.display_stage not in names:
            raise ConfigError(f"display stage {self.display_stage!r} is not declared")
        return self

    def transitive_prerequisites(self, name: str) -> list[str]:
        seen: list[str] = []
        stack = list(self.stage(name).prerequisites)
        while stack:
            p = stack.pop()
            if p not in seen:
                seen.append(p)
                stack.extend(self.stage(p).prerequisites)
        order = [s.name for s in self.stages]
        return sorted(seen, key=order.index)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineConfig":
        try:
            stages = tuple(
                StageDescriptor(
                    name=str(s["name"]),
                    prerequisites=tuple(s.get("prerequisites", ())),
                    worker_count=int(s.get("worker_count", 1)),
                    priority=int(s.get("priority", 0)),
                    kind=str(s.get("kind", "passthrough")),
                    params=dict(s.get("params", {})),
                )
                for s in d.get("stages", ())
            )
            c = d.get("clock", {})
            clock = ClockConfig(
                mode=str(c.get("mode", "sim")),
                source_fps=float(c.get("source_fps", 30.0)),
                duration_s=None if c.get("duration_s") is None else float(c["duration_s"]),
                service_times={str(k): float(v) for k, v in c.get("service_times", {}).items()},
            )
            cfg = cls(stages=stages, queue_capacity=int(d.get("queue_capacity", DEFAULT_CAPACITY)),
                      clock=clock,
                      poll_timeout_ms=float(d.get("poll_timeout_ms", DEFAULT_POLL_TIMEOUT_MS)),
                      display_stage=d.get("display_stage"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed pipeline config: {exc!r}") from None
        return cfg.validate()

    def to_dict(self) -> dict:
        return OrderedDict([
            ("stages", [OrderedDict([("name", s.name), ("prerequisites", list(s.prerequisites)),
                                     ("worker_count", s.worker_count), ("priority", s.priority),
                                     ("kind", s.kind), ("params", dict(s.params))])
                        for s in self.stages]),
            ("queue_capacity", self.queue_capacity),
            ("clock", OrderedDict([("mode", self.clock.mode), ("source_fps", self.clock.source_fps),
                                   ("duration_s", self.clock.duration_s),
                                   ("service_times", dict(self.clock.service_times))])),
            ("poll_timeout_ms", self.poll_timeout_ms),
            ("display_stage", self.display_stage),
        ])


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return PipelineConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# clocks


class SimulatedClock:
    mode = "sim"

    def __init__(self, start_ns: int = 0):
        self._now = int(start_ns)

    def now(self) -> int:
        return self._now

    def advance(self, delta_ns: int) -> int:
        if delta_ns < 0:
            raise ValueError("simulated time cannot go backwards")
        self._now += int(delta_ns)
        return self._now

    def advance_to(self, t_ns: int) -> int:
        return self.advance(t_ns - self._now)


class RealTimeClock:
    """Monotonic nanoseconds since construction."""

    mode = "real"

    def __init__(self):
        self._origin = time.monotonic_ns()

    def now(self) -> int:
        return time.monotonic_ns() - self._origin


# ---------------------------------------------------------------------------
# queue and board


class ResultsBoard:
    """Newest completed result per stage; frame ids never move backwards."""

    def __init__(self):
        self._lock = threading.Lock()
        self._latest: dict[str, tuple[int, ResultPayload]] = {}

    def update(self, stage: str, frame_id: int, payload: ResultPayload) -> bool:
        with self._lock:
            cur = self._latest.get(stage)
            if cur is not None and cur[0] >= frame_id:
                return False
            self._latest[stage] = (frame_id, payload)
            return True

    def latest(self, stage: str) -> tuple[int, ResultPayload] | None:
        with self._lock:
            return self._latest.get(stage)

    def snapshot(self) -> dict[str, tuple[int, ResultPayload]]:
        with self._lock:
            return dict(self._latest)


def latest_result(board: ResultsBoard, stage: str) -> tuple[int, ResultPayload] | None:
    return board.latest(stage)


class FrameQueue:
    """Bounded, internally synchronized frame store shared by all workers."""

    def __init__(self, stages: Iterable[StageDescriptor], capacity: int = DEFAULT_CAPACITY,
                 board: ResultsBoard | None = None,
                 listener: Callable[[QueueEvent], None] | None = None):
        if capacity < 2:
            raise ConfigError(f"queue capacity must be >= 2, got {capacity}")
        self.capacity = capacity
        self._stages = {s.name: s for s in stages}
        self._sources = [n for n, s in self._stages.items() if s.is_source]
        self.board = board if board is not None else ResultsBoard()
        self._listener = listener
        self._cond = threading.Condition()
        self._frames: list[Frame] = []
        self._next_id = 1
        self._last_returned = {n: 0 for n in self._stages}
        self._tokens = itertools.count(1)
        self._live: dict[tuple[str, int], int] = {}
        self._closed = False

    # -- helpers (lock held) --

    def _emit(self, kind, stage, frame, t):
        if self._listener is not None:
            self._listener(QueueEvent(kind, stage, frame.id, t, dict(frame.status)))

    def _check_stage(self, stage):
        if stage not in self._stages:
            raise UnknownStage(stage)

    def _eligible(self, stage) -> Frame | None:
        prereqs = self._stages[stage].prerequisites
        floor = self._last_returned[stage]
        for f in reversed(self._frames):
            if f.id <= floor:
                return None
            if f.status[stage] is StageStatus.UNPROCESSED and all(
                    f.status[p] is StageStatus.DONE for p in prereqs):
                return f
        return None

    def _poll_locked(self, stage, now) -> FrameClaim | None:
        if self._closed:
            return None
        f = self._eligible(stage)
        if f is None:
            return None
        for older in self._frames:
            if older.id >= f.id:
                break
            if older.status[stage] is StageStatus.UNPROCESSED:
                older.status[stage] = StageStatus.SKIPPED
                self._emit("skip", stage, older, now)
        f.status[stage] = StageStatus.CLAIMED
        self._last_returned[stage] = f.id
        token = next(self._tokens)
        self._live[(stage, f.id)] = token
        self._emit("claim", stage, f, now)
        return FrameClaim(stage, f.id, f, token)

    def _evict(self, now):
        while len(self._frames) > self.capacity:
            victim = next((f for f in self._frames
                           if StageStatus.CLAIMED not in f.status.values()), None)
            if victim is None:
                log.warning("queue over capacity: every frame holds a claim")
                return
            self._frames.remove(victim)
            self._emit("evict", None, victim, now)

    # -- public API --

    @property
    def closed(self) -> bool:
        return self._closed

    def __len__(self):
        with self._cond:
            return len(self._frames)

    def frame_ids(self) -> list[int]:
        with self._cond:
            return [f.id for f in self._frames]

    def get(self, frame_id: int) -> Frame | None:
        with self._cond:
            return next((f for f in self._frames if f.id == frame_id), None)

    def push(self, image: ImageBuffer, now: int,
             source_result: ResultPayload | None = None) -> int:
        """Append a grabbed frame; source stages are Done on it, all others Unprocessed."""
        if not isinstance(image, ImageBuffer):
            raise TypeError("push expects an ImageBuffer")
        with self._cond:
            if self._closed:
                raise QueueClosed("queue is shut down")
            if self._frames and now < self._frames[-1].grab_time:
                raise ValueError("grab times must be non-decreasing")
            status = {n: (StageStatus.DONE if s.is_source else StageStatus.UNPROCESSED)
                      for n, s in self._stages.items()}
            f = Frame(self._next_id, int(now), image, status)
            self._next_id += 1
            for src in self._sources:
                payload = source_result if source_result is not None else ResultPayload("frame")
                f.results[src] = payload
            self._frames.append(f)
            for src in self._sources:
                self.board.update(src, f.id, f.results[src])
                self._emit("done", src, f, now)
            self._evict(now)
            self._cond.notify_all()
            return f.id

    def poll(self, stage: str, now: int = 0) -> FrameClaim | None:
        """Claim the newest eligible frame for ``stage`` (non-blocking)."""
        with self._cond:
            self._check_stage(stage)
            if self._stages[stage].is_source:
                raise UnknownStage(f"{stage} is a source stage and cannot be polled")
            return self._poll_locked(stage, now)

    def wait_poll(self, stage: str, timeout_s: float, now: Callable[[], int]) -> FrameClaim | None:
        """Like poll, but wait up to ``timeout_s`` for a wake signal when nothing qualifies."""
        with self._cond:
            self._check_stage(stage)
            claim = self._poll_locked(stage, now())
            if claim is not None or self._closed:
                return claim
            self._cond.wait(timeout_s)
            return self._poll_locked(stage, now())

    def _finish(self, claim: FrameClaim, new_status: StageStatus):
        if self._live.get((claim.stage, claim.frame_id)) != claim.token:
            raise InvalidClaim(f"claim on frame {claim.frame_id} for {claim.stage!r} is not live")
        if claim.frame.status.get(claim.stage) is not StageStatus.CLAIMED:
            raise InvalidClaim(f"frame {claim.frame_id} is not Claimed by {claim.stage!r}")
        del self._live[(claim.stage, claim.frame_id)]
        claim.frame.status[claim.stage] = new_status

    def complete(self, claim: FrameClaim, result: ResultPayload, now: int = 0) -> None:
        with self._cond:
            self._finish(claim, StageStatus.DONE)
            claim.frame.results[claim.stage] = result
            self.board.update(claim.stage, claim.frame_id, result)
            self._emit("done", claim.stage, claim.frame, now)
            self._cond.notify_all()

    def abandon(self, claim: FrameClaim, now: int = 0) -> None:
        """Give up a claim after a recoverable failure; the frame is Skipped for the stage."""
        with self._cond:
            self._finish(claim, StageStatus.SKIPPED)
            self._emit("abandon", claim.stage, claim.frame, now)
            self._cond.notify_all()

    def outstanding_claims(self) -> int:
        with self._cond:
            return len(self._live)

    def quiescent(self) -> bool:
        """No live claim and no stage has an eligible frame."""
        with self._cond:
            if self._live:
                return False
            return all(s.is_source or self._eligible(n) is None for n, s in self._stages.items())

    def wait_quiescent(self, timeout_s: float) -> bool:
        deadline = time.monotonic() + timeout_s
        with self._cond:
            while True:
                if not self._live and all(s.is_source or self._eligible(n) is None
                                          for n, s in self._stages.items()):
                    return True
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(min(remaining, 0.05))

    def wait_claims_drained(self, timeout_s: float | None = None) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: not self._live, timeout_s)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


# ---------------------------------------------------------------------------
# stages and reports


@dataclass(frozen=True)
class StageContext:
    """What a stage function may look at: its frame, prerequisite results, the board."""

    stage: StageDescriptor
    frame: Frame
    prerequisite_results: Mapping[str, ResultPayload]
    board: ResultsBoard

    @property
    def image(self) -> ImageBuffer:
        return self.frame.image

    def find(self, tag: str) -> ResultPayload | None:
        """Most downstream prerequisite result carrying ``tag``."""
        for payload in reversed(list(self.prerequisite_results.values())):
            if payload.tag == tag:
                return payload
        return None


StageFn = Callable[[StageContext], Any]
StageFactory = Callable[[], StageFn]


def passthrough(ctx: StageContext) -> ResultPayload:
    return ResultPayload("none")


@dataclass
class RunReport:
    events: list[StageTraceEvent]
    stage_order: list[str]
    source_stages: list[str]
    display_stage: str | None
    clock_mode: str
    error: dict | None = None
    wall_time_s: float | None = None

    def events_for(self, stage: str) -> list[StageTraceEvent]:
        return [e for e in self.events if e.stage == stage]

    def throughput(self) -> ThroughputReport:
        src = [e for e in self.events if e.stage in self.source_stages]
        # one grab per frame even with several source stages
        grab = list({e.frame_id: e for e in src}.values())
        disp = self.events_for(self.display_stage) if self.display_stage else []
        return throughput_report(self.events, grab, disp)

    def summary(self) -> "OrderedDict[str, dict]":
        if not self.events:
            return OrderedDict()
        rep = self.throughput()
        return OrderedDict((s.stage, s.to_dict()) for s in rep.stages)

    def to_dict(self) -> dict:
        d = OrderedDict()
        d["clock"] = self.clock_mode
        d["stages"] = list(self.stage_order)
        d["source_stages"] = list(self.source_stages)
        d["display_stage"] = self.display_stage
        d["trace"] = [e.to_dict() for e in self.events]
        if self.events:
            rep = self.throughput()
            d["summary"] = [s.to_dict() for s in rep.stages]
            d["latency_ns"] = rep.to_dict()["latency_ns"]
        else:
            d["summary"] = []
            d["latency_ns"] = OrderedDict([("p50", None), ("p95", None), ("p99", None)])
        d["error"] = self.error
        if self.clock_mode != "sim":
            d["wall_time_s"] = self.wall_time_s
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d) -> "RunReport":
        events = [StageTraceEvent.from_dict(e) for e in d["trace"]]
        order = d.get("stages") or list(OrderedDict.fromkeys(e.stage for e in events))
        return cls(events, list(order), list(d.get("source_stages", [])), d.get("display_stage"),
                   d["clock"], d.get("error"), d.get("wall_time_s"))


SourceItem = tuple[ImageBuffer, ResultPayload | None]


def _normalize_source(source) -> Iterator[SourceItem]:
    for item in source:
        if isinstance(item, ImageBuffer):
            yield item, None
        else:
            img, payload = item
            yield img, payload


def _blank_frames() -> Iterator[SourceItem]:
    img = ImageBuffer.blank(1, 1)
    while True:
        yield img, None


# ---------------------------------------------------------------------------
# pipeline


class Pipeline:
    """Handle returned by :func:`create_pipeline`.

    ``impls`` maps stage name to a factory returning the stage function; each
    worker calls the factory once, so per-worker state (a plugin process, for
    instance) is never shared. Stages without an entry are passthrough.
    ``on_result(stage, frame, payload)`` is called after every Done.
    """

    def __init__(self, config: PipelineConfig, impls: Mapping[str, StageFactory] | None = None,
                 on_result: Callable[[str, Frame, ResultPayload], None] | None = None,
                 listener: Callable[[QueueEvent], None] | None = None):
        self.config = config.validate()
        self.impls = dict(impls or {})
        for name in self.impls:
            self.config.stage(name)
        self.on_result = on_result
        self.board = ResultsBoard()
        self._extra_listener = listener
        self._events: list[StageTraceEvent] = []
        self._events_lock = threading.Lock()
        self.queue = FrameQueue(self.config.stages, self.config.queue_capacity, self.board,
                                self._on_queue_event)
        self._stop = threading.Event()
        self._running = False
        self._prereqs = {s.name: self.config.transitive_prerequisites(s.name)
                         for s in self.config.stages}
        self.clock = SimulatedClock() if self.config.clock.mode == "sim" else RealTimeClock()

    # trace collection: skips come from the queue, Done/Error from workers
    def _on_queue_event(self, ev: QueueEvent):
        if ev.kind == "skip":
            self._record(StageTraceEvent(ev.stage, ev.frame_id, ev.t, ev.t, SKIPPED))
        elif ev.kind == "evict":
            # stages that never reached the frame count as skipped for it
            for name, st in ev.statuses.items():
                if st is StageStatus.UNPROCESSED:
                    self._record(StageTraceEvent(name, ev.frame_id, ev.t, ev.t, SKIPPED))
        elif ev.kind == "done" and ev.stage in self.config.source_stages:
            self._record(StageTraceEvent(ev.stage, ev.frame_id, ev.t, ev.t, DONE))
        if self._extra_listener is not None:
            self._extra_listener(ev)

    def _record(self, ev: StageTraceEvent):
        with self._events_lock:
            self._events.append(ev)

    @property
    def stage_names(self) -> list[str]:
        return [s.name for s in self.config.stages]

    def _context(self, claim: FrameClaim) -> StageContext:
        frame = claim.frame
        prereq = OrderedDict((p, frame.results[p]) for p in self._prereqs[claim.stage]
                             if p in frame.results)
        return StageContext(self.config.stage(claim.stage), frame, prereq, self.board)

    @staticmethod
    def _wrap(stage: StageDescriptor, value) -> ResultPayload:
        if isinstance(value, ResultPayload):
            return value
        return ResultPayload(stage.kind, value)

    def _make_workers(self):
        workers = []
        for idx, s in enumerate(self.config.stages):
            if s.is_source:
                continue
            factory = self.impls.get(s.name)
            for k in range(s.worker_count):
                fn = factory() if factory is not None else passthrough
                workers.append(_Worker(s, idx, k, fn))
        # advisory priority: higher first; stage declaration order, then worker index
        workers.sort(key=lambda w: (-w.stage.priority, w.order, w.index))
        return workers

    def _report(self, error=None, wall=None) -> RunReport:
        with self._events_lock:
            events = list(self._events)
        return RunReport(events, self.stage_names, self.config.source_stages, self.config.display,
                         self.config.clock.mode, error, wall)

    def run(self, source: Iterable | None = None, max_frames: int | None = None) -> RunReport:
        """Run until the source (or the configured duration) is exhausted and work drains."""
        if self._running:
            raise PipelineError("pipeline is already running")
        self._running = True
        try:
            if self.config.clock.mode == "sim":
                return self._run_simulated(source, max_frames)
            return self._run_threaded(source, max_frames)
        finally:
            self._running = False

    def shutdown(self) -> None:
        """Stop grabbing, let in-flight claims finish, then close the queue."""
        self._stop.set()
        if not self._running:
            self.queue.close()

    def _frame_budget(self, max_frames):
        c = self.config.clock
        budget = max_frames
        if c.duration_s is not None:
            n = int(round(c.duration_s * c.source_fps))
            budget = n if budget is None else min(budget, n)
        return budget

    def _grab_time(self, k: int) -> int:
        return int(round(k * 1e9 / self.config.clock.source_fps))

    def _process(self, worker, claim):
        ctx = self._context(claim)
        return self._wrap(worker.stage, worker.fn(ctx))

    # -- simulated clock --

    def _run_simulated(self, source, max_frames) -> RunReport:
        src = _normalize_source(source) if source is not None else _blank_frames()
        budget = self._frame_budget(max_frames)
        if source is None and budget is None:
            raise ConfigError("simulated run without a source needs clock.duration_s or max_frames")
        workers = self._make_workers()
        heap: list = []
        seq = itertools.count()
        error = None
        # completions sort before grabs at equal time
        COMPLETE, GRAB = 0, 1
        if budget is None or budget > 0:
            heapq.heappush(heap, (0, GRAB, next(seq), 0))
        clock = self.clock

        def dispatch(t):
            nonlocal error
            if error is not None:
                return
            for w in workers:
                if w.busy:
                    continue
                claim = self.queue.poll(w.stage.name, t)
                if claim is None:
                    continue
                service = self.config.clock.service_ns(w.stage.name)
                try:
                    payload = self._process(w, claim)
                    outcome = DONE
                except StageError as exc:
                    log.info("stage %s skipped frame %d: %s", w.stage.name, claim.frame_id, exc)
                    payload, outcome = None, ERROR
                except Exception as exc:  # noqa: BLE001 - reported as StagePanic
                    log.error("stage %s panicked on frame %d: %r", w.stage.name, claim.frame_id, exc)
                    error = _panic_dict(w.stage.name, exc)
                    self.queue.abandon(claim, t)
                    self._record(StageTraceEvent(w.stage.name, claim.frame_id, t, t, ERROR))
                    return
                w.busy = True
                heapq.heappush(heap, (t + service, COMPLETE, next(seq), (w, claim, payload, outcome, t)))

        while heap:
            t, kind, _, data = heapq.heappop(heap)
            clock.advance_to(t)
            if kind == GRAB:
                if self._stop.is_set() or error is not None:
                    continue
                try:
                    img, payload = next(src)
                except StopIteration:
                    continue
                self.queue.push(img, t, payload)
                k = data + 1
                if budget is None or k < budget:
                    heapq.heappush(heap, (self._grab_time(k), GRAB, next(seq), k))
            else:
                w, claim, payload, outcome, t0 = data
                w.busy = False
                if outcome == DONE:
                    self.queue.complete(claim, payload, t)
                    self._record(StageTraceEvent(w.stage.name, claim.frame_id, t0, t, DONE))
                    if self.on_result is not None:
                        self.on_result(w.stage.name, claim.frame, payload)
                else:
                    self.queue.abandon(claim, t)
                    self._record(StageTraceEvent(w.stage.name, claim.frame_id, t0, t, ERROR))
            if not self._stop.is_set():
                dispatch(t)
        self.queue.close()
        _close_workers(workers)
        return self._report(error)

    # -- real time --

    def _run_threaded(self, source, max_frames) -> RunReport:
        src = _normalize_source(source) if source is not None else _blank_frames()
        # without a source or budget the pipeline runs until shutdown()
        budget = self._frame_budget(max_frames)
        workers = self._make_workers()
        clock = self.clock
        timeout_s = self.config.poll_timeout_ms / 1000.0
        errors: list[dict] = []
        err_lock = threading.Lock()
        wall0 = time.monotonic()

        def loop(w):
            while True:
                if self.queue.closed:
                    return
                claim = self.queue.wait_poll(w.stage.name, timeout_s, clock.now)
                if claim is None:
                    continue
                t0 = clock.now()
                try:
                    payload = self._process(w, claim)
                except StageError as exc:
                    log.info("stage %s skipped frame %d: %s", w.stage.name, claim.frame_id, exc)
                    self.queue.abandon(claim, clock.now())
                    self._record(StageTraceEvent(w.stage.name, claim.frame_id, t0, clock.now(), ERROR))
                    continue
                except Exception as exc:  # noqa: BLE001
                    log.error("stage %s panicked on frame %d: %r", w.stage.name, claim.frame_id, exc)
                    with err_lock:
                        errors.append(_panic_dict(w.stage.name, exc))
                    self.queue.abandon(claim, clock.now())
                    self._record(StageTraceEvent(w.stage.name, claim.frame_id, t0, clock.now(), ERROR))
                    self._stop.set()
                    return
                t1 = clock.now()
                self.queue.complete(claim, payload, t1)
                self._record(StageTraceEvent(w.stage.name, claim.frame_id, t0, t1, DONE))
                if self.on_result is not None:
                    self.on_result(w.stage.name, claim.frame, payload)

        threads = [threading.Thread(target=loop, args=(w,), name=f"{w.stage.name}-{w.index}",
                                    daemon=True) for w in workers]
        for th in threads:
            th.start()
        try:
            k = 0
            while (budget is None or k < budget) and not self._stop.is_set():
                due = self._grab_time(k)
                delay = (due - clock.now()) / 1e9
                if delay > 0 and self._stop.wait(delay):
                    break
                try:
                    img, payload = next(src)
                except StopIteration:
                    break
                self.queue.push(img, clock.now(), payload)
                k += 1
            # let remaining eligible work finish unless asked to stop
            while not self._stop.is_set() and not self.queue.wait_quiescent(0.05):
                pass
            self.queue.wait_claims_drained()
        finally:
            self.queue.close()
            for th in threads:
                th.join()
            _close_workers(workers)
        return self._report(errors[0] if errors else None, time.monotonic() - wall0)


@dataclass(eq=False)
class _Worker:
    stage: StageDescriptor
    order: int
    index: int
    fn: StageFn
    busy: bool = False


def _panic_dict(stage, exc) -> dict:
    return OrderedDict([("type", "StagePanic"), ("stage", stage),
                        ("message", f"{type(exc).__name__}: {exc}")])


def _close_workers(workers):
    for w in workers:
        close = getattr(w.fn, "close", None)
        if callable(close):
            try:
                close()
            except Exception:  # noqa: BLE001
                log.exception("closing stage %s worker %d", w.stage.name, w.index)


def create_pipeline(config: PipelineConfig, impls: Mapping[str, StageFactory] | None = None,
                    **kwargs) -> Pipeline:
    return Pipeline(config, impls, **kwargs)


def run(handle: Pipeline, source: Iterable | None = None, max_frames: int | None = None) -> RunReport:
    return handle.run(source, max_frames)


def shutdown(handle: Pipeline) -> None:
    handle.shutdown()
