"""Task graph node types shared by the insertion and execution layers."""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .registry import AccessRecord


class TaskKind(enum.Enum):
    NORMAL = "normal"
    UNCERTAIN = "uncertain"
    COPY = "copy"
    SPECULATIVE = "speculative"
    SELECT = "select"


class Activation(enum.Enum):
    UNDEFINED = "undefined"
    ENABLED = "enabled"
    DISABLED = "disabled"


class Phase(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"


class _Skipped:
    """Distinguished result of a task that was disabled and never ran."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "SKIPPED"

    def __bool__(self) -> bool:
        return False


SKIPPED = _Skipped()


class TaskFuture:
    """Await a completion and read its value (wrote flag, None, or SKIPPED)."""

    __slots__ = ("_event", "_value")

    def __init__(self) -> None:
        self._event = threading.Event()
        self._value: Any = None

    def set(self, value: Any) -> None:
        self._value = value
        self._event.set()

    def wait(self, timeout: Optional[float] = None) -> Any:
        if not self._event.wait(timeout):
            raise TimeoutError("task result not available yet")
        return self._value

    @property
    def done(self) -> bool:
        return self._event.is_set()

    @property
    def value(self) -> Any:
        if not self._event.is_set():
            raise RuntimeError("result not available yet")
        return self._value


class TaskNode:
    """One unit of work in the DAG.

    The graph structure (accesses, predecessors, successors) is frozen
    once insertion returns; only ``activation``, ``phase`` and the
    result fields mutate afterwards, always under the runtime lock.
    """

    __slots__ = (
        "id",
        "label",
        "kind",
        "body",
        "accesses",
        "preds",
        "succs",
        "pending_preds",
        "activation",
        "phase",
        "skipped",
        "group",
        "step",
        "result_wrote",
        "future",
        "worker",
        "start_ns",
        "end_ns",
    )

    def __init__(
        self,
        task_id: int,
        kind: TaskKind,
        accesses: list[AccessRecord],
        body: Optional[Callable[..., Any]],
        label: str,
    ) -> None:
        self.id = task_id
        self.label = label
        self.kind = kind
        self.body = body
        self.accesses = accesses
        self.preds: list[TaskNode] = []
        self.succs: list[TaskNode] = []
        self.pending_preds = 0
        self.activation = Activation.UNDEFINED
        self.phase = Phase.PENDING
        self.skipped = False
        self.group = None  # SpecGroup or None
        self.step = None  # for twins: the user task this twin shadows
        self.result_wrote: Optional[bool] = None
        self.future = TaskFuture()
        self.worker: Optional[int] = None
        self.start_ns = 0
        self.end_ns = 0

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<Task {self.id}:{self.label} {self.kind.value}>"


@dataclass
class InsertionReceipt:
    """What one user insertion produced, plus a future for its outcome.

    ``speculative_twin`` is present iff speculation machinery was
    generated for the insertion.  ``result_future`` resolves to the
    operative wrote flag for an uncertain task (whichever instance ran),
    to None for a completed normal task, and to SKIPPED if the main task
    was disabled and never executed.
    """

    main_task: TaskNode
    speculative_twin: Optional[TaskNode] = None
    copies: list[TaskNode] = field(default_factory=list)
    selects: list[TaskNode] = field(default_factory=list)
    group: Any = None  # SpecGroup or None
    result_future: TaskFuture = field(default_factory=TaskFuture)
