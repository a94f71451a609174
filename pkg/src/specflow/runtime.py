"""The speculative sequential-task-flow runtime.

A single thread inserts tasks declaring data accesses; the runtime
infers dependencies so that parallel execution matches sequential
semantics.  Tasks declaring a maybe-write access are *uncertain*: their
body reports whether it actually wrote, and the runtime speculatively
duplicates data and runs shadow twins of downstream tasks under the
assumption that nothing was written, falling back to the normal path
when the assumption breaks.

Lock discipline: one lock guards the graph structure, activation and
phase transitions, group state, and the ready queue.  Task bodies run
outside the lock.  The activation check and the body-start transition
form one atomic step, which is what makes ``try_disable`` exact.
"""

from __future__ import annotations

import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

from .groups import (
    ActivationPolicy,
    ActivationStats,
    GroupState,
    SpecEngine,
    SpecGroup,
    always_enable,
)
from .registry import (
    AccessMode,
    AccessRecord,
    DataHandle,
    DataRegistry,
    DuplicateRecord,
)
from .task import (
    SKIPPED,
    Activation,
    InsertionReceipt,
    Phase,
    TaskKind,
    TaskNode,
)

ENV_WORKERS = "SPECFLOW_NUM_THREADS"

_WRITE_MODES = (AccessMode.WRITE, AccessMode.MAYBE_WRITE)
_EXCLUSIVE_MODES = (AccessMode.ATOMIC_WRITE, AccessMode.COMMUTE)


class InsertionError(Exception):
    """Raised when an access list violates the insertion contract."""


class TaskBodyError(Exception):
    """A task body raised; carries the failing task id and label."""

    def __init__(self, task: TaskNode, cause: BaseException) -> None:
        super().__init__(f"task {task.id} ({task.label!r}) failed: {cause!r}")
        self.task = task
        self.cause = cause


@dataclass
class RuntimeStats:
    tasks_run: int = 0
    tasks_skipped: int = 0
    tasks_wasted: int = 0
    disables_too_late: int = 0


def default_worker_count() -> int:
    env = os.environ.get(ENV_WORKERS)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class SpecRuntime:
    """Worker-pool runtime with speculative execution over uncertain tasks."""

    def __init__(
        self,
        workers: Optional[int] = None,
        activation_policy: Optional[ActivationPolicy] = None,
        name: str = "specflow",
    ) -> None:
        self.name = name
        self.workers = workers if workers is not None else default_worker_count()
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        self.registry = DataRegistry()
        self.stats = RuntimeStats()
        self.resolution_log: list[tuple[str, Any]] = []
        self.tasks: list[TaskNode] = []
        self.groups: list[SpecGroup] = []
        self._lock = threading.Lock()
        self._cv = threading.Condition(self._lock)
        self._queue: deque[TaskNode] = deque()
        self._pending = 0
        self._failure: Optional[TaskBodyError] = None
        self._closed = False
        self.engine = SpecEngine(
            activation_policy or always_enable,
            self._try_disable_locked,
            self._record,
        )
        self._trace: list[tuple[TaskNode, int, int, int]] = []
        self._threads = [
            threading.Thread(target=self._worker, args=(i,), daemon=True)
            for i in range(self.workers)
        ]
        for thread in self._threads:
            thread.start()

    # -- lifecycle -----------------------------------------------------------

    def __enter__(self) -> "SpecRuntime":
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()

    def shutdown(self) -> None:
        with self._cv:
            if self._closed:
                return
            self._closed = True
            self._cv.notify_all()
        for thread in self._threads:
            thread.join()

    # -- data ------------------------------------------------------------------

    def register(
        self,
        payload: Any,
        duplicator: Optional[Callable[[Any], Any]] = None,
        selector: Optional[Callable[[Any, Any], None]] = None,
        name: Optional[str] = None,
    ) -> DataHandle:
        return self.registry.register(payload, duplicator, selector, name)

    def value(self, handle: DataHandle) -> Any:
        return handle.payload

    # -- insertion ---------------------------------------------------------------

    def insert_task(
        self,
        accesses: Sequence[AccessRecord],
        body: Callable[..., Any],
        label: Optional[str] = None,
    ) -> InsertionReceipt:
        """Insert a normal task (no maybe-write access allowed)."""
        accesses = list(accesses)
        self._check_accesses(accesses)
        if any(a.mode is AccessMode.MAYBE_WRITE for a in accesses):
            raise InsertionError(
                "normal tasks cannot declare maybe-write accesses;"
                " use insert_uncertain_task"
            )
        with self._cv:
            self._ensure_open()
            return self._insert(accesses, body, label, uncertain=False)

    def insert_uncertain_task(
        self,
        accesses: Sequence[AccessRecord],
        body: Callable[..., Any],
        label: Optional[str] = None,
    ) -> InsertionReceipt:
        """Insert an uncertain task; its body must return a wrote flag."""
        accesses = list(accesses)
        self._check_accesses(accesses)
        if not any(a.mode is AccessMode.MAYBE_WRITE for a in accesses):
            raise InsertionError(
                "uncertain tasks must declare at least one maybe-write access;"
                " use insert_task"
            )
        with self._cv:
            self._ensure_open()
            return self._insert(accesses, body, label, uncertain=True)

    def _check_accesses(self, accesses: Sequence[AccessRecord]) -> None:
        seen: set[int] = set()
        for access in accesses:
            handle = access.handle
            if not isinstance(handle, DataHandle) or (
                handle.id >= len(self.registry.handles)
                or self.registry.handles[handle.id] is not handle
            ):
                raise InsertionError(f"access to unregistered handle: {handle!r}")
            if handle.id in seen:
                raise InsertionError(
                    f"handle {handle.id} ({handle.name!r}) appears twice in one access list"
                )
            seen.add(handle.id)

    def _insert(
        self,
        accesses: list[AccessRecord],
        body: Callable[..., Any],
        label: Optional[str],
        uncertain: bool,
    ) -> InsertionReceipt:
        name = label if label is not None else f"task{len(self.tasks)}"
        registry = self.registry
        write_like = [a for a in accesses if a.mode.is_write_like]

        # Snapshots already shared in read mode cannot become write targets.
        registry.clean_duplicates((a.handle for a in write_like), "read_conflict")

        related: dict[int, SpecGroup] = {}
        for access in accesses:
            record = registry.live_duplicate(access.handle)
            if record is not None and record.owner is not None:
                related[record.owner.id] = record.owner

        # Exclusive modes (atomic/commute) never receive twins; treat any
        # overlap with live snapshots as a failed-speculation fallback.
        exclusive = any(a.mode in _EXCLUSIVE_MODES for a in accesses)
        dead = any(g.speculation_dead for g in related.values())

        if uncertain:
            if not related or dead or exclusive:
                return self._insert_uncertain_plain(accesses, body, name)
            return self._insert_speculative(accesses, body, name, related, uncertain=True)
        if not related:
            main = self._new_task(TaskKind.NORMAL, accesses, body, name)
            receipt = InsertionReceipt(main_task=main)
            receipt.result_future = main.future
            return receipt
        if dead or exclusive:
            registry.clean_duplicates((a.handle for a in accesses), "any")
            main = self._new_task(TaskKind.NORMAL, accesses, body, name)
            receipt = InsertionReceipt(main_task=main)
            receipt.result_future = main.future
            return receipt
        return self._insert_speculative(accesses, body, name, related, uncertain=False)

    def _insert_uncertain_plain(
        self, accesses: list[AccessRecord], body: Callable[..., Any], name: str
    ) -> InsertionReceipt:
        """First uncertain task of a chain (or fallback after a known failure):
        no twin, but snapshot the maybe-write data for future speculation."""
        registry = self.registry
        registry.clean_duplicates((a.handle for a in accesses), "any")
        group = self._new_group(parents=[])
        copies: list[TaskNode] = []
        for access in accesses:
            if access.mode is AccessMode.MAYBE_WRITE:
                record = registry.duplicate_handle(access.handle, tag=str(group.id))
                record.owner = group
                copies.append(self._new_copy(access.handle, record.shadow, group, record))
        main = self._new_task(TaskKind.UNCERTAIN, accesses, body, name, group=group)
        group.copies = copies
        group.uncertain_tasks = [main]
        group.main_task = main
        self.engine.reapply_activation(group)
        receipt = InsertionReceipt(
            main_task=main, copies=copies, group=group, result_future=group.outcome_future
        )
        return receipt

    def _insert_speculative(
        self,
        accesses: list[AccessRecord],
        body: Callable[..., Any],
        name: str,
        related: dict[int, SpecGroup],
        uncertain: bool,
    ) -> InsertionReceipt:
        """Insert the task normally and as a twin running on duplicates."""
        registry = self.registry
        parents = [related[k] for k in sorted(related)]
        group = self._new_group(parents=parents)
        copies: list[TaskNode] = []
        twin_map: dict[int, DataHandle] = {}
        select_pairs: list[tuple[DataHandle, DataHandle]] = []

        for access in accesses:
            handle = access.handle
            record = registry.live_duplicate(handle)
            if access.mode is AccessMode.READ:
                if record is not None:
                    twin_map[handle.id] = record.shadow
                    record.read_shared = True
                continue
            if access.mode is AccessMode.MAYBE_WRITE:
                if record is not None:
                    # The live snapshot stays shared; the twin writes a
                    # private copy of it, and the snapshot's validity now
                    # also rides on this episode's outcome.
                    source = record.shadow
                    record.owner = group
                else:
                    source = handle
                    fresh = registry.duplicate_handle(handle, tag=str(group.id))
                    fresh.owner = group
                    copies.append(self._new_copy(source, fresh.shadow, group, fresh))
                target = registry.new_shadow(handle, tag=f"t{group.id}")
                copies.append(self._new_copy(source, target, group, None))
            else:  # WRITE: a certain write ends the chain for this datum
                if record is not None:
                    registry.remove_duplicate(handle)
                    target = record.shadow
                else:
                    target = registry.new_shadow(handle, tag=f"t{group.id}")
                    copies.append(self._new_copy(handle, target, group, None))
            twin_map[handle.id] = target
            select_pairs.append((handle, target))

        kind = TaskKind.UNCERTAIN if uncertain else TaskKind.NORMAL
        main = self._new_task(kind, accesses, body, name, group=group)
        twin_accesses = [
            AccessRecord(twin_map.get(a.handle.id, a.handle), a.mode) for a in accesses
        ]
        twin = self._new_task(
            TaskKind.SPECULATIVE, twin_accesses, body, f"{name}'", group=group, step=main
        )
        selects = self.build_select_tasks(group, select_pairs)

        group.copies = copies
        group.originals = [main]
        group.twins = [twin]
        group.selects = selects
        group.main_task = main
        if uncertain:
            group.uncertain_tasks = [main]
        self.engine.reapply_activation(group)
        if group.confirmed is None and not group.pending_parents:
            # Every parent had already reported success before this insertion.
            self.engine.validate(group)
        receipt = InsertionReceipt(
            main_task=main,
            speculative_twin=twin,
            copies=copies,
            selects=selects,
            group=group,
            result_future=group.outcome_future if uncertain else main.future,
        )
        return receipt

    def build_select_tasks(
        self, group: SpecGroup, pairs: Sequence[tuple[DataHandle, DataHandle]]
    ) -> list[TaskNode]:
        """One select per (original, duplicate) pair: overwrite the original
        with the duplicate when the group's speculation holds."""
        selects = []
        for original, duplicate in pairs:
            selects.append(self._new_select(original, duplicate, group))
        return selects

    # -- node construction (lock held) ---------------------------------------

    def _new_group(self, parents: list[SpecGroup]) -> SpecGroup:
        group = SpecGroup(len(self.groups), parents)
        self.groups.append(group)
        return group

    def _new_copy(
        self,
        source: DataHandle,
        target: DataHandle,
        group: SpecGroup,
        record: Optional[DuplicateRecord],
    ) -> TaskNode:
        def body(*_args: Any) -> None:
            target.payload = source.duplicator(source.payload)

        accesses = [AccessRecord(source, AccessMode.READ), AccessRecord(target, AccessMode.WRITE)]
        node = self._new_task(
            TaskKind.COPY, accesses, body, f"copy({source.name}->{target.name})", group=group
        )
        if record is not None:
            record.copy_task = node
        return node

    def _new_select(
        self, original: DataHandle, duplicate: DataHandle, group: SpecGroup
    ) -> TaskNode:
        def body(*_args: Any) -> None:
            if original.selector is not None:
                original.selector(original.payload, duplicate.payload)
            else:
                original.payload = duplicate.payload

        accesses = [
            AccessRecord(original, AccessMode.WRITE),
            AccessRecord(duplicate, AccessMode.READ),
        ]
        return self._new_task(
            TaskKind.SELECT, accesses, body, f"select({original.name})", group=group
        )

    def _new_task(
        self,
        kind: TaskKind,
        accesses: list[AccessRecord],
        body: Optional[Callable[..., Any]],
        label: str,
        group: Optional[SpecGroup] = None,
        step: Optional[TaskNode] = None,
    ) -> TaskNode:
        node = TaskNode(len(self.tasks), kind, accesses, body, label)
        node.group = group
        node.step = step
        self.tasks.append(node)
        preds = self.registry.resolve_dependencies(node, accesses)
        node.preds = preds
        for pred in preds:
            if pred.phase is Phase.DONE:
                continue
            pred.succs.append(node)
            node.pending_preds += 1
        self._pending += 1
        if node.pending_preds == 0:
            self._make_ready(node)
        self._cv.notify_all()
        return node

    # -- scheduling (lock held) -------------------------------------------------

    def _make_ready(self, node: TaskNode) -> None:
        if (
            node.kind is TaskKind.COPY
            and node.group is not None
            and node.group.state is GroupState.UNDEFINED
        ):
            stats = ActivationStats(
                ready_tasks=len(self._queue),
                workers=self.workers,
                group_size=node.group.size(),
            )
            self.engine.decide_activation(node.group, stats)
        self._queue.append(node)

    def _try_disable_locked(self, task: TaskNode) -> str:
        if task.activation is Activation.DISABLED:
            return "already"
        if task.phase is Phase.PENDING:
            task.activation = Activation.DISABLED
            return "disabled"
        if task.phase is Phase.RUNNING:
            self.stats.disables_too_late += 1
        return "too_late"

    def try_disable(self, task: TaskNode) -> str:
        """Atomically disable a task iff its body has not started.

        Returns ``"disabled"`` on success, ``"too_late"`` when the body is
        running or done (the result is then quarantined), ``"already"``
        when the task was disabled before.
        """
        with self._cv:
            return self._try_disable_locked(task)

    def _record(self, event: str, subject: Any) -> None:
        self.resolution_log.append((event, subject))

    # -- execution ---------------------------------------------------------------

    def _worker(self, index: int) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._closed:
                    self._cv.wait()
                if not self._queue:
                    if self._closed:
                        return
                    continue
                task = self._queue.popleft()
                skipped = task.activation is Activation.DISABLED or self._failure is not None
                task.phase = Phase.RUNNING
                task.worker = index
            wrote: Optional[bool] = None
            failure: Optional[TaskBodyError] = None
            start = end = 0
            if not skipped:
                locks = sorted(
                    (
                        a.handle.commute_lock
                        for a in task.accesses
                        if a.mode is AccessMode.COMMUTE
                    ),
                    key=id,
                )
                for lock in locks:
                    lock.acquire()
                try:
                    args = [a.handle.payload for a in task.accesses]
                    start = time.perf_counter_ns()
                    result = task.body(*args) if task.body is not None else None
                    end = time.perf_counter_ns()
                    if task.kind is TaskKind.UNCERTAIN or (
                        task.kind is TaskKind.SPECULATIVE
                        and task.step is not None
                        and task.step.kind is TaskKind.UNCERTAIN
                    ):
                        wrote = bool(result)
                except BaseException as exc:  # noqa: BLE001 - reported via wait_all
                    end = time.perf_counter_ns()
                    failure = TaskBodyError(task, exc)
                finally:
                    for lock in reversed(locks):
                        lock.release()
            self._complete(task, skipped, wrote, failure, index, start, end)

    def _complete(
        self,
        task: TaskNode,
        skipped: bool,
        wrote: Optional[bool],
        failure: Optional[TaskBodyError],
        worker: int,
        start: int,
        end: int,
    ) -> None:
        with self._cv:
            task.phase = Phase.DONE
            task.skipped = skipped
            if skipped:
                self.stats.tasks_skipped += 1
            else:
                self.stats.tasks_run += 1
                task.start_ns = start
                task.end_ns = end
                self._trace.append((task, worker, start, end))
            if failure is not None and self._failure is None:
                self._failure = failure
            if wrote is not None:
                task.result_wrote = wrote
            if not skipped:
                self.engine.on_instance_completed(task, wrote)
            for succ in task.succs:
                succ.pending_preds -= 1
                if succ.pending_preds == 0:
                    self._make_ready(succ)
            self._pending -= 1
            task.future.set(SKIPPED if skipped else wrote)
            self._cv.notify_all()

    # -- synchronization ------------------------------------------------------------

    def wait_all(self) -> None:
        """Block until every non-disabled task has completed."""
        self.wait_remain(0)

    def wait_remain(self, count: int) -> None:
        """Block until at most ``count`` tasks are still pending."""
        if count < 0:
            raise ValueError("count must be >= 0")
        with self._cv:
            while self._pending > count:
                self._cv.wait()
            if count == 0 and self._failure is not None:
                failure = self._failure
                raise failure

    def wait_task(self, target: InsertionReceipt | TaskNode) -> Any:
        """Wait for one insertion (or one node) and return its result.

        For an uncertain insertion this is the operative wrote flag; for a
        normal task None; for a node that was disabled and skipped, the
        distinguished SKIPPED value.
        """
        if isinstance(target, InsertionReceipt):
            return target.result_future.wait()
        return target.future.wait()

    def _ensure_open(self) -> None:
        if self._closed:
            raise RuntimeError("runtime has been shut down")

    # -- introspection ------------------------------------------------------------

    @property
    def pending(self) -> int:
        with self._lock:
            return self._pending

    def wasted_task_count(self) -> int:
        """Bodies executed whose results ended up quarantined: twins of
        invalidated groups, plus originals that raced their retirement."""
        wasted = 0
        for group in self.groups:
            if group.confirmed is False:
                wasted += sum(1 for t in group.twins if not t.skipped and t.phase is Phase.DONE)
            elif group.confirmed is True and group.twins:
                wasted += sum(
                    1 for t in group.originals if not t.skipped and t.phase is Phase.DONE
                )
        self.stats.tasks_wasted = wasted
        return wasted

    def trace_records(self):
        from .trace import records_from_runtime

        return records_from_runtime(self)

    def generate_dot(self, path: Optional[str] = None, labels: bool = True) -> str:
        from .trace import generate_dot

        text = generate_dot(self.tasks, labels=labels)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def generate_trace(self, csv_path: str, svg_path: Optional[str] = None) -> None:
        from .trace import render_timeline_svg, write_timeline_csv

        records = self.trace_records()
        write_timeline_csv(records, csv_path)
        if svg_path is not None:
            render_timeline_svg(records, svg_path, title=self.name)
