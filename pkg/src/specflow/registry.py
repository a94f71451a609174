"""Data registration and sequential-task-flow dependency resolution.

Every datum visible to the runtime is wrapped in a :class:`DataHandle`.
The registry keeps, per handle, the access frontier needed to derive
task dependencies (the last write group plus the readers since it), and
the table of live duplicates that back speculative execution.

All mutation happens on the single task-insertion thread; workers only
read handle metadata, so no locking is done here.
"""

from __future__ import annotations

import copy as _copy
import enum
import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional


class AccessMode(enum.Enum):
    READ = "read"
    WRITE = "write"
    MAYBE_WRITE = "maybe_write"
    ATOMIC_WRITE = "atomic_write"
    COMMUTE = "commute"

    @property
    def is_write_like(self) -> bool:
        return self is not AccessMode.READ


class RegistryError(Exception):
    """Raised on misuse of the data registry."""


class DataHandle:
    """Stable identity of one user datum plus its duplication capability.

    ``payload`` is the current object backing the datum.  Task bodies
    receive payloads, never handles, so a select task can commit a
    speculative result by rebinding ``payload`` (or by calling a
    user-supplied ``selector`` for in-place overwrite).
    """

    __slots__ = (
        "id",
        "name",
        "payload",
        "duplicator",
        "selector",
        "duplicate_of",
        "frontier",
        "commute_lock",
    )

    def __init__(
        self,
        handle_id: int,
        payload: Any,
        duplicator: Callable[[Any], Any],
        selector: Optional[Callable[[Any, Any], None]],
        name: str,
        duplicate_of: Optional["DataHandle"] = None,
    ) -> None:
        self.id = handle_id
        self.name = name
        self.payload = payload
        self.duplicator = duplicator
        self.selector = selector
        self.duplicate_of = duplicate_of
        self.frontier = _Frontier()
        self.commute_lock = threading.Lock()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<DataHandle {self.id}:{self.name}>"


@dataclass(frozen=True)
class AccessRecord:
    handle: DataHandle
    mode: AccessMode


def read(handle: DataHandle) -> AccessRecord:
    return AccessRecord(handle, AccessMode.READ)


def write(handle: DataHandle) -> AccessRecord:
    return AccessRecord(handle, AccessMode.WRITE)


def maybe_write(handle: DataHandle) -> AccessRecord:
    return AccessRecord(handle, AccessMode.MAYBE_WRITE)


def atomic_write(handle: DataHandle) -> AccessRecord:
    return AccessRecord(handle, AccessMode.ATOMIC_WRITE)


def commute(handle: DataHandle) -> AccessRecord:
    return AccessRecord(handle, AccessMode.COMMUTE)


class _Frontier:
    """Per-datum access frontier.

    ``writers`` is the current write group: one task for WRITE or
    MAYBE_WRITE, possibly several for a run of ATOMIC_WRITE or COMMUTE
    accesses (which carry no ordering edges among themselves).
    ``readers`` are the reads issued since the write group formed.
    ``group_preds`` is the frontier captured when an atomic/commute
    group started, so that every member of the group depends on the
    same predecessors instead of on each other.
    """

    __slots__ = ("writers", "readers", "mode", "group_preds")

    def __init__(self) -> None:
        self.writers: list = []
        self.readers: list = []
        self.mode: Optional[AccessMode] = None
        self.group_preds: list = []


@dataclass
class DuplicateRecord:
    """A live shadow copy of a datum, usable by future speculative twins.

    The shadow buffer is written exactly once (by its copy task) while it
    sits in the live table; twins and further copy tasks only read it.
    ``owner`` is the speculation group whose not-written outcome the
    snapshot assumes; it advances as consecutive uncertain tasks chain.
    """

    original: DataHandle
    shadow: DataHandle
    owner: Any = None  # SpecGroup; typed loosely to avoid an import cycle
    read_shared: bool = False
    copy_task: Any = None


class DataRegistry:
    """Tracks registered data, access history, and live duplicates."""

    def __init__(self) -> None:
        self._next_id = 0
        self._by_identity: dict[int, DataHandle] = {}
        self.handles: list[DataHandle] = []
        self.duplicates: dict[int, DuplicateRecord] = {}  # original handle id -> record

    def register(
        self,
        payload: Any,
        duplicator: Optional[Callable[[Any], Any]] = None,
        selector: Optional[Callable[[Any, Any], None]] = None,
        name: Optional[str] = None,
    ) -> DataHandle:
        """Register a datum and return its fresh handle.

        Registering the same object twice is rejected, naming the handle
        that already owns it.
        """
        key = id(payload)
        existing = self._by_identity.get(key)
        if existing is not None:
            raise RegistryError(
                f"datum already registered as handle {existing.id} ({existing.name!r})"
            )
        handle = DataHandle(
            self._next_id,
            payload,
            duplicator or _copy.deepcopy,
            selector,
            name if name is not None else f"d{self._next_id}",
        )
        self._next_id += 1
        self._by_identity[key] = handle
        self.handles.append(handle)
        return handle

    def new_shadow(self, original: DataHandle, tag: str) -> DataHandle:
        """Create a shadow handle for ``original`` without registering it
        in the live-duplicate table (used for twin write targets)."""
        base = original.duplicate_of or original
        shadow = DataHandle(
            self._next_id,
            None,
            base.duplicator,
            base.selector,
            f"{base.name}'{tag}",
            duplicate_of=base,
        )
        self._next_id += 1
        self.handles.append(shadow)
        return shadow

    def duplicate_handle(self, original: DataHandle, tag: str = "") -> DuplicateRecord:
        """Create a live shadow of ``original`` and enter it in the
        duplicate table.  The byte copy happens later, inside a copy
        task, not at this call."""
        if original.duplicate_of is not None:
            raise RegistryError(
                f"handle {original.id} is itself a shadow; shadows cannot be duplicated"
            )
        if original.id in self.duplicates:
            raise RegistryError(
                f"handle {original.id} ({original.name!r}) already has a live duplicate;"
                " clean it first"
            )
        record = DuplicateRecord(original, self.new_shadow(original, tag))
        self.duplicates[original.id] = record
        return record

    def live_duplicate(self, handle: DataHandle) -> Optional[DuplicateRecord]:
        return self.duplicates.get(handle.id)

    def remove_duplicate(self, handle: DataHandle) -> Optional[DuplicateRecord]:
        return self.duplicates.pop(handle.id, None)

    def clean_duplicates(
        self, handles: Iterable[DataHandle], predicate: str = "any"
    ) -> list[DuplicateRecord]:
        """Drop live duplicates of the given originals.

        ``predicate='any'`` removes unconditionally.  ``'read_conflict'``
        removes only duplicates that have been shared in read mode by an
        earlier twin: such a snapshot must not also become a twin write
        target, so an incoming write-like access forfeits it.  Removing
        a duplicate only forfeits future speculation; it never breaks
        correctness.
        """
        if predicate not in ("any", "read_conflict"):
            raise ValueError(f"unknown predicate {predicate!r}")
        removed = []
        for handle in handles:
            record = self.duplicates.get(handle.id)
            if record is None:
                continue
            if predicate == "any" or record.read_shared:
                removed.append(self.duplicates.pop(handle.id))
        return removed

    # -- dependency resolution -------------------------------------------

    def resolve_dependencies(self, task: Any, accesses: Iterable[AccessRecord]) -> list:
        """Return the STF predecessors of ``task`` and update frontiers.

        A read depends on the last write group; a write (or maybe-write)
        depends on the last write group and every reader since; atomic
        writes and commutes order against reads/writes as writes do but
        carry no edges among themselves.
        """
        preds: list = []
        seen: set[int] = set()

        def add(nodes) -> None:
            for node in nodes:
                if node is task or node.id in seen:
                    continue
                seen.add(node.id)
                preds.append(node)

        for access in accesses:
            frontier = access.handle.frontier
            mode = access.mode
            if mode is AccessMode.READ:
                add(frontier.writers)
                frontier.readers.append(task)
            elif mode in (AccessMode.WRITE, AccessMode.MAYBE_WRITE):
                add(frontier.writers)
                add(frontier.readers)
                frontier.writers = [task]
                frontier.readers = []
                frontier.mode = AccessMode.WRITE
                frontier.group_preds = []
            else:  # ATOMIC_WRITE or COMMUTE
                if frontier.mode is mode and not frontier.readers:
                    add(frontier.group_preds)
                    frontier.writers.append(task)
                else:
                    local = frontier.writers + frontier.readers
                    add(local)
                    frontier.group_preds = local
                    frontier.writers = [task]
                    frontier.readers = []
                    frontier.mode = mode
        return preds
