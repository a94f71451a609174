"""Speculative task groups and their activation/resolution state machine.

One :class:`SpecGroup` is created per speculative insertion episode: the
episode's copy tasks, the uncertain (or shadowed normal) task, its twin,
and the select tasks that commit the twin's results.  Episodes link to
the episodes whose snapshots they consumed via ``parents``; a group's
twin is valid iff every ancestor episode reported that it did not write.

All methods of :class:`SpecEngine` must be called with the runtime lock
held; they mutate group and task activation state and log every change
through the control interface.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .task import Activation, Phase, TaskFuture, TaskKind, TaskNode


class GroupState(enum.Enum):
    UNDEFINED = "undefined"
    ENABLED = "enabled"
    DISABLED = "disabled"


@dataclass(frozen=True)
class ActivationStats:
    """Scheduler snapshot offered to the activation policy."""

    ready_tasks: int
    workers: int
    group_size: int


# An activation policy decides, from a stats snapshot, whether a group's
# speculation should run.  Must be pure and deterministic in its inputs.
ActivationPolicy = Callable[[ActivationStats], bool]


def always_enable(stats: ActivationStats) -> bool:
    return True


def enable_when_starved(stats: ActivationStats) -> bool:
    """Speculate only when the scheduler has fewer ready tasks than workers."""
    return stats.ready_tasks < stats.workers


class SpecGroup:
    """State of one speculation episode."""

    __slots__ = (
        "id",
        "copies",
        "uncertain_tasks",
        "originals",
        "twins",
        "selects",
        "parents",
        "successors",
        "state",
        "failed",
        "confirmed",
        "pending_parents",
        "outcome",
        "twin_flag",
        "orig_flag",
        "outcome_future",
        "main_task",
    )

    def __init__(self, group_id: int, parents: list["SpecGroup"]) -> None:
        self.id = group_id
        self.copies: list[TaskNode] = []
        self.uncertain_tasks: list[TaskNode] = []
        self.originals: list[TaskNode] = []
        self.twins: list[TaskNode] = []
        self.selects: list[TaskNode] = []
        self.parents = parents
        self.successors: list[SpecGroup] = []
        self.state = GroupState.UNDEFINED
        self.failed = False
        # confirmed: None until the parents settle; True once every parent
        # reported not-written (twin results valid); False once any ancestor
        # failed or activation was declined.
        self.confirmed: Optional[bool] = None if parents else True
        self.pending_parents: set[int] = set()
        # outcome: the operative wrote flag of this episode's uncertain step.
        self.outcome: Optional[bool] = None
        self.twin_flag: Optional[bool] = None
        self.orig_flag: Optional[bool] = None
        self.outcome_future = TaskFuture()
        self.main_task: Optional[TaskNode] = None
        for parent in parents:
            parent.successors.append(self)
            if parent.outcome is not False:
                self.pending_parents.add(parent.id)
        if parents and not self.pending_parents:
            self.confirmed = None  # settled by the engine right after wiring

    @property
    def speculation_dead(self) -> bool:
        """True when this group's snapshots must not seed new speculation."""
        return self.failed or self.state is GroupState.DISABLED or self.confirmed is False

    def tasks(self) -> Iterable[TaskNode]:
        yield from self.copies
        yield from self.originals
        yield from self.twins
        yield from self.selects

    def size(self) -> int:
        return len(self.copies) + len(self.originals) + len(self.twins) + len(self.selects)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<SpecGroup {self.id} state={self.state.value} failed={self.failed}>"


class SpecEngine:
    """Drives group activation and the enable/disable cascades.

    ``try_disable`` must atomically refuse when the task body already
    started; ``log`` records each activation change for tracing.
    """

    def __init__(
        self,
        policy: ActivationPolicy,
        try_disable: Callable[[TaskNode], str],
        log: Callable[[str, object], None],
    ) -> None:
        self.policy = policy
        self._try_disable = try_disable
        self._log = log

    # -- activation decision ------------------------------------------------

    def decide_activation(self, group: SpecGroup, stats: ActivationStats) -> GroupState:
        """Decide a group when its first copy task becomes ready."""
        assert group.state is GroupState.UNDEFINED, "activation decided twice"
        if self.policy(stats):
            group.state = GroupState.ENABLED
            self._log("group-enabled", group)
            for task in group.copies + group.twins:
                self._enable(task)
        else:
            group.state = GroupState.DISABLED
            group.confirmed = False
            self._log("group-disabled", group)
            self._degenerate(group, disable_copies=True)
            self._invalidate_descendants(group, disable_copies=True)
        return group.state

    def reapply_activation(self, group: SpecGroup) -> None:
        """Re-apply a decision to group members created after it was made.

        The decision can fire while an insertion is still wiring the
        group (a root copy is ready the moment it is created), so the
        insertion re-applies the decided state once the group is whole.
        """
        if group.state is GroupState.ENABLED:
            for task in group.copies + group.twins:
                self._enable(task)
        elif group.state is GroupState.DISABLED:
            self._degenerate(group, disable_copies=True)

    # -- completion resolution ------------------------------------------------

    def on_instance_completed(self, task: TaskNode, wrote: Optional[bool]) -> None:
        """Route a completed uncertain instance (original or twin) to its group."""
        group = task.group
        if group is None or wrote is None:
            return
        if task.kind is TaskKind.UNCERTAIN:
            group.orig_flag = wrote
            if group.confirmed is None:
                return  # parents unsettled; the flag is consumed at settlement
            if group.confirmed is True and group.twins:
                return  # twin is the operative instance; a raced original is quarantined
            self.resolve_uncertain_completion(group, wrote)
        elif task.kind is TaskKind.SPECULATIVE and task.step is not None and (
            task.step.kind is TaskKind.UNCERTAIN
        ):
            group.twin_flag = wrote
            if group.confirmed is True:
                self.resolve_uncertain_completion(group, wrote)

    def resolve_uncertain_completion(self, group: SpecGroup, wrote: bool) -> None:
        """Commit the operative wrote flag of a group's uncertain step.

        Writing fails the group and every successor episode; not writing
        confirms each successor whose parents have now all succeeded.
        """
        if group.outcome is not None:
            return
        group.outcome = wrote
        if wrote:
            group.failed = True
            self._log("group-failed", group)
            self.propagate_to_successors(group)
        else:
            self._log("group-succeeded", group)
            for succ in group.successors:
                succ.pending_parents.discard(group.id)
                if succ.confirmed is None and not succ.pending_parents:
                    self.validate(succ)
        group.outcome_future.set(wrote)

    def propagate_to_successors(self, group: SpecGroup) -> list[SpecGroup]:
        """Apply failure consequences to all successor episodes (idempotent)."""
        assert group.failed
        return self._invalidate_descendants(group, disable_copies=False)

    def _invalidate_descendants(
        self, group: SpecGroup, disable_copies: bool
    ) -> list[SpecGroup]:
        visited: list[SpecGroup] = []
        stack = list(group.successors)
        while stack:
            succ = stack.pop()
            if succ.confirmed is False:
                continue
            self._invalidate(succ, disable_copies=disable_copies)
            visited.append(succ)
            stack.extend(succ.successors)
        return visited

    def validate(self, group: SpecGroup) -> None:
        """Every parent succeeded: commit the twin, retire the original."""
        group.confirmed = True
        self._log("group-validated", group)
        for task in group.originals:
            self._disable(task)
        for task in group.selects:
            self._enable(task)
        for task in group.twins:
            self._enable(task)
        if group.twin_flag is not None:
            self.resolve_uncertain_completion(group, group.twin_flag)

    # -- internal ------------------------------------------------------------

    def _invalidate(self, group: SpecGroup, disable_copies: bool) -> None:
        """Ancestor failed (or speculation declined): fall back to the
        normal path for this episode."""
        group.confirmed = False
        group.failed = True
        self._degenerate(group, disable_copies=disable_copies)
        if group.orig_flag is not None and group.outcome is None:
            # The normal instance already finished; its flag is operative now.
            self.resolve_uncertain_completion(group, group.orig_flag)

    def _degenerate(self, group: SpecGroup, disable_copies: bool) -> None:
        if disable_copies:
            for task in group.copies:
                self._disable(task)
        for task in group.twins:
            self._disable(task)
        for task in group.selects:
            self._disable(task)
        for task in group.originals:
            self._enable(task)

    def _enable(self, task: TaskNode) -> None:
        if task.activation is Activation.UNDEFINED:
            task.activation = Activation.ENABLED
            self._log("enable", task)

    def _disable(self, task: TaskNode) -> None:
        result = self._try_disable(task)
        if result == "disabled":
            self._log("disable", task)
        elif result == "too_late":
            self._log("disable-too-late", task)
