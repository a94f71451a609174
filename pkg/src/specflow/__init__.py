"""specflow: a sequential-task-flow runtime with speculative execution.

Tasks declare read/write accesses on registered data; the runtime infers
dependencies so parallel execution matches sequential insertion order.
Tasks that only *might* write may be inserted as uncertain tasks: the
runtime duplicates their data and speculatively runs shadow twins of
downstream work, committing or discarding the results once the actual
write outcome is known.
"""

from .groups import (
    ActivationPolicy,
    ActivationStats,
    GroupState,
    SpecGroup,
    always_enable,
    enable_when_starved,
)
from .registry import (
    AccessMode,
    AccessRecord,
    DataHandle,
    DataRegistry,
    RegistryError,
    atomic_write,
    commute,
    maybe_write,
    read,
    write,
)
from .runtime import (
    InsertionError,
    SpecRuntime,
    TaskBodyError,
    default_worker_count,
)
from .task import SKIPPED, Activation, InsertionReceipt, TaskKind, TaskNode

__all__ = [
    "AccessMode",
    "AccessRecord",
    "ActivationPolicy",
    "ActivationStats",
    "Activation",
    "DataHandle",
    "DataRegistry",
    "GroupState",
    "InsertionError",
    "InsertionReceipt",
    "RegistryError",
    "SKIPPED",
    "SpecGroup",
    "SpecRuntime",
    "TaskBodyError",
    "TaskKind",
    "TaskNode",
    "always_enable",
    "atomic_write",
    "commute",
    "default_worker_count",
    "enable_when_starved",
    "maybe_write",
    "read",
    "write",
]

__version__ = "0.1.0"
