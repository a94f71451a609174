"""Analytic expected-gain and speedup model for speculation chains.

A chain is N consecutive uncertain tasks followed by one normal task,
all of cost t, with copies/selects taken as free and at least N workers
available.  Task i writes with probability P_i; the trailing normal task
always writes (its probability is fixed at 1).

Two speculation disciplines are modelled:

* predictive - one guessed path; the first task that writes invalidates
  everything speculated after it.  The expected saving is

      D = sum_{i=1..N} t * i * P_{i+1} * prod_{j=1..i} (1 - P_j)

  (the product runs up to j = i; that form reproduces the reference
  gain/speedup table, see ``reference_table``).

* eager - speculation restarts after every failure point, so every task
  that does not write saves t:  F = t * sum_{i=1..N} (1 - P_i).

Speedup in both cases is (N+1) t / ((N+1) t - gain).  Everything is
computed in exact rational arithmetic and converted to float on return.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Literal, Sequence

import numpy as np

RELATIVE_FORM_TOL = 1e-12


@dataclass(frozen=True)
class GainScenario:
    """N consecutive uncertain tasks with write probabilities and cost t."""

    probs: tuple[float, ...]
    task_cost: float = 1.0

    def __post_init__(self) -> None:
        if len(self.probs) < 1:
            raise ValueError("a scenario needs at least one uncertain task")
        if any(p < 0.0 or p > 1.0 for p in self.probs):
            raise ValueError("write probabilities must lie in [0, 1]")
        if self.task_cost <= 0.0:
            raise ValueError("task cost must be positive")

    @property
    def n(self) -> int:
        return len(self.probs)

    @staticmethod
    def uniform(n: int, prob: float, task_cost: float = 1.0) -> "GainScenario":
        return GainScenario(tuple([prob] * n), task_cost)


def predictive_gain(scenario: GainScenario) -> float:
    """Expected duration gain of predictive speculation over the chain."""
    t = Fraction(scenario.task_cost)
    probs = [Fraction(p) for p in scenario.probs] + [Fraction(1)]
    total = Fraction(0)
    survivors = Fraction(1)
    for i in range(1, scenario.n + 1):
        survivors *= 1 - probs[i - 1]
        total += t * i * probs[i] * survivors
    return float(total)


def predictive_speedup(scenario: GainScenario) -> float:
    t = scenario.task_cost
    n = scenario.n
    return (n + 1) * t / ((n + 1) * t - predictive_gain(scenario))


def predictive_gain_half(n: int, task_cost: float = 1.0) -> float:
    """Closed form of the predictive gain when every probability is 1/2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = Fraction(task_cost)
    total = sum(Fraction(i, 2 ** (i + 1)) for i in range(1, n))
    total += Fraction(n, 2**n)
    return float(t * total)


def eager_gain(scenario: GainScenario) -> float:
    """Expected duration gain with restart-on-failure speculation.

    The closed form and the recursive form must agree; both are exposed
    and checked against each other.
    """
    closed = _eager_closed(scenario)
    recursive = eager_gain_recursive(scenario)
    scale = max(abs(closed), abs(recursive), 1e-300)
    if abs(closed - recursive) > RELATIVE_FORM_TOL * scale:
        raise AssertionError(
            f"eager gain forms disagree: {closed!r} vs {recursive!r}"
        )
    return closed


def _eager_closed(scenario: GainScenario) -> float:
    t = Fraction(scenario.task_cost)
    return float(t * sum(1 - Fraction(p) for p in scenario.probs))


def eager_gain_recursive(scenario: GainScenario) -> float:
    t = Fraction(scenario.task_cost)
    gain = Fraction(0)  # empty chain saves nothing
    for p in scenario.probs:
        prob = Fraction(p)
        gain = gain * prob + (gain + t) * (1 - prob)
    return float(gain)


def eager_speedup(scenario: GainScenario) -> float:
    t = scenario.task_cost
    n = scenario.n
    return (n + 1) * t / ((n + 1) * t - eager_gain(scenario))


def simulate_expected_gain(
    scenario: GainScenario,
    trials: int,
    seed: int,
    rule: Literal["predictive", "eager"] = "predictive",
) -> tuple[float, float]:
    """Monte Carlo estimate of the expected gain, with its standard error.

    The brute-force oracle for the closed forms: draw a write outcome per
    task; under the predictive rule the saving is t times the number of
    tasks before the first write, under the eager rule t times the total
    number of non-writing tasks.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    probs = np.asarray(scenario.probs)
    writes = rng.random((trials, scenario.n)) < probs[None, :]
    if rule == "predictive":
        any_write = writes.any(axis=1)
        first = np.where(any_write, writes.argmax(axis=1), scenario.n)
        gains = first.astype(np.float64) * scenario.task_cost
    elif rule == "eager":
        gains = (scenario.n - writes.sum(axis=1)).astype(np.float64) * scenario.task_cost
    else:
        raise ValueError(f"unknown rule {rule!r}")
    mean = float(gains.mean())
    stderr = float(gains.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return mean, stderr


# Reference gain/speedup table for uniform probabilities 1/4, 1/2, 3/4 and
# chains of one to seven uncertain tasks (values rounded to 2-3 figures).
REFERENCE_PROBS = (0.25, 0.5, 0.75)
REFERENCE_N = tuple(range(1, 8))
REFERENCE_TABLE = {
    0.25: {
        "gain": (0.75, 1.31, 1.73, 2.05, 2.29, 2.47, 2.6),
        "speedup": (1.6, 1.78, 1.77, 1.7, 1.62, 1.54, 1.48),
    },
    0.5: {
        "gain": (0.5, 0.75, 0.875, 0.938, 0.969, 0.984, 0.992),
        "speedup": (1.33, 1.33, 1.28, 1.23, 1.19, 1.16, 1.14),
    },
    0.75: {
        "gain": (0.25, 0.312, 0.328, 0.332, 0.333, 0.333, 0.333),
        "speedup": (1.14, 1.12, 1.09, 1.07, 1.06, 1.05, 1.04),
    },
}


def reference_table() -> list[dict]:
    """The reference table cells with both tabulated and computed values."""
    rows = []
    for prob in REFERENCE_PROBS:
        for n in REFERENCE_N:
            scenario = GainScenario.uniform(n, prob)
            rows.append(
                {
                    "N": n,
                    "P": prob,
                    "D": predictive_gain(scenario),
                    "S": predictive_speedup(scenario),
                    "D_ref": REFERENCE_TABLE[prob]["gain"][n - 1],
                    "S_ref": REFERENCE_TABLE[prob]["speedup"][n - 1],
                }
            )
    return rows


def table_rows(
    probs: Iterable[float] = REFERENCE_PROBS,
    n_values: Sequence[int] = REFERENCE_N,
    variants: Sequence[str] = ("predictive",),
) -> list[dict]:
    """Rows for the table CSV: columns N, P, D, S, variant."""
    rows = []
    for variant in variants:
        for prob in probs:
            for n in n_values:
                scenario = GainScenario.uniform(n, prob)
                if variant == "predictive":
                    gain, speedup = predictive_gain(scenario), predictive_speedup(scenario)
                elif variant == "eager":
                    gain, speedup = eager_gain(scenario), eager_speedup(scenario)
                else:
                    raise ValueError(f"unknown variant {variant!r}")
                rows.append({"N": n, "P": prob, "D": gain, "S": speedup, "variant": variant})
    return rows


def write_table_csv(path: str, rows: Iterable[dict] | None = None) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["N", "P", "D", "S", "variant"])
        writer.writeheader()
        for row in rows if rows is not None else table_rows():
            writer.writerow(row)
