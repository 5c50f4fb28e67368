from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

from ..instance import Assignment


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    BUDGET_EXCEEDED = "budget_exceeded"
    EMPTY = "empty"


@dataclass(frozen=True)
class Budget:
    """Search limits; ``None`` means unbounded."""

    max_nodes: int | None = None
    max_wall_time: float | None = None

    @property
    def bounded(self) -> bool:
        return self.max_nodes is not None or self.max_wall_time is not None


UNLIMITED = Budget()


@dataclass
class SolveResult:
    value: float
    assignment: Assignment
    status: Status
    nodes: int = 0
    wall_time: float = 0.0
    canonical: bool = True
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.EMPTY)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "assignment": [[i, j] for i, j in self.assignment],
            "status": self.status.value,
            "nodes": self.nodes,
            "wall_time": self.wall_time,
            "canonical": self.canonical,
        }


class BudgetExhausted(Exception):
    pass


class Clock:
    """Node counter with a wall-clock check every ``check_every`` nodes."""

    check_every = 1024

    def __init__(self, budget: Budget | None):
        budget = budget or UNLIMITED
        self.max_nodes = budget.max_nodes
        self.deadline = (
            None if budget.max_wall_time is None else time.monotonic() + budget.max_wall_time
        )
        self.nodes = 0
        self.start = time.monotonic()

    def tick(self):
        self.nodes += 1
        if self.max_nodes is not None and self.nodes > self.max_nodes:
            raise BudgetExhausted
        if self.deadline is not None and self.nodes % self.check_every == 0:
            if time.monotonic() > self.deadline:
                raise BudgetExhausted

    def elapsed(self) -> float:
        return time.monotonic() - self.start
