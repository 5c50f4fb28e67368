"""Core data types for 0/1 knapsack, multiple knapsack and GAP instances.

Every problem is stored as a :class:`GapInstance`: an ``n x m`` value matrix,
an ``n x m`` weight matrix and ``m`` capacities.  Knapsack (``kind="kp"``) is
the ``m == 1`` case and the multiple knapsack problem (``kind="mkp"``) is the
case where an item's value and weight do not depend on the knapsack.

Indices are 0-based everywhere, including the JSON format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

KINDS = ("kp", "mkp", "gap")


class InstanceError(ValueError):
    """Raised when instance data violates a structural invariant."""


class IndexRangeError(InstanceError, IndexError):
    """An item or knapsack index lies outside the instance."""


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GapInstance:
    """Items x knapsacks with per-pair values and weights.

    ``values[i, j]`` and ``weights[i, j]`` describe item ``i`` placed in
    knapsack ``j``.  The arrays are copied and made read-only on construction.
    """

    values: np.ndarray
    weights: np.ndarray
    capacities: np.ndarray
    kind: str = "gap"

    def __post_init__(self):
        caps = _frozen(self.capacities).reshape(-1)
        m = caps.shape[0]
        vals = np.asarray(self.values, dtype=np.float64)
        wts = np.asarray(self.weights, dtype=np.float64)
        if vals.size == 0 and wts.size == 0:
            vals = np.zeros((0, m))
            wts = np.zeros((0, m))
        vals = _frozen(vals)
        wts = _frozen(wts)
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", wts)
        self._check()

    def _check(self):
        v, w, c = self.values, self.weights, self.capacities
        if self.kind not in KINDS:
            raise InstanceError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if c.shape[0] < 1:
            raise InstanceError("an instance needs at least one knapsack")
        if v.ndim != 2 or v.shape != w.shape or v.shape[1] != c.shape[0]:
            raise InstanceError(
                f"shape mismatch: values {v.shape}, weights {w.shape}, capacities {c.shape}"
            )
        if not (np.all(np.isfinite(c)) and np.all(c > 0)):
            raise InstanceError("capacities must be finite and > 0")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InstanceError("values must be finite and >= 0")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InstanceError("weights must be finite and > 0")
        if self.kind == "kp" and c.shape[0] != 1:
            raise InstanceError("kind 'kp' requires exactly one knapsack")
        if self.kind in ("kp", "mkp") and v.shape[0] > 0:
            if np.any(v != v[:, :1]) or np.any(w != w[:, :1]):
                raise InstanceError(f"kind {self.kind!r} requires knapsack-independent values/weights")
        fits = np.any(w <= c[None, :], axis=1)
        if not np.all(fits):
            bad = int(np.flatnonzero(~fits)[0])
            raise InstanceError(f"item {bad} fits in no knapsack (individual feasibility)")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.capacities.shape[0]

    @property
    def integer_weights(self) -> bool:
        """True when every weight and capacity is integral (enables the DP path)."""
        return bool(
            np.all(self.weights == np.round(self.weights))
            and np.all(self.capacities == np.round(self.capacities))
        )

    @classmethod
    def knapsack(cls, values, weights, capacity) -> "GapInstance":
        v = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
        return cls(v, w, [capacity], kind="kp")

    @classmethod
    def multiple_knapsack(cls, values, weights, capacities) -> "GapInstance":
        caps = np.asarray(capacities, dtype=np.float64).reshape(-1)
        v = np.repeat(np.asarray(values, dtype=np.float64).reshape(-1, 1), caps.size, axis=1)
        w = np.repeat(np.asarray(weights, dtype=np.float64).reshape(-1, 1), caps.size, axis=1)
        return cls(v, w, caps, kind="mkp")

    def __eq__(self, other):
        if not isinstance(other, GapInstance):
            return NotImplemented
        return (
            self.kind == other.kind
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.capacities, other.capacities)
        )

    __hash__ = None


@dataclass(frozen=True)
class Assignment:
    """A set of ``(item, knapsack)`` pairs.

    Pairs are kept sorted; duplicates of the same item are representable so
    that :func:`validate_assignment` can reject them.
    """

    pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", tuple(sorted((int(i), int(j)) for i, j in self.pairs))
        )

    @classmethod
    def from_vector(cls, vec) -> "Assignment":
        """Build from an item-indexed vector where ``-1`` means unassigned."""
        return cls(tuple((i, int(j)) for i, j in enumerate(vec) if j >= 0))

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def items(self) -> list[int]:
        return [i for i, _ in self.pairs]

    def as_dict(self) -> dict[int, int]:
        return {i: j for i, j in self.pairs}

    def as_vector(self, n: int) -> np.ndarray:
        vec = np.full(n, -1, dtype=np.int64)
        for i, j in self.pairs:
            vec[i] = j
        return vec

    def union(self, other: "Assignment") -> "Assignment":
        return Assignment(self.pairs + other.pairs)

    def remap(self, index_map) -> "Assignment":
        """Translate item indices through ``index_map`` (sub -> original)."""
        return Assignment(tuple((int(index_map[i]), j) for i, j in self.pairs))


def item_set(indices: Iterable[int], n: int) -> np.ndarray:
    """Normalise an item collection to a sorted unique index array."""
    idx = np.unique(np.asarray(list(indices), dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise IndexRangeError(f"item indices must lie in [0, {n})")
    return idx


def _check_indices(inst: GapInstance, a: Assignment):
    for i, j in a.pairs:
        if not (0 <= i < inst.n):
            raise IndexRangeError(f"item index {i} out of range [0, {inst.n})")
        if not (0 <= j < inst.m):
            raise IndexRangeError(f"knapsack index {j} out of range [0, {inst.m})")


def assignment_value(inst: GapInstance, a: Assignment) -> float:
    _check_indices(inst, a)
    total = 0.0
    for i, j in a.pairs:
        total += inst.values[i, j]
    return total


def knapsack_load(inst: GapInstance, a: Assignment, j: int) -> float:
    _check_indices(inst, a)
    if not (0 <= j < inst.m):
        raise IndexRangeError(f"knapsack index {j} out of range [0, {inst.m})")
    total = 0.0
    for i, jj in a.pairs:
        if jj == j:
            total += inst.weights[i, jj]
    return total


def knapsack_loads(inst: GapInstance, a: Assignment) -> np.ndarray:
    _check_indices(inst, a)
    loads = np.zeros(inst.m)
    for i, j in a.pairs:
        loads[j] += inst.weights[i, j]
    return loads


def validate_assignment(inst: GapInstance, a: Assignment) -> bool:
    """True iff every item appears at most once and no capacity is exceeded.

    Out-of-range indices raise :class:`IndexRangeError` instead of returning
    False, so malformed input is never confused with an infeasible packing.
    """
    _check_indices(inst, a)
    items = [i for i, _ in a.pairs]
    if len(set(items)) != len(items):
        return False
    return bool(np.all(knapsack_loads(inst, a) <= inst.capacities))


def restrict(inst: GapInstance, items) -> tuple[GapInstance, np.ndarray]:
    """Sub-instance on ``items``; returns it with the sub -> original index map."""
    idx = item_set(items, inst.n)
    sub = GapInstance(inst.values[idx], inst.weights[idx], inst.capacities, kind=inst.kind)
    return sub, idx


# -- JSON --------------------------------------------------------------------


def instance_to_dict(inst: GapInstance) -> dict:
    return {
        "kind": inst.kind,
        "n": inst.n,
        "m": inst.m,
        "capacities": [float(c) for c in inst.capacities],
        "items": [
            {
                "values": [float(x) for x in inst.values[i]],
                "weights": [float(x) for x in inst.weights[i]],
            }
            for i in range(inst.n)
        ],
    }


def instance_from_dict(doc: dict) -> GapInstance:
    kind = doc.get("kind", "gap")
    caps = [float(c) for c in doc["capacities"]]
    m = int(doc.get("m", len(caps)))
    if m != len(caps):
        raise InstanceError(f"m={m} but {len(caps)} capacities given")
    rows_v, rows_w = [], []
    for k, item in enumerate(doc.get("items", [])):
        if "values" in item:
            vals = [float(x) for x in item["values"]]
        elif kind in ("kp", "mkp") and "value" in item:
            vals = [float(item["value"])] * m
        else:
            raise InstanceError(f"item {k} has no values")
        if "weights" in item:
            wts = [float(x) for x in item["weights"]]
        elif kind in ("kp", "mkp") and "weight" in item:
            wts = [float(item["weight"])] * m
        else:
            raise InstanceError(f"item {k} has no weights")
        if len(vals) != m or len(wts) != m:
            raise InstanceError(f"item {k}: expected {m} values and weights")
        rows_v.append(vals)
        rows_w.append(wts)
    n = int(doc.get("n", len(rows_v)))
    if n != len(rows_v):
        raise InstanceError(f"n={n} but {len(rows_v)} items given")
    v = np.array(rows_v, dtype=np.float64).reshape(n, m)
    w = np.array(rows_w, dtype=np.float64).reshape(n, m)
    return GapInstance(v, w, caps, kind=kind)


def dumps_instance(inst: GapInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1)


def loads_instance(text: str) -> GapInstance:
    return instance_from_dict(json.loads(text))


def save_instance(inst: GapInstance, path) -> None:
    Path(path).write_text(dumps_instance(inst) + "\n")


def load_instance(path) -> GapInstance:
    return loads_instance(Path(path).read_text())


def assignment_to_list(a: Assignment) -> list[list[int]]:
    return [[i, j] for i, j in a.pairs]
