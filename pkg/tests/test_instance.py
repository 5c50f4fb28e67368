import json

import numpy as np
import pytest

from polysparse.instance import (
    Assignment,
    GapInstance,
    IndexRangeError,
    InstanceError,
    assignment_value,
    dumps_instance,
    item_set,
    knapsack_load,
    knapsack_loads,
    load_instance,
    loads_instance,
    restrict,
    save_instance,
    validate_assignment,
)


class TestConstruction:
    def test_shapes_and_kind(self, tiny_gap):
        assert tiny_gap.n == 2 and tiny_gap.m == 2
        assert tiny_gap.kind == "gap"

    def test_arrays_are_read_only(self, tiny_gap):
        with pytest.raises(ValueError):
            tiny_gap.values[0, 0] = 5.0

    def test_individual_feasibility_enforced(self):
        with pytest.raises(InstanceError, match="fits in no knapsack"):
            GapInstance([[1.0]], [[5.0]], [4.0])

    @pytest.mark.parametrize(
        "v, w, c",
        [
            ([[1.0]], [[0.0]], [1.0]),  # zero weight
            ([[-1.0]], [[1.0]], [1.0]),  # negative value
            ([[1.0]], [[1.0]], [0.0]),  # zero capacity
            ([[1.0, 2.0]], [[1.0]], [1.0]),  # shape mismatch
        ],
    )
    def test_rejects_bad_data(self, v, w, c):
        with pytest.raises(InstanceError):
            GapInstance(v, w, c)

    def test_knapsack_and_mkp_constructors(self):
        kp = GapInstance.knapsack([6, 5, 4], [4, 3, 2], 5)
        assert kp.kind == "kp" and kp.m == 1
        mkp = GapInstance.multiple_knapsack([6, 5], [4, 3], [5, 4])
        assert mkp.kind == "mkp"
        np.testing.assert_array_equal(mkp.values, [[6, 6], [5, 5]])

    def test_mkp_requires_uniform_rows(self):
        with pytest.raises(InstanceError):
            GapInstance([[1.0, 2.0]], [[1.0, 1.0]], [1.0, 1.0], kind="mkp")

    def test_empty_instance(self):
        inst = GapInstance(np.zeros((0, 2)), np.zeros((0, 2)), [1.0, 1.0])
        assert inst.n == 0


class TestAssignment:
    def test_value_and_loads(self, tiny_gap):
        a = Assignment(((0, 0), (1, 1)))
        assert assignment_value(tiny_gap, a) == 18.0
        assert knapsack_load(tiny_gap, a, 0) == 3.0
        np.testing.assert_array_equal(knapsack_loads(tiny_gap, a), [3.0, 3.0])
        assert validate_assignment(tiny_gap, a)

    def test_capacity_violation_detected(self, tiny_gap):
        assert not validate_assignment(tiny_gap, Assignment(((0, 0), (1, 0))))

    def test_duplicate_item_invalid(self, tiny_gap):
        assert not validate_assignment(tiny_gap, Assignment(((0, 0), (0, 1))))

    def test_out_of_range(self, tiny_gap):
        with pytest.raises(IndexRangeError):
            assignment_value(tiny_gap, Assignment(((5, 0),)))
        with pytest.raises(IndexRangeError):
            assignment_value(tiny_gap, Assignment(((0, 7),)))

    def test_vector_round_trip(self):
        a = Assignment.from_vector([-1, 1, 0, -1])
        assert a.pairs == ((1, 1), (2, 0))
        np.testing.assert_array_equal(a.as_vector(4), [-1, 1, 0, -1])

    def test_pairs_sorted_and_remap(self):
        a = Assignment(((3, 0), (1, 1)))
        assert a.pairs == ((1, 1), (3, 0))
        assert a.remap([10, 11, 12, 13]).pairs == ((11, 1), (13, 0))


def test_item_set_normalises_and_checks():
    np.testing.assert_array_equal(item_set([3, 1, 3], 5), [1, 3])
    with pytest.raises(IndexRangeError):
        item_set([5], 5)


def test_restrict_keeps_order(tiny_gap):
    sub, idx = restrict(tiny_gap, [1])
    assert sub.n == 1
    np.testing.assert_array_equal(sub.values[0], tiny_gap.values[1])
    np.testing.assert_array_equal(idx, [1])


def test_json_round_trip(tmp_path, tiny_gap):
    path = tmp_path / "inst.json"
    save_instance(tiny_gap, path)
    assert load_instance(path) == tiny_gap
    assert loads_instance(dumps_instance(tiny_gap)) == tiny_gap


def test_json_kp_shorthand():
    doc = {"kind": "kp", "capacities": [5], "items": [{"value": 6, "weight": 4}]}
    inst = loads_instance(json.dumps(doc))
    assert inst.values[0, 0] == 6 and inst.kind == "kp"
