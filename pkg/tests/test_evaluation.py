"""Metric correctness against independent textbook oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moskit import evaluation as ev
from moskit.errors import DegenerateInputError, InvalidInputError


def pairs_from(preds, labels, systems=None):
    systems = systems or [None] * len(preds)
    return [
        ev.EvalPair(utterance_id=f"u{i}", predicted=float(p), label=float(l), system_id=s)
        for i, (p, l, s) in enumerate(zip(preds, labels, systems))
    ]


# independent oracles -------------------------------------------------------


def mse_oracle(x, y):
    total = 0.0
    for a, b in zip(x, y):
        total += (a - b) ** 2
    return total / len(x)


def lcc_oracle(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    sx = math.sqrt(sum((a - mx) ** 2 for a in x) / n)
    sy = math.sqrt(sum((b - my) ** 2 for b in y) / n)
    return cov / (sx * sy)


def average_ranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def srcc_oracle(x, y):
    return lcc_oracle(average_ranks(list(x)), average_ranks(list(y)))


def srcc_d2_formula(x, y):
    # valid only for tie-free data
    rx = average_ranks(list(x))
    ry = average_ranks(list(y))
    n = len(x)
    d2 = sum((a - b) ** 2 for a, b in zip(rx, ry))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0))


class TestMse:
    def test_zero_for_perfect_fit(self):
        assert ev.mse(pairs_from([1, 2, 3], [1, 2, 3])) == 0.0

    def test_hand_case(self):
        assert ev.mse(pairs_from([1, 2], [2, 4])) == pytest.approx(2.5)

    def test_matches_oracle_on_random_pairs(self, rng):
        x = rng.uniform(1, 5, 1000)
        y = rng.uniform(1, 5, 1000)
        got = ev.mse(pairs_from(x, y))
        want = mse_oracle(x.tolist(), y.tolist())
        assert abs(got - want) <= 1e-12 * abs(want)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            ev.mse([])


class TestLcc:
    def test_exact_linear_relation(self):
        assert ev.lcc(pairs_from([1, 2, 3], [2, 4, 6])) == pytest.approx(1.0)

    def test_exact_negative_relation(self):
        assert ev.lcc(pairs_from([1, 2, 3], [6, 4, 2])) == pytest.approx(-1.0)

    def test_matches_oracle(self, rng):
        x = rng.uniform(0, 1, 100)
        y = 0.3 * x + rng.uniform(0, 1, 100)
        assert abs(ev.lcc(pairs_from(x, y)) - lcc_oracle(x.tolist(), y.tolist())) < 1e-12

    def test_constant_side_degenerate(self):
        with pytest.raises(DegenerateInputError):
            ev.lcc(pairs_from([2, 2, 2], [1, 2, 3]))

    def test_one_pair_rejected(self):
        with pytest.raises(InvalidInputError):
            ev.lcc(pairs_from([1], [2]))

    def test_affine_invariance(self, rng):
        x = rng.uniform(0, 1, 50)
        y = rng.uniform(0, 1, 50)
        base = ev.lcc(pairs_from(x, y))
        assert abs(ev.lcc(pairs_from(3.0 * x + 2.0, y)) - base) < 1e-12
        assert abs(ev.lcc(pairs_from(x, 0.1 * y - 7.0)) - base) < 1e-12


class TestSrcc:
    def test_monotone_transform_gives_one(self):
        x = [0.1, 1.5, 2.0, 3.7]
        assert ev.srcc(pairs_from(x, np.exp(x))) == pytest.approx(1.0)

    def test_spec_case_point_eight(self):
        assert ev.srcc(pairs_from([1, 2, 3, 4], [1, 3, 2, 4])) == pytest.approx(0.8)

    def test_matches_d2_formula_tie_free(self, rng):
        for _ in range(20):
            x = rng.permutation(30).astype(float)
            y = rng.permutation(30).astype(float)
            assert ev.srcc(pairs_from(x, y)) == pytest.approx(srcc_d2_formula(x, y), abs=1e-12)

    def test_ties_match_brute_force_oracle(self):
        cases = [
            ([1, 1, 2], [1, 2, 3]),
            ([1, 2, 2, 3], [4, 4, 2, 1]),
            ([5, 5, 5, 1], [1, 2, 3, 4]),
        ]
        for x, y in cases:
            assert ev.srcc(pairs_from(x, y)) == pytest.approx(srcc_oracle(x, y), abs=1e-12)

    def test_exhaustive_small_permutations(self):
        import itertools

        for n in (3, 4, 5, 6):
            x = [float(i) for i in range(1, n + 1)]
            for perm in itertools.permutations(x):
                assert ev.srcc(pairs_from(x, perm)) == pytest.approx(
                    srcc_oracle(x, list(perm)), abs=1e-12
                )

    def test_monotone_invariance_exact(self, rng):
        x = rng.permutation(40).astype(float)
        y = rng.permutation(40).astype(float)
        base = ev.srcc(pairs_from(x, y))
        assert ev.srcc(pairs_from(np.exp(0.2 * x), y)) == pytest.approx(base, abs=0)
        assert ev.srcc(pairs_from(x, y**3)) == pytest.approx(base, abs=0)

    def test_constant_after_ranking_degenerate(self):
        with pytest.raises(DegenerateInputError):
            ev.srcc(pairs_from([7, 7, 7], [1, 2, 3]))


@given(st.permutations(list(range(8))))
@settings(max_examples=40, deadline=None)
def test_metrics_permutation_invariant(order):
    rng = np.random.default_rng(11)
    x = rng.uniform(1, 5, 8)
    y = rng.uniform(1, 5, 8)
    p0 = pairs_from(x, y)
    p1 = [p0[i] for i in order]
    assert ev.mse(p1) == pytest.approx(ev.mse(p0), abs=1e-14)
    assert ev.lcc(p1) == pytest.approx(ev.lcc(p0), abs=1e-12)
    assert ev.srcc(p1) == pytest.approx(ev.srcc(p0), abs=1e-12)


class TestSystemAggregate:
    def test_hand_case(self):
        pairs = pairs_from([3, 4, 2], [3.5, 3.5, 2], systems=["A", "A", "B"])
        agg = ev.system_aggregate(pairs)
        assert [(p.system_id, p.predicted, p.label) for p in agg] == [
            ("A", 3.5, 3.5),
            ("B", 2.0, 2.0),
        ]
        assert ev.mse(agg) == 0.0
        assert ev.lcc(agg) == pytest.approx(1.0)

    def test_one_utterance_per_system_is_identity(self, rng):
        x = rng.uniform(1, 5, 6)
        y = rng.uniform(1, 5, 6)
        pairs = pairs_from(x, y, systems=[f"s{i}" for i in range(6)])
        agg = ev.system_aggregate(pairs)
        assert ev.mse(agg) == pytest.approx(ev.mse(pairs))
        assert ev.srcc(agg) == pytest.approx(ev.srcc(pairs))

    def test_permutation_invariant(self, rng):
        x = rng.uniform(1, 5, 9)
        y = rng.uniform(1, 5, 9)
        systems = ["A", "B", "C"] * 3
        pairs = pairs_from(x, y, systems=systems)
        shuffled = [pairs[i] for i in rng.permutation(9)]
        a = {(p.system_id): (p.predicted, p.label) for p in ev.system_aggregate(pairs)}
        b = {(p.system_id): (p.predicted, p.label) for p in ev.system_aggregate(shuffled)}
        for k in a:
            assert a[k] == pytest.approx(b[k])

    def test_missing_system_rejected(self):
        with pytest.raises(InvalidInputError):
            ev.system_aggregate(pairs_from([1], [2]))


class TestReport:
    def test_full_report_with_systems(self, rng):
        x = rng.uniform(1, 5, 20)
        y = x + rng.normal(0, 0.1, 20)
        report = ev.compute_report(pairs_from(x, y, systems=[f"s{i % 4}" for i in range(20)]))
        assert report.n_utterances == 20
        assert report.n_systems == 4
        assert report.sys_mse is not None
        assert -1 <= report.utt_lcc <= 1
        assert -1 <= report.utt_srcc <= 1

    def test_sys_absent_without_ids(self, rng):
        report = ev.compute_report(pairs_from(rng.uniform(1, 5, 5), rng.uniform(1, 5, 5)))
        assert report.sys_mse is None and report.sys_lcc is None and report.sys_srcc is None
        assert "SYS" in report.notes

    def test_constant_predictor_keeps_mse(self):
        report = ev.compute_report(pairs_from([3, 3, 3], [1, 2, 3]))
        assert report.utt_mse == pytest.approx(5.0 / 3.0)
        assert report.utt_lcc is None and report.utt_srcc is None
        assert "UTT_LCC" in report.notes and "UTT_SRCC" in report.notes

    def test_perfect_predictor(self, rng):
        y = rng.uniform(1, 5, 12)
        report = ev.compute_report(pairs_from(y, y, systems=[f"s{i % 3}" for i in range(12)]))
        assert report.utt_mse == 0.0
        assert report.utt_lcc == pytest.approx(1.0)
        assert report.utt_srcc == pytest.approx(1.0)
        assert report.sys_mse == pytest.approx(0.0, abs=1e-28)
        assert report.sys_lcc == pytest.approx(1.0)
        assert report.sys_srcc == pytest.approx(1.0)

    def test_table_has_all_columns(self, rng):
        report = ev.compute_report(pairs_from(rng.uniform(1, 5, 5), rng.uniform(1, 5, 5)))
        table = report.to_table()
        for col in ("UTT_MSE", "UTT_LCC", "UTT_SRCC", "SYS_MSE", "SYS_LCC", "SYS_SRCC"):
            assert col in table
        assert "n/a" in table

    def test_json_roundtrip(self, rng):
        import json

        report = ev.compute_report(pairs_from(rng.uniform(1, 5, 5), rng.uniform(1, 5, 5)))
        data = json.loads(report.to_json())
        assert data["n_utterances"] == 5
