import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lineqa import evaluation as ev
from lineqa.errors import DataError, DegenerateError, ParameterError
from lineqa.evaluation import EvalPair


def brute_force_ranks(values):
    """Oracle: rank = mean position of equal values in the sorted order."""
    out = []
    svals = sorted(values)
    for v in values:
        positions = [i + 1 for i, s in enumerate(svals) if s == v]
        out.append(sum(positions) / len(positions))
    return out


def textbook_pearson(x, y):
    """Oracle: covariance over the product of standard deviations."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    sx = math.sqrt(sum((a - mx) ** 2 for a in x) / n)
    sy = math.sqrt(sum((b - my) ** 2 for b in y) / n)
    return cov / (sx * sy)


def brute_force_spearman(x, y):
    return textbook_pearson(brute_force_ranks(x), brute_force_ranks(y))


class TestPearson:
    def test_perfect_linear(self):
        x = [1.0, 2.0, 3.0, 4.0]
        y = [2 * v + 3 for v in x]
        assert ev.pearson_lcc(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_negation(self):
        x = [0.3, 1.7, -2.0, 5.1]
        assert ev.pearson_lcc(x, [-v for v in x]) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_textbook_formula(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [2.0, 1.0, 4.0, 3.0, 5.0]
        assert ev.pearson_lcc(x, y) == pytest.approx(textbook_pearson(x, y), abs=1e-12)

    def test_random_vectors_match_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            n = int(rng.integers(2, 51))
            x = list(rng.normal(size=n))
            y = list(rng.normal(size=n))
            assert ev.pearson_lcc(x, y) == pytest.approx(textbook_pearson(x, y), abs=1e-12)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            x = list(rng.normal(size=10))
            y = list(rng.normal(size=10))
            r = ev.pearson_lcc(x, y)
            assert r == pytest.approx(ev.pearson_lcc(y, x), abs=1e-15)
            assert -1.0 - 1e-12 <= r <= 1.0 + 1e-12

    def test_degenerate(self):
        with pytest.raises(DegenerateError):
            ev.pearson_lcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_length_checks(self):
        with pytest.raises(ParameterError):
            ev.pearson_lcc([1.0], [2.0])
        with pytest.raises(ParameterError):
            ev.pearson_lcc([1.0, 2.0], [1.0, 2.0, 3.0])


class TestSpearman:
    def test_monotone_transform_gives_one(self):
        x = [0.5, 1.2, 3.3, 7.0]
        y = [math.exp(v) for v in x]
        assert ev.spearman_srocc(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_reversal(self):
        assert ev.spearman_srocc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-12)

    def test_tied_example_average_ranks(self):
        x = [1.0, 1.0, 2.0]
        assert list(ev.rank_average(x)) == [1.5, 1.5, 3.0]
        y = [1.0, 2.0, 3.0]
        assert ev.spearman_srocc(x, y) == pytest.approx(brute_force_spearman(x, y), abs=1e-12)

    def test_random_vectors_match_oracle(self):
        rng = np.random.default_rng(16)
        for _ in range(100):
            n = int(rng.integers(2, 51))
            x = list(rng.integers(0, 8, size=n).astype(float))  # ties likely
            y = list(rng.normal(size=n))
            if len(set(x)) < 2:
                continue
            assert ev.spearman_srocc(x, y) == pytest.approx(brute_force_spearman(x, y), abs=1e-12)

    def test_ranks_exhaustive_small_alphabet(self):
        # every vector of length <= 6 over {0, 1, 2}
        for n in range(1, 7):
            for vec in itertools.product((0.0, 1.0, 2.0), repeat=n):
                np.testing.assert_allclose(ev.rank_average(vec), brute_force_ranks(vec), atol=1e-15)

    def test_pairs_exhaustive_up_to_length_four(self):
        for n in range(2, 5):
            vecs = list(itertools.product((0.0, 1.0, 2.0), repeat=n))
            for x in vecs:
                if len(set(x)) < 2:
                    continue
                for y in vecs:
                    if len(set(y)) < 2:
                        continue
                    assert ev.spearman_srocc(x, y) == pytest.approx(
                        brute_force_spearman(x, y), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=20, unique=True),
           st.sampled_from(["exp", "cube", "affine"]))
    def test_invariant_under_monotone_transform(self, x, kind):
        rng = np.random.default_rng(0)
        y = list(rng.permutation(len(x)).astype(float))
        transform = {"exp": lambda v: math.exp(v / 100), "cube": lambda v: v ** 3,
                     "affine": lambda v: 3 * v + 7}[kind]
        base = ev.spearman_srocc(x, y)
        assert ev.spearman_srocc([transform(v) for v in x], y) == pytest.approx(base, abs=1e-9)

    def test_all_tied_degenerate(self):
        with pytest.raises(DegenerateError):
            ev.spearman_srocc([5.0, 5.0, 5.0], [1.0, 2.0, 3.0])


class TestEvaluate:
    def test_identity_predictions(self):
        pairs = [EvalPair(str(i), float(i), float(i)) for i in range(10)]
        report = ev.evaluate(pairs)
        assert report.n == 10
        assert report.lcc == pytest.approx(1.0, abs=1e-12)
        assert report.srocc == pytest.approx(1.0, abs=1e-12)

    def test_rank_reversal(self):
        pairs = [EvalPair(str(i), float(10 - i), float(i) ** 2) for i in range(10)]
        assert ev.evaluate(pairs).srocc == pytest.approx(-1.0, abs=1e-12)

    def test_too_few(self):
        with pytest.raises(ParameterError):
            ev.evaluate([EvalPair("a", 1.0, 1.0)])


class TestAverageGroundTruth:
    def test_single_engine_identity(self):
        assert ev.average_ground_truth({"e": [0.1, 0.9]}) == [0.1, 0.9]

    def test_two_engines(self):
        assert ev.average_ground_truth({"a": [0.8], "b": [0.6]}) == [pytest.approx(0.7)]

    def test_three_engines(self):
        got = ev.average_ground_truth({"a": [0.9], "b": [0.6], "c": [0.0]})
        assert got == [pytest.approx(0.5)]

    def test_mismatched_coverage(self):
        with pytest.raises(DataError):
            ev.average_ground_truth({"a": [0.9, 0.1], "b": [0.6]})


class TestCsvInterfaces:
    def test_round_trip_and_join(self, tmp_path):
        pred = tmp_path / "pred.csv"
        pred.write_text("id,score\ndoc1,0.9\ndoc2,0.4\ndoc3,0.7\n")
        gt = tmp_path / "gt.csv"
        gt.write_text(
            "id,engine,accuracy\n"
            "doc1,fine,0.95\ndoc1,tess,0.85\n"
            "doc2,fine,0.55\ndoc2,tess,0.25\n"
            "doc3,fine,0.75\ndoc3,tess,0.65\n")
        pairs = ev.pairs_from_files(pred, gt)
        assert [p.id for p in pairs] == ["doc1", "doc2", "doc3"]
        assert pairs[0].ground_truth == pytest.approx(0.9)
        assert pairs[1].ground_truth == pytest.approx(0.4)
        report = ev.evaluate(pairs)
        assert report.lcc == pytest.approx(1.0, abs=1e-12)

    def test_engine_coverage_mismatch(self, tmp_path):
        gt = tmp_path / "gt.csv"
        gt.write_text("id,engine,accuracy\ndoc1,fine,0.9\ndoc2,tess,0.8\n")
        with pytest.raises(DataError):
            ev.load_ground_truth_csv(gt)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("doc,value\na,1\n")
        with pytest.raises(DataError):
            ev.load_predictions_csv(p)

    def test_missing_id_in_predictions(self, tmp_path):
        pred = tmp_path / "pred.csv"
        pred.write_text("id,score\ndoc1,0.9\n")
        gt = tmp_path / "gt.csv"
        gt.write_text("id,engine,accuracy\ndoc1,fine,0.9\ndoc2,fine,0.8\n")
        with pytest.raises(DataError):
            ev.pairs_from_files(pred, gt)
