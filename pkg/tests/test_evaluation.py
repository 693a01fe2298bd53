from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affact.evaluation import (
    ErrorTable, classify, compare_tables, emit_table, emit_tables, error_table, fuse_scores, parse_table,
    parse_tables, per_image_errors, read_scores, write_scores,
)

FIXTURES = Path(__file__).parent / "fixtures"


def test_fuse_scores():
    assert np.array_equal(fuse_scores([[1.5, -2.0]]), [1.5, -2.0])
    assert np.array_equal(fuse_scores([[2, 2], [0, 0]]), [1, 1])
    with pytest.raises(ValueError):
        fuse_scores([])


def test_fuse_many_views_matches_brute_force(rng):
    views = rng.normal(size=(162, 40))
    manual = [sum(views[i, j] for i in range(162)) / 162 for j in range(40)]
    assert np.max(np.abs(fuse_scores(views) - manual)) < 1e-12


def test_classify_and_tie_rule():
    assert classify([0.3, -0.2]).tolist() == [1, -1]
    assert classify([0.0]).tolist() == [-1]
    assert classify([0.5], tau=0.5).tolist() == [-1]


@given(st.lists(st.integers(-640, 640), min_size=1, max_size=20), st.integers(-320, 320))
def test_classify_shift_invariance(scores, delta):
    # Multiples of 1/64 keep the shifted comparison exact in floating point.
    scores = np.array(scores) / 64
    delta = delta / 64
    assert np.array_equal(classify(scores + delta, tau=delta), classify(scores))


def test_fusion_is_invariant_to_duplicating_views(rng):
    views = rng.normal(size=(5, 8))
    assert np.array_equal(classify(fuse_scores(views)), classify(fuse_scores(np.concatenate([views, views]))))


def test_error_table_basics():
    truth = np.array([[1, -1], [1, 1], [-1, -1], [1, -1]])
    perfect = error_table(truth, truth, ["a", "b"])
    assert np.all(perfect.errors == 0) and perfect.overall == 0
    pred = truth.copy()
    pred[2, 0] = 1
    t = error_table(pred, truth, ["a", "b"])
    assert t.errors.tolist() == [25.0, 0.0] and t.overall == 12.5
    with pytest.raises(ValueError):
        error_table(pred[:3], truth, ["a", "b"])


def test_overall_is_permutation_invariant(rng):
    truth = rng.choice([-1, 1], (50, 6))
    pred = rng.choice([-1, 1], (50, 6))
    perm = rng.permutation(50)
    a = error_table(pred, truth, list("abcdef"))
    b = error_table(pred[perm], truth[perm], list("abcdef"))
    assert a == b and a.overall == np.mean(a.errors)


def test_per_image_errors():
    truth = np.array([[1, 1, 1, 1]])
    assert per_image_errors(np.array([[1, -1, 1, 1]]), truth).tolist() == [25.0]


def test_table_range_enforced():
    with pytest.raises(ValueError):
        ErrorTable(["a"], [101.0])


@pytest.mark.parametrize("fmt", ["csv", "tsv", "markdown"])
def test_emit_parse_round_trip(fmt):
    t = ErrorTable(["Big Lips", "Young"], [12.5, 3.75])
    assert parse_table(emit_table(t, fmt), fmt) == t


def test_two_decimal_rendering():
    text = emit_table(ErrorTable(["x"], [8.0301]))
    assert text.splitlines() == ["attribute,error", "x,8.03", "OVERALL,8.03"]


def test_markdown_has_two_columns():
    text = emit_table(ErrorTable(["x", "y"], [1, 2]), "markdown")
    assert all(line.count("|") == 3 for line in text.splitlines())


def test_bad_overall_rejected():
    with pytest.raises(ValueError):
        parse_table("attribute,error\nx,1.00\nOVERALL,2.00\n")


def test_published_table_fixture_renders_overall_row():
    tables = parse_tables((FIXTURES / "table1.csv").read_text())
    assert len(tables) == 15 and all(len(t.names) == 40 for t in tables.values())
    text = emit_tables(tables)
    overall = text.strip().splitlines()[-1].split(",")
    expected = (FIXTURES / "table1_overall.csv").read_text().strip().splitlines()[1:]
    assert overall[1:] == [line.split(",")[1] for line in expected]


def test_compare_tables_pairs_attributes():
    a = ErrorTable(list("abc"), [1.0, 2.0, 3.5])
    b = ErrorTable(list("abc"), [1.5, 2.1, 3.0])
    assert compare_tables(a, b).df == 2
    with pytest.raises(ValueError):
        compare_tables(a, ErrorTable(list("abd"), [1, 2, 3]))


def test_score_dump_round_trip(rng):
    scores = rng.normal(size=(3, 4))
    ids, back = read_scores(write_scores(["a.png", "b.png", "c.png"], scores))
    assert ids == ["a.png", "b.png", "c.png"] and np.array_equal(back, scores)
    with pytest.raises(ValueError):
        read_scores("a 1 2\nb 1\n")
