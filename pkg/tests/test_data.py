import numpy as np
import pytest

from abcforest.data import load_observed, load_table, save_table, split
from abcforest.errors import TableFormatError

from conftest import make_table


def test_load_basic_table(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("model,stat_ac1,stat_ac2\n1,0.5,-0.25\n2,0.125,3.0\n1,-1.5,2.0\n")
    t = load_table(p)
    assert len(t) == 3
    assert t.n_summaries == 2
    assert t.summary_names == ("ac1", "ac2")
    assert t.n_models == 2
    assert t[1].model == 2
    assert t[1].summaries[1] == 3.0


def test_load_rejects_nan_cell(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("model,stat_a\n1,0.5\n2,NaN\n")
    with pytest.raises(TableFormatError, match=r"row 3.*stat_a"):
        load_table(p)


def test_load_rejects_bad_model_index(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("model,stat_a\n0,0.5\n")
    with pytest.raises(TableFormatError, match="model"):
        load_table(p)


def test_load_rejects_ragged_row(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("model,stat_a,stat_b\n1,0.5\n")
    with pytest.raises(TableFormatError, match="row 2"):
        load_table(p)


def test_load_rejects_non_numeric(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("model,stat_a\n1,abc\n")
    with pytest.raises(TableFormatError, match="not a number"):
        load_table(p)


def test_load_rejects_unknown_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("model,value\n1,0.5\n")
    with pytest.raises(TableFormatError, match="param_ or stat_"):
        load_table(p)


def test_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    t = make_table(rng.integers(1, 4, 50),
                   rng.standard_normal((50, 3))
                   * 10.0 ** rng.integers(-8, 8, (50, 3)),
                   params=rng.standard_normal((50, 2)),
                   param_names=["theta1", "theta2"])
    p = tmp_path / "t.csv"
    save_table(t, p)
    assert load_table(p) == t


def test_empty_table_is_header_only(tmp_path):
    t = make_table(np.empty(0, dtype=int), np.empty((0, 2)))
    p = tmp_path / "t.csv"
    save_table(t, p)
    assert p.read_text() == "model,stat_s0,stat_s1\n"
    t2 = load_table(p)
    assert len(t2) == 0 and t2.summary_names == ("s0", "s1")


def test_line_count_matches_records(tmp_path):
    rng = np.random.default_rng(1)
    t = make_table(np.ones(10_000, dtype=int), rng.standard_normal((10_000, 7)))
    p = tmp_path / "t.csv"
    save_table(t, p)
    assert sum(1 for _ in open(p)) == 10_001


def test_tables_are_immutable():
    t = make_table([1, 2], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        t.summaries[0, 0] = 5.0
    with pytest.raises(ValueError):
        t.models[0] = 2


def test_constructor_rejects_nonfinite():
    with pytest.raises(ValueError):
        make_table([1], [[np.inf]])


def test_split_full_partition():
    t = make_table(np.ones(70_000, dtype=int), np.zeros((70_000, 1)))
    s = split(t, (50_000, 10_000, 10_000), seed=3)
    parts = [s.train_indices, s.validation_indices, s.test_indices]
    assert [len(p) for p in parts] == [50_000, 10_000, 10_000]
    all_idx = np.concatenate(parts)
    assert np.array_equal(np.sort(all_idx), np.arange(70_000))


def test_split_empty_sizes():
    t = make_table([1, 2, 1], np.zeros((3, 1)))
    s = split(t, (0, 0, 0), seed=0)
    assert len(s.train_indices) == len(s.validation_indices) == len(s.test_indices) == 0


def test_split_deterministic():
    t = make_table(np.ones(100, dtype=int), np.zeros((100, 1)))
    a = split(t, (50, 20, 20), seed=11)
    b = split(t, (50, 20, 20), seed=11)
    assert np.array_equal(a.train_indices, b.train_indices)
    assert np.array_equal(a.validation_indices, b.validation_indices)
    assert np.array_equal(a.test_indices, b.test_indices)
    c = split(t, (50, 20, 20), seed=12)
    assert not np.array_equal(a.train_indices, c.train_indices)


def test_split_rejects_oversize():
    t = make_table([1, 2, 1], np.zeros((3, 1)))
    with pytest.raises(ValueError, match="3 records"):
        split(t, (2, 1, 1), seed=0)


def test_subset_preserves_order_and_fields():
    t = make_table([1, 2, 1, 2], np.arange(8.0).reshape(4, 2))
    s = t.subset([3, 0])
    assert list(s.models) == [2, 1]
    assert s.summaries[0, 0] == 6.0
    assert s.n_models == t.n_models


def test_load_observed_full_format(tmp_path):
    p = tmp_path / "o.csv"
    p.write_text("model,param_a,stat_x,stat_y\n2,0.5,1.25,-0.5\n")
    v = load_observed(p, ("x", "y"))
    assert np.array_equal(v, [1.25, -0.5])


def test_load_observed_stats_only(tmp_path):
    p = tmp_path / "o.csv"
    p.write_text("stat_x,stat_y\n1.25,-0.5\n")
    assert np.array_equal(load_observed(p, ("x", "y")), [1.25, -0.5])


def test_load_observed_name_mismatch(tmp_path):
    p = tmp_path / "o.csv"
    p.write_text("stat_x,stat_z\n1.0,2.0\n")
    with pytest.raises(TableFormatError, match="do not match"):
        load_observed(p, ("x", "y"))
