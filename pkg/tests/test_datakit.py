import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcpmod import datakit
from rcpmod.datakit import ATTRIBUTE, CLASS, CLASS_ATTRIBUTE, INLIER
from rcpmod.errors import ConfigError, DataFormatError
from rcpmod.numeric import make_rng


def _write(d, name, rows):
    (d / name).write_text("\n".join(",".join(str(x) for x in r) for r in rows) + "\n")


def test_load_without_mask(tmp_path):
    _write(tmp_path, "view_1.csv", [[1, 2], [3, 4], [5, 6]])
    _write(tmp_path, "view_2.csv", [[1], [2], [3]])
    ds = datakit.load_dataset(tmp_path)
    assert ds.n == 3 and ds.n_views == 2 and ds.presence.all() and ds.types is None


def test_load_mask_and_labels(tmp_path):
    _write(tmp_path, "view_1.csv", [[1, 2], [3, 4]])
    _write(tmp_path, "view_2.csv", [[1], [2]])
    _write(tmp_path, "mask.csv", [[1, 0], [1, 1]])
    _write(tmp_path, "labels.csv", [[0], [2]])
    ds = datakit.load_dataset(tmp_path)
    assert ds.presence.tolist() == [[True, False], [True, True]]
    assert ds.views[1][0, 0] == 0.0 and ds.types.tolist() == [0, 2]


@pytest.mark.parametrize("files, msg", [
    ({"view_1.csv": [[1], [2], [3]], "view_2.csv": [[1], [2]]}, "row-count"),
    ({"view_1.csv": [[1], [2]], "mask.csv": [[1], [2]]}, "0 or 1"),
    ({"view_1.csv": [[1], [2]], "mask.csv": [[0], [1]]}, "no view"),
    ({"view_1.csv": [[1], [2]], "labels.csv": [[0], [7]]}, "labels"),
])
def test_load_errors(tmp_path, files, msg):
    for name, rows in files.items():
        _write(tmp_path, name, rows)
    with pytest.raises(DataFormatError, match=msg):
        datakit.load_dataset(tmp_path)


def test_save_load_roundtrip(tmp_path):
    ds = _injected(1)
    datakit.save_dataset(ds, tmp_path)
    back = datakit.load_dataset(tmp_path)
    assert all(np.array_equal(a, b) for a, b in zip(ds.views, back.views))
    assert np.array_equal(ds.presence, back.presence) and np.array_equal(ds.types, back.types)
    assert json.loads((tmp_path / "provenance.json").read_text())["masking"]["instances"] == 60


def test_normalize_examples():
    ds = datakit.MultiViewDataset([np.array([[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]])], np.ones((3, 1), bool))
    out = datakit.normalize(ds)
    assert out.views[0][:, 0].tolist() == [0.0, 0.5, 1.0]
    assert out.views[0][:, 1].tolist() == [0.0, 0.0, 0.0]
    again = datakit.normalize(out)
    assert np.array_equal(again.views[0], out.views[0])


def test_synthesize():
    ds = datakit.synthesize(5, [4, 3], 1000, 0.0, make_rng(0))
    sizes = np.bincount(ds.clusters)
    assert sizes.min() >= 199 and sizes.max() <= 201
    for v in range(2):
        for c in range(5):
            rows = ds.views[v][ds.clusters == c]
            assert np.all(rows == rows[0])
    a = datakit.synthesize(3, [2], 30, 0.1, make_rng(4))
    b = datakit.synthesize(3, [2], 30, 0.1, make_rng(4))
    assert np.array_equal(a.views[0], b.views[0])


def _base(seed=0, n=200, v=2):
    return datakit.normalize(datakit.synthesize(4, [5] * v, n, 0.05, make_rng(seed)))


def _injected(seed):
    ds = datakit.inject(_base(seed), 0.05, 0.05, 0.05, make_rng(seed, 1))
    return datakit.apply_missing(ds, 0.3, make_rng(seed, 2))


def test_inject_attribute():
    ds = datakit.inject_attribute(datakit.normalize(datakit.synthesize(5, [3], 1000, 0.05, make_rng(0))),
                                  0.05, make_rng(1))
    assert int(np.sum(ds.types == ATTRIBUTE)) == 50
    assert np.all((ds.views[0][ds.types == ATTRIBUTE] >= 0) & (ds.views[0][ds.types == ATTRIBUTE] <= 1))
    base = _base()
    same = datakit.inject_attribute(base, 0.0, make_rng(1))
    assert np.array_equal(same.views[0], base.views[0]) and not np.any(same.types)


@pytest.mark.parametrize("n_views", [2, 3])
def test_inject_class_swaps_floor_half(n_views):
    base = _base(v=n_views)
    ds = datakit.inject_class(base, 0.1, make_rng(3))
    changed = np.array([[not np.array_equal(ds.views[v][i], base.views[v][i]) for v in range(n_views)]
                        for i in range(ds.n)])
    hit = ds.types == CLASS
    assert hit.sum() == 20
    assert np.all(changed[hit].sum(axis=1) == n_views // 2)
    assert not changed[~hit].any()


def test_swap_is_involution():
    base = _base()
    views = [x.copy() for x in base.views]
    datakit.swap_views(views, (3, 7), [0])
    datakit.swap_views(views, (3, 7), [0])
    assert all(np.array_equal(a, b) for a, b in zip(views, base.views))


def test_inject_class_attribute():
    base = _base()
    ds = datakit.inject_class_attribute(base, 0.05, make_rng(5))
    hit = np.flatnonzero(ds.types == CLASS_ATTRIBUTE)
    assert hit.size == 10
    for i in hit:
        swapped = [v for v in range(2) if any(np.array_equal(ds.views[v][i], base.views[v][j]) for j in hit if j != i)]
        assert len(swapped) == 1
        other = 1 - swapped[0]
        assert np.all((ds.views[other][i] >= 0) & (ds.views[other][i] <= 1))
        assert not np.array_equal(ds.views[other][i], base.views[other][i])
    assert not np.any(datakit.inject_class_attribute(base, 0.0, make_rng(5)).types)


def test_inject_counts_and_disjointness():
    ds = datakit.inject(_base(n=1000), 0.05, 0.05, 0.05, make_rng(1))
    counts = np.bincount(ds.types, minlength=4)
    assert counts.tolist() == [850, 50, 50, 50]
    odd = datakit.inject(_base(n=1000), 0.0, 0.051, 0.0, make_rng(1))
    assert int(np.sum(odd.types == CLASS)) == 52  # ceil(51 / 2) pairs


def test_inject_errors():
    with pytest.raises(ConfigError):
        datakit.inject(_base(n=20), 0.5, 0.3, 0.3, make_rng(0))
    with pytest.raises(ConfigError):
        datakit.inject_attribute(datakit.inject_attribute(_base(n=20), 0.6, make_rng(0)), 0.6, make_rng(1))


def test_apply_missing():
    base = _base(n=1000)
    assert datakit.apply_missing(base, 0.0, make_rng(0)).presence.all()
    ds = datakit.apply_missing(base, 0.3, make_rng(0))
    assert int((~ds.presence.all(axis=1)).sum()) == 300 and ds.complete_rows().size == 700
    assert ds.presence.any(axis=1).all()
    assert np.all(ds.views[0][~ds.presence[:, 0]] == 0)
    assert np.array_equal(ds.full_views[0], base.views[0])
    with pytest.raises(ConfigError):
        datakit.apply_missing(base, 1.0, make_rng(0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0, 0.95), st.integers(2, 4))
def test_masking_never_empties_an_instance(seed, rate, v):
    ds = datakit.apply_missing(_base(seed, n=40, v=v), rate, make_rng(seed))
    assert ds.presence.any(axis=1).all()


def test_pipeline_reproducible():
    a, b = _injected(7), _injected(7)
    assert np.array_equal(a.types, b.types) and np.array_equal(a.presence, b.presence)
    assert all(np.array_equal(x, y) for x, y in zip(a.views, b.views))
