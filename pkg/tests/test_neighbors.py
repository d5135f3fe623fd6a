import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import knn_loop
from rcpmod.errors import ConfigError
from rcpmod.neighbors import RefreshPolicy, Space, build_knn, refresh_policy
from rcpmod.numeric import make_rng


def _lists(idx):
    return {int(i): list(map(int, idx.neighbors_of([i])[0])) for i in idx.built_over}


def test_hand_examples():
    idx = build_knn(np.array([[0.0], [1.0], [10.0]]), [0, 1, 2], 1)
    assert _lists(idx) == {0: [1], 1: [0], 2: [1]}
    line = build_knn(np.arange(4.0)[:, None], range(4), 2)
    assert sorted(line.neighbors_of([1])[0]) == [0, 2]
    assert sorted(line.neighbors_of([2])[0]) == [1, 3]


def test_duplicate_points_tie_to_lower_index():
    pts = np.array([[0.0], [5.0], [5.0], [5.0]])
    idx = build_knn(pts, range(4), 1)
    assert idx.neighbors_of([0])[0][0] == 1
    assert idx.neighbors_of([3])[0][0] == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 25), st.integers(1, 4), st.integers(0, 10 ** 6), st.booleans())
def test_matches_brute_force(n, d, seed, coarse):
    rng = make_rng(seed)
    pts = rng.integers(0, 3, (n, d)).astype(float) if coarse else rng.standard_normal((n, d))
    present = np.sort(rng.choice(n, size=max(n - 2, 3), replace=False))
    k = int(rng.integers(1, present.size))
    idx = build_knn(pts, present, k)
    assert _lists(idx) == knn_loop(pts, present, k)
    assert idx.table.shape == (present.size, k)
    assert np.all(np.diff(idx.distances, axis=1) >= 0)
    assert not np.any(idx.table == idx.built_over[:, None])


@settings(max_examples=20, deadline=None)
@given(st.integers(4, 20), st.integers(0, 10 ** 6))
def test_permutation_equivariant_after_relabel(n, seed):
    rng = make_rng(seed)
    pts = rng.standard_normal((n, 3))
    perm = rng.permutation(n)
    a = build_knn(pts, range(n), 2)
    b = build_knn(pts[perm], range(n), 2)
    # row perm[j] of the original sits at row j of the permuted input
    for j in range(n):
        assert list(perm[b.neighbors_of([j])[0]]) == list(a.neighbors_of([perm[j]])[0])


def test_rebuild_idempotent_and_uncovered_ids():
    pts = make_rng(0).standard_normal((10, 2))
    a, b = build_knn(pts, [0, 2, 4, 6, 8], 2), build_knn(pts, [0, 2, 4, 6, 8], 2)
    assert np.array_equal(a.table, b.table) and np.array_equal(a.distances, b.distances)
    assert set(a.table.ravel()) <= {0, 2, 4, 6, 8}
    assert list(a.has([0, 1])) == [True, False]
    with pytest.raises(KeyError):
        a.neighbors_of([1])


def test_too_few_points():
    with pytest.raises(ConfigError):
        build_knn(np.zeros((3, 1)), [0, 1, 2], 3)


def test_csv_export(tmp_path):
    idx = build_knn(np.array([[0.0], [1.0], [3.0]]), range(3), 2)
    idx.to_csv(tmp_path / "n.csv")
    lines = (tmp_path / "n.csv").read_text().splitlines()
    assert lines[0] == "instance,rank,neighbor,distance" and len(lines) == 7


def test_refresh_policy():
    assert refresh_policy(0, 50) is Space.INPUT
    assert refresh_policy(50, 50) is Space.LATENT
    pol = RefreshPolicy(50, 5)
    assert not pol.rebuild_due(57, 55, Space.LATENT)
    assert pol.rebuild_due(60, 55, Space.LATENT)
    assert pol.rebuild_due(50, 0, Space.INPUT)
    assert not pol.rebuild_due(10, 0, Space.INPUT)
