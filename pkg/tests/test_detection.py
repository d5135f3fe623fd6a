import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import auc_pairs
from rcpmod.detection import (ScoreReport, auc, consistency_score, consistency_scores, per_type_auc,
                              reconstruction_score, reconstruction_scores, total_score)
from rcpmod.errors import ContractError
from rcpmod.numeric import make_rng


def test_reconstruction_score_examples():
    x = [np.ones((2, 3)), np.ones((2, 2))]
    assert reconstruction_score(0, x, x, np.ones((2, 2), bool)) == 0.0
    pres = np.array([[True, False], [True, True]])
    xh = [np.ones((2, 3)), np.ones((2, 2))]
    xh[0][0] = [1.0, 1.0, 3.0]  # residual norm 2 in the only present view
    xh[1][0] = [50.0, 50.0]  # absent view ignored
    assert reconstruction_score(0, x, xh, pres) == 2.0
    assert np.allclose(reconstruction_scores(x, xh, pres), [2.0, 0.0])


@given(st.integers(0, 10 ** 6))
def test_reconstruction_scores_nonnegative(seed):
    rng = make_rng(seed)
    x = [rng.standard_normal((5, 3))]
    assert np.all(reconstruction_scores(x, [rng.standard_normal((5, 3))], np.ones((5, 1), bool)) >= 0)


def test_consistency_score_examples():
    z = np.array([[0.5, 2.0]])
    assert consistency_score(0, [z, z.copy()], 0.5) == pytest.approx(math.log(2.0), rel=1e-12)
    rng = make_rng(1)
    z1 = rng.standard_normal((4, 3))
    same = consistency_score(0, [z1, z1.copy()], 0.5)
    orth = z1.copy()
    # second view of instance 0 orthogonal to its first view
    u = z1[0] / np.linalg.norm(z1[0])
    r = rng.standard_normal(3)
    orth[0] = r - (r @ u) * u
    assert same < consistency_score(0, [z1, orth], 0.5)
    assert np.all(np.isfinite(consistency_scores([rng.standard_normal((20, 3)) for _ in range(2)], 0.5)))


def test_consistency_rejects_nonfinite():
    with pytest.raises(ContractError):
        consistency_scores([np.full((2, 2), np.nan), np.ones((2, 2))], 0.5)


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.1, 0.9], [1, 0]) == 0.0
    assert auc([0.5, 0.5], [1, 0]) == 0.5
    with pytest.raises(ContractError):
        auc([0.1, 0.2], [0, 0])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 200), st.integers(0, 10 ** 6), st.booleans())
def test_auc_matches_pair_count(n, seed, coarse):
    rng = make_rng(seed)
    labels = rng.integers(0, 2, n)
    labels[:2] = [0, 1]
    s = rng.integers(0, 5, n).astype(float) if coarse else rng.standard_normal(n)
    assert auc(s, labels) == auc_pairs(s, labels)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_auc_invariant_to_increasing_transform(seed):
    rng = make_rng(seed)
    s = rng.standard_normal(50)
    lab = rng.integers(0, 2, 50)
    lab[:2] = [0, 1]
    assert auc(s, lab) == auc(np.exp(3 * s) + 1.0, lab)


def test_constant_shift_of_s_c_keeps_auc():
    rng = make_rng(2)
    s_r, s_c = rng.random(40), rng.random(40)
    types = rng.integers(0, 4, 40)
    a = total_score(s_r, s_c, types)
    b = total_score(s_r, s_c + 7.5, types)
    assert a.overall_auc == b.overall_auc and a.type_auc == b.type_auc


def test_total_score_sum_and_rows():
    rep = total_score([1.0], [2.0])
    assert rep.s[0] == 3.0 and len(rep) == 1 and rep.overall_auc is None


def test_per_type_auc_against_inliers_only():
    s = np.array([0.0, 0.1, 5.0, 0.05, 3.0])
    types = np.array([0, 0, 1, 2, 3])
    got = per_type_auc(s, types)
    assert got == {"attribute": 1.0, "class": 0.5, "class-attribute": 1.0}


def test_score_files(tmp_path):
    rep = total_score([0.1, 0.2, 0.3], [1.0, 1.0, 2.0], np.array([0, 2, 1]))
    rep.write_scores(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "instance_id,s_r,s_c,s,label,type"
    assert lines[2] == "1,0.2,1.0,1.2,1,class"
    rep.write_histogram(tmp_path / "h.csv", bins=4)
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "bin_lo,bin_hi,inlier_count,outlier_count" and len(rows) == 5
    assert sum(int(r.split(",")[2]) + int(r.split(",")[3]) for r in rows[1:]) == 3
