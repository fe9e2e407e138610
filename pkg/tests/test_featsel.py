import numpy as np
import pytest

from urbanfusion.errors import PredictorFailure, TooFewFeatures
from urbanfusion.featsel import backward_eliminate, eliminate, split_60_40, write_hierarchy
from urbanfusion.predictors import PredictorSpec

NAMES = [f"f{i}" for i in range(5)]


def data(seed=0, n=200):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 5))
    y = np.where(X[:, 2] > 0, "A", "N")
    return X, y


def test_split_is_disjoint_and_sixty_forty():
    tr, te = split_60_40(100, 3)
    assert len(tr) == 60 and len(te) == 40
    assert not set(tr) & set(te)
    assert np.array_equal(split_60_40(100, 3)[0], tr)


def test_ladder_is_a_strict_chain_ending_in_the_informative_feature():
    X, y = data()
    lad = eliminate(PredictorSpec("reptree"), X, y, NAMES)
    assert [s.size for s in lad] == [5, 4, 3, 2, 1]
    for a, b in zip(lad, lad[1:]):
        assert set(b.subset) < set(a.subset)
        assert len(b.tried) == a.size
    assert lad[-1].subset == ("f2",)


def test_resplit_per_level_changes_splits_but_keeps_structure():
    X, y = data(1)
    lad = eliminate(PredictorSpec("reptree"), X, y, NAMES, resplit_per_level=True)
    assert lad[-1].subset == ("f2",)


def test_hierarchy_agreement_and_exclusive(tmp_path):
    X, y = data(2)
    h = backward_eliminate([PredictorSpec("reptree"), PredictorSpec("svm")], X, y, NAMES)
    assert set(h.ladders) == {"reptree", "svm"}
    assert h.agreement[1] == [("f2",)]
    wide = backward_eliminate([PredictorSpec("reptree"), PredictorSpec("svm")], X, y, NAMES, top_k=3)
    for size in h.agreement:
        assert set(h.agreement[size]) <= set(wide.agreement[size])
    write_hierarchy(h, tmp_path / "bfe.csv")
    rows = (tmp_path / "bfe.csv").read_text().splitlines()
    assert rows[0] == "predictor,level,size,subset,accuracy,exclusive"
    assert any(r.startswith("agreement,,1,f2") for r in rows)


def test_errors():
    X, y = data()
    with pytest.raises(TooFewFeatures):
        eliminate(PredictorSpec("reptree"), X[:, :1], y, NAMES[:1])
    with pytest.raises(PredictorFailure) as info:
        eliminate(PredictorSpec("reptree"), X, np.array(["A"] * len(y)), NAMES)
    assert info.value.predictor == "reptree" and len(info.value.subset) == 5
