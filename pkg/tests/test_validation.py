import numpy as np
import pytest

from jointfuse.joint import build_joint_model
from jointfuse.validation import FoldError, assign_folds, check_partition, cross_validate


def _ids(n_urb=13, n_rur=5, n_rks=7):
    st = ["URB"] * n_urb + ["RUR"] * n_rur + ["RKS"] * n_rks
    return np.array([f"M{i:02d}" for i in range(len(st))]), np.array(st)


def test_folds_partition_monitors():
    ids, st = _ids()
    folds = assign_folds(ids, st, 6, seed=1)
    assert set(folds) == set(ids)
    sizes = np.bincount(list(folds.values()))[1:]
    assert len(sizes) == 6 and sizes.max() - sizes.min() <= 1
    check_partition(folds, ids)
    # every site type is spread over the folds as evenly as the deal allows
    for t in ("URB", "RUR", "RKS"):
        per = np.bincount([folds[m] for m in ids[st == t]], minlength=7)[1:]
        assert per.max() - per.min() <= 1


def test_folds_deterministic_per_seed():
    ids, st = _ids()
    assert assign_folds(ids, st, 6, 3) == assign_folds(ids, st, 6, 3)
    assert assign_folds(ids, st, 6, 3) != assign_folds(ids, st, 6, 4)


def test_folds_repeated_rows():
    ids, st = _ids()
    rep_ids, rep_st = np.repeat(ids, 4), np.repeat(st, 4)
    assert assign_folds(rep_ids, rep_st, 5, 0) == assign_folds(ids, st, 5, 0)


def test_fold_errors():
    ids, st = _ids(2, 1, 1)
    with pytest.raises(FoldError):
        assign_folds(ids, st, 6)
    with pytest.raises(FoldError):
        assign_folds(ids, st, 1)
    with pytest.raises(FoldError):
        assign_folds(np.array(["M1", "M1"]), np.array(["URB", "RKS"]), 1 + 1)
    folds = assign_folds(ids, st, 2)
    with pytest.raises(FoldError, match="without a fold"):
        check_partition({k: v for k, v in list(folds.items())[1:]}, ids)
    with pytest.raises(FoldError, match="unknown"):
        check_partition({**folds, "M99": 1}, ids)
    with pytest.raises(FoldError, match="positive"):
        check_partition({**folds, ids[0]: 0}, ids)


def test_cross_validation_covers_every_row(small):
    _, mesh, sim = small
    spec = build_joint_model(mesh, sim.pcm, sim.aqum, sim.monitors)
    folds = assign_folds(sim.monitors.monitor_id, sim.monitors.sitetype, 2, 0)
    seen = []
    pooled = cross_validate(spec, folds, strategy="empirical_bayes", n_eta=5, n_y=4,
                            callback=lambda f, ft: seen.append(f))
    assert seen == [1, 2]
    assert len(pooled.keys) == len(sim.monitors)
    assert pooled.draws.shape == (len(sim.monitors), 20)
    keys = set(zip(sim.monitors.monitor_id.astype(str), sim.monitors.time.astype(int)))
    assert set(pooled.keys) == keys
    for k, f in zip(pooled.keys, pooled.folds):
        assert folds[k[0]] == f
