import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmad import synth
from dmad.core import DatasetManifest, Record, ScoreSet
from dmad.errors import ValidationError
from dmad.evaluation import (
    apcer, bpcer, bpcer_at_apcer, d_eer, det_curve, pair_protocol, read_summary, summarize, summary_csv,
)

from oracles import bpcer_at_apcer_oracle, eer_oracle, rates_at


def _manifest(n_bona, n_morph, gates):
    """``gates`` maps (split, camera) to a gate-image count; passports all in train."""
    recs = [Record(f"bp{i}", f"s{i}", "bonafide_passport", "train", f"bp{i}.png", f"bp{i}.txt")
            for i in range(n_bona)]
    recs += [Record(f"mp{i}", f"m{i}", "morph_passport", "train", f"mp{i}.png", f"mp{i}.txt",
                    morph_parents=("s0", "s1")) for i in range(n_morph)]
    for (split, cam), k in gates.items():
        recs += [Record(f"g{cam}{split}{i}", f"s{i % max(n_bona, 1)}", "gate", split, f"g{cam}{split}{i}.png",
                        f"g{cam}{split}{i}.txt", cam) for i in range(k)]
    return DatasetManifest(recs)


def test_pair_protocol_paper_counts_cam1_train():
    pairs = pair_protocol(_manifest(19, 52, {("train", 1): 58}), "train", 1)
    labels = [p[2] for p in pairs]
    assert labels.count("genuine") == 1102 and labels.count("attack") == 3016
    assert pairs[0][0].record_id == "bp0" and pairs[1][0].record_id == "bp0"


def test_pair_protocol_paper_counts_cam3_test():
    m = synth.dataset_plan()
    recs = DatasetManifest([p.record() for p in m])
    pairs = pair_protocol(recs, "test", 3)
    assert sum(p[2] == "genuine" for p in pairs) == 980


def test_pair_protocol_empty_side():
    with pytest.raises(ValidationError):
        pair_protocol(_manifest(2, 1, {("train", 1): 3}), "train", 2)
    with pytest.raises(ValidationError):
        pair_protocol(_manifest(2, 1, {("train", 1): 3}), "test", 1)


@given(st.integers(1, 6), st.integers(0, 6), st.integers(1, 7))
def test_pair_protocol_cross_product(nb, nm, ng):
    pairs = pair_protocol(_manifest(nb, nm, {("train", 2): ng}), "train", 2)
    assert len(pairs) == (nb + nm) * ng
    assert sum(p[2] == "genuine" for p in pairs) == nb * ng
    assert all(p[1].camera_id == 2 for p in pairs)


def test_apcer_bpcer_examples():
    assert apcer([0.9, 0.8], 0.5) == 0
    assert bpcer([0.1, 0.2], 0.5) == 0
    assert apcer([0.4, 0.6], 0.5) == 0.5
    assert bpcer([0.5], 0.5) == 1.0
    with pytest.raises(ValidationError):
        apcer([], 0.5)


def test_det_separated_and_endpoints():
    c = det_curve(([0.1, 0.2], [0.8, 0.9]))
    assert ((c.apcer == 0) & (c.bpcer == 0)).any()
    assert (c.apcer[0], c.bpcer[0]) == (0, 1)
    assert (c.apcer[-1], c.bpcer[-1]) == (1, 0)
    assert d_eer(([0.1, 0.2], [0.8, 0.9]))[0] == 0
    assert bpcer_at_apcer(([0.1, 0.2], [0.8, 0.9]), 0.05) == 0
    assert bpcer_at_apcer(([0.1, 0.2], [0.8, 0.9]), 0.10) == 0


@given(st.lists(st.integers(0, 20), min_size=1, max_size=30))
def test_identical_multisets(values):
    s = np.array(values, float)
    c = det_curve((s, s))
    np.testing.assert_array_equal(c.apcer + c.bpcer, 1.0)
    assert d_eer((s, s))[0] == 0.5


@given(st.lists(st.integers(0, 30), min_size=1, max_size=40), st.lists(st.integers(0, 30), min_size=1, max_size=40))
def test_det_matches_counting_and_is_monotone(g, a):
    g, a = np.array(g, float), np.array(a, float)
    c = det_curve((g, a))
    assert (np.diff(c.apcer) >= 0).all() and (np.diff(c.bpcer) <= 0).all()
    for t, ap, bp in zip(c.threshold, c.apcer, c.bpcer):
        assert (ap, bp) == rates_at(g, a, t)
    eer, tau = d_eer((g, a))
    oe, ot = eer_oracle(g, a)
    assert eer == pytest.approx(oe, abs=1e-12) and tau == ot
    if not set(g.tolist()) & set(a.tolist()):
        # with a score shared by both classes no threshold can split the tie
        ap, bp = rates_at(g, a, tau)
        assert abs(ap - bp) <= max(1 / len(a), 1 / len(g)) + 1e-12
    for target in (0.05, 0.1, 0.5):
        assert bpcer_at_apcer((g, a), target) == bpcer_at_apcer_oracle(g, a, target)
    assert bpcer_at_apcer((g, a), 0.10) <= bpcer_at_apcer((g, a), 0.05)


def test_metrics_single_class_errors():
    s = ScoreSet(["a", "b"], ["r", "r"], "1", ["attack", "attack"], "t", [0.1, 0.2])
    for f in (det_curve, d_eer, summarize):
        with pytest.raises(ValidationError):
            f(s)
    with pytest.raises(ValidationError):
        bpcer_at_apcer(([0.1], [0.2]), 1.5)


def test_det_csv_and_summary(tmp_path):
    c = det_curve(([0.1, 0.4], [0.3, 0.9]))
    lines = c.to_csv().splitlines()
    assert lines[0] == "threshold,apcer,bpcer" and lines[1] == "-inf,0.0,1.0" and lines[-1] == "inf,1.0,0.0"
    m = summarize(([0.1, 0.4], [0.3, 0.9]))
    assert m.eer == 0.5
    (tmp_path / "s.csv").write_text(summary_csv([("proposed", "Fused", m)]))
    row = read_summary(tmp_path / "s.csv")[0]
    assert row["camera"] == "Fused" and row["eer"] == 0.5
    assert (tmp_path / "s.csv").read_text().splitlines()[1] == "proposed,Fused,0.5000,0.5000,0.5000"
