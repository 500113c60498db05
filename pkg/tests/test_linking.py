from hypothesis import given, strategies as st

from lesiontrack.linking import (
    BASELINE_ONLY,
    NEW_IN_FOLLOWUP,
    PERSISTED,
    RESOLVED,
    label_consistency,
    link_pair,
    normalize_description,
)
from lesiontrack.model import Lesion, PairExtraction, ReportExtraction


def test_normalize_description_examples():
    assert normalize_description("Lever segment 4a") == "lever_segment_4a"
    assert normalize_description("Lymfeklier mediastinaal, 12 mm") == "lymfeklier_mediastinaal"
    assert normalize_description("") == ""


def test_normalize_drops_se_ima_and_integers():
    assert normalize_description("Milt laesie 12 9 2-88") == "milt_laesie"
    assert normalize_description("Botlaesie wervel l3") == "botlaesie_wervel_l3"


def test_normalize_folds_diacritics():
    assert normalize_description("Oesophagus läsie") == "oesophagus_lasie"


@given(st.text(max_size=60))
def test_normalize_idempotent(text):
    once = normalize_description(text)
    assert normalize_description(once) == once


def _report(uid, tl=(), ntl=(), nl=()):
    def mk(prefix, items):
        return [Lesion(label=f"{prefix}_{i + 1}_{normalize_description(d)}",
                       description=d, current_size_mm=s, note=n)
                for i, (d, s, n) in enumerate(items)]
    return ReportExtraction(
        study_uid=uid,
        target_lesions=mk("TL", tl),
        non_target_lesions=mk("NTL", ntl),
        new_lesions=mk("NL", nl),
    )


def test_link_pair_all_persisted():
    baseline = _report("u1", tl=[("Lever segment 4a", 20, None), ("Miltlaesie", 9, None)])
    followup = _report("u2", tl=[("Lever segment 4a", 18, None), ("Miltlaesie", 8, None)])
    linked = link_pair(baseline, followup)
    assert [l.status for l in linked] == [PERSISTED, PERSISTED]
    assert all(l.label == l.baseline.label == l.followup.label for l in linked)


def test_link_pair_new_in_followup():
    baseline = _report("u1")
    followup = _report("u2", nl=[("Bijnier links", 7, None)])
    linked = link_pair(baseline, followup)
    assert [l.status for l in linked] == [NEW_IN_FOLLOWUP]
    assert linked[0].baseline is None


def test_link_pair_resolved_via_note():
    baseline = _report("u1", tl=[("Bijnier links", 14, None)])
    followup = _report("u2", tl=[("Bijnier links", None, "resolved")])
    linked = link_pair(baseline, followup)
    assert [l.status for l in linked] == [RESOLVED]


def test_link_pair_baseline_only():
    baseline = _report("u1", ntl=[("Nierlaesie links", 10, None)])
    followup = _report("u2")
    linked = link_pair(baseline, followup)
    assert [l.status for l in linked] == [BASELINE_ONLY]


def test_link_pair_duplicate_slugs_pair_in_order():
    baseline = _report("u1", tl=[("Lever", 20, None), ("Lever", 30, None)])
    followup = _report("u2", tl=[("Lever", 18, None)])
    linked = link_pair(baseline, followup)
    assert [l.status for l in linked] == [PERSISTED, BASELINE_ONLY]
    assert linked[0].baseline.current_size_mm == 20  # first matches first


def test_link_pair_total_every_lesion_once():
    baseline = _report("u1", tl=[("Lever", 20, None)], ntl=[("Milt", 5, None)])
    followup = _report("u2", tl=[("Lever", 18, None)], nl=[("Bijnier rechts", 6, None)])
    linked = link_pair(baseline, followup)
    sides = [id(l.baseline) for l in linked if l.baseline] + \
            [id(l.followup) for l in linked if l.followup]
    assert len(sides) == len(set(sides)) == 4


def test_label_consistency_clean():
    baseline = _report("u1", tl=[("Lever", 20, None)])
    followup = _report("u2", tl=[("Lever", 18, None)])
    pair = PairExtraction(reports=[baseline, followup])
    assert label_consistency(pair) == []


def test_label_consistency_drift():
    baseline = _report("u1", tl=[("Lever", 20, None)])
    followup = _report("u2", tl=[("Lever", 18, None)])
    followup.target_lesions[0].label = "TL_2_lever"
    pair = PairExtraction(reports=[baseline, followup])
    assert [v.code for v in label_consistency(pair)] == ["label_drift"]


def test_label_consistency_collective_findings_surface():
    # Collectively described nodes at baseline vs individual nodes at
    # follow-up: reusing the collective label for a differently worded
    # node is surfaced rather than silently reconciled.
    baseline = _report("u1", ntl=[("Multipele lymfeklieren", None, None)])
    followup = _report("u2", ntl=[("Lymfeklier mediastinaal", 12, None),
                                  ("Lymfeklier hilair", 9, None)])
    followup.non_target_lesions[0].label = "NTL_1_multipele_lymfeklieren"
    pair = PairExtraction(reports=[baseline, followup])
    violations = label_consistency(pair)
    assert [v.code for v in violations] == ["label_slug_mismatch"]


def test_label_consistency_cross_category_reuse():
    baseline = _report("u1", tl=[("Lever", 20, None)])
    followup = _report("u2", tl=[("Lever", 18, None)])
    followup.new_lesions.append(Lesion(label="TL_1_lever", description="Lever"))
    pair = PairExtraction(reports=[baseline, followup])
    assert "cross_category_label" in [v.code for v in label_consistency(pair)]
