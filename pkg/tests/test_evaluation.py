import random

import pytest

from lesiontrack.evaluation import (
    AttributeJudgment,
    EmptyInput,
    EvaluationError,
    ReportLevelJudgment,
    SpuriousLesion,
    accuracy_levels,
    auto_judge,
    inter_reader_agreement,
    read_judgments,
    summarize_judgments,
    two_proportion_z,
    wilson_ci,
    write_judgments,
)
from lesiontrack.model import LesionCategory
from lesiontrack.oracle import extract_pair
from lesiontrack.synthesis import generate_synthetic


# --- statistics oracles ----------------------------------------------------

def test_wilson_paper_anchor():
    low, high = wilson_ci(62, 100, 0.95)
    assert abs(low - 0.522) < 1e-3
    assert abs(high - 0.709) < 1e-3


def test_wilson_boundaries():
    low, high = wilson_ci(10, 10, 0.95)
    assert high == 1.0
    assert abs(low - 0.7225) < 5e-4  # closed-form evaluation
    low, high = wilson_ci(0, 10, 0.95)
    assert low == 0.0
    assert abs(high - 0.2775) < 5e-4


def test_wilson_contains_point_estimate():
    rng = random.Random(8)
    for _ in range(300):
        n = rng.randint(1, 500)
        k = rng.randint(0, n)
        low, high = wilson_ci(k, n)
        assert 0.0 <= low <= k / n <= high <= 1.0


def test_wilson_rejects_empty():
    with pytest.raises(EmptyInput):
        wilson_ci(0, 0)


def test_two_proportion_z_identical():
    z, p = two_proportion_z(50, 100, 50, 100)
    assert z == 0.0 and p == 1.0


def test_two_proportion_z_reference_value():
    z, p = two_proportion_z(60, 100, 50, 100)
    assert abs(z - 1.4213) < 1e-3
    assert abs(p - 0.1552) < 2e-3  # independently computed reference


def test_two_proportion_z_significant_direction():
    _, p = two_proportion_z(90, 100, 60, 100)
    assert p < 0.05


def test_two_proportion_z_degenerate_pooled():
    assert two_proportion_z(0, 10, 0, 20) == (0.0, 1.0)
    assert two_proportion_z(10, 10, 20, 20) == (0.0, 1.0)


# --- auto judging ----------------------------------------------------------

def _truth_and_prediction(seed=61):
    item = generate_synthetic(1, seed=seed)[0]
    truth = item.truth
    predicted = extract_pair(item.pair)
    return truth, predicted, item.pair.pair_id


def test_auto_judge_identity_all_correct():
    truth, predicted, pair_id = _truth_and_prediction()
    result = auto_judge(predicted, truth, pair_id)
    assert result.spurious == []
    assert all(j.verdict == "correct" for j in result.judgments)


def test_auto_judge_six_attributes_per_persisted_lesion():
    truth, predicted, pair_id = _truth_and_prediction()
    result = auto_judge(predicted, truth, pair_id)
    label = truth.reports[0].target_lesions[0].label
    per_lesion = [j for j in result.judgments if j.lesion_label == label]
    assert len(per_lesion) == 6  # three attributes in each of two reports


def test_auto_judge_size_off_by_one():
    truth, predicted, pair_id = _truth_and_prediction()
    lesion = predicted.reports[0].target_lesions[0]
    lesion.current_size_mm = lesion.current_size_mm + 1
    result = auto_judge(predicted, truth, pair_id)
    wrong = [j for j in result.judgments if j.verdict == "incorrect"]
    assert len(wrong) == 1
    assert wrong[0].attribute == "size" and wrong[0].report_index == 0


def test_auto_judge_missing_lesion_six_incorrect():
    truth, predicted, pair_id = _truth_and_prediction()
    missing = truth.reports[0].target_lesions[0]
    for report in predicted.reports:
        report.target_lesions = [
            l for l in report.target_lesions if l.label != missing.label]
    result = auto_judge(predicted, truth, pair_id)
    wrong = [j for j in result.judgments
             if j.verdict == "incorrect" and j.lesion_label == missing.label]
    assert len(wrong) == 6


def test_auto_judge_spurious_lesion_recorded():
    truth, predicted, pair_id = _truth_and_prediction()
    from lesiontrack.model import Lesion
    predicted.reports[1].new_lesions.append(Lesion(
        label="NL_9_verzonnen_laesie", description="Verzonnen laesie",
        current_size_mm=9, se_ima="1-1"))
    result = auto_judge(predicted, truth, pair_id)
    assert len(result.spurious) == 1
    spurious = result.spurious[0]
    assert spurious.category is LesionCategory.NEW
    assert spurious.report_index == 1
    assert all(j.verdict == "correct" for j in result.judgments)


def test_auto_judge_label_drift_marks_label_wrong():
    truth, predicted, pair_id = _truth_and_prediction()
    target = predicted.reports[1].target_lesions[0]
    target.label = "TL_9_iets_anders"
    result = auto_judge(predicted, truth, pair_id)
    wrong = [j for j in result.judgments if j.verdict == "incorrect"]
    # Naming across timepoints broke: label wrong in both reports.
    assert {(j.attribute, j.report_index) for j in wrong} == \
        {("label", 0), ("label", 1)}


# --- aggregation -----------------------------------------------------------

def _judgment(pair_id, reader, label, category, report_index, attribute, verdict):
    return AttributeJudgment(pair_id=pair_id, reader_id=reader, lesion_label=label,
                             category=category, report_index=report_index,
                             attribute=attribute, verdict=verdict)


def _pair_judgments(pair_id, reader, n_wrong=0):
    out = []
    wrong_budget = n_wrong
    for report_index in (0, 1):
        for attribute in ("label", "size", "se_ima"):
            verdict = "incorrect" if wrong_budget > 0 else "correct"
            wrong_budget -= 1 if wrong_budget > 0 else 0
            out.append(_judgment(pair_id, reader, "TL_1_lever",
                                 LesionCategory.TARGET, report_index,
                                 attribute, verdict))
    return out


def test_accuracy_levels_lesion_all_or_nothing():
    clean = accuracy_levels(_pair_judgments("p1", "r1"))
    cell = clean.cells[("TL", "lesion")]
    assert (cell.k, cell.n, cell.accuracy) == (1, 1, 1.0)
    dirty = accuracy_levels(_pair_judgments("p1", "r1", n_wrong=1))
    assert dirty.cells[("TL", "attribute")].k == 5
    assert dirty.cells[("TL", "attribute")].n == 6
    assert dirty.cells[("TL", "lesion")].k == 0


def test_accuracy_levels_all_attribute_pair_anchor():
    judgments = []
    for i in range(50):
        for reader in ("a", "b"):
            # 62 of the 100 (pair, reader) observations fully clean.
            observation = 2 * i + (0 if reader == "a" else 1)
            judgments.extend(_pair_judgments(
                f"p{i}", reader, n_wrong=0 if observation < 62 else 1))
    summary = accuracy_levels(judgments)
    cell = summary.all_attribute_pairs
    assert (cell.k, cell.n) == (62, 100)
    assert abs(cell.ci_low - 0.522) < 1e-3
    assert abs(cell.ci_high - 0.709) < 1e-3


def test_accuracy_levels_document_level_spurious_breaks_clean():
    judgments = _pair_judgments("p1", "r1")
    spurious = [SpuriousLesion(pair_id="p1", reader_id="r1",
                               category=LesionCategory.TARGET,
                               report_index=1, lesion_label="TL_9_x")]
    summary = accuracy_levels(judgments, spurious=spurious)
    cell = summary.cells[("TL", "document")]
    assert (cell.k, cell.n) == (1, 2)
    # Attribute level stays reference-anchored.
    assert summary.cells[("TL", "attribute")].accuracy == 1.0


def test_accuracy_levels_report_judgments_fold_in():
    judgments = _pair_judgments("p1", "r1")
    reports = [ReportLevelJudgment(pair_id="p2", reader_id="r1",
                                   category=LesionCategory.NON_TARGET,
                                   report_index=0, verdict="has_errors"),
               ReportLevelJudgment(pair_id="p2", reader_id="r1",
                                   category=LesionCategory.NON_TARGET,
                                   report_index=1, verdict="clean")]
    summary = accuracy_levels(judgments, report_judgments=reports)
    cell = summary.cells[("NTL", "document")]
    assert (cell.k, cell.n) == (3, 4)  # two TL reports clean + one of two NTL
    assert summary.all_attribute_pairs.n == 2


def test_accuracy_levels_empty_input():
    with pytest.raises(EmptyInput):
        accuracy_levels([])


def test_accuracy_levels_dedupe_latest_wins():
    first = _judgment("p1", "r1", "TL_1_lever", LesionCategory.TARGET,
                      0, "size", "incorrect")
    revised = _judgment("p1", "r1", "TL_1_lever", LesionCategory.TARGET,
                        0, "size", "correct")
    summary = accuracy_levels([first, revised], dedupe=True)
    cell = summary.cells[("TL", "attribute")]
    assert (cell.k, cell.n) == (1, 1)
    pooled = accuracy_levels([first, revised])
    assert pooled.cells[("TL", "attribute")].n == 2


def test_pooling_two_identical_readers_doubles_n():
    base = _pair_judgments("p1", "a", n_wrong=2) + _pair_judgments("p2", "a")
    clone = [AttributeJudgment(pair_id=j.pair_id, reader_id="b",
                               lesion_label=j.lesion_label, category=j.category,
                               report_index=j.report_index, attribute=j.attribute,
                               verdict=j.verdict) for j in base]
    single = accuracy_levels(base)
    pooled = accuracy_levels(base + clone)
    for key, cell in single.cells.items():
        assert pooled.cells[key].n == 2 * cell.n
        assert pooled.cells[key].accuracy == cell.accuracy
    assert pooled.all_attribute_pairs.n == 2 * single.all_attribute_pairs.n
    assert pooled.all_attribute_pairs.accuracy == single.all_attribute_pairs.accuracy


def test_implication_chains_on_random_fixtures():
    rng = random.Random(71)
    judgments = []
    for p in range(10):
        for lesion in range(rng.randint(1, 4)):
            for report_index in (0, 1):
                for attribute in ("label", "size", "se_ima"):
                    verdict = "correct" if rng.random() < 0.8 else "incorrect"
                    judgments.append(_judgment(
                        f"p{p}", "r", f"TL_{lesion + 1}_x",
                        LesionCategory.TARGET, report_index, attribute, verdict))
    summary = accuracy_levels(judgments)
    by_lesion = {}
    by_doc = {}
    for j in judgments:
        by_lesion.setdefault((j.pair_id, j.lesion_label), []).append(j)
        by_doc.setdefault((j.pair_id, j.report_index), []).append(j)
    # lesion-correct implies all six attributes correct
    lesion_cell = summary.cells[("TL", "lesion")]
    expect_lesion_k = sum(
        all(j.verdict == "correct" for j in group)
        for group in by_lesion.values())
    assert lesion_cell.k == expect_lesion_k
    # document-clean implies all lesions in that report correct
    doc_cell = summary.cells[("TL", "document")]
    expect_doc_k = sum(
        all(j.verdict == "correct" for j in group)
        for group in by_doc.values())
    assert doc_cell.k == expect_doc_k


# --- agreement -------------------------------------------------------------

def test_agreement_identical_readers():
    a = _pair_judgments("p1", "a") + _pair_judgments("p2", "a", n_wrong=1)
    b = [AttributeJudgment(pair_id=j.pair_id, reader_id="b",
                           lesion_label=j.lesion_label, category=j.category,
                           report_index=j.report_index, attribute=j.attribute,
                           verdict=j.verdict) for j in a]
    assert inter_reader_agreement(a, b) == 1.0


def test_agreement_one_lesion_only_one_reader():
    # Ten lesions in the union; one of them identified by reader a only.
    a = []
    b = []
    for i in range(9):
        a.extend(_pair_judgments(f"p{i}", "a"))
        b.extend(_pair_judgments(f"p{i}", "b"))
    a.append(_judgment("p0", "a", "TL_2_milt",
                       LesionCategory.TARGET, 0, "label", "correct"))
    rate = inter_reader_agreement(a, b)
    assert rate == pytest.approx(0.9)


def test_agreement_disjoint_pairs_error():
    a = _pair_judgments("p1", "a")
    b = _pair_judgments("p2", "b")
    with pytest.raises(EvaluationError):
        inter_reader_agreement(a, b)


def test_agreement_empty_error():
    with pytest.raises((EvaluationError, EmptyInput)):
        inter_reader_agreement([], [])


def test_agreement_one_disagreement_in_fifteen():
    a = []
    b = []
    for i in range(15):
        label = f"TL_{i + 1}_x"
        for reader, out in (("a", a), ("b", b)):
            for report_index in (0, 1):
                for attribute in ("label", "size", "se_ima"):
                    verdict = "correct"
                    if reader == "b" and i == 7 and attribute == "size" and report_index == 0:
                        verdict = "incorrect"
                    out.append(_judgment("p1", reader, label, LesionCategory.TARGET,
                                         report_index, attribute, verdict))
    assert inter_reader_agreement(a, b) == pytest.approx(14 / 15)


# --- file round trip -------------------------------------------------------

def test_judgment_file_round_trip(tmp_path):
    truth, predicted, pair_id = _truth_and_prediction()
    result = auto_judge(predicted, truth, pair_id)
    path = tmp_path / "judgments.jsonl"
    write_judgments(path, result.judgments, result.spurious)
    attributes, reports, spurious = read_judgments(path)
    assert attributes == result.judgments
    assert reports == []
    assert spurious == result.spurious


def test_summarize_judgments_attaches_agreement():
    a = _pair_judgments("p1", "a")
    b = [AttributeJudgment(pair_id=j.pair_id, reader_id="b",
                           lesion_label=j.lesion_label, category=j.category,
                           report_index=j.report_index, attribute=j.attribute,
                           verdict=j.verdict) for j in a]
    summary = summarize_judgments(a + b)
    assert summary.agreement_rate == 1.0
    assert summarize_judgments(a).agreement_rate is None
