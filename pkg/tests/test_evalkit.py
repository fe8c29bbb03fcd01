import json
import re

import numpy as np
import pytest

from attacks.types import PatchReport, PatchResult, SweepRow, SweepTable
from data.datasets import Dataset
from evalkit.metrics import (
    ConfidenceBreakdown,
    EvalReport,
    compare_models,
    confidence_breakdown,
    evaluate,
    topk_error,
)
from evalkit.reports import (
    BAR_SPAN,
    emit_report,
    load_report,
    render_csv,
    render_json,
    render_svg,
)
from models.models import FLATTEN, ArchitectureSpec, Model, dense
from models.victim import forward_raw
from utils.errors import ConfigError, EmptyDatasetError, LabelError, ReportError

NAMES = ("north", "east", "south", "west")


def one_hot_model():
    """Predicts the index of the brightest of four pixels."""
    spec = ArchitectureSpec((FLATTEN, dense(4)), 4, (1, 2, 2))
    params = {"dense1.weights": np.eye(4, dtype=np.float32) * 10, "dense1.bias": np.zeros(4, np.float32)}
    return Model(spec, params, NAMES)


def one_hot_dataset(labels):
    images = np.zeros((len(labels), 1, 2, 2), dtype=np.float32)
    for i, label in enumerate(labels):
        images[i, 0].flat[label] = 1.0
    return Dataset(images, labels, NAMES, source="compass")


def sweep_table():
    return SweepTable((SweepRow(0.0, 10.0, 2.5), SweepRow(0.05, 55.123, 20.0)), "victim", "digits")


def test_perfect_classifier_has_zero_error():
    report = evaluate(one_hot_model(), one_hot_dataset([0, 1, 2, 3, 2, 1]), model_id="compass")
    assert report.top1_error == 0.0
    assert report.top5_error == 0.0
    assert report.num_images == 6
    assert report.dataset_id == "compass"


def test_wrong_labels_count_against_top1():
    dataset = one_hot_dataset([0, 1, 2, 3])
    shifted = Dataset(dataset.images, [1, 1, 2, 3], NAMES)
    assert topk_error(one_hot_model(), shifted, 1) == 25.0
    assert topk_error(one_hot_model(), shifted, 4) == 0.0


def test_topk_error_is_monotone_and_vanishes_at_all_classes(trained_tiny, digits):
    errors = [topk_error(trained_tiny, digits, k) for k in range(1, 11)]
    assert all(b <= a for a, b in zip(errors, errors[1:]))
    assert errors[-1] == 0.0
    with pytest.raises(ConfigError):
        topk_error(trained_tiny, digits, 11)


def test_topk_error_matches_brute_force(trained_tiny, digits):
    logits = forward_raw(trained_tiny, digits.images)
    for k in (1, 3, 5):
        misses = 0
        for row, label in zip(logits, digits.labels):
            ranked = sorted(range(10), key=lambda c: (-float(row[c]), c))
            misses += label not in ranked[:k]
        assert topk_error(trained_tiny, digits, k) == pytest.approx(100.0 * misses / len(digits))


def test_evaluate_is_thread_count_independent(trained_tiny, digits):
    assert evaluate(trained_tiny, digits, threads=1) == evaluate(trained_tiny, digits, threads=3)


def test_evaluate_rejects_empty_dataset(trained_tiny, digits):
    with pytest.raises(EmptyDatasetError):
        evaluate(trained_tiny, digits.subset(np.arange(0)))


def test_eval_report_invariants():
    with pytest.raises(ReportError):
        EvalReport("d", "m", 10.0, 20.0, 5)
    with pytest.raises(ReportError):
        EvalReport("d", "m", 101.0, 20.0, 5)


def test_compare_models_keeps_order(trained_tiny, tiny_model, digits):
    reports = compare_models([trained_tiny, tiny_model], digits, model_ids=["trained", "untrained"])
    assert [r.model_id for r in reports] == ["trained", "untrained"]
    assert reports[0].top1_error < reports[1].top1_error
    with pytest.raises(ReportError):
        compare_models([trained_tiny], digits, model_ids=["a", "b"])


def test_confidence_breakdown_sums_to_one_and_ranks(trained_tiny, digits):
    image = digits.images[0]
    full = confidence_breakdown(trained_tiny, image, int(digits.labels[0]), k=10)
    assert sum(conf for _, conf in full.entries) == pytest.approx(1.0, abs=1e-5)
    top = confidence_breakdown(trained_tiny, image, int(digits.labels[0]), k=1)
    assert top.class_indices == (int(forward_raw(trained_tiny, image[None]).argmax()),)
    assert top.top_class == trained_tiny.class_names[top.class_indices[0]]
    with pytest.raises(LabelError):
        confidence_breakdown(trained_tiny, image, 10)


def test_confidence_breakdown_invariants():
    with pytest.raises(ReportError):
        ConfidenceBreakdown("img", 0, (("a", 0.2), ("b", 0.7)))
    with pytest.raises(ReportError):
        ConfidenceBreakdown("img", 0, (("a", 1.2),))
    assert ConfidenceBreakdown("img", 1, (("b", 0.6), ("a", 0.4)), (1, 0)).true_ranked_first


def test_sweep_csv():
    assert render_csv(sweep_table()) == (
        "epsilon,top1_error,top5_error\n"
        "0,10.00,2.50\n"
        "0.05,55.12,20.00\n"
    )


def test_patch_csv_long_and_pivot():
    report = PatchReport((PatchResult("toaster", 3, 10.0, 20.0), PatchResult("toaster", 5, 30.0, 40.0),
                          PatchResult("control", 3, 50.0, 60.0)))
    assert render_csv(report).splitlines() == [
        "patch,size,top1_success,top5_success",
        "toaster,3,10.00,20.00",
        "toaster,5,30.00,40.00",
        "control,3,50.00,60.00",
    ]
    assert render_csv(report, pivot=True) == "patch,size_3,size_5\ntoaster,10.00,30.00\ncontrol,50.00,\n"


def test_eval_and_confidence_csv():
    assert render_csv(EvalReport("digits", "m", 12.5, 3.0, 40)) == (
        "model,dataset,top1_error,top5_error,num_images\nm,digits,12.50,3.00,40\n")
    breakdown = ConfidenceBreakdown("img0", 1, (("one", 0.9), ("zero", 0.1)), (1, 0))
    assert render_csv(breakdown) == (
        "image,true_class,rank,class_name,confidence\nimg0,1,1,one,0.9000\nimg0,1,2,zero,0.1000\n")


def test_json_report_reemits_byte_identically(tmp_path):
    first = emit_report(sweep_table(), "json", tmp_path / "sweep.json")
    payload = json.loads(first.read_text())
    assert payload["kind"] == "sweep"
    assert payload["rows"][1]["top1_error"] == 55.123
    second = emit_report(load_report(first), "json", tmp_path / "again.json")
    assert first.read_bytes() == second.read_bytes()
    assert render_json(load_report(first)) == first.read_text()


def test_other_reports_survive_json(tmp_path):
    reports = [
        PatchReport((PatchResult("control", 3, 1.0, 2.0),), "m", "d"),
        [EvalReport("d", "m", 5.0, 1.0, 10)],
        [ConfidenceBreakdown("img", 0, (("a", 0.75), ("b", 0.25)), (0, 1))],
    ]
    for index, report in enumerate(reports):
        path = emit_report(report, "json", tmp_path / f"r{index}.json")
        assert render_json(load_report(path)) == path.read_text()


def test_svg_bar_widths_are_proportional():
    table = SweepTable((SweepRow(0.1, 40.0, 20.0),))
    widths = [float(w) for w in re.findall(r'class="bar"[^>]*width="([0-9.]+)"', render_svg(table))]
    assert widths == [120.0, 60.0]
    assert BAR_SPAN == 300
    assert widths[0] / widths[1] == pytest.approx(2.0)


def test_svg_escapes_labels():
    report = PatchReport((PatchResult("<script>", 3, 10.0, 20.0),))
    svg = render_svg(report)
    assert "<script>" not in svg
    assert "&lt;script&gt;" in svg


def test_emit_report_rejects_unknown_format(tmp_path):
    with pytest.raises(ReportError):
        emit_report(sweep_table(), "xml", tmp_path / "sweep.xml")
    assert not (tmp_path / "sweep.xml").exists()
    with pytest.raises(ReportError):
        emit_report(object(), "csv", tmp_path / "x.csv")


def test_load_report_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ReportError):
        load_report(broken)
    unknown = tmp_path / "unknown.json"
    unknown.write_text('{"kind": "histogram"}')
    with pytest.raises(ReportError):
        load_report(unknown)
    with pytest.raises(ReportError):
        load_report(tmp_path / "missing.json")
