# evalmetrics/report.py
import io
import logging

from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from apps.evalmetrics.bleu import EvalReport, bleu_corpus, sentence_stats
from apps.evalmetrics.bootstrap import paired_bootstrap
from apps.evalmetrics.fine_grained import FREQUENCY_BUCKETS, LENGTH_BUCKETS, fine_grained_report
from apps.evalmetrics.serializers import EvalReportSerializer

__all__ = ("evaluate_system", "report_to_json", "report_from_json", "render_text")

logger = logging.getLogger(__name__)


def evaluate_system(hypotheses, references, training_references=None, baseline=None, n_samples=None, seed=0):
    """
    BLEU 와 세분화 분석을 한 번에 계산한다.

    baseline 가설이 주어지면 이 시스템(A) 이 baseline(B) 보다 낫다는 단측 bootstrap 도 붙인다.
    """
    report = bleu_corpus(hypotheses, references)
    if training_references is not None:
        fine = fine_grained_report(hypotheses, references, training_references)
        report.word_accuracy = fine.word_accuracy
        report.length_bleu = fine.length_bleu
    if baseline is not None:
        result = paired_bootstrap(
            sentence_stats(hypotheses, references),
            sentence_stats(baseline, references),
            n_samples=n_samples,
            seed=seed,
        )
        report.bootstrap = result.to_dict()
    return report


def report_to_json(report):
    return JSONRenderer().render(report.to_dict(), renderer_context={"indent": 2}) + b"\n"


def report_from_json(content):
    data = JSONParser().parse(io.BytesIO(content))
    serializer = EvalReportSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    validated = dict(serializer.validated_data)
    bootstrap = validated.pop("bootstrap", None)
    return EvalReport(**validated, bootstrap=dict(bootstrap) if bootstrap else None)


def _table(header, rows):
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]
    lines = ["  ".join(str(cell).rjust(width) for cell, width in zip(line, widths)) for line in [header, *rows]]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)


def render_text(report):
    """사람이 읽을 정렬된 표"""
    precisions = "/".join(f"{p:.1f}" for p in report.precisions)
    parts = [
        f"BLEU = {report.bleu:.2f} {precisions} "
        f"(BP = {report.brevity_penalty:.3f} hyp_len = {report.hyp_len} ref_len = {report.ref_len})"
    ]
    if report.word_accuracy:
        rows = [
            (name, entry["total"], entry["matched"], f"{entry['accuracy']:.4f}")
            for name, _, _ in FREQUENCY_BUCKETS
            if (entry := report.word_accuracy.get(name))
        ]
        parts.append(_table(("frequency", "tokens", "matched", "accuracy"), rows))
    if report.length_bleu:
        rows = [
            (name, entry["sentences"], f"{entry['bleu']:.2f}")
            for name, _, _ in LENGTH_BUCKETS
            if (entry := report.length_bleu.get(name))
        ]
        parts.append(_table(("length", "sentences", "bleu"), rows))
    if report.bootstrap:
        b = report.bootstrap
        parts.append(
            f"bootstrap ({b['n_samples']} samples): A = {b['score_a']:.2f}, B = {b['score_b']:.2f}, "
            f"p = {b['p_value']:.4f}, win = {b['win_rate']:.3f}, tie = {b['tie_rate']:.3f}"
        )
    return "\n\n".join(parts) + "\n"
