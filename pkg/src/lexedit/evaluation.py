"""Precision/recall/F1 for the three tasks, plus an independent counting oracle.

CWI scores predicted complex positions against gold positions; SG scores the
candidate set for the gold complex word against gold substitutions; LS counts
a predicted (position, top-1 word) pair correct only when both the position
and the substitution match.  All reports macro-average per-sentence scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class MetricReport:
    precision: float
    recall: float
    f1: float
    per_sentence: list[tuple[float, float, float]] | None = None

    def __post_init__(self):
        for value in (self.precision, self.recall, self.f1):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"metric value {value} outside [0, 1]")

    def rounded(self, digits: int = 3) -> tuple[float, float, float]:
        return (round(self.precision, digits), round(self.recall, digits), round(self.f1, digits))


def _harmonic(p: float, r: float) -> float:
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _macro(rows: list[tuple[float, float, float]], keep_rows: bool) -> MetricReport:
    if not rows:
        raise ValueError("cannot average zero sentences")
    n = len(rows)
    return MetricReport(
        precision=sum(r[0] for r in rows) / n,
        recall=sum(r[1] for r in rows) / n,
        f1=sum(r[2] for r in rows) / n,
        per_sentence=rows if keep_rows else None,
    )


def cwi_metrics(preds: list[set[int]], gold: list[set[int]], keep_rows: bool = False) -> MetricReport:
    """Set overlap of predicted vs gold complex positions, macro-averaged."""
    if len(preds) != len(gold):
        raise ValueError(f"got {len(preds)} predictions for {len(gold)} gold sets")
    rows = []
    for p_set, g_set in zip(preds, gold):
        hits = len(set(p_set) & set(g_set))
        p = hits / len(p_set) if p_set else 0.0
        r = hits / len(g_set) if g_set else 0.0
        rows.append((p, r, _harmonic(p, r)))
    return _macro(rows, keep_rows)


def sg_metrics(preds: list[list[str]], gold: list[set[str]], keep_rows: bool = False) -> MetricReport:
    """Candidate-set overlap with gold substitutions, macro-averaged.

    Candidates are the ranked, filtered list (at most top 10) for the gold
    complex word; an empty list scores zero for that instance.
    """
    if len(preds) != len(gold):
        raise ValueError(f"got {len(preds)} predictions for {len(gold)} gold sets")
    rows = []
    for cand_list, g_set in zip(preds, gold):
        cands = set(cand_list)
        if len(cands) != len(cand_list):
            raise ValueError("candidate list contains duplicates")
        hits = len(cands & set(g_set))
        p = hits / len(cands) if cands else 0.0
        r = hits / len(g_set) if g_set else 0.0
        rows.append((p, r, _harmonic(p, r)))
    return _macro(rows, keep_rows)


def ls_metrics(
    preds: list[set[tuple[int, str]]],
    gold: list[dict[int, set[str]]],
    keep_rows: bool = False,
) -> MetricReport:
    """Joint identification+substitution accuracy, macro-averaged.

    A predicted (position, word) pair is correct iff the position is a gold
    complex position and the word is in that position's substitution set;
    recall is against the number of gold positions.
    """
    if len(preds) != len(gold):
        raise ValueError(f"got {len(preds)} predictions for {len(gold)} gold maps")
    rows = []
    for pairs, gold_map in zip(preds, gold):
        correct = sum(1 for pos, word in pairs if pos in gold_map and word in gold_map[pos])
        p = correct / len(pairs) if pairs else 0.0
        r = correct / len(gold_map) if gold_map else 0.0
        rows.append((p, r, _harmonic(p, r)))
    return _macro(rows, keep_rows)


def brute_force_oracle(preds, gold, task: str) -> MetricReport:
    """Re-derive any of the three reports by explicit element-by-element counting.

    Deliberately shares no helpers with the metric implementations; test-only.
    """
    if task not in ("cwi", "sg", "ls"):
        raise ValueError(f"unknown task {task!r}")
    if len(preds) != len(gold):
        raise ValueError("misaligned inputs")
    precisions = []
    recalls = []
    f1s = []
    for pred, gold_item in zip(preds, gold):
        if task == "cwi":
            pred_items = list(set(pred))
            gold_items = list(set(gold_item))
            overlap = 0
            for item in pred_items:
                found = False
                for g in gold_items:
                    if item == g:
                        found = True
                overlap += 1 if found else 0
        elif task == "sg":
            pred_items = list(pred)
            gold_items = list(set(gold_item))
            overlap = 0
            for item in pred_items:
                found = False
                for g in gold_items:
                    if item == g:
                        found = True
                overlap += 1 if found else 0
        else:
            pred_items = list(set(pred))
            gold_items = list(gold_item.keys())
            overlap = 0
            for pos, word in pred_items:
                ok = False
                for gpos in gold_items:
                    if gpos == pos:
                        for gword in gold_item[gpos]:
                            if gword == word:
                                ok = True
                overlap += 1 if ok else 0
        if len(pred_items) > 0:
            precision = overlap / len(pred_items)
        else:
            precision = 0.0
        if len(gold_items) > 0:
            recall = overlap / len(gold_items)
        else:
            recall = 0.0
        if precision + recall > 0:
            f1 = (2 * precision * recall) / (precision + recall)
        else:
            f1 = 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    count = len(precisions)
    return MetricReport(
        precision=sum(precisions) / count,
        recall=sum(recalls) / count,
        f1=sum(f1s) / count,
    )


def report(results: dict[str, dict[str, dict[str, MetricReport]]]) -> tuple[str, dict]:
    """Comparison table over systems x datasets x tasks.

    Column order is Precision, Recall, F1 per dataset; the best value in each
    column is starred.  Returns (formatted text, JSON-ready dict).
    """
    if not results:
        raise ValueError("need at least one evaluated system")
    datasets: list[str] = []
    tasks: list[str] = []
    for by_dataset in results.values():
        for dataset, by_task in by_dataset.items():
            if dataset not in datasets:
                datasets.append(dataset)
            for task in by_task:
                if task not in tasks:
                    tasks.append(task)

    payload: dict = {}
    for system, by_dataset in results.items():
        payload[system] = {}
        for dataset, by_task in by_dataset.items():
            payload[system][dataset] = {
                task: {
                    "precision": rep.precision,
                    "recall": rep.recall,
                    "f1": rep.f1,
                }
                for task, rep in by_task.items()
            }

    lines = []
    for task in tasks:
        lines.append(f"== {task} ==")
        header = ["system".ljust(24)]
        for dataset in datasets:
            header.append(f"{dataset}:P".rjust(12))
            header.append(f"{dataset}:R".rjust(12))
            header.append(f"{dataset}:F1".rjust(12))
        lines.append(" ".join(header))
        best: dict[tuple[str, int], float] = {}
        for system in results:
            for dataset in datasets:
                rep = results[system].get(dataset, {}).get(task)
                if rep is None:
                    continue
                for j, value in enumerate(rep.rounded()):
                    key = (dataset, j)
                    if value > best.get(key, -1.0):
                        best[key] = value
        for system in results:
            row = [system.ljust(24)]
            for dataset in datasets:
                rep = results[system].get(dataset, {}).get(task)
                if rep is None:
                    row.extend(["-".rjust(12)] * 3)
                    continue
                for j, value in enumerate(rep.rounded()):
                    star = "*" if value == best.get((dataset, j)) else " "
                    row.append(f"{value:.3f}{star}".rjust(12))
            lines.append(" ".join(row))
        lines.append("")
    return "\n".join(lines), payload


def write_report(results, path) -> str:
    text, payload = report(results)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    return text
