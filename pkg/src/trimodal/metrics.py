"""Evaluation: accuracy, per-class recall, normalized confusion matrix.

Decisions are argmax per utterance with ties broken toward the lowest
class index. Rows of the confusion matrix are true classes, columns are
predictions; the diagonal of the row-normalized matrix is exactly the
per-class recall. Recall is reported only for classes that occur (absent,
not zero, otherwise).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import n_utterances
from .models import Model, count_parameters


class ConfusionMatrix:
    """C x C integer counts; counts[true, predicted]."""

    def __init__(self, n_classes: int):
        if n_classes < 2:
            raise ValueError("need at least 2 classes")
        self.counts = np.zeros((n_classes, n_classes), dtype=np.int64)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def add_batch(self, true_labels, predicted) -> None:
        true_labels = np.asarray(true_labels, dtype=np.int64)
        predicted = np.asarray(predicted, dtype=np.int64)
        if true_labels.shape != predicted.shape:
            raise ValueError("label and prediction lengths differ")
        for c in (true_labels, predicted):
            if c.size and (c.min() < 0 or c.max() >= self.n_classes):
                raise ValueError("class index outside range")
        np.add.at(self.counts, (true_labels, predicted), 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def row_normalized(self) -> np.ndarray:
        """Rows summing to 1 where nonempty; empty rows stay all zero."""
        out = np.zeros_like(self.counts, dtype=np.float64)
        sums = self.counts.sum(axis=1)
        nonempty = sums > 0
        out[nonempty] = self.counts[nonempty] / sums[nonempty, None]
        return out

    def per_class_recall(self) -> dict[int, float]:
        """recall_c = counts[c, c] / row_sum(c); only for nonempty rows."""
        sums = self.counts.sum(axis=1)
        return {c: float(self.counts[c, c]) / float(sums[c])
                for c in range(self.n_classes) if sums[c] > 0}


@dataclass
class EvalReport:
    model_name: str
    parameter_count: int
    dataset: str
    n_conversations: int
    n_utterances: int
    accuracy: float
    recall: dict[int, float]
    counts: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def confusion(self) -> ConfusionMatrix:
        cm = ConfusionMatrix(self.counts.shape[0])
        cm.counts += self.counts
        return cm

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "parameter_count": self.parameter_count,
            "dataset": self.dataset,
            "n_conversations": self.n_conversations,
            "n_utterances": self.n_utterances,
            "accuracy": self.accuracy,
            "recall": {str(c): r for c, r in sorted(self.recall.items())},
            "counts": self.counts.tolist(),
            "class_names": self.class_names,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(model_name=d["model"], parameter_count=d["parameter_count"],
                   dataset=d["dataset"], n_conversations=d["n_conversations"],
                   n_utterances=d["n_utterances"], accuracy=d["accuracy"],
                   recall={int(c): r for c, r in d["recall"].items()},
                   counts=np.asarray(d["counts"], dtype=np.int64),
                   class_names=list(d.get("class_names", [])))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_class_names(n_classes: int) -> list[str]:
    return [f"class{c}" for c in range(n_classes)]


def evaluate(model: Model, conversations, dataset_name: str = "",
             class_names: list[str] | None = None) -> EvalReport:
    """Argmax decisions per utterance aggregated over the whole dataset."""
    conversations = list(conversations)
    if not conversations:
        raise ValueError("cannot evaluate on an empty dataset")
    n_classes = model.config.n_classes
    cm = ConfusionMatrix(n_classes)
    for conv in conversations:
        probs = model.forward(conv, tape=None)
        # np.argmax returns the first maximum: ties break to the lowest class
        cm.add_batch(conv.labels(), probs.data.argmax(axis=1))
    return EvalReport(
        model_name=model.kind,
        parameter_count=count_parameters(model),
        dataset=dataset_name or f"{len(conversations)} conversations",
        n_conversations=len(conversations),
        n_utterances=n_utterances(conversations),
        accuracy=cm.accuracy(),
        recall=cm.per_class_recall(),
        counts=cm.counts.copy(),
        class_names=class_names or default_class_names(n_classes),
    )


def render_confusion(report: EvalReport) -> str:
    """Plain-text grid of the row-normalized confusion matrix."""
    norm = report.confusion().row_normalized()
    names = report.class_names or default_class_names(norm.shape[0])
    width = max(8, max(len(n) for n in names) + 2)
    lines = [f"{report.model_name}: row-normalized confusion "
             f"(diagonal = per-class recall)"]
    header = " " * width + "".join(f"{n:>{width}}" for n in names)
    lines.append(header)
    sums = report.counts.sum(axis=1)
    for c, name in enumerate(names):
        if sums[c] > 0:
            cells = "".join(f"{norm[c, j]:>{width}.2f}" for j in range(len(names)))
        else:
            cells = "".join(f"{'-':>{width}}" for _ in names)
        lines.append(f"{name:>{width}}" + cells)
    lines.append(f"accuracy: {report.accuracy:.4f} over {report.n_utterances} utterances")
    return "\n".join(lines) + "\n"


def emit_confusion_plot(report: EvalReport, base_path) -> tuple[str, str]:
    """Write `<base>.txt` (grid) and `<base>.json` (exact values)."""
    base = str(base_path)
    txt_path, json_path = base + ".txt", base + ".json"
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(render_confusion(report))
    payload = {
        "model": report.model_name,
        "class_names": report.class_names,
        "counts": report.counts.tolist(),
        "row_normalized": report.confusion().row_normalized().tolist(),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return txt_path, json_path
