"""Upward propagation through the diagnostic hierarchy and the per-node AUC
decomposition report.

Prediction scores from the finest granularity are aggregated onto sub- and
superclass nodes (sum clipped at one, max, or mean of the children); parent
labels are derived as the OR of child labels so both sides of the AUC follow
the same map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .metrics import class_auc, UndefinedMetricError
from .records import LabelMatrix, Ontology, PredictionMatrix, align

MODES = ("sum_clip", "max", "mean")


def _parent_map(class_codes, ontology: Ontology, target_level: str) -> dict[str, str]:
    if target_level not in ("sub", "super"):
        raise ValueError(f"target_level must be 'sub' or 'super', got {target_level!r}")
    mapping = ontology.subclass if target_level == "sub" else ontology.superclass
    parents: dict[str, str] = {}
    for code in class_codes:
        if code not in mapping:
            raise ValueError(f"class {code!r} has no {target_level}-level parent")
        parents[code] = mapping[code]
    return parents


def _aggregate(child_scores: np.ndarray, mode: str) -> np.ndarray:
    if mode == "sum_clip":
        return np.minimum(1.0, child_scores.sum(axis=1))
    if mode == "max":
        return child_scores.max(axis=1)
    if mode == "mean":
        return child_scores.mean(axis=1)
    raise ValueError(f"unknown aggregation mode {mode!r}; expected one of {MODES}")


def propagate_up(
    preds: PredictionMatrix,
    ontology: Ontology,
    target_level: str = "super",
    mode: str = "sum_clip",
) -> PredictionMatrix:
    """Aggregate fine-grained scores onto their parent nodes."""
    parents = _parent_map(preds.class_codes, ontology, target_level)
    parent_codes = tuple(sorted(set(parents.values())))
    out = np.empty((preds.n_records, len(parent_codes)))
    for j, parent in enumerate(parent_codes):
        children = [i for i, c in enumerate(preds.class_codes) if parents[c] == parent]
        out[:, j] = _aggregate(preds.scores[:, children], mode)
    return PredictionMatrix(
        record_ids=preds.record_ids, class_codes=parent_codes, scores=out
    )


def derive_parent_labels(
    labels: LabelMatrix, ontology: Ontology, target_level: str
) -> LabelMatrix:
    """Parent labels as the OR over child labels under the same map."""
    parents = _parent_map(labels.class_codes, ontology, target_level)
    parent_codes = tuple(sorted(set(parents.values())))
    out = np.zeros((labels.n_records, len(parent_codes)))
    for j, parent in enumerate(parent_codes):
        children = [i for i, c in enumerate(labels.class_codes) if parents[c] == parent]
        out[:, j] = labels.values[:, children].max(axis=1)
    return LabelMatrix(record_ids=labels.record_ids, class_codes=parent_codes, values=out)


@dataclass(frozen=True)
class HierarchyNode:
    code: str
    level: str  # "super" | "sub" | "statement"
    parent: Optional[str]
    auc: Optional[float]
    positives: int


@dataclass(frozen=True)
class HierarchyReport:
    mode: str
    nodes: tuple[HierarchyNode, ...]

    def by_code(self) -> dict[str, HierarchyNode]:
        return {n.code: n for n in self.nodes}


def _node_auc(scores: np.ndarray, labels: np.ndarray) -> Optional[float]:
    try:
        return class_auc(scores, labels)
    except UndefinedMetricError:
        return None


def decompose_auc(
    preds: PredictionMatrix,
    labels: LabelMatrix,
    ontology: Ontology,
    mode: str = "sum_clip",
) -> HierarchyReport:
    """Per-node AUC of propagated scores against derived labels, with the
    test-set positive count; zero-positive nodes render as n/a, not errors."""
    preds = align(preds, labels)
    sub_preds = propagate_up(preds, ontology, "sub", mode)
    sub_labels = derive_parent_labels(labels, ontology, "sub")
    super_preds = propagate_up(preds, ontology, "super", mode)
    super_labels = derive_parent_labels(labels, ontology, "super")
    sub_parent = {
        sub: ontology.superclass[code] for code, sub in ontology.subclass.items()
    }

    nodes: list[HierarchyNode] = []
    for j, code in enumerate(super_labels.class_codes):
        nodes.append(
            HierarchyNode(
                code=code,
                level="super",
                parent=None,
                auc=_node_auc(super_preds.scores[:, j], super_labels.values[:, j]),
                positives=int(super_labels.values[:, j].sum()),
            )
        )
    for j, code in enumerate(sub_labels.class_codes):
        nodes.append(
            HierarchyNode(
                code=code,
                level="sub",
                parent=sub_parent[code],
                auc=_node_auc(sub_preds.scores[:, j], sub_labels.values[:, j]),
                positives=int(sub_labels.values[:, j].sum()),
            )
        )
    for j, code in enumerate(labels.class_codes):
        nodes.append(
            HierarchyNode(
                code=code,
                level="statement",
                parent=ontology.subclass[code],
                auc=_node_auc(preds.scores[:, j], labels.values[:, j]),
                positives=int(labels.values[:, j].sum()),
            )
        )
    return HierarchyReport(mode=mode, nodes=tuple(nodes))


def _format_node(node: HierarchyNode, depth: int) -> str:
    auc = "n/a" if node.auc is None else f"{node.auc:.2f}"
    return f"{'  ' * depth}{node.code} [{auc}] ({node.positives})"


def render_tree(report: HierarchyReport) -> str:
    """Depth-indented text rendering, one node per line."""
    lines: list[str] = []
    supers = [n for n in report.nodes if n.level == "super"]
    subs = [n for n in report.nodes if n.level == "sub"]
    stmts = [n for n in report.nodes if n.level == "statement"]
    for sup in sorted(supers, key=lambda n: n.code):
        lines.append(_format_node(sup, 0))
        for sub in sorted((n for n in subs if n.parent == sup.code), key=lambda n: n.code):
            lines.append(_format_node(sub, 1))
            for st in sorted(
                (n for n in stmts if n.parent == sub.code), key=lambda n: n.code
            ):
                lines.append(_format_node(st, 2))
    return "\n".join(lines) + "\n"


def flat_table(report: HierarchyReport) -> list[dict[str, object]]:
    """Machine-readable rows: code, level, parent, auc, positives."""
    return [
        {
            "code": n.code,
            "level": n.level,
            "parent": n.parent or "",
            "auc": "" if n.auc is None else f"{n.auc:.6f}",
            "positives": n.positives,
        }
        for n in report.nodes
    ]
