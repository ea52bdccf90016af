"""Embedding-space separation analysis over a frozen bank.

Computes mean inter-class L2 distances for class text embeddings (m_T) and
class image prototypes (m_V), the combined difference metric
1/m_T + 1/m_V - 2, full inter-class distance matrices, and Pearson
correlation.  Pure numerics; rendering lives in ``figures``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bank import BankError, EmbeddingBank, ROLE_ORIGINAL

# Substitute for m_T when every class carries a placeholder name; placeholder
# text embeddings carry no semantics, so the raw text distances are meaningless.
PSEUDO_SUBSTITUTE_DEFAULT = 0.1


@dataclass
class AnalysisReport:
    """Separation metrics for one bank.

    When ``pseudo_substituted`` is true, ``m_t`` holds the substituted value
    that entered ``diff`` rather than the off-diagonal mean of the raw text
    distance matrix (which is still stored unmodified).
    """

    m_t: float
    m_v: float
    diff: float
    pseudo_substituted: bool
    text_distance_matrix: np.ndarray
    image_distance_matrix: np.ndarray
    class_count: int
    class_names: tuple[str, ...] = ()


def distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise L2 distance matrix; symmetric with zero diagonal."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D stack of vectors, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError(f"need at least 2 vectors, got {arr.shape[0]}")
    diff = arr[:, None, :] - arr[None, :, :]
    mat = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(mat, 0.0)
    return mat


def mean_interclass_distance(vectors: np.ndarray) -> float:
    """Mean of all pairwise L2 distances: (2 / (C^2 - C)) * sum_{i<j} |v_i - v_j|.

    Plain distances, not squared.  For images, pass per-class prototypes
    (renormalized means), not individual items.
    """
    mat = distance_matrix(vectors)
    c = mat.shape[0]
    iu = np.triu_indices(c, k=1)
    return float(2.0 * mat[iu].sum() / (c * c - c))


def distribution_diff(
    m_t: float,
    m_v: float,
    pseudo: bool,
    pseudo_value: float = PSEUDO_SUBSTITUTE_DEFAULT,
) -> float:
    """Combined separation metric 1/m_T + 1/m_V - 2.

    The offset of 2 zeroes the metric when both means are at the normalized
    ceiling of 1.  With ``pseudo`` set, m_T is replaced by ``pseudo_value``
    before the formula is applied.
    """
    if pseudo:
        m_t = pseudo_value
    if m_t <= 0.0:
        raise ValueError(f"m_t must be positive (got {m_t}); "
                         "set pseudo=True for placeholder class names")
    if m_v <= 0.0:
        raise ValueError(f"m_v must be positive, got {m_v}")
    return 1.0 / m_t + 1.0 / m_v - 2.0


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"inputs must be equal-length 1-D sequences, "
                         f"got shapes {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance in input")
    return float(xc @ yc) / (sx * sy)


def class_prototypes(bank: EmbeddingBank) -> np.ndarray:
    """Per-class image prototypes: renormalized means of original items."""
    protos = []
    for cls in bank.classes:
        originals = bank.originals(cls.id)
        if not originals:
            raise BankError(f"class {cls.id} ({cls.name!r}) has no original items; "
                            "cannot form an image prototype")
        stack = np.stack([bank.item_vector(it.id) for it in originals]).astype(np.float64)
        mean = stack.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            raise BankError(f"class {cls.id} prototype collapsed to zero")
        protos.append(mean / norm)
    return np.asarray(protos)


def analyze_bank(
    bank: EmbeddingBank,
    pseudo_value: float = PSEUDO_SUBSTITUTE_DEFAULT,
) -> AnalysisReport:
    """Full separation analysis of a bank.

    The pseudo substitution applies when every class is flagged pseudo
    (placeholder names are a dataset-level property).
    """
    if len(bank.classes) < 2:
        raise BankError(f"analysis needs >= 2 classes, got {len(bank.classes)}")
    texts = np.stack([bank.text_vector(c.id) for c in bank.classes]).astype(np.float64)
    protos = class_prototypes(bank)

    text_mat = distance_matrix(texts)
    image_mat = distance_matrix(protos)
    c = len(bank.classes)
    iu = np.triu_indices(c, k=1)
    raw_m_t = float(2.0 * text_mat[iu].sum() / (c * c - c))
    m_v = float(2.0 * image_mat[iu].sum() / (c * c - c))

    pseudo = all(cls.pseudo for cls in bank.classes)
    diff = distribution_diff(raw_m_t, m_v, pseudo=pseudo, pseudo_value=pseudo_value)
    return AnalysisReport(
        m_t=pseudo_value if pseudo else raw_m_t,
        m_v=m_v,
        diff=diff,
        pseudo_substituted=pseudo,
        text_distance_matrix=text_mat,
        image_distance_matrix=image_mat,
        class_count=c,
        class_names=tuple(cls.name for cls in bank.classes),
    )


def report_to_dict(report: AnalysisReport) -> dict:
    return {
        "m_t": report.m_t,
        "m_v": report.m_v,
        "diff": report.diff,
        "pseudo_substituted": report.pseudo_substituted,
        "class_count": report.class_count,
        "class_names": list(report.class_names),
        "text_distance_matrix": report.text_distance_matrix.tolist(),
        "image_distance_matrix": report.image_distance_matrix.tolist(),
    }


def write_report(report: AnalysisReport, path: str | Path) -> None:
    """Write the analysis report as JSON (schema in docs/formats.md)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report_to_dict(report), indent=2) + "\n",
                    encoding="utf-8")


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    """Write a distance matrix as CSV, one row per class, 6 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(f"{v:.6g}" for v in row) for row in np.asarray(matrix)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
