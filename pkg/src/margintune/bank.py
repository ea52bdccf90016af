"""Embedding bank data model, PMEB v1 on-disk format, and synthetic bank generation.

A bank holds frozen, L2-normalized embedding vectors for class-name texts and
for image items (originals and their augmentations), all sharing one matrix so
a single dimensionality and one I/O path cover every row.  Banks are immutable
after load and safe to share read-only across parallel episode workers.

PMEB v1 directory layout:
  manifest.json  UTF-8 JSON: version, dim, vector_count, classes[], items[]
  vectors.bin    raw 32-bit little-endian IEEE-754 floats, row-major;
                 row i starts at byte offset i * dim * 4
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
UNIT_NORM_TOL = 1e-3

# Synthetic augmentation quality model: a fixed fraction of augmentations get a
# 10x noise scale, mimicking bad crops that selection should learn to reject.
POOR_AUG_PROB = 0.2
POOR_AUG_FACTOR = 10.0

ROLE_ORIGINAL = "original"
ROLE_AUGMENTATION = "augmentation"


class BankError(Exception):
    """A bank directory or in-memory bank violates the PMEB contract."""


@dataclass(frozen=True)
class ClassRecord:
    id: int
    name: str
    pseudo: bool
    text_vector_index: int


@dataclass(frozen=True)
class ItemRecord:
    id: int
    class_id: int
    role: str
    parent_id: int | None
    vector_index: int


@dataclass
class EmbeddingBank:
    """Frozen text/image embeddings plus class and item metadata.

    ``vectors`` is a float32 (rows, dim) matrix; text rows and image rows share
    it and are addressed through the index fields of the records.
    """

    dim: int
    classes: list[ClassRecord]
    items: list[ItemRecord]
    vectors: np.ndarray

    _class_by_id: dict[int, ClassRecord] = field(init=False, repr=False)
    _item_by_id: dict[int, ItemRecord] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._class_by_id = {c.id: c for c in self.classes}
        self._item_by_id = {it.id: it for it in self.items}

    def class_record(self, class_id: int) -> ClassRecord:
        return self._class_by_id[class_id]

    def item(self, item_id: int) -> ItemRecord:
        return self._item_by_id[item_id]

    def text_vector(self, class_id: int) -> np.ndarray:
        return self.vectors[self._class_by_id[class_id].text_vector_index]

    def item_vector(self, item_id: int) -> np.ndarray:
        return self.vectors[self._item_by_id[item_id].vector_index]

    def originals(self, class_id: int) -> list[ItemRecord]:
        """Original items of a class, ordered by item id."""
        out = [it for it in self.items
               if it.class_id == class_id and it.role == ROLE_ORIGINAL]
        out.sort(key=lambda it: it.id)
        return out

    def augmentations_of(self, parent_id: int) -> list[ItemRecord]:
        """Augmentations of one original item, ordered by item id."""
        out = [it for it in self.items
               if it.role == ROLE_AUGMENTATION and it.parent_id == parent_id]
        out.sort(key=lambda it: it.id)
        return out

    def validate(self) -> None:
        """Raise BankError on the first violated invariant."""
        if self.dim < 1:
            raise BankError(f"dim must be positive, got {self.dim}")
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise BankError(
                f"vector matrix shape {self.vectors.shape} does not match dim {self.dim}")

        n_rows = self.vectors.shape[0]
        seen_class_ids: set[int] = set()
        used_rows: dict[int, str] = {}

        def claim_row(idx: int, owner: str) -> None:
            if not 0 <= idx < n_rows:
                raise BankError(f"{owner} references out-of-range row {idx} "
                                f"(bank has {n_rows} rows)")
            if idx in used_rows:
                raise BankError(f"row {idx} referenced by both {used_rows[idx]} and {owner}")
            used_rows[idx] = owner

        for cls in self.classes:
            if cls.id in seen_class_ids:
                raise BankError(f"duplicate class id {cls.id}")
            seen_class_ids.add(cls.id)
            claim_row(cls.text_vector_index, f"class {cls.id}")

        seen_item_ids: set[int] = set()
        for it in self.items:
            if it.id in seen_item_ids:
                raise BankError(f"duplicate item id {it.id}")
            seen_item_ids.add(it.id)
            if it.class_id not in seen_class_ids:
                raise BankError(f"item {it.id} references unknown class {it.class_id}")
            if it.role not in (ROLE_ORIGINAL, ROLE_AUGMENTATION):
                raise BankError(f"item {it.id} has unknown role {it.role!r}")
            if (it.parent_id is not None) != (it.role == ROLE_AUGMENTATION):
                raise BankError(
                    f"item {it.id}: parent_id must be present iff role is augmentation")
            claim_row(it.vector_index, f"item {it.id}")

        for it in self.items:
            if it.role != ROLE_AUGMENTATION:
                continue
            parent = self._item_by_id.get(it.parent_id)
            if parent is None:
                raise BankError(f"augmentation {it.id} has dangling parent {it.parent_id}")
            if parent.role != ROLE_ORIGINAL:
                raise BankError(
                    f"augmentation {it.id} parent {parent.id} is not an original")
            if parent.class_id != it.class_id:
                raise BankError(
                    f"augmentation {it.id} (class {it.class_id}) has parent "
                    f"{parent.id} of class {parent.class_id}")

        norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0]
        if bad.size:
            raise BankError(
                f"row {int(bad[0])} has norm {norms[bad[0]]:.6f}, "
                f"outside 1 +/- {UNIT_NORM_TOL}")


def _manifest_dict(bank: EmbeddingBank) -> dict:
    return {
        "version": FORMAT_VERSION,
        "dim": bank.dim,
        "vector_count": int(bank.vectors.shape[0]),
        "classes": [
            {"id": c.id, "name": c.name, "pseudo": c.pseudo,
             "text_vector_index": c.text_vector_index}
            for c in bank.classes
        ],
        "items": [
            {"id": it.id, "class_id": it.class_id, "role": it.role,
             "parent_id": it.parent_id, "vector_index": it.vector_index}
            for it in bank.items
        ],
    }


def save_bank(bank: EmbeddingBank, path: str | Path) -> None:
    """Write a validated bank as a PMEB v1 directory.

    Serialization is stable: saving the same bank twice produces byte-identical
    manifest.json and vectors.bin.
    """
    bank.validate()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_dict(bank)
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (path / "manifest.json").write_text(text, encoding="utf-8")
    matrix = np.ascontiguousarray(bank.vectors, dtype="<f4")
    (path / "vectors.bin").write_bytes(matrix.tobytes())


def load_bank(path: str | Path) -> EmbeddingBank:
    """Load and validate a PMEB v1 directory."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    vectors_path = path / "vectors.bin"
    if not manifest_path.is_file():
        raise BankError(f"missing manifest.json in {path}")
    if not vectors_path.is_file():
        raise BankError(f"missing vectors.bin in {path}")

    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BankError(f"manifest.json is not valid JSON: {exc}") from exc

    version = manifest.get("version")
    if version != FORMAT_VERSION:
        raise BankError(f"unsupported format version {version!r} "
                        f"(expected {FORMAT_VERSION})")

    try:
        dim = int(manifest["dim"])
        vector_count = int(manifest["vector_count"])
        classes = [
            ClassRecord(id=int(c["id"]), name=str(c["name"]),
                        pseudo=bool(c["pseudo"]),
                        text_vector_index=int(c["text_vector_index"]))
            for c in manifest["classes"]
        ]
        items = [
            ItemRecord(id=int(i["id"]), class_id=int(i["class_id"]),
                       role=str(i["role"]),
                       parent_id=None if i["parent_id"] is None else int(i["parent_id"]),
                       vector_index=int(i["vector_index"]))
            for i in manifest["items"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise BankError(f"malformed manifest field: {exc}") from exc

    raw = vectors_path.read_bytes()
    expected = vector_count * dim * 4
    if len(raw) != expected:
        raise BankError(
            f"vectors.bin holds {len(raw)} bytes but manifest declares "
            f"{vector_count} rows x {dim} dims = {expected} bytes")
    vectors = np.frombuffer(raw, dtype="<f4").reshape(vector_count, dim).copy()

    bank = EmbeddingBank(dim=dim, classes=classes, items=items, vectors=vectors)
    bank.validate()
    return bank


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise BankError("cannot normalize a near-zero vector")
    return v / n


def _synthetic_parts(
    classes: int,
    dim: int,
    separation: float,
    text_alignment: float,
    augs_per_image: int,
    originals_per_class: int,
    noise: float,
    seed: int,
) -> tuple[EmbeddingBank, dict[int, float]]:
    """Build a synthetic bank plus the true per-augmentation noise scales.

    The scales map (item id -> realized noise scale) is ground truth for tests
    of augmentation selection; it is not part of the stored format.

    Geometry: class mean c sits at cos(t)*b + sin(t)*v_c where b is a common
    anchor, v_c a random unit direction orthogonal to b, and sin(t) =
    separation / 2.  Pairwise mean distance is then sin(t)*|v_i - v_j|, which
    grows monotonically with separation for a fixed seed because the RNG draw
    sequence does not depend on the separation value.
    """
    if classes < 2:
        raise ValueError(f"classes must be >= 2, got {classes}")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if not 0.0 <= separation <= 2.0:
        raise ValueError(f"separation must be in [0, 2], got {separation}")
    if not 0.0 <= text_alignment <= 1.0:
        raise ValueError(f"text_alignment must be in [0, 1], got {text_alignment}")
    if noise < 0.0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    if augs_per_image < 0:
        raise ValueError(f"augs_per_image must be >= 0, got {augs_per_image}")
    if originals_per_class < 1:
        raise ValueError(f"originals_per_class must be >= 1, got {originals_per_class}")

    rng = np.random.default_rng(seed)
    sin_t = separation / 2.0
    cos_t = float(np.sqrt(max(0.0, 1.0 - sin_t * sin_t)))

    anchor = _unit(rng.standard_normal(dim))
    means = []
    for _ in range(classes):
        g = rng.standard_normal(dim)
        v = _unit(g - float(g @ anchor) * anchor)
        means.append(cos_t * anchor + sin_t * v)

    rows: list[np.ndarray] = []
    class_records: list[ClassRecord] = []
    for c, mean in enumerate(means):
        t_raw = rng.standard_normal(dim)
        text = _unit((1.0 - text_alignment) * t_raw + text_alignment * mean)
        class_records.append(ClassRecord(
            id=c, name=f"class_{c}", pseudo=False, text_vector_index=len(rows)))
        rows.append(text)

    items: list[ItemRecord] = []
    aug_scales: dict[int, float] = {}
    next_item = 0
    for c, mean in enumerate(means):
        for _ in range(originals_per_class):
            x = _unit(mean + noise * rng.standard_normal(dim))
            parent_id = next_item
            items.append(ItemRecord(id=parent_id, class_id=c, role=ROLE_ORIGINAL,
                                    parent_id=None, vector_index=len(rows)))
            rows.append(x)
            next_item += 1
            for _ in range(augs_per_image):
                poor = rng.random() < POOR_AUG_PROB
                scale = noise * (POOR_AUG_FACTOR if poor else 1.0)
                aug = _unit(x + scale * rng.standard_normal(dim))
                items.append(ItemRecord(id=next_item, class_id=c,
                                        role=ROLE_AUGMENTATION, parent_id=parent_id,
                                        vector_index=len(rows)))
                rows.append(aug)
                aug_scales[next_item] = scale
                next_item += 1

    vectors = np.asarray(rows, dtype=np.float64).astype(np.float32)
    bank = EmbeddingBank(dim=dim, classes=class_records, items=items, vectors=vectors)
    bank.validate()
    return bank, aug_scales


def generate_synthetic_bank(
    classes: int,
    dim: int,
    separation: float,
    text_alignment: float,
    augs_per_image: int,
    originals_per_class: int,
    noise: float,
    seed: int,
) -> EmbeddingBank:
    """Generate a deterministic synthetic bank for desk-scale experiments.

    separation in [0, 2] controls expected inter-class mean distance (0 puts
    every class mean at the same point); text_alignment in [0, 1] blends the
    class text vector between a random direction (0) and the class mean (1);
    noise scales the gaussian perturbation of image vectors.  A fixed fraction
    of augmentations is deliberately poor (10x noise scale).
    """
    bank, _ = _synthetic_parts(classes, dim, separation, text_alignment,
                               augs_per_image, originals_per_class, noise, seed)
    return bank
