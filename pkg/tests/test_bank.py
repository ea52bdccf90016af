import json

import numpy as np
import pytest

from margintune.bank import (POOR_AUG_FACTOR, POOR_AUG_PROB, BankError,
                             ClassRecord, EmbeddingBank, ItemRecord,
                             _synthetic_parts, generate_synthetic_bank,
                             load_bank, save_bank)


def tiny_bank():
    vectors = np.array([
        [1.0, 0.0], [0.0, 1.0],            # texts for classes 0, 1
        [1.0, 0.0], [0.0, 1.0],            # originals
        [0.6, 0.8],                        # augmentation of item 0
    ], dtype=np.float32)
    classes = [ClassRecord(0, "alpha", False, 0), ClassRecord(1, "beta", False, 1)]
    items = [
        ItemRecord(0, 0, "original", None, 2),
        ItemRecord(1, 1, "original", None, 3),
        ItemRecord(2, 0, "augmentation", 0, 4),
    ]
    return EmbeddingBank(dim=2, classes=classes, items=items, vectors=vectors)


class TestBankModel:
    def test_accessors(self):
        bank = tiny_bank()
        assert bank.class_record(1).name == "beta"
        np.testing.assert_allclose(bank.text_vector(0), [1.0, 0.0])
        np.testing.assert_allclose(bank.item_vector(2), [0.6, 0.8], rtol=1e-6)
        assert [it.id for it in bank.originals(0)] == [0]
        assert [it.id for it in bank.augmentations_of(0)] == [2]
        assert bank.augmentations_of(1) == []

    def test_validate_ok(self):
        tiny_bank().validate()

    def test_duplicate_class_id(self):
        bank = tiny_bank()
        bank.classes.append(ClassRecord(0, "dup", False, 4))
        with pytest.raises(BankError, match="duplicate class id"):
            bank.validate()

    def test_duplicate_item_id(self):
        bank = tiny_bank()
        bank.items.append(ItemRecord(0, 1, "original", None, 4))
        with pytest.raises(BankError, match="duplicate item id"):
            bank.validate()

    def test_row_shared_by_two_records(self):
        bank = tiny_bank()
        bank.items[2] = ItemRecord(2, 0, "augmentation", 0, 3)
        with pytest.raises(BankError, match="row 3"):
            bank.validate()

    def test_row_out_of_range(self):
        bank = tiny_bank()
        bank.items[2] = ItemRecord(2, 0, "augmentation", 0, 99)
        with pytest.raises(BankError, match="out-of-range"):
            bank.validate()

    def test_unknown_role(self):
        bank = tiny_bank()
        bank.items[0] = ItemRecord(0, 0, "thumbnail", None, 2)
        with pytest.raises(BankError, match="unknown role"):
            bank.validate()

    def test_parent_iff_augmentation(self):
        bank = tiny_bank()
        bank.items[2] = ItemRecord(2, 0, "augmentation", None, 4)
        with pytest.raises(BankError, match="parent_id"):
            bank.validate()

    def test_dangling_parent(self):
        bank = tiny_bank()
        bank.items[2] = ItemRecord(2, 0, "augmentation", 77, 4)
        bank.__post_init__()
        with pytest.raises(BankError, match="dangling parent"):
            bank.validate()

    def test_parent_must_match_class(self):
        bank = tiny_bank()
        bank.items[2] = ItemRecord(2, 0, "augmentation", 1, 4)
        bank.__post_init__()
        with pytest.raises(BankError, match="class"):
            bank.validate()

    def test_non_unit_row_reports_index(self):
        bank = tiny_bank()
        bank.vectors = bank.vectors.copy()
        bank.vectors[3] = [0.5, 0.5]
        with pytest.raises(BankError, match="row 3"):
            bank.validate()


class TestBankIO:
    def test_round_trip(self, tmp_path):
        bank = tiny_bank()
        save_bank(bank, tmp_path / "b")
        loaded = load_bank(tmp_path / "b")
        assert loaded.dim == bank.dim
        assert loaded.classes == bank.classes
        assert loaded.items == bank.items
        np.testing.assert_array_equal(loaded.vectors, bank.vectors)

    def test_save_is_stable(self, tmp_path):
        bank = tiny_bank()
        save_bank(bank, tmp_path / "a")
        save_bank(bank, tmp_path / "b")
        assert (tmp_path / "a/manifest.json").read_bytes() == \
            (tmp_path / "b/manifest.json").read_bytes()
        assert (tmp_path / "a/vectors.bin").read_bytes() == \
            (tmp_path / "b/vectors.bin").read_bytes()

    def test_vector_layout_row_major_f32_le(self, tmp_path):
        bank = tiny_bank()
        save_bank(bank, tmp_path / "b")
        raw = (tmp_path / "b/vectors.bin").read_bytes()
        row3 = np.frombuffer(raw[3 * 2 * 4:4 * 2 * 4], dtype="<f4")
        np.testing.assert_array_equal(row3, bank.vectors[3])

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(BankError, match="manifest.json"):
            load_bank(tmp_path)

    def test_bad_json(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{nope")
        (tmp_path / "vectors.bin").write_bytes(b"")
        with pytest.raises(BankError, match="JSON"):
            load_bank(tmp_path)

    def test_wrong_version(self, tmp_path):
        bank = tiny_bank()
        save_bank(bank, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["version"] = 2
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(BankError, match="version"):
            load_bank(tmp_path)

    def test_size_mismatch(self, tmp_path):
        bank = tiny_bank()
        save_bank(bank, tmp_path)
        raw = (tmp_path / "vectors.bin").read_bytes()
        (tmp_path / "vectors.bin").write_bytes(raw[:-4])
        with pytest.raises(BankError, match="bytes"):
            load_bank(tmp_path)

    def test_missing_field(self, tmp_path):
        bank = tiny_bank()
        save_bank(bank, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        del manifest["classes"][0]["name"]
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(BankError, match="malformed"):
            load_bank(tmp_path)


class TestSyntheticBank:
    def test_deterministic(self, tmp_path):
        kwargs = dict(classes=5, dim=64, separation=0.3, text_alignment=0.5,
                      augs_per_image=2, originals_per_class=3, noise=0.1, seed=7)
        a = generate_synthetic_bank(**kwargs)
        b = generate_synthetic_bank(**kwargs)
        save_bank(a, tmp_path / "a")
        save_bank(b, tmp_path / "b")
        assert (tmp_path / "a/manifest.json").read_bytes() == \
            (tmp_path / "b/manifest.json").read_bytes()
        assert (tmp_path / "a/vectors.bin").read_bytes() == \
            (tmp_path / "b/vectors.bin").read_bytes()

    def test_counts_and_layout(self):
        bank = generate_synthetic_bank(classes=3, dim=8, separation=0.5,
                                       text_alignment=0.5, augs_per_image=4,
                                       originals_per_class=2, noise=0.05, seed=1)
        assert len(bank.classes) == 3
        originals = [it for it in bank.items if it.role == "original"]
        augs = [it for it in bank.items if it.role == "augmentation"]
        assert len(originals) == 6
        assert len(augs) == 24
        assert bank.vectors.shape == (3 + 6 + 24, 8)
        assert [it.id for it in bank.items] == list(range(30))
        for aug in augs:
            parent = bank.item(aug.parent_id)
            assert parent.role == "original"
            assert parent.class_id == aug.class_id

    def test_validates_and_unit_norm(self, noisy_bank):
        noisy_bank.validate()
        norms = np.linalg.norm(noisy_bank.vectors.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-3)

    def test_fully_separable_limit(self, separable_bank):
        """separation=2, noise=0, alignment=1: image vectors equal their
        class text vector."""
        for cls in separable_bank.classes:
            text = separable_bank.text_vector(cls.id)
            for it in separable_bank.originals(cls.id):
                np.testing.assert_allclose(
                    separable_bank.item_vector(it.id), text, atol=1e-6)

    def test_degenerate_separation_zero(self):
        bank = generate_synthetic_bank(classes=5, dim=16, separation=0.0,
                                       text_alignment=1.0, augs_per_image=0,
                                       originals_per_class=2, noise=0.0, seed=4)
        texts = np.stack([bank.text_vector(c.id) for c in bank.classes])
        spread = np.abs(texts - texts[0]).max()
        assert spread < 1e-6

    def test_poor_augmentation_scales(self):
        _, scales = _synthetic_parts(classes=4, dim=16, separation=0.5,
                                     text_alignment=0.5, augs_per_image=25,
                                     originals_per_class=4, noise=0.05, seed=2)
        values = np.array(sorted(set(np.round(list(scales.values()), 10))))
        np.testing.assert_allclose(values, [0.05, 0.05 * POOR_AUG_FACTOR])
        poor_frac = np.mean([v > 0.05 * 2 for v in scales.values()])
        assert abs(poor_frac - POOR_AUG_PROB) < 0.05

    @pytest.mark.parametrize("kwargs, message", [
        (dict(classes=1), "classes"),
        (dict(dim=1), "dim"),
        (dict(separation=2.5), "separation"),
        (dict(text_alignment=-0.1), "text_alignment"),
        (dict(noise=-1.0), "noise"),
        (dict(augs_per_image=-1), "augs_per_image"),
        (dict(originals_per_class=0), "originals_per_class"),
    ])
    def test_invalid_ranges(self, kwargs, message):
        base = dict(classes=3, dim=8, separation=0.5, text_alignment=0.5,
                    augs_per_image=1, originals_per_class=2, noise=0.1, seed=0)
        base.update(kwargs)
        with pytest.raises(ValueError, match=message):
            generate_synthetic_bank(**base)
