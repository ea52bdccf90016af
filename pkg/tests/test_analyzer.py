import json

import numpy as np
import pytest

from margintune.analyzer import (analyze_bank, class_prototypes,
                                 distance_matrix, distribution_diff,
                                 mean_interclass_distance, pearson,
                                 report_to_dict, write_matrix_csv,
                                 write_report)
from margintune.bank import generate_synthetic_bank


class TestDistanceMatrix:
    def test_orthogonal_pair(self):
        mat = distance_matrix(np.eye(2))
        np.testing.assert_allclose(mat, [[0.0, np.sqrt(2)], [np.sqrt(2), 0.0]])

    def test_symmetric_zero_diagonal(self, rng):
        v = rng.standard_normal((5, 7))
        mat = distance_matrix(v)
        np.testing.assert_allclose(mat, mat.T)
        np.testing.assert_array_equal(np.diag(mat), np.zeros(5))

    def test_needs_two(self):
        with pytest.raises(ValueError, match="at least 2"):
            distance_matrix(np.ones((1, 3)))


class TestMeanInterclassDistance:
    def test_hand_value(self):
        # pairs: |(1,0)-(0,1)| = sqrt(2), |(1,0)-(-1,0)| = 2, sqrt(2)
        v = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        expected = (2.0 * np.sqrt(2.0) + 2.0) / 3.0
        np.testing.assert_allclose(mean_interclass_distance(v), expected, rtol=1e-12)

    def test_identical_vectors(self):
        v = np.tile([0.6, 0.8], (4, 1))
        assert mean_interclass_distance(v) == 0.0


class TestDistributionDiff:
    def test_formula(self):
        # 1/0.5 + 1/0.8 - 2 = 1.25
        np.testing.assert_allclose(distribution_diff(0.5, 0.8, pseudo=False), 1.25)

    def test_unit_means_zero(self):
        assert distribution_diff(1.0, 1.0, pseudo=False) == 0.0

    def test_pseudo_substitution(self):
        # placeholder names: m_t is replaced by 0.1 regardless of its value
        got = distribution_diff(0.9, 0.727, pseudo=True)
        np.testing.assert_allclose(got, 1.0 / 0.1 + 1.0 / 0.727 - 2.0)

    def test_pseudo_ignores_nonpositive_m_t(self):
        got = distribution_diff(0.0, 0.5, pseudo=True)
        np.testing.assert_allclose(got, 10.0 + 2.0 - 2.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="m_t"):
            distribution_diff(0.0, 0.5, pseudo=False)
        with pytest.raises(ValueError, match="m_v"):
            distribution_diff(0.5, 0.0, pseudo=False)


class TestPearson:
    def test_perfect_correlation(self):
        x = [1.0, 2.0, 3.0, 4.0]
        np.testing.assert_allclose(pearson(x, [2 * v + 1 for v in x]), 1.0)
        np.testing.assert_allclose(pearson(x, [-3 * v for v in x]), -1.0)

    def test_hand_value(self):
        x = np.array([1.0, 2.0, 3.0])
        y = np.array([1.0, 3.0, 2.0])
        # centered: x=(-1,0,1), y=(-1,1,0); r = 1 / (sqrt(2)*sqrt(2))
        np.testing.assert_allclose(pearson(x, y), 0.5, rtol=1e-12)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError, match="zero variance"):
            pearson([1.0, 1.0], [0.0, 1.0])
        with pytest.raises(ValueError, match="2 points"):
            pearson([1.0], [1.0])


class TestClassPrototypes:
    def test_renormalized_mean_of_originals_only(self):
        bank = generate_synthetic_bank(classes=3, dim=8, separation=0.8,
                                       text_alignment=0.5, augs_per_image=5,
                                       originals_per_class=4, noise=0.1, seed=6)
        protos = class_prototypes(bank)
        assert protos.shape == (3, 8)
        np.testing.assert_allclose(np.linalg.norm(protos, axis=1), 1.0, rtol=1e-12)
        for row, cls in zip(protos, bank.classes):
            stack = np.stack([bank.item_vector(it.id)
                              for it in bank.originals(cls.id)]).astype(np.float64)
            mean = stack.mean(axis=0)
            np.testing.assert_allclose(row, mean / np.linalg.norm(mean), rtol=1e-12)


class TestAnalyzeBank:
    def test_report_fields(self, noisy_bank):
        report = analyze_bank(noisy_bank)
        assert report.class_count == 8
        assert len(report.class_names) == 8
        assert report.text_distance_matrix.shape == (8, 8)
        assert report.image_distance_matrix.shape == (8, 8)
        assert not report.pseudo_substituted
        assert report.diff == pytest.approx(
            1.0 / report.m_t + 1.0 / report.m_v - 2.0)

    def test_m_v_monotonic_in_separation(self):
        """For a fixed seed the image separation grows with the separation
        knob (the rng draw sequence does not depend on its value)."""
        for seed in (1, 2, 3):
            values = []
            for sep in (0.2, 0.5, 0.9, 1.4):
                bank = generate_synthetic_bank(
                    classes=6, dim=32, separation=sep, text_alignment=0.5,
                    augs_per_image=0, originals_per_class=6, noise=0.02,
                    seed=seed)
                values.append(analyze_bank(bank).m_v)
            assert values == sorted(values)

    def test_pseudo_flag_path(self):
        bank = generate_synthetic_bank(classes=4, dim=16, separation=0.7,
                                       text_alignment=0.5, augs_per_image=0,
                                       originals_per_class=3, noise=0.05, seed=8)
        bank.classes[:] = [
            type(c)(id=c.id, name=f"C{c.id + 1}", pseudo=True,
                    text_vector_index=c.text_vector_index)
            for c in bank.classes
        ]
        bank.__post_init__()
        report = analyze_bank(bank)
        assert report.pseudo_substituted
        assert report.m_t == pytest.approx(0.1)
        assert report.diff == pytest.approx(10.0 + 1.0 / report.m_v - 2.0)

    def test_mixed_pseudo_is_not_substituted(self):
        bank = generate_synthetic_bank(classes=4, dim=16, separation=0.7,
                                       text_alignment=0.5, augs_per_image=0,
                                       originals_per_class=3, noise=0.05, seed=8)
        first = bank.classes[0]
        bank.classes[0] = type(first)(id=first.id, name="C1", pseudo=True,
                                      text_vector_index=first.text_vector_index)
        bank.__post_init__()
        assert not analyze_bank(bank).pseudo_substituted


class TestReportOutput:
    def test_write_report_round_trip(self, noisy_bank, tmp_path):
        report = analyze_bank(noisy_bank)
        write_report(report, tmp_path / "report.json")
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["m_t"] == pytest.approx(report.m_t)
        assert data["diff"] == pytest.approx(report.diff)
        assert len(data["text_distance_matrix"]) == report.class_count

    def test_report_to_dict_lists(self, noisy_bank):
        data = report_to_dict(analyze_bank(noisy_bank))
        assert isinstance(data["class_names"], list)
        assert isinstance(data["image_distance_matrix"], list)

    def test_write_matrix_csv(self, tmp_path):
        mat = np.array([[0.0, 1.25], [1.25, 0.0]])
        write_matrix_csv(mat, tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().strip().splitlines()
        assert lines == ["0,1.25", "1.25,0"]
        parsed = np.array([[float(v) for v in line.split(",")] for line in lines])
        np.testing.assert_allclose(parsed, mat)
