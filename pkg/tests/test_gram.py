"""Kernel evaluation, Gram construction, and bank plumbing."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mklkit import (
    KernelBank,
    ValidationError,
    build_bank,
    build_cross_gram,
    build_gram,
    build_multitask_bank,
    build_overlap_linear_kernels,
    chi2_kernel,
    combine,
    gaussian_kernel,
)
from mklkit.gram import (
    as_matrices,
    check_psd,
    dataset_fingerprint,
    load_bank_manifest,
    load_csv_dataset,
    validate_symmetry,
)

from conftest import random_psd


class TestGaussianKernel:
    def test_zero_distance(self):
        assert gaussian_kernel([1.0, -2.0, 3.0], [1.0, -2.0, 3.0], 1.0) == 1.0

    def test_unit_offset(self):
        assert_allclose(gaussian_kernel([1.0, 0.0], [0.0, 0.0], 1.0),
                        np.exp(-0.5), rtol=1e-12)

    def test_wide_bandwidth_limit(self):
        assert gaussian_kernel([1.0, 0.0], [0.0, 0.0], 1e4) == pytest.approx(1.0, abs=1e-6)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            q = rng.normal(size=4)
            qp = rng.normal(size=4)
            gamma = float(rng.uniform(0.2, 5.0))
            assert gaussian_kernel(q, qp, gamma) == gaussian_kernel(qp, q, gamma)

    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            q = rng.normal(size=6)
            assert gaussian_kernel(q, q, float(rng.uniform(0.1, 3.0))) == 1.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValidationError):
            gaussian_kernel([1.0, 2.0], [1.0], 1.0)
        with pytest.raises(ValidationError):
            gaussian_kernel([1.0], [1.0], 0.0)


class TestChi2Kernel:
    def test_identical_histograms(self):
        assert chi2_kernel([0.3, 0.7], [0.3, 0.7], 1.0) == 1.0

    def test_disjoint_histograms(self):
        assert_allclose(chi2_kernel([1.0, 0.0], [0.0, 1.0], 1.0),
                        np.exp(-2.0), rtol=1e-12)

    def test_all_empty_bins(self):
        assert chi2_kernel([0.0, 0.0], [0.0, 0.0], 1.0) == 1.0

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            q = rng.uniform(0.0, 2.0, size=5)
            qp = rng.uniform(0.0, 2.0, size=5)
            gamma = float(rng.uniform(0.2, 3.0))
            assert chi2_kernel(q, qp, gamma) == chi2_kernel(qp, q, gamma)

    def test_rejects_negative_entries(self):
        with pytest.raises(ValidationError):
            chi2_kernel([-0.1, 1.0], [0.5, 0.5], 1.0)


class TestBuildGram:
    def test_linear_orthonormal_rows(self):
        k = build_gram(np.eye(2), {"family": "linear"})
        assert_allclose(k, np.eye(2))

    def test_gaussian_single_point(self):
        k = build_gram(np.array([[0.3, -1.2]]), {"family": "gaussian", "gamma": 1.0})
        assert_allclose(k, [[1.0]])

    def test_chi2_matches_scalar_kernel(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        k = build_gram(x, {"family": "chi2", "gamma": 1.0})
        expected = np.array([[1.0, np.exp(-2.0)], [np.exp(-2.0), 1.0]])
        assert_allclose(k, expected, rtol=1e-12)

    def test_entries_match_pointwise_kernel(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(7, 3))
        k = build_gram(x, {"family": "gaussian", "gamma": 1.4})
        for i in range(7):
            for j in range(7):
                assert k[i, j] == pytest.approx(
                    gaussian_kernel(x[i], x[j], 1.4), rel=1e-12)

    def test_random_gaussian_grams_are_psd(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(2, 31))
            x = rng.normal(size=(n, 4))
            gamma = float(rng.uniform(0.3, 3.0))
            k = build_gram(x, {"family": "gaussian", "gamma": gamma})
            ok, lo, hi = check_psd(k)
            assert ok, f"min eig {lo} vs max {hi}"

    def test_column_subset(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(5, 4))
        k = build_gram(x, {"family": "linear", "columns": [1, 3]})
        assert_allclose(k, x[:, [1, 3]] @ x[:, [1, 3]].T, rtol=1e-12)

    def test_diagonal_normalization(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 3))
        k = build_gram(x, {"family": "linear"}, normalize="diagonal")
        assert_allclose(np.diag(k), 1.0, rtol=1e-12)

    def test_trace_normalization(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(6, 3))
        k = build_gram(x, {"family": "gaussian", "gamma": 1.0}, normalize="trace")
        assert np.trace(k) == pytest.approx(6.0, rel=1e-12)

    def test_unknown_family_rejected(self):
        with pytest.raises(ValidationError):
            build_gram(np.eye(2), {"family": "polynomial"})

    def test_chi2_rejects_negative_features(self):
        with pytest.raises(ValidationError):
            build_gram(np.array([[-1.0, 2.0]]), {"family": "chi2", "gamma": 1.0})


class TestOverlapLinearKernels:
    def test_full_group_is_plain_linear_gram(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(6, 3))
        bank = build_overlap_linear_kernels(x, [[0, 1, 2]])
        assert_allclose(bank[0], x @ x.T, rtol=1e-12)

    def test_disjoint_groups_partition_the_gram(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(5, 4))
        bank = build_overlap_linear_kernels(x, [[0, 1], [2, 3]])
        assert_allclose(bank[0] + bank[1], x @ x.T, rtol=1e-11, atol=1e-12)

    def test_overlapping_groups(self):
        rng = np.random.default_rng(16)
        x = rng.normal(size=(5, 3))
        bank = build_overlap_linear_kernels(x, [[0, 1], [1, 2]])
        for m, cols in enumerate([[0, 1], [1, 2]]):
            assert_allclose(bank[m], x[:, cols] @ x[:, cols].T, rtol=1e-12)
            ok, _, _ = check_psd(bank[m])
            assert ok

    def test_rejects_empty_group(self):
        with pytest.raises(ValidationError):
            build_overlap_linear_kernels(np.eye(3), [[0], []])

    def test_rejects_out_of_range_index(self):
        with pytest.raises(ValidationError):
            build_overlap_linear_kernels(np.eye(3), [[0, 5]])


class TestMultitaskBank:
    def test_single_task_duplicates_base(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=(5, 2))
        bank = build_multitask_bank(x, np.ones(5, dtype=int),
                                    {"family": "gaussian", "gamma": 1.0})
        assert len(bank) == 2
        assert_allclose(bank[0], bank[1])

    def test_masking_identity(self):
        # Sum of per-task kernels equals the base Gram exactly on same-task
        # pairs and vanishes on cross-task pairs.
        rng = np.random.default_rng(18)
        x = rng.normal(size=(8, 2))
        tasks = np.array([1, 2, 1, 2, 2, 1, 1, 2])
        base = build_gram(x, {"family": "gaussian", "gamma": 1.0})
        bank = build_multitask_bank(x, tasks, {"family": "gaussian", "gamma": 1.0},
                                    n_tasks=2)
        per_task_sum = bank[0] + bank[1]
        same = (tasks[:, None] == tasks[None, :]).astype(float)
        assert_allclose(per_task_sum, base * same)
        assert_allclose(bank[2], base)

    def test_empty_task_gives_zero_kernel(self):
        x = np.ones((3, 1))
        bank = build_multitask_bank(x, np.array([1, 1, 1]), {"family": "linear"},
                                    n_tasks=2)
        assert_allclose(bank[1], np.zeros((3, 3)))

    def test_rejects_out_of_range_label(self):
        with pytest.raises(ValidationError):
            build_multitask_bank(np.ones((2, 1)), np.array([1, 3]),
                                 {"family": "linear"}, n_tasks=2)


class TestCombine:
    def test_zero_weights_give_scaled_identity(self):
        bank = [np.full((3, 3), 2.0)]
        assert_allclose(combine(bank, [0.0], sigma2=1.0), np.eye(3))

    def test_single_kernel_unit_weight(self):
        assert_allclose(combine([np.array([[2.0]])], [1.0], sigma2=0.0), [[2.0]])

    def test_equal_kernels_split_weight(self):
        rng = np.random.default_rng(19)
        k = random_psd(rng, 4)
        out = combine([k, k], [0.5, 0.5], sigma2=0.25)
        assert_allclose(out, 0.25 * np.eye(4) + k, rtol=1e-12)

    def test_linearity_in_weights(self):
        rng = np.random.default_rng(20)
        bank = [random_psd(rng, 4) for _ in range(3)]
        d1 = rng.uniform(0.0, 2.0, size=3)
        d2 = rng.uniform(0.0, 2.0, size=3)
        lhs = combine(bank, d1 + d2, sigma2=0.0)
        rhs = combine(bank, d1, sigma2=0.0) + combine(bank, d2, sigma2=0.0)
        assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_rejects_bad_weights(self):
        bank = [np.eye(2)]
        with pytest.raises(ValidationError):
            combine(bank, [1.0, 2.0])
        with pytest.raises(ValidationError):
            combine(bank, [-0.5])
        with pytest.raises(ValidationError):
            combine(bank, [1.0], sigma2=-1.0)


class TestKernelBank:
    def test_validates_shapes(self):
        with pytest.raises(ValidationError):
            KernelBank([])
        with pytest.raises(ValidationError):
            KernelBank([np.eye(2), np.eye(3)])
        with pytest.raises(ValidationError):
            KernelBank([np.eye(2)], descriptors=[{}, {}])

    def test_iteration_and_len(self):
        bank = build_bank(np.eye(3), [{"family": "linear"},
                                      {"family": "gaussian", "gamma": 1.0}])
        assert len(bank) == 2
        assert bank.n == 3
        assert all(k.shape == (3, 3) for k in bank)
        assert as_matrices(bank) is bank.matrices

    def test_symmetry_validator(self):
        validate_symmetry(np.eye(3))
        bad = np.eye(3)
        bad[0, 1] = 1e-3
        with pytest.raises(ValidationError):
            validate_symmetry(bad)


class TestCrossGram:
    def test_matches_self_gram_on_training_points(self):
        rng = np.random.default_rng(21)
        x = rng.normal(size=(6, 3))
        desc = {"family": "gaussian", "gamma": 1.2}
        k_self = build_gram(x, desc)
        k_cross = build_cross_gram(x, desc, x)
        assert_allclose(k_cross, k_self, rtol=1e-12, atol=1e-14)

    def test_masked_cross_gram_needs_tasks(self):
        x = np.ones((2, 1))
        desc = {"family": "linear", "mask_task": 1}
        with pytest.raises(ValidationError):
            build_cross_gram(x, desc, x)

    def test_masked_cross_gram_zeroes_other_tasks(self):
        rng = np.random.default_rng(22)
        x_tr = rng.normal(size=(4, 2))
        x_new = rng.normal(size=(3, 2))
        t_tr = np.array([1, 2, 1, 2])
        t_new = np.array([2, 1, 2])
        desc = {"family": "linear", "mask_task": 1}
        k = build_cross_gram(x_new, desc, x_tr, tasks_new=t_new, tasks_train=t_tr)
        base = x_new @ x_tr.T
        mask = np.outer(t_new == 1, t_tr == 1)
        assert_allclose(k, base * mask)


class TestDatasetIO:
    def test_headered_csv_roundtrip(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y,task,b\n1.0,2.0,1,3.0\n4.0,5.0,2,6.0\n")
        x, y, tasks = load_csv_dataset(path)
        assert_allclose(x, [[1.0, 3.0], [4.0, 6.0]])
        assert_allclose(y, [2.0, 5.0])
        assert tasks.tolist() == [1, 2]

    def test_headerless_csv_uses_last_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1.0,2.0,3.0\n4.0,5.0,6.0\n")
        x, y, tasks = load_csv_dataset(path, header=False)
        assert_allclose(x, [[1.0, 2.0], [4.0, 5.0]])
        assert_allclose(y, [3.0, 6.0])
        assert tasks is None

    def test_missing_label_column_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1.0,2.0\n")
        with pytest.raises(ValidationError, match="'y'"):
            load_csv_dataset(path)

    def test_non_numeric_value_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n1.0,oops\n")
        with pytest.raises(ValidationError, match="non-numeric"):
            load_csv_dataset(path)

    def test_fingerprint_is_stable_and_sensitive(self):
        x = np.arange(6.0).reshape(3, 2)
        y = np.array([1.0, 2.0, 3.0])
        fp = dataset_fingerprint(x, y)
        assert fp == dataset_fingerprint(x.copy(), y.copy())
        assert fp != dataset_fingerprint(x + 1e-9, y)

    def test_bank_manifest_roundtrip(self, tmp_path):
        rng = np.random.default_rng(23)
        k1 = random_psd(rng, 4)
        k2 = random_psd(rng, 4)
        np.savetxt(tmp_path / "k1.csv", k1, delimiter=",")
        np.savetxt(tmp_path / "k2.csv", k2, delimiter=",")
        manifest = tmp_path / "bank.json"
        manifest.write_text(json.dumps({"kernels": [
            {"path": "k1.csv", "descriptor": {"family": "precomputed", "id": 1}},
            {"path": "k2.csv"},
        ]}))
        bank = load_bank_manifest(manifest)
        assert bank.precomputed
        assert len(bank) == 2
        assert_allclose(bank[0], k1, rtol=1e-12, atol=1e-15)
        assert bank.descriptors[0]["id"] == 1

    def test_bank_manifest_rejects_asymmetric_matrix(self, tmp_path):
        k = np.array([[1.0, 0.5], [0.1, 1.0]])
        np.savetxt(tmp_path / "k.csv", k, delimiter=",")
        manifest = tmp_path / "bank.json"
        manifest.write_text(json.dumps({"kernels": [{"path": "k.csv"}]}))
        with pytest.raises(ValidationError, match="symmetric"):
            load_bank_manifest(manifest)
