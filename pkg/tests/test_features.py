import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from giqa.errors import DataError
from giqa.features import (
    FeatureMatrix,
    apply_pca,
    fit_pca,
    load_pca,
    read_features,
    save_pca,
    split_train_val,
    write_features,
)


def matrix_from(data, prefix="img"):
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    return FeatureMatrix(ids=[f"{prefix}/{i}" for i in range(data.shape[0])], data=data)


class TestFeatureMatrix:
    def test_counts_and_dims(self):
        m = matrix_from([[1, 2, 3], [4, 5, 6]])
        assert m.count == 2 and m.dim == 3

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            FeatureMatrix(ids=["a", "a"], data=np.zeros((2, 2)))

    def test_nan_rejected_with_location(self):
        data = np.zeros((3, 4))
        data[1, 2] = np.nan
        with pytest.raises(DataError, match="row 1, col 2"):
            matrix_from(data)

    def test_inf_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            matrix_from([[np.inf, 0.0]])

    def test_id_row_mismatch(self):
        with pytest.raises(DataError):
            FeatureMatrix(ids=["a"], data=np.zeros((2, 2)))


class TestGiqfRoundtrip:
    def test_small_roundtrip(self, tmp_path):
        m = FeatureMatrix(ids=["a", "b"], data=[[1, 2, 3], [4, 5, 6]])
        path = tmp_path / "m.giqf"
        write_features(m, path)
        back = read_features(path)
        assert back.ids == ("a", "b")
        assert (back.data == m.data).all()

    def test_empty_matrix(self, tmp_path):
        m = FeatureMatrix(ids=[], data=np.empty((0, 2048)))
        path = tmp_path / "empty.giqf"
        write_features(m, path)
        back = read_features(path)
        assert back.count == 0 and back.dim == 2048

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.giqf"
        path.write_bytes(b"XXXX" + b"\x00" * 40)
        with pytest.raises(DataError, match="not a GIQF file"):
            read_features(path)

    def test_truncated_payload(self, tmp_path):
        m = matrix_from(np.arange(30.0).reshape(10, 3))
        path = tmp_path / "t.giqf"
        write_features(m, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 7 * 3 * 4])  # keep 3 of 10 rows
        with pytest.raises(DataError, match="truncated"):
            read_features(path)

    def test_duplicate_ids_in_file(self, tmp_path):
        m = FeatureMatrix(ids=["a", "b"], data=np.zeros((2, 2)))
        path = tmp_path / "d.giqf"
        write_features(m, path)
        raw = bytearray(path.read_bytes())
        raw[raw.index(b"b")] = ord("a")
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="duplicate"):
            read_features(path)

    @settings(max_examples=30, deadline=None)
    @given(
        data=arrays(
            np.float32,
            st.tuples(st.integers(1, 8), st.integers(1, 6)),
            elements=st.floats(-1e6, 1e6, width=32),
        )
    )
    def test_roundtrip_identity_property(self, data, tmp_path_factory):
        m = matrix_from(data)
        path = tmp_path_factory.mktemp("giqf") / "p.giqf"
        write_features(m, path)
        back = read_features(path)
        assert back.ids == m.ids
        assert (back.data == m.data).all()


class TestPca:
    def test_rank_one_line(self):
        t = np.linspace(-1, 1, 50)
        m = matrix_from(np.stack([t, t], axis=1))
        model = fit_pca(m, 0.9)
        assert model.basis.shape == (2, 1)
        direction = model.basis[:, 0]
        assert np.allclose(np.abs(direction), 1 / np.sqrt(2), atol=1e-6)

    def test_isotropic_needs_both_axes(self):
        rng = np.random.default_rng(0)
        base = rng.standard_normal((200, 2))
        data = np.vstack([base, -base])  # exactly symmetric: equal eigenvalues
        model = fit_pca(matrix_from(data), 1.0)
        assert model.basis.shape[1] == 2

    def test_dimension_choice_matches_eigen_oracle(self):
        # known covariance with eigenvalues (4, 1, 0.01): d=2 at 0.95
        # because (4+1)/5.01 >= 0.95 while 4/5.01 < 0.95
        rng = np.random.default_rng(1)
        eigvals = np.array([4.0, 1.0, 0.01])
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        n = 6000
        z = rng.standard_normal((n, 3)) * np.sqrt(eigvals)
        data = z @ q.T
        model = fit_pca(matrix_from(data), 0.95)
        assert model.basis.shape[1] == 2
        # oracle: dense eigendecomposition of the sample covariance
        centered = data.astype(np.float32).astype(np.float64)
        centered = centered - centered.mean(axis=0)
        cov = centered.T @ centered / (n - 1)
        oracle_vals = np.sort(np.linalg.eigvalsh(cov))[::-1]
        assert np.allclose(model.explained_variance, oracle_vals[:2], rtol=1e-6)

    def test_apply_mean_row_maps_to_zero(self):
        rng = np.random.default_rng(2)
        m = matrix_from(rng.standard_normal((20, 3)))
        model = fit_pca(m, 1.0)
        out = apply_pca(model, FeatureMatrix(ids=["x"], data=model.mean[None, :]))
        assert np.allclose(out.data, 0.0, atol=1e-6)

    def test_identity_basis_passthrough(self):
        from giqa.features import PcaModel

        model = PcaModel(
            mean=np.zeros(3),
            basis=np.eye(3),
            explained_variance=np.array([3.0, 2.0, 1.0]),
            retained_fraction=1.0,
        )
        m = matrix_from([[1, 2, 3], [4, 5, 6]])
        out = apply_pca(model, m)
        assert (out.data == m.data).all()

    def test_projection_matches_matmul_oracle(self):
        rng = np.random.default_rng(3)
        m = matrix_from(rng.standard_normal((50, 3)))
        model = fit_pca(m, 0.95)
        point = np.array([2.0, 0.0, 0.0])
        out = apply_pca(model, FeatureMatrix(ids=["p"], data=point[None, :]))
        expected = model.basis.T @ (point - model.mean)
        assert np.allclose(out.data[0], expected, atol=1e-6)

    def test_projected_training_data_centered_and_var_sorted(self):
        rng = np.random.default_rng(4)
        m = matrix_from(rng.standard_normal((300, 5)) * [3, 1, 1, 0.5, 0.1])
        model = fit_pca(m, 1.0)
        out = apply_pca(model, m)
        assert np.abs(out.data.mean(axis=0)).max() < 1e-6
        variances = out.data.var(axis=0)
        assert (np.diff(variances) <= 1e-9).all()

    def test_full_rank_projection_is_isometry(self):
        rng = np.random.default_rng(5)
        m = matrix_from(rng.standard_normal((40, 4)))
        model = fit_pca(m, 1.0)
        out = apply_pca(model, m)
        for a, b in [(0, 1), (5, 17), (20, 39)]:
            before = np.linalg.norm(m.data[a] - m.data[b])
            after = np.linalg.norm(out.data[a] - out.data[b])
            assert abs(after - before) / before < 1e-6

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(DataError):
            fit_pca(matrix_from([[1.0, 2.0]]), 0.5)
        with pytest.raises(DataError, match="zero total variance"):
            fit_pca(matrix_from([[1.0, 2.0], [1.0, 2.0]]), 0.5)

    def test_model_json_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        model = fit_pca(matrix_from(rng.standard_normal((30, 4))), 0.9)
        path = tmp_path / "pca.json"
        save_pca(model, path)
        back = load_pca(path)
        assert (back.mean == model.mean).all()
        assert (back.basis == model.basis).all()


class TestSplit:
    def test_nine_to_one(self):
        m = matrix_from(np.arange(20.0).reshape(10, 2))
        train, val = split_train_val(m, 0.9, seed=0)
        assert train.count == 9 and val.count == 1

    def test_seed_determinism(self):
        rng = np.random.default_rng(7)
        m = matrix_from(rng.standard_normal((50, 2)))
        a = split_train_val(m, 0.7, seed=42)
        b = split_train_val(m, 0.7, seed=42)
        assert a[0].ids == b[0].ids and a[1].ids == b[1].ids

    @given(
        n=st.integers(2, 40),
        ratio=st.floats(0.05, 0.95),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n, ratio, seed):
        m = matrix_from(np.arange(n * 2, dtype=np.float64).reshape(n, 2))
        train, val = split_train_val(m, ratio, seed)
        assert set(train.ids) | set(val.ids) == set(m.ids)
        assert not set(train.ids) & set(val.ids)
        assert train.count == int(np.floor(ratio * n + 0.5))

    def test_half_split_of_four(self):
        m = matrix_from(np.arange(8.0).reshape(4, 2))
        train, val = split_train_val(m, 0.5, seed=3)
        assert train.count == 2 and val.count == 2
        assert set(train.ids) | set(val.ids) == set(m.ids)
