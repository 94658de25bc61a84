import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from puprior.data_io import (
    LabeledTable,
    SyntheticSpec,
    bayes_error,
    generate_synthetic,
    load_csv,
    make_pu_split,
    pca_fit,
    pca_reduce,
    uniform_pair,
    write_csv,
)
from puprior.errors import DataError, InvalidParameterError, ShapeError


def three_sigma(n, p):
    return 3 * np.sqrt(n * p * (1 - p))


class TestSynthetic:
    @pytest.mark.parametrize("gamma", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_overlap_mass(self, gamma):
        n = 10_000
        sample = generate_synthetic(SyntheticSpec(gamma, 0.5, n, 10, seed=7))
        in_overlap = np.sum(sample.data.positives[:, 0] >= 1 - gamma)
        assert abs(in_overlap - gamma * n) <= three_sigma(n, gamma) + 1e-9

    def test_supports(self):
        sample = generate_synthetic(SyntheticSpec(0.25, 0.6, 2000, 2000, seed=1))
        pos = sample.data.positives[:, 0]
        unl = sample.data.unlabeled[:, 0]
        truth = sample.unlabeled_labels
        assert pos.min() >= 0 and pos.max() < 1
        assert unl[truth == -1].min() >= 0.75 and unl[truth == -1].max() < 1.75
        assert unl[truth == 1].max() < 1

    def test_separated_and_coincident(self):
        sep = generate_synthetic(SyntheticSpec(0.0, 0.5, 500, 500, seed=2))
        assert sep.data.unlabeled[sep.unlabeled_labels == -1].min() >= 1.0
        assert uniform_pair(1.0) == ((0.0, 1.0), (0.0, 1.0))

    def test_prior_converges(self):
        sample = generate_synthetic(SyntheticSpec(0.25, 0.3, 10, 100_000, seed=5))
        assert abs(np.mean(sample.unlabeled_labels == 1) - 0.3) <= 0.01

    def test_exact_counts(self):
        sample = generate_synthetic(SyntheticSpec(0.25, 0.7, 10, 400, seed=5, exact_counts=True))
        assert np.sum(sample.unlabeled_labels == 1) == 280

    @given(st.floats(0, 1), st.floats(0.01, 0.99), st.integers(0, 1000))
    def test_deterministic(self, gamma, prior, seed):
        spec = SyntheticSpec(gamma, prior, 20, 30, seed)
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        assert np.array_equal(a.data.unlabeled, b.data.unlabeled)
        assert np.array_equal(a.unlabeled_labels, b.unlabeled_labels)

    @pytest.mark.parametrize(
        "args", [(-0.1, 0.5, 10, 10), (1.1, 0.5, 10, 10), (0.5, 0.0, 10, 10), (0.5, 1.0, 10, 10), (0.5, 0.5, 0, 10)]
    )
    def test_rejects(self, args):
        with pytest.raises(InvalidParameterError):
            SyntheticSpec(*args)

    @pytest.mark.parametrize("gamma, prior", [(0.25, 0.7), (0.75, 0.3), (0.0, 0.5)])
    def test_bayes_error_by_monte_carlo(self, gamma, prior):
        sample = generate_synthetic(SyntheticSpec(gamma, prior, 10, 200_000, seed=3))
        x, y = sample.data.unlabeled[:, 0], sample.unlabeled_labels
        # posterior on the overlap is the prior, so the Bayes rule predicts the majority there
        overlap = (x >= 1 - gamma) & (x < 1)
        pred = np.where(overlap, 1 if prior >= 0.5 else -1, np.where(x < 1, 1, -1))
        assert np.mean(pred != y) == pytest.approx(bayes_error(gamma, prior), abs=0.005)


class TestCSV:
    def write(self, tmp_path, text, name="f.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_plain_matrix(self, tmp_path):
        x = load_csv(self.write(tmp_path, "x1,x2\n0,1\n2,3\n4,5\n"))
        assert x.shape == (3, 2)
        assert x.tolist() == [[0, 1], [2, 3], [4, 5]]

    def test_labeled(self, tmp_path):
        table = load_csv(self.write(tmp_path, "x1,y\n0.5,1\n1.5,-1\n"))
        assert isinstance(table, LabeledTable)
        assert table.labels.tolist() == [1, -1]

    def test_positive_class_mapping(self, tmp_path):
        table = load_csv(self.write(tmp_path, "a,y\n1,3\n2,7\n3,3.0\n"), positive_class="3")
        assert table.labels.tolist() == [1, -1, 1]

    def test_parse_error_names_line(self, tmp_path):
        with pytest.raises(DataError, match="line 2") as info:
            load_csv(self.write(tmp_path, "x1,x2\nabc,1\n"))
        assert info.value.line == 2

    @pytest.mark.parametrize("token", ["nan", "inf", "-inf"])
    def test_non_finite(self, tmp_path, token):
        with pytest.raises(DataError, match="line 3"):
            load_csv(self.write(tmp_path, f"x1\n1\n{token}\n"))

    def test_ragged_rows(self, tmp_path):
        with pytest.raises(DataError, match="line 3: expected 2 columns"):
            load_csv(self.write(tmp_path, "x1,x2\n1,2\n3\n"))

    def test_bad_label(self, tmp_path):
        with pytest.raises(DataError, match="label"):
            load_csv(self.write(tmp_path, "x1,y\n1,0\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv(tmp_path / "nope.csv")

    def test_header_only(self, tmp_path):
        x = load_csv(self.write(tmp_path, "x1,x2\n"))
        assert x.shape == (0, 2)

    def test_round_trip(self, tmp_path, rng):
        x = rng.normal(size=(7, 3))
        labels = np.array([1, -1, 1, 1, -1, -1, 1])
        write_csv(tmp_path / "t.csv", x, labels)
        table = load_csv(tmp_path / "t.csv")
        assert np.array_equal(table.features, x)
        assert np.array_equal(table.labels, labels)


class TestLabeledTable:
    def test_rejects_bad_labels(self):
        with pytest.raises(DataError):
            LabeledTable(np.zeros((2, 1)), [1, 0])

    def test_rejects_mismatch(self):
        with pytest.raises(ShapeError):
            LabeledTable(np.zeros((2, 1)), [1])


class TestPCA:
    def test_full_rank_preserves_variance(self, rng):
        x = rng.normal(size=(50, 6)) @ rng.normal(size=(6, 6))
        res = pca_fit(x, 6)
        z = res.transform(x)
        centered = x - x.mean(axis=0)
        assert np.allclose(z @ res.components, centered, atol=1e-10)
        assert abs(z.var(axis=0, ddof=1).sum() - centered.var(axis=0, ddof=1).sum()) <= 1e-8

    def test_rank_one(self, rng):
        x = rng.normal(size=(30, 1)) * rng.normal(size=(1, 5))
        res = pca_fit(x, 1)
        total = (x - x.mean(axis=0)).var(axis=0, ddof=1).sum()
        assert res.explained_variance[0] == pytest.approx(total, rel=1e-10)

    def test_matches_eigendecomposition(self, rng):
        x = rng.normal(size=(50, 10))
        evals = np.sort(np.linalg.eigvalsh(np.cov(x, rowvar=False)))[::-1]
        assert np.allclose(pca_fit(x, 4).explained_variance, evals[:4], rtol=1e-10)

    def test_sign_convention(self, rng):
        comps = pca_fit(rng.normal(size=(40, 5)), 3).components
        idx = np.argmax(np.abs(comps), axis=1)
        assert np.all(comps[np.arange(3), idx] > 0)
        assert np.allclose(np.linalg.norm(comps, axis=1), 1.0)

    @pytest.mark.parametrize("dims", [0, 6])
    def test_dims_range(self, rng, dims):
        with pytest.raises(InvalidParameterError):
            pca_fit(rng.normal(size=(10, 5)), dims)

    def test_reduce_keeps_labels(self, rng):
        table = LabeledTable(rng.normal(size=(20, 5)), np.where(rng.random(20) < 0.5, 1, -1))
        out = pca_reduce(table, 2)
        assert out.features.shape == (20, 2)
        assert np.array_equal(out.labels, table.labels)


def balanced_table(rng, n_pos=2000, n_neg=2000):
    x = rng.normal(size=(n_pos + n_neg, 2))
    return LabeledTable(x, np.r_[np.ones(n_pos), -np.ones(n_neg)])


class TestSplit:
    def test_disjoint_and_complete(self, rng):
        table = balanced_table(rng, 500, 500)
        sample = make_pu_split(table, 50, 200, 0.4, seed=1)
        x_idx, u_idx, t_idx = sample.indices
        assert len(set(x_idx) | set(u_idx) | set(t_idx)) == len(x_idx) + len(u_idx) + len(t_idx) == 1000
        assert np.all(table.labels[x_idx] == 1)
        assert np.array_equal(sample.unlabeled_labels, table.labels[u_idx])
        assert np.array_equal(sample.test.labels, table.labels[t_idx])

    def test_all_positive(self, rng):
        sample = make_pu_split(balanced_table(rng), 100, 300, 1.0, seed=0)
        assert np.all(sample.unlabeled_labels == 1)

    def test_binomial_count(self, rng):
        table = balanced_table(rng)
        counts = [np.sum(make_pu_split(table, 10, 1000, 0.3, seed=s).unlabeled_labels == 1) for s in range(50)]
        assert all(abs(c - 300) <= three_sigma(1000, 0.3) for c in counts)

    def test_exact_counts(self, rng):
        sample = make_pu_split(balanced_table(rng), 10, 100, 0.25, seed=0, exact_counts=True)
        assert np.sum(sample.unlabeled_labels == 1) == 25

    def test_too_many_positives(self, rng):
        with pytest.raises(DataError, match="positive rows"):
            make_pu_split(balanced_table(rng, 50, 500), 60, 10, 0.0)

    def test_too_many_negatives(self, rng):
        with pytest.raises(DataError, match="negative rows"):
            make_pu_split(balanced_table(rng, 500, 50), 10, 100, 0.0)

    @pytest.mark.parametrize("prior", [-0.1, 1.1])
    def test_prior_range(self, rng, prior):
        with pytest.raises(InvalidParameterError):
            make_pu_split(balanced_table(rng, 50, 50), 5, 5, prior)

    def test_deterministic(self, rng):
        table = balanced_table(rng, 300, 300)
        a, b = make_pu_split(table, 20, 50, 0.5, seed=9), make_pu_split(table, 20, 50, 0.5, seed=9)
        assert all(np.array_equal(i, j) for i, j in zip(a.indices, b.indices))
