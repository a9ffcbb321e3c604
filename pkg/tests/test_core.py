import numpy as np
import pytest

from suress.core import (DataError, Dataset, Hyperparameters, ModelSpec, SpecError,
                         canonical_edges, gamma_init_mle, load_dataset, load_separate,
                         parse_config, parse_index_block, read_config, read_mrf_edges,
                         rng_stream, validate_spec, write_dataset, write_matrix,
                         write_mrf_edges)


def small_data(n=6, p=4, s=3, p0=0, seed=0):
    rng = np.random.default_rng(seed)
    X0 = rng.normal(size=(n, p0)) if p0 else None
    return Dataset(rng.normal(size=(n, s)), rng.normal(size=(n, p)), X0)


class TestDataset:
    def test_shapes_and_default_names(self):
        d = small_data(p0=2)
        assert (d.n, d.s, d.p, d.p0) == (6, 3, 4, 2)
        assert d.y_names == ("Y1", "Y2", "Y3")
        assert d.x0_names == ("X0_1", "X0_2")

    def test_no_mandatory_block(self):
        d = small_data()
        assert d.X0.shape == (6, 0)

    def test_row_mismatch(self):
        with pytest.raises(DataError, match="row count"):
            Dataset(np.zeros((3, 1)), np.zeros((4, 2)))

    def test_nan_rejected(self):
        X = np.zeros((3, 2))
        X[1, 1] = np.nan
        with pytest.raises(DataError, match="NaN"):
            Dataset(np.zeros((3, 1)), X)

    def test_duplicate_names_across_blocks(self):
        with pytest.raises(DataError, match="unique"):
            Dataset(np.zeros((3, 1)), np.zeros((3, 1)), np.zeros((3, 1)),
                    x_names=["a"], x0_names=["a"])

    def test_matrices_are_read_only(self):
        d = small_data()
        with pytest.raises(ValueError):
            d.X[0, 0] = 1.0


class TestValidateSpec:
    def test_default_model_accepted(self):
        spec = validate_spec(ModelSpec(), small_data())
        assert (spec.covariance_prior, spec.gamma_prior) == ("HIW", "hotspot")
        assert spec.model_name == "SSUR-H"

    def test_defaults_filled(self):
        d = small_data(p=4, s=3)
        h = validate_spec(ModelSpec(), d).hyperparameters
        assert h.nu == d.s + 3
        assert h.b_omega == d.p * d.s - 2
        assert h.b_o == d.p - 2

    def test_idempotent(self):
        d = small_data()
        once = validate_spec(ModelSpec(), d)
        assert validate_spec(once, d) == once

    def test_mrf_without_edges(self):
        with pytest.raises(SpecError, match="missing MRF graph"):
            validate_spec(ModelSpec(gamma_prior="MRF"), small_data())

    def test_mrf_values_stored(self):
        hyper = Hyperparameters(mrf_d=-3.0, mrf_e=0.03)
        spec = validate_spec(ModelSpec(gamma_prior="MRF", mrf_edges=[[0, 1, 1]],
                                       hyperparameters=hyper), small_data())
        assert spec.hyperparameters.mrf_d == -3.0
        assert spec.hyperparameters.mrf_e == 0.03

    def test_nu_too_small(self):
        with pytest.raises(SpecError, match="nu"):
            validate_spec(ModelSpec(hyperparameters=Hyperparameters(nu=4.0)), small_data(s=3))

    def test_non_positive_hyperparameter(self):
        with pytest.raises(SpecError, match="a_w"):
            validate_spec(ModelSpec(hyperparameters=Hyperparameters(a_w=0.0)), small_data())

    def test_burnin_not_below_iterations(self):
        with pytest.raises(SpecError, match="burnin"):
            validate_spec(ModelSpec(n_iter=10, burnin=10), small_data())

    def test_mrf_index_out_of_range(self):
        d = small_data(p=4, s=3)
        with pytest.raises(SpecError, match="MRF edge indices"):
            validate_spec(ModelSpec(gamma_prior="MRF", mrf_edges=[[0, 12, 1]]), d)

    def test_all_problems_reported_together(self):
        with pytest.raises(SpecError) as info:
            validate_spec(ModelSpec(covariance_prior="X", gamma_prior="Y"), small_data())
        assert len(info.value.problems) == 2

    def test_nine_model_identities(self):
        names = set()
        for cov in ("IG", "IW", "HIW"):
            for gp in ("hierarchical", "hotspot", "MRF"):
                spec = validate_spec(ModelSpec(covariance_prior=cov, gamma_prior=gp,
                                               mrf_edges=[[0, 1, 1]]), small_data())
                names.add(spec.model_name)
        assert len(names) == 9


class TestEdges:
    def test_canonical_merges_directions(self):
        out = canonical_edges([[3, 1, 1.0], [1, 3, 1.0], [0, 2, 0.5]])
        np.testing.assert_array_equal(out, [[0, 2, 0.5], [1, 3, 1.0]])

    def test_conflicting_weights(self):
        with pytest.raises(SpecError):
            canonical_edges([[0, 1, 1.0], [1, 0, 2.0]])

    def test_file_round_trip(self, tmp_path):
        edges = np.array([[0, 1, 1.0], [2, 5, 0.25]])
        write_mrf_edges(tmp_path / "g.txt", edges)
        np.testing.assert_array_equal(read_mrf_edges(tmp_path / "g.txt"), edges)

    def test_weight_defaults_to_one(self, tmp_path):
        (tmp_path / "g.txt").write_text("0 1\n# comment\n2 3 0.5\n")
        np.testing.assert_array_equal(read_mrf_edges(tmp_path / "g.txt"),
                                      [[0, 1, 1.0], [2, 3, 0.5]])


class TestRng:
    def test_same_stream_reproduces(self):
        a = rng_stream(7, 1).normal(size=5)
        b = rng_stream(7, 1).normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = rng_stream(7, 0).normal(size=1000)
        b = rng_stream(7, 1).normal(size=1000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.1


class TestFiles:
    def test_combined_split(self, tmp_path):
        rng = np.random.default_rng(1)
        write_matrix(tmp_path / "d.csv", rng.normal(size=(100, 160)),
                     [f"c{i}" for i in range(160)])
        d = load_dataset(tmp_path / "d.csv", [range(10), range(10, 160)])
        assert d.Y.shape == (100, 10) and d.X.shape == (100, 150)
        assert d.y_names[0] == "c0" and d.x_names[0] == "c10"

    def test_overlapping_blocks(self, tmp_path):
        write_matrix(tmp_path / "d.csv", np.zeros((3, 6)))
        with pytest.raises(DataError, match="overlap"):
            load_dataset(tmp_path / "d.csv", [range(0, 3), range(2, 6)])

    def test_ragged_rows(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,b\n1,2\n3\n")
        with pytest.raises(DataError, match="fields"):
            load_dataset(tmp_path / "d.csv", [[0], [1]])

    def test_separate_files(self, tmp_path):
        d = small_data()
        write_matrix(tmp_path / "y.csv", d.Y)
        write_matrix(tmp_path / "x.csv", d.X)
        out = load_separate(tmp_path / "y.csv", tmp_path / "x.csv")
        assert out.p0 == 0
        np.testing.assert_array_equal(out.X, d.X)

    def test_round_trip_bit_exact(self, tmp_path):
        d = small_data(p0=1, seed=3)
        blocks = write_dataset(d, tmp_path / "d.csv")
        out = load_dataset(tmp_path / "d.csv", blocks)
        for a, b in ((d.Y, out.Y), (d.X, out.X), (d.X0, out.X0)):
            np.testing.assert_array_equal(a, b)
        assert out.x0_names == d.x0_names

    def test_index_block(self):
        assert parse_index_block("0:3, 5,7:9") == [0, 1, 2, 5, 7, 8]


class TestConfig:
    def test_table_names(self, tmp_path):
        cfg = parse_config("covariancePrior = IW\ngammaPrior = hierarchical\nnIter = 200\n"
                           "burnin = 50\nhyperpar.a_w = 3\nhyperpar.d = -2\nY = y.csv\nX = x.csv\n",
                           base_dir=tmp_path)
        assert cfg.spec.covariance_prior == "IW"
        assert cfg.spec.n_iter == 200
        assert cfg.spec.hyperparameters.a_w == 3.0
        assert cfg.spec.hyperparameters.mrf_d == -2.0
        assert cfg.resolve(cfg.Y) == tmp_path / "y.csv"
        assert "hyperpar.a_w" in cfg.keys

    def test_unknown_key(self):
        with pytest.raises(SpecError, match="unknown configuration key"):
            parse_config("nIters = 5\n")

    def test_unknown_hyperparameter(self):
        with pytest.raises(SpecError, match="unknown hyperparameter"):
            parse_config("hyperpar.zeta = 5\n")

    def test_mrf_path(self, tmp_path):
        (tmp_path / "g.txt").write_text("0 1\n")
        (tmp_path / "run.cfg").write_text("gammaPrior = MRF\nmrfG = g.txt\n")
        cfg = read_config(tmp_path / "run.cfg")
        np.testing.assert_array_equal(cfg.spec.mrf_edges, [[0, 1, 1.0]])

    def test_init_alias(self):
        assert parse_config("gammaInit = MLE\n").spec.gamma_init == "mle"


class TestMleInit:
    def test_strong_signal_selected(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 5))
        Y = np.column_stack([3 * X[:, 1] + 0.1 * rng.normal(size=50), rng.normal(size=50)])
        g = gamma_init_mle(Dataset(Y, X))
        assert g[1, 0]
        assert g.sum() == 1
