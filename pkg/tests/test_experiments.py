import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hotvbl.exceptions import DimensionError
from hotvbl.experiments import (
    ExperimentConfig,
    add_noise_at_snr,
    default_config,
    dft_forward,
    gaussian_forward,
    make_ideal_signal,
    make_piecewise_poly,
    max_err,
    piecewise_smooth,
    rel_err,
    run_experiment,
    run_test1,
    run_test2,
    run_test3,
    snr_db,
    sparsity_count,
    trial_seed,
    write_results,
)
from hotvbl.experiments.runners import edge_distance
from hotvbl.operators import build_analysis, build_completed, build_synthesis


class TestMetrics:
    def test_snr_examples(self):
        x = np.array([1.0, -2.0, 3.0])
        assert snr_db(x, x) == pytest.approx(0.0)
        assert snr_db(x, x / 10) == pytest.approx(20.0)
        assert snr_db([3.0, 4.0], [0.3, 0.4]) == pytest.approx(20.0)

    def test_snr_rejects_zero_noise(self):
        with pytest.raises(ValueError):
            snr_db([1.0], [0.0])

    def test_error_examples(self):
        assert rel_err([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert max_err([1.0, 2.0], [1.0, 2.0]) == 0.0
        u = np.array([0.6, 0.8])
        assert rel_err(2 * u, u) == pytest.approx(1.0)
        assert max_err([1.0, 0.5], [1.0, 0.0]) == 0.5
        assert rel_err([1.0, 0.5], [1.0, 0.0]) == 0.5

    def test_error_preconditions(self):
        with pytest.raises(ValueError):
            rel_err([1.0], [0.0])
        with pytest.raises(DimensionError):
            max_err([1.0, 2.0], [1.0])


class TestNoise:
    @given(snr=st.floats(-20, 60), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_realized_snr_is_exact(self, snr, seed):
        rng = np.random.default_rng(seed)
        clean = rng.standard_normal(64)
        noisy, noise = add_noise_at_snr(clean, snr, rng)
        assert abs(snr_db(clean, noise) - snr) < 1e-9
        np.testing.assert_array_equal(noisy, clean + noise)

    def test_complex_noise(self):
        rng = np.random.default_rng(1)
        clean = np.exp(1j * np.linspace(0, 3, 50))
        _, noise = add_noise_at_snr(clean, 10.0, rng)
        assert np.iscomplexobj(noise)
        assert abs(snr_db(clean, noise) - 10.0) < 1e-9
        # both parts carry noise
        assert np.std(noise.real) > 0.1 * np.std(noise.imag) > 0

    def test_zero_db_and_twenty_db_norms(self):
        clean = np.arange(1.0, 11.0)
        _, n0 = add_noise_at_snr(clean, 0.0, np.random.default_rng(0))
        _, n20 = add_noise_at_snr(clean, 20.0, np.random.default_rng(0))
        assert np.linalg.norm(n0) == pytest.approx(np.linalg.norm(clean), rel=1e-9)
        assert np.linalg.norm(n20) == pytest.approx(np.linalg.norm(clean) / 10, rel=1e-9)

    def test_deterministic(self):
        a = add_noise_at_snr(np.ones(5), 3.0, np.random.default_rng(9))[1]
        b = add_noise_at_snr(np.ones(5), 3.0, np.random.default_rng(9))[1]
        np.testing.assert_array_equal(a, b)

    def test_zero_clean_rejected(self):
        with pytest.raises(ValueError):
            add_noise_at_snr(np.zeros(4), 0.0, np.random.default_rng(0))


class TestSignals:
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_piecewise_poly_roundtrip(self, m):
        rng = np.random.default_rng(m)
        x, t = make_piecewise_poly(60, m, 5, rng)
        assert np.count_nonzero(t) == 5
        np.testing.assert_allclose(build_completed(m, 60).astype(float) @ x, t, atol=1e-10)

    def test_jumps_only_support(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            _, t = make_piecewise_poly(10, 3, 7, rng, jumps_only=True)
            assert np.all(t[:3] == 0)

    def test_first_coordinate_gives_constant(self):
        V = build_synthesis(1, 10).synthesis
        np.testing.assert_array_equal(V[:, 0], 1)

    def test_k_bounds(self):
        rng = np.random.default_rng(0)
        _, t = make_piecewise_poly(12, 1, 12, rng)
        assert np.count_nonzero(t) == 12
        for k in (0, 13):
            with pytest.raises(ValueError):
                make_piecewise_poly(12, 1, k, rng)

    def test_ideal_constant_n8(self):
        assert make_ideal_signal("constant", 8).tolist() == [0, 0, 0, 0, 1, 1, 1, 1]

    @pytest.mark.parametrize("kind,m,n_t,n_tt", [
        ("constant", 1, 1, 1), ("linear", 2, 2, 3), ("quadratic", 3, 3, 5)])
    def test_ideal_signals_are_sparse(self, kind, m, n_t, n_tt):
        # the jump touches m stencil rows; the completion rows of a signal
        # starting at 0 with nonzero slope/curvature add m - 1 more
        x = make_ideal_signal(kind, 128)
        s = build_analysis(m, 128).matrix.astype(float) @ x
        assert np.sum(np.abs(s) > 1e-8) == n_t
        assert sparsity_count(x, m) == n_tt

    def test_ideal_signal_errors(self):
        with pytest.raises(ValueError):
            make_ideal_signal("cubic", 16)
        with pytest.raises(ValueError):
            make_ideal_signal("constant", 7)

    def test_four_piece_sparsity_counts(self):
        x = piecewise_smooth(128, "four_piece")
        assert [sparsity_count(x, m) for m in (1, 2, 3)] == [52, 34, 39]

    def test_two_piece_not_exactly_sparse(self):
        x = piecewise_smooth(128, "two_piece")
        counts = [sparsity_count(x, m) for m in (1, 2, 3)]
        assert all(c > 50 for c in counts)

    @pytest.mark.parametrize("N", [1, 7, 8, 33])
    def test_dft_unitary(self, N):
        F = dft_forward(N)
        np.testing.assert_allclose(F @ F.conj().T, np.eye(N), atol=1e-12)

    def test_dft_constant_goes_to_zero_frequency(self):
        N = 16
        y = dft_forward(N) @ np.ones(N)
        zero_row = N // 2  # frequencies run from -N/2
        assert abs(y[zero_row]) == pytest.approx(np.sqrt(N))
        assert np.sum(np.abs(np.delete(y, zero_row))) < 1e-10

    def test_gaussian_forward_moments(self):
        A = gaussian_forward(50, 250, np.random.default_rng(4))
        assert A.shape == (50, 250)
        assert abs(A.mean()) < 4 / np.sqrt(A.size)
        assert A.std() == pytest.approx(1.0, abs=0.05)


def test_trial_seed_properties():
    assert trial_seed(1, "test1", 1, 3, 0) == trial_seed(1, "test1", 1, 3, 0)
    seeds = {trial_seed(1, "test1", 1, k, t) for k in range(10) for t in range(10)}
    assert len(seeds) == 100
    assert trial_seed(1, "a") != trial_seed(2, "a")
    assert 0 <= trial_seed(2**64 - 1, "x") < 2**64


def test_edge_distance():
    assert edge_distance(8, 4).tolist() == [3, 2, 1, 0, 0, 1, 2, 3]


class TestConfig:
    def test_roundtrip(self):
        cfg = default_config("test2", trials=3, base_seed=5)
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    @pytest.mark.parametrize("test_id,kw", [
        ("test1", dict(trials=0)),
        ("test1", dict(J=300)),
        ("test1", dict(k_values=(0, 1))),
        ("test1", dict(orders=(250,))),
        ("test2", dict(kinds=("cubic",))),
        ("test2", dict(snr_list=())),
        ("test3", dict(J=64)),
        ("test3", dict(function="nope")),
        ("test3", dict(confidence=1.0)),
    ])
    def test_invalid(self, test_id, kw):
        with pytest.raises(ValueError):
            default_config(test_id, **kw)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            ExperimentConfig.from_dict({"test_id": "test1", "N": 10, "J": 5, "trials": 1,
                                        "k_values": [1], "bogus": 1})

    def test_unknown_test(self):
        with pytest.raises(ValueError):
            default_config("test4")


class TestRunners:
    def test_test1_small_k_succeeds(self):
        cfg = default_config("test1", trials=10, k_values=(1, 2), l1_comparator=False)
        res = run_test1(cfg)
        assert len(res.records) == 20
        assert all(r.method == "hotvbl" for r in res.records)
        for k in ("1", "2"):
            assert res.summary["success"]["hotvbl"]["m1"][k]["success_probability"] >= 0.9
        assert all(r.success == (r.max_err <= 1e-3) for r in res.records)

    def test_test1_basis_pursuit_comparator(self):
        cfg = default_config("test1", trials=2, k_values=(5,))
        res = run_test1(cfg)
        methods = [r.method for r in res.records]
        assert methods == ["hotvbl", "l1_bp"] * 2
        assert all(r.lam == 1.0 for r in res.records if r.method == "l1_bp")

    def test_test2_noiseless_limit(self):
        cfg = default_config("test2", trials=1, snr_list=(100.0,))
        res = run_test2(cfg)
        assert len(res.records) == 6
        assert all(r.rel_err <= 1e-3 for r in res.records)
        assert all(abs(r.realized_snr - 100.0) < 1e-9 for r in res.records)

    def test_test2_interval_widths(self):
        cfg = default_config("test2", trials=1, snr_list=(0.0,), kinds=("constant",),
                             l1_comparator=False)
        (rec,) = run_test2(cfg).records
        assert rec.near_width > 0 and rec.far_width > 0

    def test_test3_noise_hurts(self):
        cfg = default_config("test3", trials=1, snr_list=(None, 10.0), l1_comparator=False)
        res = run_test3(cfg)
        by = {(r.m, r.snr): r for r in res.records}
        for m in (1, 2, 3):
            assert by[(m, None)].rel_err < by[(m, 10.0)].rel_err
            assert by[(m, None)].realized_snr is None
        assert [by[(m, 10.0)].sparsity for m in (1, 2, 3)] == [52, 34, 39]

    def test_parallel_matches_serial(self):
        cfg = default_config("test1", trials=3, k_values=(2, 4), l1_comparator=False)
        a = run_experiment(cfg, jobs=1)
        b = run_experiment(cfg, jobs=2)
        assert [r.deterministic() for r in a.records] == [r.deterministic() for r in b.records]
        assert a.summary == b.summary

    def test_wrong_runner(self):
        with pytest.raises(ValueError):
            run_test2(default_config("test1", trials=1, k_values=(1,)))

    def test_failures_become_unsuccessful_trials(self, monkeypatch):
        from hotvbl.exceptions import NumericalError
        from hotvbl.experiments import runners

        def boom(*a, **k):
            raise NumericalError("forced")

        monkeypatch.setattr(runners, "run_sbl", boom)
        cfg = default_config("test1", trials=2, k_values=(1,), l1_comparator=False)
        res = run_test1(cfg)
        assert all(not r.success and r.status.startswith("failed") for r in res.records)
        assert res.summary["success"]["hotvbl"]["m1"]["1"]["success_probability"] == 0.0

    def test_write_results(self, tmp_path):
        cfg = default_config("test2", trials=2, snr_list=(10.0,), kinds=("constant",))
        res = run_test2(cfg)
        files = write_results(res, tmp_path)
        assert {"trials.csv", "summary.json", "timings.csv"} <= set(files)
        rows = list(csv.DictReader(open(tmp_path / "trials.csv")))
        assert len(rows) == 4
        assert "wall_time" not in rows[0]
        assert float(rows[0]["rel_err"]) == res.records[0].rel_err
        summary = json.load(open(tmp_path / "summary.json"))
        assert summary["config"]["base_seed"] == 0
        assert summary["errors"]["constant"]["snr10"]["hotvbl"]["trials"] == 2
        prof = list(csv.DictReader(open(tmp_path / "profiles" / "constant_snr10.csv")))
        assert len(prof) == 128 and {"truth", "data", "hotvbl", "lower", "upper",
                                     "l1_oracle"} <= set(prof[0])
        # a rerun writes byte-identical deterministic files
        other = tmp_path / "again"
        write_results(run_test2(cfg), other)
        for name in ("trials.csv", "summary.json"):
            assert (tmp_path / name).read_bytes() == (other / name).read_bytes()
