import numpy as np
import pytest

from udadil.cli import main
from udadil.data import (
    RunConfig,
    SyntheticSpec,
    load_dataset,
    read_labels_file,
    save_dataset,
    synth_generate,
    write_labels_file,
)
from udadil.errors import DataFormatError
from udadil.pipeline import DomainDataset


class TestCsvFormat:
    def test_plain_two_by_two(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("0,0\n1,1\n")
        ds = load_dataset(path)
        np.testing.assert_array_equal(ds.features, [[0.0, 0.0], [1.0, 1.0]])
        assert ds.truth_labels is None
        assert ds.name == "t"

    def test_label_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("f0,f1,label\n0.5,1.5,0\n2.5,3.5,1\n")
        ds = load_dataset(path)
        np.testing.assert_array_equal(ds.truth_labels, [0, 1])
        assert ds.features.shape == (2, 2)

    def test_round_trip_value_exact(self, rng, tmp_path):
        ds = DomainDataset(
            rng.normal(size=(20, 4)) * 1e3,
            rng.integers(0, 3, size=20),
            name="x",
        )
        path = tmp_path / "x.csv"
        save_dataset(ds, path)
        back = load_dataset(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.truth_labels, ds.truth_labels)

    def test_ragged_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,0\n1\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_dataset(path)

    def test_non_numeric_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,0\n1,zap\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="no such file"):
            load_dataset(tmp_path / "ghost.csv")


class TestBinaryFormat:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        ds = DomainDataset(
            rng.normal(size=(13, 5)), rng.integers(0, 4, size=13), name="b"
        )
        path = tmp_path / "b.uddl"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.features.tobytes() == ds.features.tobytes()
        np.testing.assert_array_equal(back.truth_labels, ds.truth_labels)

    def test_unlabeled_round_trip(self, rng, tmp_path):
        ds = DomainDataset(rng.normal(size=(4, 2)), None, name="b")
        path = tmp_path / "b.uddl"
        save_dataset(ds, path)
        assert load_dataset(path).truth_labels is None

    def test_bad_magic_offset_zero(self, tmp_path):
        path = tmp_path / "bad.uddl"
        path.write_bytes(b"NOPE" + b"\x00" * 30)
        with pytest.raises(DataFormatError, match="magic.*offset 0"):
            load_dataset(path)

    def test_truncated_reports_offset(self, rng, tmp_path):
        ds = DomainDataset(rng.normal(size=(10, 3)), None, name="b")
        path = tmp_path / "b.uddl"
        save_dataset(ds, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 40])
        with pytest.raises(DataFormatError, match="truncated at offset"):
            load_dataset(path)

    def test_truncated_inside_header(self, tmp_path):
        path = tmp_path / "b.uddl"
        path.write_bytes(b"UDDL" + b"\x01\x00\x00\x00" + b"\x00" * 12)
        with pytest.raises(DataFormatError, match="truncated"):
            load_dataset(path)

    def test_trailing_bytes_rejected(self, rng, tmp_path):
        ds = DomainDataset(rng.normal(size=(3, 2)), None, name="b")
        path = tmp_path / "b.uddl"
        save_dataset(ds, path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(DataFormatError, match="trailing"):
            load_dataset(path)


class TestConfigs:
    def test_run_config_round_trip(self, tmp_path):
        cfg = RunConfig(n_clusters=5, epsilon=0.125, beta="auto", lr=0.07)
        path = tmp_path / "run.cfg"
        cfg.save(path)
        assert RunConfig.load(path) == cfg

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("n_clusters = 3\nwarp_speed = 9\n")
        with pytest.raises(DataFormatError, match="warp_speed"):
            RunConfig.load(path)

    def test_invalid_counts_rejected(self):
        with pytest.raises(ValueError, match="n_clusters"):
            RunConfig(n_clusters=0)

    def test_synthetic_spec_round_trip(self, tmp_path):
        spec = SyntheticSpec(n_domains=4, noise_sigma=0.25, seed=9)
        path = tmp_path / "synth.cfg"
        spec.save(path)
        assert SyntheticSpec.load(path) == spec

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# a comment\n\nn_clusters = 6  # inline\n")
        assert RunConfig.load(path).n_clusters == 6


class TestSynthGenerate:
    def test_balanced_labels(self):
        spec = SyntheticSpec(n_domains=2, n_clusters=3, d=4, points_per_cluster=7)
        for ds in synth_generate(spec):
            assert ds.n_points == 21
            np.testing.assert_array_equal(
                np.bincount(ds.truth_labels), [7, 7, 7]
            )

    def test_zero_shift_identical_domains(self):
        spec = SyntheticSpec(
            n_domains=3, translation_scale=0.0, rotation_scale=0.0
        )
        domains = synth_generate(spec)
        for other in domains[1:]:
            np.testing.assert_array_equal(other.features, domains[0].features)

    def test_zero_noise_repeats_means(self):
        spec = SyntheticSpec(
            n_domains=1, n_clusters=2, points_per_cluster=5, noise_sigma=0.0,
            translation_scale=0.0, rotation_scale=0.0,
        )
        [ds] = synth_generate(spec)
        for c in range(2):
            block = ds.features[ds.truth_labels == c]
            assert np.unique(block, axis=0).shape[0] == 1

    def test_separation_respected(self):
        spec = SyntheticSpec(n_clusters=5, d=6, cluster_separation=3.0)
        [ds] = synth_generate(SyntheticSpec(**{**spec.__dict__, "n_domains": 1}))
        means = np.stack(
            [ds.features[ds.truth_labels == c].mean(0) for c in range(5)]
        )
        # rigid transforms preserve pairwise distances; mean estimates add noise
        d = np.sqrt(((means[:, None] - means[None]) ** 2).sum(-1))
        assert d[np.triu_indices(5, 1)].min() > 3.0 - 1.0

    def test_impossible_separation_errors(self):
        with pytest.raises(ValueError, match="10000 attempts"):
            synth_generate(
                SyntheticSpec(n_clusters=40, d=1, cluster_separation=100.0)
            )


class TestLabelsFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "labels.txt"
        write_labels_file(np.array([0, 2, 1]), path)
        np.testing.assert_array_equal(read_labels_file(path), [0, 2, 1])

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("0\nbanana\n")
        with pytest.raises(DataFormatError, match="line 2"):
            read_labels_file(path)


@pytest.fixture
def synth_setup(tmp_path):
    spec_path = tmp_path / "synth.cfg"
    SyntheticSpec(
        n_domains=3, n_clusters=3, d=4, points_per_cluster=20,
        cluster_separation=5.0, translation_scale=1.0, rotation_scale=0.3,
        noise_sigma=0.6, seed=3,
    ).save(spec_path)
    cfg_path = tmp_path / "run.cfg"
    RunConfig(
        n_clusters=3, rounds=1, n_iter=10, batch_size=12, n_atom=18, seed=3
    ).save(cfg_path)
    return tmp_path, spec_path, cfg_path


class TestCli:
    def test_full_round_trip(self, synth_setup, capsys):
        tmp, spec_path, cfg_path = synth_setup
        assert main(["synth", "--spec", str(spec_path), "--out-dir", str(tmp / "data")]) == 0
        files = sorted((tmp / "data").glob("*.csv"))
        assert len(files) == 3

        model = tmp / "model.npz"
        code = main([
            "train", str(files[0]), str(files[1]),
            "--out", str(model), "--config", str(cfg_path),
        ])
        assert code == 0
        assert model.exists()
        assert (tmp / "model.npz.log.json").exists()

        labels = tmp / "target_labels.txt"
        code = main([
            "infer", "--model", str(model), "--target", str(files[2]),
            "--out", str(labels), "--seed", "3",
        ])
        assert code == 0
        assert labels.exists()
        assert (tmp / "target_labels.txt.alpha.txt").exists()

        report = tmp / "report.csv"
        code = main([
            "evaluate",
            "--domain", "target", str(labels), str(files[2]),
            "--out", str(report),
        ])
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "domain,n_points,ari,accuracy"
        assert len(lines) == 3

    def test_baseline_kmeans(self, synth_setup):
        tmp, spec_path, _ = synth_setup
        main(["synth", "--spec", str(spec_path), "--out-dir", str(tmp / "d")])
        files = sorted((tmp / "d").glob("*.csv"))
        out = tmp / "km.txt"
        assert main([
            "baseline-kmeans", "--data", str(files[0]), "--k", "3",
            "--out", str(out), "--seed", "1",
        ]) == 0
        assert read_labels_file(out).size == 60

    def test_evaluate_length_mismatch_exits_2(self, tmp_path, capsys):
        p1 = tmp_path / "pred.txt"
        p2 = tmp_path / "truth.txt"
        write_labels_file([0, 1], p1)
        write_labels_file([0, 1, 1], p2)
        code = main(["evaluate", "--domain", "d", str(p1), str(p2)])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_flag_exits_1(self, capsys):
        assert main(["synth", "--warp", "9"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand_exits_1(self, capsys):
        assert main([]) == 1

    def test_missing_file_exits_2(self, tmp_path, capsys):
        assert main([
            "baseline-kmeans", "--data", str(tmp_path / "ghost.csv"),
            "--k", "2", "--out", str(tmp_path / "o.txt"),
        ]) == 2

    def test_benchmark_rows_per_heldout_domain(self, synth_setup, capsys):
        tmp, spec_path, cfg_path = synth_setup
        out = tmp / "bench.csv"
        code = main([
            "benchmark", "--spec", str(spec_path), "--config", str(cfg_path),
            "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("heldout,")
        assert len(lines) == 5  # 3 domains + header + mean
        assert lines[-1].startswith("mean,")

    def test_benchmark_on_user_csvs(self, synth_setup):
        tmp, spec_path, cfg_path = synth_setup
        main(["synth", "--spec", str(spec_path), "--out-dir", str(tmp / "u")])
        files = sorted(str(p) for p in (tmp / "u").glob("*.csv"))
        out = tmp / "bench.csv"
        code = main([
            "benchmark", "--data", *files, "--config", str(cfg_path),
            "--out", str(out),
        ])
        assert code == 0
        assert len(out.read_text().strip().splitlines()) == 5

    def test_binary_format_flow(self, synth_setup):
        tmp, spec_path, cfg_path = synth_setup
        assert main([
            "synth", "--spec", str(spec_path), "--out-dir", str(tmp / "bin"),
            "--format", "binary-matrix",
        ]) == 0
        files = sorted((tmp / "bin").glob("*.uddl"))
        assert len(files) == 3
        model = tmp / "bin_model.npz"
        assert main([
            "train", str(files[0]), str(files[1]),
            "--out", str(model), "--config", str(cfg_path),
        ]) == 0
        labels = tmp / "bin_labels.txt"
        assert main([
            "infer", "--model", str(model), "--target", str(files[2]),
            "--out", str(labels),
        ]) == 0
        assert read_labels_file(labels).size == 60

    def test_version_flag(self, capsys):
        assert main(["--version"]) == 0
        assert "udadil" in capsys.readouterr().out

    def test_benchmark_unlabeled_data_exits_2(self, tmp_path, capsys):
        files = []
        for i in range(3):
            p = tmp_path / f"d{i}.csv"
            p.write_text("0,0\n1,1\n2,2\n")
            files.append(str(p))
        assert main(["benchmark", "--data", *files]) == 2
        assert "ground-truth" in capsys.readouterr().err

    def test_cli_determinism(self, synth_setup):
        tmp, spec_path, cfg_path = synth_setup
        main(["synth", "--spec", str(spec_path), "--out-dir", str(tmp / "d1")])
        main(["synth", "--spec", str(spec_path), "--out-dir", str(tmp / "d2")])
        f1 = sorted((tmp / "d1").glob("*.csv"))
        f2 = sorted((tmp / "d2").glob("*.csv"))
        assert [p.read_bytes() for p in f1] == [p.read_bytes() for p in f2]

        m1, m2 = tmp / "m1.npz", tmp / "m2.npz"
        for m in (m1, m2):
            main([
                "train", str(f1[0]), str(f1[1]),
                "--out", str(m), "--config", str(cfg_path),
            ])
        assert m1.read_bytes() == m2.read_bytes()
