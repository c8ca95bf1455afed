from pathlib import Path

import pytest

from semwalk.cli import dispatch


def tree_bytes(root: Path) -> dict:
    return {
        p.relative_to(root): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def gen(tmp_path, name, seed=3, extra=()):
    out = tmp_path / name
    argv = [
        "gen-synthetic", "--out", str(out), "--clusters", "3",
        "--points", "9", "--dim", "4", "--persons", "3",
        "--rows-per-video", "6", "--seed", str(seed), *extra,
    ]
    assert dispatch(argv) == 0
    return out


class TestGenSynthetic:
    def test_same_seed_identical_trees(self, tmp_path):
        a = gen(tmp_path, "a", seed=7)
        b = gen(tmp_path, "b", seed=7)
        assert tree_bytes(a) == tree_bytes(b)

    def test_different_seed_differs(self, tmp_path):
        a = gen(tmp_path, "a", seed=7)
        b = gen(tmp_path, "b", seed=8)
        assert tree_bytes(a) != tree_bytes(b)


class TestEvaluate:
    def _evaluate(self, data, out, extra=()):
        return dispatch(
            [
                "evaluate",
                "--manifest", str(data / "manifest.tsv"),
                "--taxonomy", str(data / "taxonomy.tsv"),
                "--mode", "as", "--method", "sembed",
                "--encoding", "bow", "--gamma", "4",
                "--fraction", "0.5", "--seed", "2",
                "--out", str(out), *extra,
            ]
        )

    def test_writes_report_and_prints_accuracy(self, tmp_path, capsys):
        data = gen(tmp_path, "data")
        capsys.readouterr()  # drop gen-synthetic's own output
        out = tmp_path / "report.txt"
        assert self._evaluate(data, out) == 0
        printed = capsys.readouterr().out
        assert printed.startswith("accuracy=")
        assert out.exists()
        text = out.read_text(encoding="utf-8")
        assert text.startswith("method=sembed\nmode=as\n")

    def test_byte_identical_reruns(self, tmp_path):
        data = gen(tmp_path, "data")
        out1, out2 = tmp_path / "r1.txt", tmp_path / "r2.txt"
        assert self._evaluate(data, out1) == 0
        assert self._evaluate(data, out2) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_out_rejected(self, tmp_path, capsys):
        data = gen(tmp_path, "data")
        code = dispatch(
            [
                "evaluate", "--manifest", str(data / "manifest.tsv"),
                "--taxonomy", str(data / "taxonomy.tsv"), "--mode", "as",
            ]
        )
        assert code != 0
        assert "--out" in capsys.readouterr().err

    def test_sample_flag_limits_dataset(self, tmp_path):
        data = gen(tmp_path, "data")
        out = tmp_path / "report.txt"
        code = dispatch(
            [
                "evaluate", "--manifest", str(data / "manifest.tsv"),
                "--taxonomy", str(data / "taxonomy.tsv"), "--mode", "as",
                "--method", "knn", "--encoding", "bow", "--gamma", "4",
                "--fraction", "0.5", "--sample", "18", "--seed", "2",
                "--out", str(out),
            ]
        )
        assert code == 0
        records = [
            ln
            for ln in out.read_text(encoding="utf-8").splitlines()
            if ln.startswith("record\t")
        ]
        assert len(records) == 18

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        data = gen(tmp_path, "data")
        config = tmp_path / "run.cfg"
        config.write_text(
            "mode=as\nmethod=knn\nencoding=bow\ngamma=4\nfraction=0.5\n"
            "k=3\nseed=2\n",
            encoding="utf-8",
        )
        out = tmp_path / "report.txt"
        code = dispatch(
            [
                "evaluate", "--manifest", str(data / "manifest.tsv"),
                "--taxonomy", str(data / "taxonomy.tsv"),
                "--config", str(config), "--k", "1", "--out", str(out),
            ]
        )
        assert code == 0
        header = out.read_text(encoding="utf-8").splitlines()
        assert "k=1" in header  # flag wins over config file's k=3
        assert "method=knn" in header  # config fills what flags omit


class TestClassifyFlow:
    def test_encode_build_classify_round_trip(self, tmp_path, capsys):
        data = gen(tmp_path, "data")
        model = tmp_path / "model.txt"
        graph_file = tmp_path / "graph.txt"
        manifest = str(data / "manifest.tsv")
        taxonomy = str(data / "taxonomy.tsv")
        assert dispatch(
            [
                "encode", "--manifest", manifest, "--encoding", "bow",
                "--gamma", "4", "--fraction", "0.5", "--seed", "1",
                "--out", str(model),
            ]
        ) == 0
        assert dispatch(
            [
                "build-graph", "--manifest", manifest, "--taxonomy", taxonomy,
                "--mode", "as", "--model", str(model), "--m", "40",
                "--out", str(graph_file),
            ]
        ) == 0
        out = tmp_path / "predictions.tsv"
        assert dispatch(
            [
                "classify", "--graph", str(graph_file), "--manifest", manifest,
                "--model", str(model), "--queries", manifest,
                "--taxonomy", taxonomy, "--z", "3", "--t", "2",
                "--out", str(out), "--distributions",
            ]
        ) == 0
        lines = out.read_text(encoding="utf-8").strip().split("\n")
        assert len(lines) == 27
        first = lines[0].split("\t")
        assert first[0] == "seg0000"
        assert first[1] == first[2]  # training video classifies to itself
        assert 0.0 < float(first[3]) <= 1.0
        assert ":" in first[4]

    def test_classify_missing_graph_names_flag(self, tmp_path, capsys):
        code = dispatch(["classify", "--manifest", "x.tsv", "--model", "m.txt"])
        assert code == 2
        assert "--graph" in capsys.readouterr().err

    def test_classify_mode_conflict(self, tmp_path, capsys):
        data = gen(tmp_path, "data")
        model = tmp_path / "model.txt"
        graph_file = tmp_path / "graph.txt"
        manifest = str(data / "manifest.tsv")
        dispatch(
            [
                "encode", "--manifest", manifest, "--encoding", "bow",
                "--gamma", "4", "--fraction", "0.5", "--out", str(model),
            ]
        )
        dispatch(
            [
                "build-graph", "--manifest", manifest, "--mode", "verb",
                "--model", str(model), "--out", str(graph_file),
            ]
        )
        code = dispatch(
            [
                "classify", "--graph", str(graph_file), "--manifest", manifest,
                "--model", str(model), "--queries", manifest, "--mode", "ah",
                "--taxonomy", str(data / "taxonomy.tsv"),
            ]
        )
        assert code == 2
        assert "conflicts" in capsys.readouterr().err


class TestSweep:
    def test_sweep_table(self, tmp_path, capsys):
        data = gen(tmp_path, "data")
        capsys.readouterr()  # drop gen-synthetic's own output
        code = dispatch(
            [
                "sweep", "--manifest", str(data / "manifest.tsv"),
                "--taxonomy", str(data / "taxonomy.tsv"), "--mode", "as",
                "--method", "sembed", "--encoding", "bow", "--gamma", "4",
                "--fraction", "0.5", "--z", "1,2", "--t", "0,2", "--seed", "2",
            ]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert lines[0] == "z\tt\tm\tgamma\tk\taccuracy"
        assert len(lines) == 5

    def test_sweep_without_grid_rejected(self, tmp_path, capsys):
        data = gen(tmp_path, "data")
        code = dispatch(
            [
                "sweep", "--manifest", str(data / "manifest.tsv"),
                "--taxonomy", str(data / "taxonomy.tsv"), "--mode", "as",
            ]
        )
        assert code == 2
        assert "--z" in capsys.readouterr().err


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        assert dispatch(["transmogrify"]) != 0

    def test_unknown_flag(self, capsys):
        assert dispatch(["evaluate", "--bogus", "1"]) != 0

    def test_mode_validation(self, tmp_path, capsys):
        data = gen(tmp_path, "data")
        code = dispatch(
            [
                "evaluate", "--manifest", str(data / "manifest.tsv"),
                "--mode", "nope", "--out", str(tmp_path / "r.txt"),
            ]
        )
        assert code == 2
        assert "--mode" in capsys.readouterr().err

    def test_runtime_error_is_one_line(self, tmp_path, capsys):
        code = dispatch(
            ["evaluate", "--manifest", str(tmp_path / "missing.tsv"),
             "--out", str(tmp_path / "r.txt")]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("semwalk: error:")
        assert err.count("\n") == 1
