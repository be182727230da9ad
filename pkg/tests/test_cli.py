import json

import pytest

from saferank import load_instance
from saferank.cli import main


def write_config(tmp_path, **overrides):
    doc = {
        "instance": {"scenario": "missing_top", "model": "cm", "L": 8, "K": 4, "seed": 1},
        "T": 300,
        "runs": 2,
        "algorithms": ["klucb-br", "original"],
        "master_seed": 9,
        "checkpoint_stride": 100,
    }
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


class TestGenInstance:
    def test_writes_a_loadable_instance(self, tmp_path, capsys):
        out = tmp_path / "inst.json"
        code = main(["gen-instance", "--scenario", "missing_top", "--model", "pbm",
                     "--L", "10", "--K", "5", "--seed", "4", "--out", str(out)])
        assert code == 0
        inst = load_instance(out)
        assert inst.num_items == 10 and inst.display_size == 5
        assert str(out) in capsys.readouterr().out

    def test_bad_arguments_fail_fast(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["gen-instance", "--scenario", "nope", "--model", "pbm",
                  "--L", "10", "--K", "5", "--out", str(tmp_path / "x.json")])
        code = main(["gen-instance", "--scenario", "random", "--model", "cm",
                     "--L", "5", "--K", "5", "--out", str(tmp_path / "x.json")])
        assert code == 2


class TestRun:
    def test_run_writes_outputs(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "results"
        assert main(["run", "--config", str(config), "--out", str(out)]) == 0
        for name in ("runs.csv", "aggregate.csv", "regret.svg", "violations.svg"):
            assert (out / name).exists(), name
        assert "wrote" in capsys.readouterr().out

    def test_runs_are_byte_identical(self, tmp_path):
        config = write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(config), "--out", str(out_a)]) == 0
        assert main(["run", "--config", str(config), "--out", str(out_b)]) == 0
        assert (out_a / "runs.csv").read_bytes() == (out_b / "runs.csv").read_bytes()

    def test_overrides_apply(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "results"
        assert main(["run", "--config", str(config), "--out", str(out),
                     "--T", "100", "--runs", "1", "--algorithms", "original"]) == 0
        lines = (out / "runs.csv").read_text().strip().splitlines()
        assert lines[0] == "algorithm,seed,t,cum_regret,cum_violations"
        assert len(lines) == 2  # one run, one checkpoint
        assert lines[1].startswith("original,1,100,")

    def test_out_dir_required(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["run", "--config", str(config)]) == 2
        assert "out_dir" in capsys.readouterr().err

    def test_config_errors_exit_nonzero(self, tmp_path, capsys):
        config = write_config(tmp_path, algorithms=["nope"])
        assert main(["run", "--config", str(config), "--out", str(tmp_path / "o")]) == 2
        assert "unknown id" in capsys.readouterr().err
        missing = tmp_path / "missing-config.json"
        assert main(["run", "--config", str(missing), "--out", str(tmp_path / "o")]) == 2

    def test_stepwise_engine_matches_compiled(self, tmp_path):
        config = write_config(tmp_path, T=200)
        out_a, out_b = tmp_path / "compiled", tmp_path / "stepwise"
        assert main(["run", "--config", str(config), "--out", str(out_a),
                     "--engine", "compiled"]) == 0
        assert main(["run", "--config", str(config), "--out", str(out_b),
                     "--engine", "stepwise"]) == 0
        assert (out_a / "runs.csv").read_bytes() == (out_b / "runs.csv").read_bytes()


class TestAggregateAndPlot:
    def test_recompute_and_plot_from_runs(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "results"
        assert main(["run", "--config", str(config), "--out", str(out)]) == 0
        emitted = (out / "aggregate.csv").read_bytes()
        (out / "aggregate.csv").unlink()
        (out / "regret.svg").unlink()
        assert main(["aggregate", "--in", str(out)]) == 0
        assert (out / "aggregate.csv").read_bytes() == emitted
        assert main(["plot", "--in", str(out)]) == 0
        assert (out / "regret.svg").exists()

    def test_missing_inputs_exit_nonzero(self, tmp_path, capsys):
        assert main(["aggregate", "--in", str(tmp_path)]) == 2
        assert main(["plot", "--in", str(tmp_path)]) == 2
        assert "does not exist" in capsys.readouterr().err
