import subprocess
import sys

import pytest

from prunelab.checkpoint import load_checkpoint
from prunelab.cli import Command, main, parse_args
from prunelab.errors import InvalidValue, MissingConfig, UnknownFlag, UsageError
from prunelab.experiment import read_results

CONFIG = """
methods = ["snip", "drive"]
sparsities = [0.5]
seeds = [0, 1]
total_epochs = 2

[model]
sizes = [6, 8, 3]

[dataset]
classes = 3
dim = 6
per_class = 20
test_per_class = 10

[prune]
iterations = 3

[train]
batch_size = 16
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(CONFIG)
    return path


class TestParse:
    def test_sweep(self):
        assert parse_args(["sweep", "--config", "exp.cfg"]) == Command("sweep", config="exp.cfg")

    def test_global_flags_either_side(self):
        a = parse_args(["--seed", "3", "--quiet", "prune", "--config", "c", "--method", "snip", "--sparsity", "0.9"])
        b = parse_args(["prune", "--config", "c", "--method", "snip", "--sparsity", "0.9", "--seed", "3", "--quiet"])
        assert a == b and a.seed == 3 and a.quiet and a.sparsity == 0.9

    @pytest.mark.parametrize("value", ["1.5", "1", "-0.1", "ninety"])
    def test_bad_sparsity(self, value):
        with pytest.raises(InvalidValue):
            parse_args(["prune", "--config", "c", "--method", "drive", "--sparsity", value])

    def test_unknown_flag(self):
        with pytest.raises(UnknownFlag):
            parse_args(["sweep", "--config", "c", "--turbo"])

    def test_missing_config(self):
        with pytest.raises(MissingConfig):
            parse_args(["train"])

    def test_no_subcommand(self):
        with pytest.raises(UsageError):
            parse_args([])

    def test_report(self):
        cmd = parse_args(["report", "r.csv", "--out", "t.txt"])
        assert (cmd.name, cmd.results_path, cmd.out) == ("report", "r.csv", "t.txt")


class TestMain:
    def test_no_subcommand_prints_usage(self, capsys):
        assert main([]) == 2
        assert "usage:" in capsys.readouterr().err

    def test_bad_sparsity_exit_code(self, capsys):
        assert main(["prune", "--config", "c", "--method", "drive", "--sparsity", "1.5"]) == 2

    def test_sweep(self, config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(config), "--out-dir", str(out)]) == 0
        assert len(read_results(out / "results.csv")) == 4
        assert (out / "report.txt").exists()
        err = capsys.readouterr().err
        assert "[4/4]" in err and "Traceback" not in err

    def test_quiet_changes_no_artifacts(self, config, tmp_path, capsys):
        main(["sweep", "--config", str(config), "--out-dir", str(tmp_path / "a")])
        capsys.readouterr()
        main(["--quiet", "sweep", "--config", str(config), "--out-dir", str(tmp_path / "b")])
        assert capsys.readouterr().err == ""
        strip = lambda rs: [(r.method, r.seed, r.test_accuracy, r.achieved_sparsity) for r in rs]
        assert strip(read_results(tmp_path / "a/results.csv")) == strip(read_results(tmp_path / "b/results.csv"))

    def test_unreadable_config(self, tmp_path, capsys):
        missing = tmp_path / "nowhere.toml"
        assert main(["sweep", "--config", str(missing)]) == 1
        err = capsys.readouterr().err
        assert str(missing) in err and "Traceback" not in err

    def test_invalid_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("methods = ['magic']\n")
        assert main(["sweep", "--config", str(bad)]) == 1
        assert "ConfigError" in capsys.readouterr().err

    def test_report_on_empty_csv(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        assert main(["report", str(empty)]) == 1
        assert "EmptyResults" in capsys.readouterr().err

    def test_report(self, config, tmp_path, capsys):
        main(["--quiet", "sweep", "--config", str(config), "--out-dir", str(tmp_path)])
        assert main(["report", str(tmp_path / "results.csv"), "--out", str(tmp_path / "t.txt")]) == 0
        assert "snip" in (tmp_path / "t.txt").read_text()
        assert (tmp_path / "t.csv").exists()

    def test_train_and_prune_write_checkpoints(self, config, tmp_path):
        assert main(["--quiet", "train", "--config", str(config), "--out-dir", str(tmp_path), "--seed", "1"]) == 0
        model, opt = load_checkpoint(tmp_path / "dense-seed1.prlb")
        assert model.sparsity() == 0 and opt.t > 0
        assert main(["--quiet", "prune", "--config", str(config), "--out-dir", str(tmp_path),
                     "--method", "drive", "--sparsity", "0.75", "--seed", "1"]) == 0
        model, _ = load_checkpoint(tmp_path / "drive-0.75-seed1.prlb")
        assert model.sparsity() == pytest.approx(0.75, abs=0.02)
        assert len(read_results(tmp_path / "prune-drive-0.75.csv")) == 1

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "prunelab"], capture_output=True, text=True)
        assert out.returncode == 2 and "usage:" in out.stderr
