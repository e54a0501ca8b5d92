"""End-to-end smoke tests for the sccv command line."""
import numpy as np
import pytest

from sccv.dataset import load_dataset
from sccv.pipeline.cli import main
from sccv.traceio import decode_record, read_frames

TABLE_TEXT = "0 exit\n1 fork\n2 read\n3 write\n4 open\n5 close\n"


@pytest.fixture()
def table_file(tmp_path):
    p = tmp_path / "table.txt"
    p.write_text(TABLE_TEXT, encoding="utf-8")
    return str(p)


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


class TestBasics:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("sccv ")

    def test_config_echo_line(self, capsys, tmp_path, table_file):
        rc, out, _ = run(capsys, "gen", "--out", str(tmp_path / "ds"),
                         "--table", table_file, "--windows-per-class", "4",
                         "--window", "4", "--profiles", str(write_profiles(
                             tmp_path)))
        assert rc == 0
        first = out.splitlines()[0]
        assert first.startswith("config gen {")
        assert '"seed": 0' in first

    def test_unknown_command_exits_nonzero(self, capsys):
        with pytest.raises(SystemExit):
            main(["frobnicate"])


def write_profiles(tmp_path):
    text = (
        "profile looper\n"
        "state busy dwell 3 rate 40 mix read:0.5,write:0.3,open:0.2\n"
        "state idle dwell 2 rate 10 mix close:0.6,exit:0.4\n"
        "end\n"
        "profile forker malicious\n"
        "state spawn dwell 2 rate 30 mix fork:0.7,exit:0.3\n"
        "end\n")
    p = tmp_path / "profiles.txt"
    p.write_text(text, encoding="utf-8")
    return p


class TestGen:
    def test_writes_datasets_and_profiles(self, capsys, tmp_path, table_file):
        out_dir = tmp_path / "ds"
        rc, out, _ = run(capsys, "gen", "--out", str(out_dir),
                         "--table", table_file,
                         "--profiles", str(write_profiles(tmp_path)),
                         "--windows-per-class", "6", "--window", "4")
        assert rc == 0
        train = load_dataset(out_dir / "train")
        test = load_dataset(out_dir / "test")
        assert train.class_names == ["looper", "forker"]
        assert train.window == 4 and train.dim == 6
        assert len(train) + len(test) == 12
        assert (out_dir / "profiles.txt").is_file()

    def test_deterministic_across_runs(self, capsys, tmp_path, table_file):
        prof = str(write_profiles(tmp_path))
        args = ["--table", table_file, "--profiles", prof,
                "--windows-per-class", "6", "--window", "4", "--seed", "3"]
        run(capsys, "gen", "--out", str(tmp_path / "a"), *args)
        run(capsys, "gen", "--out", str(tmp_path / "b"), *args)
        a = load_dataset(tmp_path / "a" / "train")
        b = load_dataset(tmp_path / "b" / "train")
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
        c_dir = str(tmp_path / "c")
        run(capsys, "gen", "--out", c_dir, "--table", table_file,
            "--profiles", prof, "--windows-per-class", "6", "--window", "4",
            "--seed", "4")
        c = load_dataset(tmp_path / "c" / "train")
        assert not np.array_equal(a.X, c.X)


class TestAggregate:
    def test_worked_example_counts(self, capsys, tmp_path, table_file):
        """The two sequences whose count vectors are known by hand."""
        seq1 = ["fork", "open", "read", "write", "read", "write", "read"]
        seq2 = ["exit", "read", "write", "write", "close"]
        lines = []
        for i, name in enumerate(seq1):
            ts = 100_000_000 * (i + 1)
            lines.append(f"{ts}\thostA\t41\tproc-a\t{name}")
        for i, name in enumerate(seq2):
            ts = 1_000_000_000 + 150_000_000 * (i + 1)
            lines.append(f"{ts}\thostA\t41\tproc-a\t{name}")
        trace = tmp_path / "trace.txt"
        trace.write_text("\n".join(lines) + "\n", encoding="utf-8")
        records = tmp_path / "records.bin"
        rc, out, _ = run(capsys, "aggregate", "--trace", str(trace),
                         "--out", str(records), "--table", table_file)
        assert rc == 0
        assert "aggregate wrote 2 records" in out
        vecs = [decode_record(f, 6) for f in read_frames(records)]
        assert np.array_equal(vecs[0].counts, [0, 1, 3, 2, 1, 0])
        assert np.array_equal(vecs[1].counts, [1, 0, 1, 2, 0, 1])

    def test_missing_trace_errors(self, capsys, tmp_path, table_file):
        rc, _, err = run(capsys, "aggregate", "--trace",
                         str(tmp_path / "nope.txt"),
                         "--out", str(tmp_path / "r.bin"),
                         "--table", table_file)
        assert rc == 1
        assert "error:" in err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One tiny gen+train pipeline shared by the eval/detect tests."""
    import contextlib
    import io as _io
    root = tmp_path_factory.mktemp("cli-train")
    (root / "table.txt").write_text(TABLE_TEXT, encoding="utf-8")
    prof = write_profiles(root)
    buf = _io.StringIO()
    with contextlib.redirect_stdout(buf):
        assert main(["gen", "--out", str(root / "ds"), "--table",
                     str(root / "table.txt"), "--profiles", str(prof),
                     "--windows-per-class", "24", "--window", "6"]) == 0
        assert main(["train", "--data", str(root / "ds" / "train"),
                     "--out", str(root / "model.ckpt"), "--hidden", "8",
                     "--epochs", "6", "--batch", "16", "--lr", "0.01"]) == 0
    return root


class TestTrainEvalDetect:
    def test_train_wrote_checkpoint(self, trained):
        from sccv.ml import load_checkpoint
        params, config, names = load_checkpoint(trained / "model.ckpt")
        assert names == ["looper", "forker"]
        assert config.H == 8 and config.D == 6

    def test_eval_reports_models(self, capsys, trained):
        rc, out, _ = run(capsys, "eval",
                         "--data", str(trained / "ds" / "test"),
                         "--ckpt", str(trained / "model.ckpt"),
                         "--train", str(trained / "ds" / "train"))
        assert rc == 0
        assert "Logistic regression" in out
        assert "Simple LSTM" in out
        assert "precision" in out and "recall" in out

    def test_eval_rejects_mismatched_checkpoint(self, capsys, trained,
                                                tmp_path, table_file):
        # a dataset with a different D
        other_table = tmp_path / "t2.txt"
        other_table.write_text(TABLE_TEXT + "6 mmap\n", encoding="utf-8")
        prof = write_profiles(tmp_path)
        run(capsys, "gen", "--out", str(tmp_path / "ds7"), "--table",
            str(other_table), "--profiles", str(prof),
            "--windows-per-class", "4", "--window", "4")
        rc, _, err = run(capsys, "eval",
                         "--data", str(tmp_path / "ds7" / "test"),
                         "--ckpt", str(trained / "model.ckpt"))
        assert rc == 1
        assert "D=6" in err

    def test_detect_over_records(self, capsys, trained, tmp_path):
        from sccv.core import parse_syscall_table
        from sccv.synth import generate_events
        from sccv.synth import parse_profiles
        table = parse_syscall_table(TABLE_TEXT)
        profiles = parse_profiles(write_profiles(tmp_path).read_text("utf-8"),
                                  table)
        events = generate_events(profiles[0], "edge", 9, 30,
                                 1_000_000_000, seed=2)
        from sccv.traceio import write_trace
        trace = tmp_path / "t.txt"
        write_trace(trace, events, table)
        records = tmp_path / "r.bin"
        run(capsys, "aggregate", "--trace", str(trace), "--out", str(records),
            "--table", str(trained / "table.txt"))
        rc, out, _ = run(capsys, "detect", "--records", str(records),
                         "--ckpt", str(trained / "model.ckpt"),
                         "--window", "6", "--out",
                         str(tmp_path / "alerts.txt"))
        assert rc == 0
        assert "detect classified 25 windows" in out

    def test_detect_missing_records_errors(self, capsys, trained, tmp_path):
        rc, _, err = run(capsys, "detect", "--records",
                         str(tmp_path / "nope.bin"),
                         "--ckpt", str(trained / "model.ckpt"))
        assert rc == 1
        assert "error:" in err
