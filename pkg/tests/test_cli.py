import csv
import json

import numpy as np
import pytest

from awi_dsa import cli
from awi_dsa.cli import EXIT_FAILED, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, RESULT_COLUMNS, main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSimulate:
    def test_paper_bound_rows(self, tmp_path):
        out = tmp_path / "r.csv"
        rc = main(["simulate", "--systems", "system-1", "--seed", "7", "--runs", "20",
                   "--horizon", "10", "--policy", "myopic,awi0,awi2,random", "--out", str(out)])
        assert rc == EXIT_OK
        raw = out.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")
        rows = read_csv(out)
        assert tuple(rows[0]) == RESULT_COLUMNS
        assert [(r["policy"], r["n_iter"]) for r in rows] == [
            ("myopic", ""), ("awi", "0"), ("awi", "2"), ("random", "")]
        for r in rows:
            assert float(r["beta"]) == pytest.approx(0.2304, abs=1e-4)
            assert (r["runs"], r["horizon"], r["seed"]) == ("20", "10", "7")
            assert float(r["std_err"]) >= 0
        curve = read_csv(str(out) + ".curve.csv")
        assert len(curve) == 4 * 10
        last = [c for c in curve if c["t"] == "10"]
        assert [float(c["mean_return"]) for c in last] == pytest.approx([float(r["mean_return"]) for r in rows])

    def test_byte_identical_reruns(self, tmp_path):
        args = ["simulate", "--systems", "system-2", "--seed", "99", "--runs", "30", "--horizon", "15",
                "--policy", "myopic,awi2"]
        a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
        assert main(args + ["--out", str(a)]) == EXIT_OK
        assert main(args + ["--out", str(b)]) == EXIT_OK
        assert main(args + ["--out", str(c), "--threads", "4"]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes() == c.read_bytes()
        curves = [open(str(p) + ".curve.csv", "rb").read() for p in (a, b, c)]
        assert curves[0] == curves[1] == curves[2]

    def test_single_run(self, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"{k}.csv"
            assert main(["simulate", "--systems", "system-4", "--seed", "5", "--runs", "1",
                         "--out", str(out)]) == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert {r["std_err"] for r in read_csv(tmp_path / "0.csv")} == {"0"}

    def test_stdout(self, capsys):
        assert main(["simulate", "--systems", "system-3", "--seed", "1", "--runs", "5",
                     "--horizon", "5", "--beta", "0.5,0.9"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == ",".join(RESULT_COLUMNS)
        assert len(lines) == 1 + 2 * 2

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "e.json"
        cfg.write_text(json.dumps({
            "version": 1,
            "systems": [{"name": "tiny", "channels": [
                {"p01": 0.2, "p11": 0.8, "obs": [[0.9, 0.1], [0.1, 0.9]]},
                {"p01": 0.3, "p11": 0.6, "obs": [[0.9, 0.1], [0.1, 0.9]]}]}],
            "policies": ["awi:1"], "betas": [0.5], "runs": 8, "horizon": 6,
            "output": {"path": str(tmp_path / "from_config.csv"), "emit_trace": True},
        }))
        assert main(["simulate", "--config", str(cfg), "--seed", "3"]) == EXIT_OK
        rows = read_csv(tmp_path / "from_config.csv")
        assert [(r["system"], r["policy"], r["n_iter"]) for r in rows] == [("tiny", "awi", "1")]
        trace = json.loads((tmp_path / "from_config.csv.trace.json").read_text())
        assert len(trace) == 1 and trace[0]["run_id"] == 0
        assert np.array(trace[0]["actions"]).shape == (6, 2)

    def test_seed_is_required(self, capsys):
        with pytest.raises(SystemExit) as ei:
            main(["simulate", "--systems", "system-1"])
        assert ei.value.code == EXIT_USAGE

    @pytest.mark.parametrize("extra", [
        ["--beta", "1.5"], ["--policy", "awi12"], ["--systems", "system-8"], ["--runs", "0"],
    ])
    def test_bad_arguments(self, extra, capsys):
        assert main(["simulate", "--seed", "1"] + extra) == EXIT_USAGE
        assert capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{\n  "version": 1,\n  "systems": [],\n  "policies": ["myopic"],\n  "betas": [0.5]\n}\n')
        assert main(["simulate", "--config", str(cfg), "--seed", "1"]) == EXIT_USAGE
        assert f"{cfg}:3:" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path):
        out = tmp_path / "missing" / "r.csv"
        assert main(["simulate", "--systems", "system-1", "--seed", "1", "--runs", "2",
                     "--horizon", "2", "--out", str(out)]) == EXIT_RUNTIME


class TestIndex:
    def test_uninformative_equals_belief(self, tmp_path):
        out = tmp_path / "i.csv"
        rc = main(["index", "--p01", "0.2", "--p11", "0.7", "--obs", "0.5,0.5;0.5,0.5",
                   "--beta", "0.6", "--iters", "3", "--out", str(out)])
        assert rc == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 101
        for r in rows:
            assert float(r["index_value"]) == pytest.approx(float(r["omega"]), abs=1e-12)

    def test_two_point_grid(self, capsys):
        assert main(["index", "--preset", "system-1", "--channel", "1", "--grid", "2"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "omega,index_value,kind"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "1"]

    def test_depth_gap_within_decay_bound(self, tmp_path):
        from awi_dsa.index import _index_terms
        from awi_dsa.presets import preset_channels

        beta = 0.2304
        ch = preset_channels("system-1")[3]
        curves = {}
        for n in (0, 2):
            out = tmp_path / f"n{n}.csv"
            assert main(["index", "--preset", "system-1", "--channel", "4", "--beta", str(beta),
                         "--iters", str(n), "--grid", "51", "--out", str(out)]) == EXIT_OK
            curves[n] = np.array([float(r["index_value"]) for r in read_csv(out)])
        grid = np.linspace(0.0, 1.0, 51)
        A = np.zeros_like(grid)
        for n in (0, 1):
            num, den = _index_terms(ch, beta, grid, n)
            _, den_next = _index_terms(ch, beta, grid, n + 1)
            A = np.maximum(A, 2 * beta * (1 + np.abs(num / den) / (1 - beta)) / np.abs(den_next))
        A *= ch.throughput
        gap = np.abs(curves[2] - curves[0])
        assert np.all(gap <= A * (beta + beta**2) + 1e-12)

    def test_fallback_is_labelled(self, capsys):
        main(["index", "--p01", "0.2", "--p11", "0.9", "--beta", "0.9", "--grid", "201"])
        kinds = {ln.split(",")[2] for ln in capsys.readouterr().out.splitlines()[1:]}
        assert kinds <= {"approx_whittle", "fallback_myopic"}

    @pytest.mark.parametrize("argv", [
        ["index", "--preset", "system-1"],
        ["index", "--preset", "system-1", "--channel", "8"],
        ["index", "--p01", "0.2"],
        ["index", "--p01", "0.2", "--p11", "0.7", "--grid", "1"],
        ["index", "--p01", "0.2", "--p11", "0.7", "--iters", "9"],
        ["index", "--p01", "0.2", "--p11", "0.7", "--obs", "0.5,x"],
    ])
    def test_usage_errors(self, argv, capsys):
        assert main(argv) == EXIT_USAGE


class TestValidate:
    def test_crossing_suite_passes(self, tmp_path):
        out = tmp_path / "v.json"
        assert main(["validate", "--suite", "crossing", "--seed", "1", "--budget", "0.05",
                     "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["suite"] == "crossing" and doc["passed"] is True

    def test_failure_exit_code(self, monkeypatch, capsys):
        from awi_dsa.validation import PropertyResult, SuiteReport

        def failing(name, seed, budget):
            p = PropertyResult("always_fails")
            p.record(1.0, tol=0.0)
            return SuiteReport(name, seed, budget, [p], 0.0)

        monkeypatch.setattr(cli, "run_suite", failing)
        assert main(["validate", "--suite", "lemmas"]) == EXIT_FAILED
        assert json.loads(capsys.readouterr().out)["passed"] is False

    def test_bad_budget(self):
        assert main(["validate", "--suite", "lemmas", "--budget", "0"]) == EXIT_USAGE


class TestHelpers:
    def test_fmt_round_trips(self):
        for x in (0.1, 1 / 3, 0.2304, 1e-300, 12345.678):
            assert float(cli.fmt(x)) == x

    def test_write_atomic_replaces(self, tmp_path):
        p = tmp_path / "f.txt"
        p.write_text("old")
        cli.write_atomic(p, "new\n")
        assert p.read_text() == "new\n"
        assert sorted(x.name for x in tmp_path.iterdir()) == ["f.txt"]
