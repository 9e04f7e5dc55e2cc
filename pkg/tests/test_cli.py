import json
import os

import pytest

from molga.cli import (
    ConfigError,
    bundled_reference_path,
    determinism_hash,
    main,
    parse_config,
    run_task,
)
from molga.props import EmptyReference
from molga.reference import load_reference, synthetic_reference


class TestConfig:
    def test_defaults_materialized(self):
        cfg = parse_config({})
        assert cfg["task"] == "unconstrained"
        assert cfg["population_size"] == 500
        assert cfg["adaptive"]["window"] == 20
        assert cfg["constrained"]["delta"] == 0.4

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"populaton_size": 10})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"adaptive": {"widnow": 5}})

    def test_unknown_task_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"task": "nope"})

    def test_round_trip_idempotent(self):
        cfg = parse_config({"population_size": 64, "beta": 5.0})
        again = parse_config(json.loads(json.dumps(cfg)))
        assert again == cfg

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            parse_config({"population_size": 0})
        with pytest.raises(ConfigError):
            parse_config({"threads": 0})
        with pytest.raises(ConfigError):
            parse_config({"constrained": {"delta": 1.5}})
        with pytest.raises(ConfigError):
            parse_config({"beta_sweep": {"betas": []}})
        with pytest.raises(ConfigError):
            parse_config({"seed": "abc"})


class TestReferenceLoading:
    def test_bundled_reference(self):
        ref, report = load_reference(bundled_reference_path())
        assert report.n_usable >= 0.95 * report.n_lines
        assert report.n_usable == 1000
        assert len(report.failures) == report.n_failed

    def test_unusable_file_raises(self, tmp_path):
        path = tmp_path / "bad.smi"
        path.write_text("\n".join(["C[N+](C)(C)C"] * 200))
        with pytest.raises(EmptyReference):
            load_reference(str(path))

    def test_small_file_raises(self, tmp_path):
        path = tmp_path / "small.smi"
        path.write_text("CCC\nCCO\n")
        with pytest.raises(EmptyReference):
            load_reference(str(path))

    def test_synthetic_mode_statistics(self):
        ref = synthetic_reference(120, seed=0)
        assert len(ref) == 120
        assert ref.prop_stats.logp_std > 0
        assert ref.prop_stats.sa_std > 0
        for g in ref.graphs:
            assert 10 <= len(g.canonical()) <= 81

    def test_missing_reference_file(self):
        with pytest.raises(ConfigError):
            run_task(parse_config({"reference": "/does/not/exist.smi"}), None)


class TestDeterminismHash:
    def test_timing_excluded(self):
        a = {"config": {"x": 1}, "result": [1, 2], "timing": {"wall_seconds": 1.0}}
        b = {"config": {"x": 1}, "result": [1, 2], "timing": {"wall_seconds": 9.9}}
        assert determinism_hash(a) == determinism_hash(b)

    def test_result_included(self):
        a = {"result": [1, 2]}
        b = {"result": [1, 3]}
        assert determinism_hash(a) != determinism_hash(b)


def _run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestSubcommands:
    def test_decode(self, capsys):
        code, out, _ = _run_cli(["decode", "[C][C][C]"], capsys)
        assert code == 0
        assert out.strip() == "CCC"

    def test_decode_bad_genotype(self, capsys):
        code, _, err = _run_cli(["decode", "[C][Nope]"], capsys)
        assert code == 1
        assert "unknown symbol" in err

    def test_encode_roundtrip(self, capsys):
        code, out, _ = _run_cli(["encode", "CCO"], capsys)
        assert code == 0
        code2, out2, _ = _run_cli(["decode", out.strip()], capsys)
        assert code2 == 0
        assert out2.strip() == "CCO"

    def test_encode_rejects_unsupported(self, capsys):
        code, _, err = _run_cli(["encode", "C[NH3+]"], capsys)
        assert code == 1

    def test_props_stdin(self, capsys, monkeypatch, tmp_path):
        import io
        import sys

        monkeypatch.setattr(sys, "stdin", io.StringIO("[C][C][C]\nCCO\n"))
        code, out, _ = _run_cli(["props"], capsys)
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "input,logp_raw,sa_raw,ring_raw,qed,j"
        assert len(lines) == 3
        assert lines[1].startswith("[C][C][C],0.6000,0.1500,0.0000,")

    def test_baseline(self, capsys):
        code, out, _ = _run_cli(["baseline", "-n", "20", "--seed", "5",
                                 "--synthetic-reference", "120"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["n"] == 20

    def test_run_missing_config(self, capsys):
        code, _, err = _run_cli(["run", "/no/such/config.json"], capsys)
        assert code == 1

    def test_run_missing_reference(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"reference": "/absent/file.smi"}))
        code, _, err = _run_cli(["run", str(cfg)], capsys)
        assert code == 1
        assert "/absent/file.smi" in err


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "run.json"
    path.write_text(json.dumps({
        "task": "unconstrained",
        "reference": {"synthetic": 120},
        "population_size": 25,
        "generations": 5,
        "seed": 3,
        "snapshot_every": 5,
    }))
    return str(path)


class TestRunDeterminism:
    def test_same_seed_same_hash(self, tiny_config, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert main(["run", tiny_config, "--out", str(out1)]) == 0
        assert main(["run", tiny_config, "--out", str(out2)]) == 0
        r1 = json.loads((out1 / "run_report.json").read_text())
        r2 = json.loads((out2 / "run_report.json").read_text())
        assert r1["determinism_hash"] == r2["determinism_hash"]
        assert r1["timing"] != {} and "wall_seconds" in r1["timing"]

    def test_threads_do_not_change_hash(self, tiny_config, tmp_path):
        out1 = tmp_path / "t1"
        out8 = tmp_path / "t8"
        assert main(["run", tiny_config, "--out", str(out1), "--threads", "1"]) == 0
        assert main(["run", tiny_config, "--out", str(out8), "--threads", "8"]) == 0
        r1 = json.loads((out1 / "run_report.json").read_text())
        r8 = json.loads((out8 / "run_report.json").read_text())
        assert r1["result"] == r8["result"]
        # thread count is execution infrastructure: the hash must not move
        assert r1["determinism_hash"] == r8["determinism_hash"]

    def test_seed_override_changes_hash(self, tiny_config, tmp_path):
        out1 = tmp_path / "s1"
        out2 = tmp_path / "s2"
        assert main(["run", tiny_config, "--out", str(out1)]) == 0
        assert main(["run", tiny_config, "--out", str(out2), "--seed", "99"]) == 0
        r1 = json.loads((out1 / "run_report.json").read_text())
        r2 = json.loads((out2 / "run_report.json").read_text())
        assert r1["determinism_hash"] != r2["determinism_hash"]

    def test_outputs_written(self, tiny_config, tmp_path):
        out = tmp_path / "o"
        assert main(["run", tiny_config, "--out", str(out)]) == 0
        assert (out / "generations.csv").exists()
        assert (out / "run_report.json").exists()
        snaps = os.listdir(out / "snapshots")
        assert "gen_00000.txt" in snaps and "gen_00005.txt" in snaps

    def test_analyze_runs_on_output(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "an"
        assert main(["run", tiny_config, "--out", str(out)]) == 0
        code, _, err = _run_cli(["analyze", str(out), "--plot-data"], capsys)
        assert code == 0, err
        assert (out / "analysis" / "snapshot_clusters.csv").exists()
        assert (out / "analysis" / "snapshot_clusters_long.csv").exists()

    def test_analyze_without_snapshots(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "reference": {"synthetic": 120}, "population_size": 10,
            "generations": 1, "seed": 0,
        }))
        out = tmp_path / "nosnap"
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        code, _, err = _run_cli(["analyze", str(out)], capsys)
        assert code == 1
        assert "snapshot" in err


class TestSweepCommand:
    def test_sweep_writes_csv(self, tmp_path, capsys):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(json.dumps({
            "reference": {"synthetic": 150},
            "population_size": 15,
            "generations": 3,
            "seed": 1,
            "beta_sweep": {"betas": [0.0, 5.0], "seeds_per_beta": 1},
        }))
        out = tmp_path / "sw"
        code, stdout, err = _run_cli(["sweep", str(cfg), "--out", str(out)], capsys)
        assert code == 0, err
        doc = json.loads(stdout)
        assert len(doc["rows"]) == 2
        lines = (out / "beta_sweep.csv").read_text().splitlines()
        assert lines[0] == "beta,generation,mean_j,mean_d"
        assert len(lines) == 1 + 2 * 4
