"""Config loading, trial seeding, sweep determinism and CSV emission."""

import dataclasses
import os
import subprocess
import sys

import numpy as np
import pytest

from drisce import bench
from drisce.bench import ConfigError, TrialResult

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def tiny_config(tmp_path, **overrides):
    cfg = bench.load_config(os.path.join(CONFIG_DIR, "desk.toml"))
    base = dict(
        bs_antennas=4, ris_elements=4, users=2, pilot_symbols=2,
        grid_bs=4, grid_ris=4, paths_bs_ris=2, paths_ris_ris=2, paths_ris_user=2,
        power_dbm=(30.0,), q_pilot=(4,), trials=2, base_seed=99,
        stages=("large",), schemes=("svd_mmv:somp",), small_schemes=(),
        assumptions=("perfect",),
        gamp_iters=10, em_iters=3,
    )
    base.update(overrides)
    return dataclasses.replace(cfg, **base)


class TestConfig:
    def test_paper_config_loads(self):
        cfg = bench.load_config(os.path.join(CONFIG_DIR, "paper.toml"))
        assert cfg.bs_antennas == 36
        assert cfg.ris_elements == 64
        assert cfg.users == 4
        assert cfg.frequency_ghz == 28.0

    def test_pilot_symbols_less_than_users(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(
            "[system]\nbs_antennas=4\nris_elements=4\nusers=3\npilot_symbols=2\n"
            "[deployment]\nbs=[0.0,0.0,5.0]\nris1=[1.0,1.0,1.0]\nris2=[2.0,2.0,2.0]\n"
            "[sweep]\npower_dbm=[30.0]\nq_pilot=[4]\n")
        with pytest.raises(ConfigError, match="pilot_symbols.*users"):
            bench.load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(
            "[system]\nbs_antennas=4\nris_elements=4\nusers=2\nwarp_drive=1\n"
            "[deployment]\nbs=[0.0,0.0,5.0]\nris1=[1.0,1.0,1.0]\nris2=[2.0,2.0,2.0]\n"
            "[sweep]\npower_dbm=[30.0]\nq_pilot=[4]\n")
        with pytest.raises(ConfigError, match=r"\[system\].warp_drive"):
            bench.load_config(path)

    def test_default_damping(self, tmp_path):
        path = tmp_path / "min.toml"
        path.write_text(
            "[system]\nbs_antennas=4\nris_elements=4\nusers=2\n"
            "[deployment]\nbs=[0.0,0.0,5.0]\nris1=[1.0,1.0,1.0]\nris2=[2.0,2.0,2.0]\n"
            "[sweep]\npower_dbm=[30.0]\nq_pilot=[4]\n")
        cfg = bench.load_config(path)
        assert cfg.damping == 0.7

    def test_noise_power_arithmetic(self, tmp_path):
        cfg = tiny_config(tmp_path)
        assert cfg.noise_power_dbm() == -85.0

    def test_bad_scheme_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, schemes=("nonsense:gamp",)).parsed_schemes()
        with pytest.raises(ConfigError, match="off-grid"):
            bench.parse_scheme("kronecker:gamp:offgrid", "perfect")


class TestTrials:
    def test_deterministic_rows(self, tmp_path):
        cfg = tiny_config(tmp_path)
        a = bench.run_trial(cfg, 30.0, 4, 0)
        b = bench.run_trial(cfg, 30.0, 4, 0)
        for ra, rb in zip(a, b):
            assert ra.seed == rb.seed
            assert ra.nmse == rb.nmse

    def test_row_cardinality(self, tmp_path):
        cfg = tiny_config(tmp_path, schemes=("svd_mmv:somp", "svd_cs:somp"))
        rows = bench.run_trial(cfg, 30.0, 4, 0)
        # two schemes x three large-timescale channels
        assert len(rows) == 2 * 3

    def test_seed_depends_on_cell(self):
        s = {bench.trial_seed(1, p, q, t) for p in (15.0, 30.0)
             for q in (4, 8) for t in (0, 1)}
        assert len(s) == 8

    def test_common_random_numbers(self, tmp_path):
        # all schemes inside a trial must see identical seeds
        cfg = tiny_config(tmp_path, schemes=("svd_mmv:somp", "svd_mmv:gamp"))
        rows = bench.run_trial(cfg, 30.0, 4, 1)
        assert len({r.seed for r in rows}) == 1


class TestSweep:
    def test_empty_trials(self, tmp_path):
        cfg = tiny_config(tmp_path, trials=0)
        rows = bench.run_sweep(cfg, workers=1)
        assert rows == []
        out = tmp_path / "empty.csv"
        bench.emit_results(rows, out, "csv")
        assert out.read_text().strip() == ",".join(bench.CSV_COLUMNS)

    def test_worker_invariance(self, tmp_path):
        cfg = tiny_config(tmp_path, trials=3)
        rows1 = bench.run_sweep(cfg, workers=1, keep_timing=False)
        rows8 = bench.run_sweep(cfg, workers=8, keep_timing=False)
        assert rows1 == rows8

    def test_append_on_complete(self, tmp_path):
        cfg = tiny_config(tmp_path, trials=1, q_pilot=(4, 8))
        out = tmp_path / "cells.csv"
        rows = bench.run_sweep(cfg, workers=1, out_path=out)
        again = bench.read_results(out)
        assert len(again) == len(rows)


class TestFailureIsolation:
    def test_scheme_failure_yields_nan_row(self, tmp_path, monkeypatch):
        from drisce import bench as bench_mod

        def boom(*args, **kwargs):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(bench_mod.estimators, "estimate_inter_ris", boom)
        cfg = tiny_config(tmp_path)
        rows = bench_mod.run_trial(cfg, 30.0, 4, 0)
        assert len(rows) == 3
        assert all("!error" in r.scheme for r in rows)
        assert all(np.isnan(r.nmse) for r in rows)


class TestEmission:
    def _rows(self):
        return [TrialResult(scheme="svd_mmv:somp:perfect", channel="d", q_pilot=4,
                            power_dbm=30.0, trial=0, seed=7, nmse=0.01,
                            runtime_ms=1.5)]

    def test_single_row_csv(self, tmp_path):
        out = tmp_path / "one.csv"
        bench.emit_results(self._rows(), out, "csv")
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0] == "scheme,channel,q_pilot,power_dbm,trial,seed,nmse,runtime_ms"

    def test_round_trip(self, tmp_path):
        out = tmp_path / "rt.csv"
        bench.emit_results(self._rows(), out, "csv")
        back = bench.read_results(out)
        assert back == self._rows()

    def test_db_conversion(self, tmp_path):
        out = tmp_path / "agg.csv"
        bench.emit_results(self._rows(), out, "plot_data")
        line = out.read_text().strip().splitlines()[1]
        assert line.split(",")[5] == "-20.0"

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            bench.emit_results(self._rows(), tmp_path / "x.csv", "yaml")


class TestCli:
    def _run(self, *args):
        return subprocess.run([sys.executable, "-m", "drisce.cli", *args],
                              capture_output=True, text=True)

    def test_missing_config_is_config_error(self, tmp_path):
        result = self._run("bench", "--config", str(tmp_path / "none.toml"))
        assert result.returncode == 1

    def test_bad_key_is_config_error(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[system]\nnonsense = 3\n")
        result = self._run("simulate", "--config", str(path))
        assert result.returncode == 1

    def test_simulate_writes_npz(self, tmp_path):
        out = tmp_path / "chan.npz"
        result = self._run("simulate", "--config", os.path.join(CONFIG_DIR, "desk.toml"),
                           "--seed", "5", "--out", str(out))
        assert result.returncode == 0, result.stderr
        data = np.load(out)
        assert data["F1"].shape == (16, 16)
        assert data["D"].shape == (16, 16)
        assert data["h"].shape == (2, 2, 16)
