import csv
import json
from pathlib import Path

import pytest

from twinstack.bench import (
    exp1_cell_rate,
    main,
    run_exp1,
    run_exp2,
    run_exp3,
)


class TestExp1:
    def test_grid_skips_inapplicable_cells(self, tmp_path):
        results = run_exp1(
            ts_ms=[1.0, 10.0], ta_ms=[1.0, 10.0], methods=["all", "phasor"],
            repeats=2, out_dir=str(tmp_path),
        )
        assert (10.0, 1.0) not in results["all"].rates  # Ta < Ts
        assert (1.0, 1.0) in results["all"].rates
        assert (1.0, 1.0) not in results["phasor"].rates  # fewer than 4 samples
        assert (1.0, 10.0) in results["phasor"].rates

    def test_csv_and_table_emitted(self, tmp_path):
        run_exp1(ts_ms=[1.0], ta_ms=[1.0, 10.0], methods=["all"], repeats=2,
                 out_dir=str(tmp_path))
        rows = list(csv.DictReader((tmp_path / "exp1_all.csv").open()))
        assert rows and rows[0]["repeats"] == "2"
        assert (tmp_path / "exp1_all.txt").read_text().startswith("Required bandwidth")

    def test_cell_rate_is_deterministic_per_seed(self):
        a = exp1_cell_rate(1.0, 10.0, "all", seed=1)
        b = exp1_cell_rate(1.0, 10.0, "all", seed=1)
        assert a == b

    def test_baseline_diagonal_is_row_max(self):
        results = run_exp1(ts_ms=[1.0], ta_ms=[1.0, 10.0, 100.0], methods=["all"], repeats=1)
        rates = results["all"].rates
        assert rates[(1.0, 1.0)] == max(rates.values())


class TestExp2:
    def test_cells_and_csv(self, tmp_path):
        result = run_exp2(m=1, b_values=[2, 4], modes=["sequential", "local-parallel"],
                          repeats=2, out_dir=str(tmp_path))
        assert result.median("sequential", 2) > 0
        rows = list(csv.DictReader((tmp_path / "exp2_response.csv").open()))
        assert len(rows) == 4
        summary = json.loads((tmp_path / "exp2_summary.json").read_text())
        assert "crossover_b" in summary

    def test_small_b_sequential_beats_offload(self):
        result = run_exp2(m=2, b_values=[4], modes=["sequential", "offload"], repeats=3)
        assert result.median("sequential", 4) < result.median("offload", 4)


class TestExp3:
    def test_outputs_and_simulated_shape(self, tmp_path):
        out = run_exp3(points=4, depth=1, branch=2, task_cost_ms=1.0,
                       workers=[1, 2], repeats=1, out_dir=str(tmp_path))
        measured = {r.workers: r for r in out["measured"]}
        assert measured[1].speedup == pytest.approx(1.0)
        simulated = {r.workers: r for r in out["simulated"]}
        assert simulated[16].efficiency >= 0.9
        assert simulated[64].efficiency < 0.8
        metadata = json.loads((tmp_path / "exp3_metadata.json").read_text())
        assert metadata["simulated"]["dispatch_overhead_s"] == 0.01
        assert (tmp_path / "exp3_measured.csv").exists()
        assert (tmp_path / "exp3_simulated.csv").exists()


class TestCli:
    def test_exp1_cli(self, tmp_path, capsys):
        code = main(["exp1", "--ts", "1", "--ta", "1,10", "--methods", "all",
                     "--repeats", "1", "--out", str(tmp_path)])
        assert code == 0
        assert "Required bandwidth" in capsys.readouterr().out

    def test_exp3_cli(self, tmp_path, capsys):
        code = main(["exp3", "--points", "4", "--depth", "0", "--task-cost", "1",
                     "--workers", "1,2", "--out", str(tmp_path)])
        assert code == 0
        assert "workers" in capsys.readouterr().out
