import json
import math
from pathlib import Path

import numpy as np
import pytest

from mmclab import predicted_error_rate
from mmclab.cli import main, run_sweep, SWEEP_COLUMNS
from mmclab.simgen import load_instance, load_trajectories


def strip_walltime(csv_text: str) -> str:
    lines = csv_text.strip().splitlines()
    return "\n".join(",".join(line.split(",")[:-1]) for line in lines)


SWEEP_CFG = {
    "instance": {"type": "separation", "S_prime": 1},
    "T": [24],
    "H": [60, 120],
    "delta": [0.1],
    "lambda": [0.5],
    "seeds": [1, 2, 3],
    "c_sigma": 0.15,
    "c_rho": 2.0,
}


class TestGenerate:
    def test_separation_spec(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"type": "separation", "S_prime": 2,
                                    "T": 100, "H": 1000}))
        rc = main(["generate", str(spec), "--out", str(tmp_path)])
        assert rc == 0
        inst = load_instance(tmp_path / "instance.instance.json")
        assert inst.S == 4 and inst.K == 2 and inst.T == 100 and inst.H == 1000

    def test_random_spec(self, tmp_path):
        spec = json.dumps({"type": "random", "S": 5, "K": 3, "floor": 0.02,
                           "seed": 7, "T": 30, "H": 50})
        rc = main(["generate", spec, "--out", str(tmp_path)])
        assert rc == 0
        inst = load_instance(tmp_path / "instance.instance.json")
        assert inst.K == 3 and inst.S == 5
        # loading revalidates every model, so reaching here means they pass

    def test_malformed_spec_names_field(self, tmp_path, capsys):
        rc = main(["generate", json.dumps({"type": "random", "S": 5, "T": 10, "H": 10}),
                   "--out", str(tmp_path)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "K" in err and "floor" in err

    def test_unknown_type(self, tmp_path):
        rc = main(["generate", json.dumps({"type": "nope", "T": 10, "H": 10}),
                   "--out", str(tmp_path)])
        assert rc == 2


class TestPipeline:
    @pytest.fixture
    def instance_file(self, tmp_path):
        spec = json.dumps({"type": "separation", "S_prime": 2, "T": 60, "H": 2500})
        main(["generate", spec, "--out", str(tmp_path)])
        return tmp_path / "instance.instance.json"

    def test_sample_cluster_refine_evaluate(self, tmp_path, instance_file, capsys):
        assert main(["sample", str(instance_file), "--seed", "5",
                     "--out", str(tmp_path)]) == 0
        traj_file = tmp_path / "sample.traj.bin"
        trajs, S = load_trajectories(traj_file)
        assert trajs.T == 60 and S == 4

        assert main(["cluster", str(traj_file), "--instance", str(instance_file),
                     "--delta", "0.1", "--c-sigma", "0.15", "--c-rho", "2.0",
                     "--out", str(tmp_path)]) == 0
        stage1 = json.loads((tmp_path / "cluster.stage1.json").read_text())
        assert stage1["K_hat"] == 2

        assert main(["refine", str(traj_file), str(tmp_path / "cluster.stage1.json"),
                     "--lambda", "0.5", "--out", str(tmp_path)]) == 0
        assert main(["evaluate", "--instance", str(instance_file),
                     str(tmp_path / "cluster.stage1.json"),
                     str(tmp_path / "refine.stage2.json"),
                     "--json-out", str(tmp_path / "eval.json")]) == 0
        evals = json.loads((tmp_path / "eval.json").read_text())
        assert all(0 <= v <= 60 for v in evals.values())
        out = capsys.readouterr().out
        assert "E_T" in out

    def test_cluster_needs_gamma_source(self, tmp_path, instance_file):
        main(["sample", str(instance_file), "--seed", "1", "--out", str(tmp_path)])
        rc = main(["cluster", str(tmp_path / "sample.traj.bin"), "--out", str(tmp_path)])
        assert rc == 2

    def test_gaps_command(self, tmp_path, instance_file, capsys):
        assert main(["gaps", str(instance_file), "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "gaps.gaps.json").read_text())
        assert doc["D_pi"] == pytest.approx(math.log(3) / 2, abs=1e-12)
        assert "delta_W_sq" in capsys.readouterr().out

    def test_bounds_command(self, tmp_path):
        out = tmp_path / "b.json"
        rc = main(["bounds", "--eps", "0.01", "--delta", "0.1", "--T", "1000",
                   "--H", "100", "--D", "0.05", "--alpha-min", "0.5",
                   "--gamma", "0.5", "--d-pi", "0.3", "--c-eta", "0.01",
                   "--json-out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["necessary_holds"] is True
        assert doc["predicted_error_rate"] == pytest.approx(
            predicted_error_rate(1000, 100, 0.5, 0.3, 0.01))

    def test_bounds_invalid_range_exit_code(self, tmp_path):
        rc = main(["bounds", "--eps", "0.01", "--delta", "0.9", "--T", "10",
                   "--H", "10", "--D", "0.1", "--alpha-min", "0.5"])
        assert rc == 2


class TestSweep:
    def test_rows_and_determinism(self, tmp_path):
        text1 = run_sweep(dict(SWEEP_CFG), jobs=1)
        text2 = run_sweep(dict(SWEEP_CFG), jobs=1)
        lines = text1.strip().splitlines()
        assert lines[0] == ",".join(SWEEP_COLUMNS)
        assert len(lines) == 1 + 2 * 3  # |H| * |seeds|
        assert strip_walltime(text1) == strip_walltime(text2)

    def test_worker_count_invariance(self):
        a = run_sweep(dict(SWEEP_CFG), jobs=1)
        b = run_sweep(dict(SWEEP_CFG), jobs=4)
        assert strip_walltime(a) == strip_walltime(b)

    def test_duplicate_seeds_rejected(self):
        cfg = dict(SWEEP_CFG)
        cfg["seeds"] = [1, 1]
        with pytest.raises(Exception):
            run_sweep(cfg, jobs=1)

    def test_gamma_override_lands_in_rows(self):
        cfg = dict(SWEEP_CFG)
        cfg["gamma"] = 0.3
        cfg["H"] = [60]
        cfg["seeds"] = [1]
        text = run_sweep(cfg, jobs=1)
        row = dict(zip(SWEEP_COLUMNS, text.strip().splitlines()[1].split(",")))
        assert float(row["gamma_ps"]) == 0.3

    def test_numerical_failure_exit_code(self, tmp_path, monkeypatch):
        import mmclab.cli as cli_mod
        from mmclab.errors import SvdFailure

        spec = json.dumps({"type": "separation", "S_prime": 1, "T": 10, "H": 20})
        main(["generate", spec, "--out", str(tmp_path)])
        main(["sample", str(tmp_path / "instance.instance.json"), "--seed", "1",
              "--out", str(tmp_path)])

        def boom(*_args, **_kwargs):
            raise SvdFailure("synthetic failure")

        monkeypatch.setattr(cli_mod, "spectral_cluster", boom)
        rc = main(["cluster", str(tmp_path / "sample.traj.bin"),
                   "--instance", str(tmp_path / "instance.instance.json"),
                   "--out", str(tmp_path)])
        assert rc == 3

    def test_cli_roundtrip_and_report(self, tmp_path, capsys):
        cfg_path = tmp_path / "sweep.json"
        cfg_path.write_text(json.dumps(SWEEP_CFG))
        assert main(["sweep", str(cfg_path), "--out", str(tmp_path)]) == 0
        csv_path = tmp_path / "run.sweep.csv"
        assert csv_path.exists()
        assert main(["report", str(csv_path), "--c-eta", "0.5",
                     "--out", str(tmp_path)]) == 0
        report = (tmp_path / "summary.report.csv").read_text().strip().splitlines()
        assert len(report) == 1 + 2  # one line per (T, H, delta, lambda) group
        header = report[0].split(",")
        row = dict(zip(header, report[1].split(",")))
        assert int(row["n_seeds"]) == 3
        # the envelope column delegates to predicted_error_rate at the group's values
        rows = (tmp_path / "run.sweep.csv").read_text().strip().splitlines()[1:]
        first = dict(zip(SWEEP_COLUMNS, rows[0].split(",")))
        expected = predicted_error_rate(int(first["T"]), int(first["H"]),
                                 float(first["gamma_ps"]), float(first["D_pi"]), 0.5)
        assert float(row["predicted_envelope"]) == pytest.approx(expected, rel=1e-9)

    def test_single_row_report_mean_equals_row(self, tmp_path):
        cfg = dict(SWEEP_CFG)
        cfg["H"] = [60]
        cfg["seeds"] = [1]
        text = run_sweep(cfg, jobs=1)
        csv_path = tmp_path / "one.sweep.csv"
        csv_path.write_text(text)
        assert main(["report", str(csv_path), "--out", str(tmp_path)]) == 0
        report = (tmp_path / "summary.report.csv").read_text().strip().splitlines()
        header = report[0].split(",")
        row = dict(zip(header, report[1].split(",")))
        src = dict(zip(SWEEP_COLUMNS, text.strip().splitlines()[1].split(",")))
        assert float(row["mean_err_stage2"]) == pytest.approx(
            int(src["e_t_stage2"]) / int(src["T"]))

    def test_empty_report_input(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text(",".join(SWEEP_COLUMNS) + "\n")
        rc = main(["report", str(empty), "--out", str(tmp_path)])
        assert rc == 2
