"""End-to-end command tests: exit codes, output contracts, determinism."""

import os

import numpy as np
import pytest

from stacktherm.cli import main
from stacktherm.fixtures import data_path

LUMPED = {
    "stack": data_path("lumped.stack"),
    "power": data_path("lumped.power"),
    "affine": data_path("lumped_affine.binding"),
    "runaway": data_path("lumped_runaway.binding"),
}


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def sweep_column(out):
    lines = out.strip().splitlines()
    assert lines[0] == "x,current_A"
    rows = [tuple(float(v) for v in line.split(",")) for line in lines[1:]]
    return np.array([r[1] for r in rows])


class TestLeak:
    def test_temperature_sweep_superlinear(self, capsys):
        code, out, _ = run(
            capsys, "leak", "--device", "nmos", "--sweep", "temp",
            "--from", "273", "--to", "373", "--steps", "101", "--vdd", "2.0",
        )
        assert code == 0
        currents = sweep_column(out)
        assert len(currents) == 101
        assert (np.diff(currents) > 0).all()
        assert (np.diff(currents, 2) > 0).all()

    def test_vdd_sweep_convex(self, capsys):
        code, out, _ = run(
            capsys, "leak", "--device", "pmos", "--sweep", "vdd",
            "--from", "0.1", "--to", "2.0", "--steps", "39", "--temp", "300",
        )
        assert code == 0
        currents = sweep_column(out)
        assert (np.diff(currents) > 0).all()
        assert (np.diff(currents, 2) > 0).all()

    def test_cell_sweep(self, capsys):
        code, out, _ = run(
            capsys, "leak", "--cell", data_path("sram6t.cell"),
            "--sweep", "temp", "--from", "300", "--to", "301", "--steps", "2",
            "--vdd", "2.0",
        )
        assert code == 0
        currents = sweep_column(out)
        assert currents[0] == pytest.approx(1.0277e-6, rel=1e-4)

    def test_reversed_range_is_usage_error(self, capsys):
        code, _, err = run(
            capsys, "leak", "--device", "nmos", "--sweep", "temp",
            "--from", "373", "--to", "273", "--vdd", "2.0",
        )
        assert code == 2
        assert "usage" in err.lower()

    def test_missing_fixed_vdd_is_usage_error(self, capsys):
        code, _, _ = run(
            capsys, "leak", "--device", "nmos", "--sweep", "temp",
            "--from", "273", "--to", "373",
        )
        assert code == 2

    def test_device_and_cell_together_rejected(self, capsys):
        code, _, _ = run(
            capsys, "leak", "--device", "nmos", "--cell",
            data_path("sram6t.cell"), "--sweep", "temp",
            "--from", "273", "--to", "373", "--vdd", "2.0",
        )
        assert code == 2

    def test_domain_error_exit_code(self, capsys):
        code, _, err = run(
            capsys, "leak", "--device", "nmos", "--sweep", "temp",
            "--from", "-10", "--to", "373", "--vdd", "2.0",
        )
        assert code == 1
        assert "error" in err.lower()


class TestSolve:
    def test_zero_power_field_is_ambient(self, capsys, tmp_path):
        power = tmp_path / "zero.power"
        power.write_text("layer 0 heater 0W\n")
        out_dir = tmp_path / "out"
        code, _, _ = run(
            capsys, "solve", "--stack", data_path("slab.stack"),
            "--power", str(power), "--grid", "4x4", "--out", str(out_dir),
        )
        assert code == 0
        rows = (out_dir / "field.csv").read_text().strip().splitlines()[1:]
        assert all(row.endswith(",300") for row in rows)

    def test_analytic_slab_within_one_percent(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        code, out, _ = run(
            capsys, "solve", "--stack", data_path("slab.stack"),
            "--power", data_path("slab.power"), "--grid", "16x16",
            "--zsub", "128", "--out", str(out_dir),
        )
        assert code == 0
        header, row = (out_dir / "summary.csv").read_text().strip().splitlines()
        assert header == "layer,min_K,mean_K,max_K"
        top_max = float(row.split(",")[3])
        assert abs((top_max - 300.0) - 1.0) <= 0.01

    def test_outputs_written(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        code, _, _ = run(
            capsys, "solve", "--stack", data_path("stack_6layer.stack"),
            "--power", data_path("slab.power").replace("slab.power", "") or "x",
            "--grid", "8x8", "--out", str(out_dir),
        )
        # bogus power path: data error, not a crash
        assert code == 1

    def test_six_layer_outputs(self, capsys, tmp_path):
        power = tmp_path / "p.power"
        power.write_text("layer 0 cache0 3W/cm2\nlayer 10 cache3 3W/cm2\n")
        out_dir = tmp_path / "out"
        code, _, _ = run(
            capsys, "solve", "--stack", data_path("stack_6layer.stack"),
            "--power", str(power), "--grid", "8x8", "--out", str(out_dir),
        )
        assert code == 0
        names = sorted(os.listdir(out_dir))
        assert "field.csv" in names and "summary.csv" in names
        assert sum(n.endswith(".pgm") for n in names) == 11

    def test_missing_floorplan_names_path(self, capsys, tmp_path):
        stack = tmp_path / "bad.stack"
        stack.write_text("layer 0 active_silicon 100um 150.0 1 flp=ghost.flp\n")
        power = tmp_path / "p.power"
        power.write_text("")
        code, _, err = run(
            capsys, "solve", "--stack", str(stack), "--power", str(power),
            "--grid", "4x4", "--out", str(tmp_path / "out"),
        )
        assert code == 1
        assert "ghost.flp" in err

    def test_determinism(self, capsys, tmp_path):
        power = tmp_path / "p.power"
        power.write_text("layer 0 cache0 3W/cm2\n")
        blobs = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            code, _, _ = run(
                capsys, "solve", "--stack", data_path("stack_6layer.stack"),
                "--power", str(power), "--grid", "8x8", "--out", str(out_dir),
            )
            assert code == 0
            blobs.append(
                tuple(
                    (out_dir / f).read_bytes()
                    for f in sorted(os.listdir(out_dir))
                )
            )
        assert blobs[0] == blobs[1]


class TestExperiments:
    def test_power_density_trend(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "experiments", "--set", "1,2,3", "--grid", "16x16",
            "--out", str(tmp_path),
        )
        assert code == 0
        rows = (tmp_path / "experiments.csv").read_text().strip().splitlines()[1:]
        peaks = [float(r.split(",")[5]) for r in rows]
        assert peaks[0] < peaks[1] < peaks[2]

    def test_selector_expansion_and_outputs(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "experiments", "--set", "2d", "--grid", "8x8",
            "--out", str(tmp_path),
        )
        assert code == 0
        assert (tmp_path / "exp_2d-baseline" / "field.csv").exists()
        assert (tmp_path / "layer_peaks.csv").exists()

    def test_unknown_selector(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "experiments", "--set", "99", "--out", str(tmp_path)
        )
        assert code == 1


class TestCouple:
    def test_affine_fixture_converges_to_closed_form(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        code, out, _ = run(
            capsys, "couple", "--stack", LUMPED["stack"],
            "--power", LUMPED["power"], "--binding", LUMPED["affine"],
            "--grid", "1x1", "--out", str(out_dir),
        )
        assert code == 0
        summary = (out_dir / "summary.csv").read_text().strip().splitlines()[1]
        peak = float(summary.split(",")[3])
        assert peak == pytest.approx(310.101, abs=0.01)
        assert (out_dir / "convergence.csv").exists()
        assert (out_dir / "field.csv").exists()

    def test_runaway_exits_3_with_log(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        code, _, err = run(
            capsys, "couple", "--stack", LUMPED["stack"],
            "--power", LUMPED["power"], "--binding", LUMPED["runaway"],
            "--grid", "1x1", "--out", str(out_dir),
        )
        assert code == 3
        log = (out_dir / "convergence.csv").read_text()
        assert log.startswith("iter,max_delta_K")
        assert len(log.strip().splitlines()) > 1

    def test_constant_binding_two_iterations(self, capsys, tmp_path):
        binding = tmp_path / "const.binding"
        binding.write_text("affine 0 element slope=0.0 base=1.0\n")
        out_dir = tmp_path / "out"
        code, out, _ = run(
            capsys, "couple", "--stack", LUMPED["stack"],
            "--power", LUMPED["power"], "--binding", str(binding),
            "--grid", "1x1", "--out", str(out_dir),
        )
        assert code == 0
        rows = (out_dir / "convergence.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 2  # header + two iterations
        assert rows[-1].split(",")[1] == "0"
