import csv
import json
import math
import os

import pytest

from echobits.cli import main


def run(args):
    return main(args)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestKappaCurve:
    def test_outputs_and_oracle_agreement(self, tmp_path):
        out = tmp_path / "kc"
        assert run(["kappa-curve", "--tau-max", "8", "--tau-step", "0.5",
                    "--out", str(out)]) == 0
        rows = read_csv(out / "kappa_curve.csv")
        assert list(rows[0].keys()) == ["t", "ln_kappa_svd", "ln_kappa_exact", "D_bits"]
        first = rows[0]
        assert float(first["t"]) == 0.0
        assert float(first["ln_kappa_exact"]) == 0.0
        assert abs(float(first["ln_kappa_svd"])) < 1e-30
        for r in rows[1:]:
            svd, exact = float(r["ln_kappa_svd"]), float(r["ln_kappa_exact"])
            assert abs(svd - exact) / exact < 1e-6
        summary = json.loads((out / "summary.json").read_text())
        # crossings are closed-form values, independent of the grid range
        t_of_30 = summary["threshold_crossings"]["30"]["t_of_exact"]
        t_dr_30 = summary["threshold_crossings"]["30"]["t_dr"]
        assert abs(t_dr_30 - 15.674) < 1e-3
        assert abs((t_dr_30 - t_of_30) - 0.894) < 1e-3
        manifest = json.loads((out / "manifest.json").read_text())
        assert "kappa_curve.csv" in manifest["outputs"]
        assert abs(manifest["constants"]["spec"]["delta_b"] - 1.32665) < 1e-4

    def test_unbroken_phase_rejected(self, tmp_path):
        assert run(["kappa-curve", "--gamma", "0.5", "--out", str(tmp_path / "x")]) == 1


class TestEcho:
    def test_files_and_summary(self, tmp_path):
        out = tmp_path / "echo"
        assert run(["echo", "--m", "15", "--out", str(out)]) == 0
        rows = read_csv(out / "echo_software_m15.csv")
        assert list(rows[0].keys()) == ["tau", "F", "W_out", "W_rec", "eta_W",
                                        "norm_out", "norm_rec", "ln_kappa"]
        taus = [float(r["tau"]) for r in rows]
        assert taus == sorted(taus)
        summary = json.loads((out / "summary.json").read_text())
        entry = summary["curves"][0]
        assert entry["m"] == 15
        assert entry["fidelity"]["onset_found"]
        assert 5.0 < entry["fidelity"]["t_of_measured"] < 8.5

    def test_determinism_across_runs_and_workers(self, tmp_path):
        args = ["echo", "--m", "10", "--m", "12", "--out"]
        blobs = {}
        for name, extra in [("a", ["--workers", "1"]), ("b", ["--workers", "1"]),
                            ("c", ["--workers", "2"])]:
            out = tmp_path / name
            assert run(args + [str(out)] + extra) == 0
            blobs[name] = {f: (out / f).read_bytes()
                           for f in os.listdir(out) if f.endswith(".csv")}
        assert blobs["a"] == blobs["b"] == blobs["c"]

    def test_checksums_match_files(self, tmp_path):
        import hashlib
        out = tmp_path / "echo"
        assert run(["echo", "--m", "10", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        for name, digest in manifest["outputs"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


class TestScaling:
    def test_small_sweep(self, tmp_path):
        out = tmp_path / "sc"
        assert run(["scaling", "--m", "10", "--m", "14", "--m", "18",
                    "--backend", "software", "--out", str(out)]) == 0
        rows = read_csv(out / "scaling.csv")
        assert {r["observable"] for r in rows} == {"fidelity", "work_echo"}
        fit = json.loads((out / "fit.json").read_text())
        slope = fit["fidelity"]["slope"]
        assert abs(slope / fit["theory"]["slope"] - 1) < 0.15
        # T_of_exact column matches the closed form within float formatting
        for r in rows:
            assert float(r["T_dr"]) > float(r["T_of_exact"])

    def test_too_few_widths_rejected(self, tmp_path):
        assert run(["scaling", "--m", "10", "--m", "14", "--backend", "software",
                    "--out", str(tmp_path / "x")]) == 1


class TestBenchmark:
    def test_quick_trio(self, tmp_path):
        out = tmp_path / "bench"
        assert run(["benchmark", "--m", "30", "--out", str(out)]) == 0
        names = sorted(f for f in os.listdir(out) if f.startswith("benchmark_"))
        assert names == ["benchmark_hermitian.csv", "benchmark_normal.csv",
                         "benchmark_pt.csv"]
        rows = read_csv(out / "benchmark_hermitian.csv")
        assert all(abs(float(r["ln_kappa"])) < 1e-30 for r in rows)
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["pt"]["collapses"]
        assert verdict["normal"]["survives"]
        assert verdict["hermitian"]["kappa_is_unity"]

    def test_single_configuration_only(self, tmp_path):
        assert run(["benchmark", "--m", "30", "--m", "40",
                    "--out", str(tmp_path / "x")]) == 1


class TestConfigFile:
    def test_file_overrides_flags(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text(
            "# comment line\n"
            "gamma = 1.3\n"
            "m = 10, 12\n"
            "tau_step = 0.5\n")
        out = tmp_path / "out"
        assert run(["echo", "--gamma", "1.5", "--m", "15",
                    "--config", str(cfgfile), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["gamma"] == 1.3
        assert manifest["config"]["m"] == [10, 12]

    def test_unknown_key_rejected(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("turbo = yes\n")
        assert run(["echo", "--config", str(cfgfile),
                    "--out", str(tmp_path / "x")]) == 1


class TestExitCodes:
    def test_validation_errors(self, tmp_path):
        assert run(["echo", "--backend", "software", "--m", "500",
                    "--out", str(tmp_path / "a")]) == 1
        assert run(["echo", "--dt", "-0.1", "--out", str(tmp_path / "b")]) == 1
        assert run(["echo", "--h0", "2,-2,1", "--out", str(tmp_path / "c")]) == 1
        assert run(["nonsense"]) == 1

    def test_io_error(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        # output directory path passes through a regular file -> OSError
        assert run(["echo", "--m", "10", "--out", str(blocker / "sub")]) == 2

    def test_numeric_error(self, tmp_path):
        # broken phase, but the gap sits below the context resolution: the
        # closed-form propagator cannot be built -> internal numeric error
        assert run(["echo", "--gamma", "1.2", "--g1", "1.1999999999",
                    "--g2", "1.1999999999", "--m", "10",
                    "--out", str(tmp_path / "x")]) == 3
