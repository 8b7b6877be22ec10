import json

import numpy as np
import pytest

from qstab import serialize
from qstab.cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_HURWITZ,
    EXIT_IO,
    EXIT_OK,
    EXIT_SMALL_GAIN,
    gamma_search,
    main,
)
from qstab.errors import NotHurwitzError
from qstab.model import LinearQuantumSystem
from qstab.opa import OpaParams, build_opa


def opa_flags(out, gamma="4.5"):
    return [
        "--kappa1",
        "1.0",
        "--kappa2",
        "2.0",
        "--chi",
        "0.1",
        "--gamma",
        gamma,
        "--delta1",
        "0.1",
        "--delta2",
        "0.1",
        "--out",
        str(out),
    ]


class TestGammaSearch:
    def test_opa_threshold(self):
        sys, _ = build_opa(OpaParams(1.0, 2.0, 0.1))
        assert gamma_search(sys, 0.1, 0.1, tol=1e-5) == pytest.approx(4.0, abs=1e-4)

    def test_equal_couplings(self):
        sys, _ = build_opa(OpaParams(4.0, 4.0, 0.1))
        assert gamma_search(sys, 0.0, 0.0, tol=1e-5) == pytest.approx(1.0, abs=1e-4)

    def test_vanishing_channel_returns_floor(self):
        zero = np.zeros((2, 2))
        sys = LinearQuantumSystem(
            M1=zero, M2=zero, N1=np.eye(2), N2=zero, E1=zero, E2=zero
        )
        assert gamma_search(sys) == pytest.approx(1e-9)

    def test_undamped_system_raises(self):
        zero = np.zeros((1, 1))
        sys = LinearQuantumSystem(M1=zero, M2=zero, N1=zero, N2=zero, E1=zero, E2=zero)
        with pytest.raises(NotHurwitzError):
            gamma_search(sys)


class TestCertifyCommand:
    def test_certified_exit_zero_and_artifact(self, tmp_path):
        out = tmp_path / "run"
        code = main(["certify", *opa_flags(out)])
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "run.certificate.json").read_text())
        assert doc["verdict"] == "Certified"
        assert doc["hinf_reduced"] == pytest.approx(2.0, rel=1e-8)
        assert "invariant_level" in doc

    def test_small_gain_failure_exit_two(self, tmp_path):
        out = tmp_path / "run"
        code = main(["certify", *opa_flags(out, gamma="3.0")])
        assert code == EXIT_SMALL_GAIN
        doc = json.loads((tmp_path / "run.certificate.json").read_text())
        assert doc["verdict"] == "FailedSmallGain"
        assert doc["P"] is None

    def test_hurwitz_failure_exit_one(self, tmp_path):
        zero = [[[0.0, 0.0]] * 2] * 2
        system_doc = {"M1": zero, "M2": zero, "N1": zero, "N2": zero, "E1": zero, "E2": zero}
        sys_path = tmp_path / "system.json"
        sys_path.write_text(json.dumps(system_doc))
        code = main(
            ["certify", "--system", str(sys_path), "--gamma", "2.0", "--out", str(tmp_path / "r")]
        )
        assert code == EXIT_HURWITZ

    def test_certificate_round_trip_bit_identical(self, tmp_path):
        out = tmp_path / "run"
        assert main(["certify", *opa_flags(out)]) == EXIT_OK
        text = (tmp_path / "run.certificate.json").read_text()
        doc = json.loads(text)
        cert = serialize.certificate_from_json(doc)
        redumped = json.dumps(serialize.certificate_to_json(cert), indent=2) + "\n"
        assert redumped == text

    def test_no_temp_files_left(self, tmp_path):
        out = tmp_path / "run"
        assert main(["certify", *opa_flags(out)]) == EXIT_OK
        leftovers = [p for p in tmp_path.iterdir() if ".tmp" in p.name]
        assert leftovers == []


class TestValidateCommand:
    def test_clean_system(self, tmp_path):
        code = main(
            ["validate", "--kappa1", "1", "--kappa2", "2", "--chi", "0.1",
             "--out", str(tmp_path / "v")]
        )
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "v.validation.json").read_text())
        assert doc["violations"] == []

    def test_asymmetric_block_reported(self, tmp_path, capsys):
        zero = [[[0.0, 0.0]] * 2] * 2
        bad_m2 = [
            [[0.0, 0.0], [1.0, 0.0]],
            [[0.0, 0.0], [0.0, 0.0]],
        ]
        doc = {"M1": zero, "M2": bad_m2, "N1": zero, "N2": zero, "E1": zero, "E2": zero}
        path = tmp_path / "system.json"
        path.write_text(json.dumps(doc))
        code = main(["validate", "--system", str(path)])
        assert code == EXIT_CHECK_FAILED
        assert "M2 asymmetric" in capsys.readouterr().err


class TestRegionCommand:
    def test_region_artifacts(self, tmp_path):
        out = tmp_path / "region"
        code = main(
            [
                "opa-region",
                "--kappa1", "1", "--kappa2", "1", "--chi", "0.1",
                "--gamma", "4.0", "--delta1", "0.0", "--delta2", "0.04",
                "--grid", "200", "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        lines = (tmp_path / "region.region.csv").read_text().splitlines()
        assert lines[0] == "z1sq,z2sq_cap,active_constraint"
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[1]) == pytest.approx(1.0)  # 0.04 / (4 * 0.01)
        assert first[2] == "d3"
        report = json.loads((tmp_path / "region.region.json").read_text())
        assert report["lambda_bar_root"] == pytest.approx(6.25, abs=1e-12)
        assert report["lambda_bar_caption"] == pytest.approx(6.25, abs=1e-12)
        scan_lines = (tmp_path / "region.scan.csv").read_text().splitlines()
        assert scan_lines[0] == "|z1|^2,|z2|^2,admissible,margin1,margin2"
        origin = scan_lines[1].split(",")
        assert origin[2] == "1"  # the origin is always admissible


class TestSimulateCommand:
    def test_small_certified_run(self, tmp_path):
        out = tmp_path / "sim"
        code = main(
            [
                "simulate",
                "--kappa1", "1", "--kappa2", "2", "--chi", "0.05",
                "--gamma", "8.0", "--delta1", "0.1", "--delta2", "0.1",
                "--dim", "5", "--t-final", "0.5",
                "--alpha1", "0.3", "--alpha2", "0.3",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        lines = (tmp_path / "sim.trajectory.csv").read_text().splitlines()
        assert lines[0] == "t,msq,bound,slack"
        last = lines[-1].split(",")
        assert float(last[3]) >= 0.0  # slack nonnegative
        cert = json.loads((tmp_path / "sim.certificate.json").read_text())
        assert cert["verdict"] == "Certified"

    def test_uncertified_does_not_simulate(self, tmp_path):
        out = tmp_path / "sim"
        code = main(
            [
                "simulate",
                "--kappa1", "1", "--kappa2", "2", "--chi", "0.05",
                "--gamma", "3.0", "--out", str(out),
            ]
        )
        assert code == EXIT_SMALL_GAIN
        assert not (tmp_path / "sim.trajectory.csv").exists()


class TestSweepCommand:
    def test_gamma_sweep(self, tmp_path):
        out = tmp_path / "sweep"
        code = main(
            [
                "sweep",
                "--kappa1", "1", "--kappa2", "2", "--chi", "0.1",
                "--gamma", "4.5",
                "--parameter", "gamma", "--start", "3.0", "--stop", "6.0",
                "--steps", "7",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        lines = (tmp_path / "sweep.sweep.csv").read_text().splitlines()
        assert lines[0].startswith("gamma,verdict")
        assert len(lines) == 8
        verdicts = [line.split(",")[1] for line in lines[1:]]
        assert verdicts[0] == "FailedSmallGain"
        assert verdicts[-1] == "Certified"
        # verdicts flip once, from failing to certified, as gamma grows
        flips = sum(1 for a, b in zip(verdicts, verdicts[1:]) if a != b)
        assert flips == 1


class TestCheckIdentitiesCommand:
    def test_opa_identities_pass(self, tmp_path):
        out = tmp_path / "ids"
        code = main(
            [
                "check-identities",
                "--kappa1", "1", "--kappa2", "2", "--chi", "0.1",
                "--gamma", "4.5",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "ids.identities.json").read_text())
        assert len(doc) == 5
        assert max(doc.values()) <= 1e-10


class TestFileDrivenInputs:
    def test_system_and_series_files_match_builtin_opa(self, tmp_path):
        params = OpaParams(1.0, 2.0, 0.1)
        sys, series = build_opa(params)
        sys_path = tmp_path / "system.json"
        series_path = tmp_path / "series.json"
        sys_path.write_text(json.dumps(serialize.system_to_json(sys)))
        series_path.write_text(json.dumps(serialize.series_to_json(series)))
        out_file = tmp_path / "file_run"
        out_opa = tmp_path / "opa_run"
        base = ["--gamma", "4.5", "--delta1", "0.1", "--delta2", "0.1"]
        code_file = main(
            ["certify", "--system", str(sys_path), *base, "--out", str(out_file)]
        )
        code_opa = main(["certify", *opa_flags(out_opa)])
        assert code_file == code_opa == EXIT_OK
        doc_file = json.loads((tmp_path / "file_run.certificate.json").read_text())
        doc_opa = json.loads((tmp_path / "opa_run.certificate.json").read_text())
        # identical certificate apart from the OPA-only ellipsoid level
        doc_opa.pop("invariant_level")
        assert doc_file == doc_opa

        code_ids = main(
            [
                "check-identities",
                "--system", str(sys_path), "--series", str(series_path),
                "--out", str(tmp_path / "ids"),
            ]
        )
        assert code_ids == EXIT_OK


class TestConfigHandling:
    def test_config_file_with_flag_override(self, tmp_path):
        config = {
            "system": {"opa": {"kappa1": 1.0, "kappa2": 2.0, "chi": 0.1}},
            "bounds": {"gamma": 3.0, "delta1": 0.1, "delta2": 0.1},
            "output": str(tmp_path / "c"),
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        # config alone fails the small-gain test; the flag override passes
        assert main(["certify", "--config", str(path)]) == EXIT_SMALL_GAIN
        assert main(["certify", "--config", str(path), "--gamma", "5.0"]) == EXIT_OK

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["certify", "--config", str(tmp_path / "nope.json")]) == EXIT_IO

    def test_malformed_config_is_config_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["certify", "--config", str(path)]) == EXIT_CONFIG

    def test_missing_required_inputs(self):
        assert main(["certify", "--gamma", "4.0"]) == EXIT_CONFIG

    def test_unknown_flag_exits_config_code(self):
        assert main(["certify", "--not-a-flag", "1"]) == EXIT_CONFIG

    def test_unknown_command_exits_config_code(self):
        assert main(["frobnicate"]) == EXIT_CONFIG

    def test_incomplete_opa_params(self):
        assert main(["certify", "--kappa1", "1.0", "--gamma", "4.0"]) == EXIT_CONFIG
