import json

import numpy as np
import pytest

from tsgeom import cli, report
from tsgeom.cli import (
    EXIT_CONFIG, EXIT_FAILED, EXIT_OK, ManifestError, load_manifest, main,
    resolve_manifest, run,
)
from tsgeom.report import canonical_json, strip_timings


def write_manifest(tmp_path, data, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


MINIMAL = {
    "factors": [{"builtin": "cosymplectic_flat"},
                {"builtin": "cosymplectic_flat"}],
    "checks": ["harmonicity"],
}


class TestManifest:
    def test_minimal_defaults(self, tmp_path):
        mf = load_manifest(write_manifest(tmp_path, MINIMAL))
        assert mf["tol"] == 1e-6
        assert mf["count"] == 64
        assert mf["seed"] == 7
        assert mf["mode"] == "jet"
        assert mf["ab_grid"] == [(0.0, 1.0), (1.0, 1.0), (-2.0, 3.0),
                                 (0.5, -1.0)]

    def test_zero_b_rejected(self, tmp_path):
        data = dict(MINIMAL, product={"a": 1.0, "b": 0})
        with pytest.raises(ManifestError) as err:
            load_manifest(write_manifest(tmp_path, data))
        assert "$.product.b" in str(err.value)

    def test_bad_expression_positioned(self, tmp_path):
        data = {
            "factors": [
                {"builtin": "cosymplectic_flat"},
                {"custom": {
                    "dim": 3, "coords": ["x", "y", "z"],
                    "g": [["1", "0", "0"], ["0", "1 +* 1", "0"],
                          ["0", "0", "1"]],
                    "phi": [["0", "-1", "0"], ["1", "0", "0"],
                            ["0", "0", "0"]],
                    "xi": ["0", "0", "1"], "eta": ["0", "0", "1"],
                }},
            ],
            "checks": [],
        }
        with pytest.raises(ManifestError) as err:
            load_manifest(write_manifest(tmp_path, data))
        msg = str(err.value)
        assert "$.factors[1].custom.g[1][1]" in msg
        assert "offset 3" in msg

    def test_unknown_check(self, tmp_path):
        data = dict(MINIMAL, checks=["nope"])
        with pytest.raises(ManifestError) as err:
            load_manifest(write_manifest(tmp_path, data))
        assert "$.checks[0]" in str(err.value)

    def test_unknown_builtin(self, tmp_path):
        data = dict(MINIMAL, factors=[{"builtin": "warp_core"},
                                      {"builtin": "cosymplectic_flat"}])
        with pytest.raises(ManifestError):
            load_manifest(write_manifest(tmp_path, data))

    def test_missing_file_exit_2(self, capsys):
        assert main(["verify", "/nonexistent/manifest.json"]) == EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err


class TestRun:
    def test_flat_flat_all_product_checks_pass(self):
        mf = resolve_manifest({
            "factors": [{"builtin": "cosymplectic_flat"},
                        {"builtin": "cosymplectic_flat"}],
            "product": {"a": 1.0, "b": 1.0},
            "checks": ["axioms", "trans_sasakian", "transverse", "connection",
                       "nabla_j", "curvature", "integrability",
                       "codifferential", "harmonicity", "astheno", "energy"],
            "sampling": {"count": 8},
        })
        out = run(mf)
        assert out["overall_verdict"] == "pass"
        for chk in out["checks"]:
            if chk["name"].startswith("energy"):
                continue
            assert chk["max_residual"] < 1e-9, chk["name"]

    def test_empty_checks_report_only(self):
        mf = resolve_manifest(dict(MINIMAL, checks=[]))
        out = run(mf)
        assert out["checks"] == []
        assert out["overall_verdict"] == "pass"
        assert cli.exit_code_for(out) == EXIT_OK

    def test_broken_j_control_fails(self):
        mf = resolve_manifest({
            "factors": [{"builtin": "sasakian_heisenberg"},
                        {"builtin": "kenmotsu_warped"}],
            "product": {"a": 1.0, "b": 2.0, "tamper": {"broken_j": True}},
            "checks": ["integrability", "harmonicity"],
            "sampling": {"count": 8},
        })
        out = run(mf)
        assert out["overall_verdict"] == "fail"
        assert cli.exit_code_for(out) == EXIT_FAILED
        verdicts = {c["name"]: c["verdict"] for c in out["checks"]}
        assert all(v != "harmonic" for n, v in verdicts.items()
                   if n.startswith("harmonicity"))

    def test_corrupted_phi_control_fails_axioms(self):
        mf = resolve_manifest({
            "factors": [{"builtin": "cosymplectic_flat",
                         "tamper": {"phi_scale": 1.1}},
                        {"builtin": "cosymplectic_flat"}],
            "checks": ["axioms"],
            "sampling": {"count": 8},
        })
        out = run(mf)
        assert out["overall_verdict"] == "fail"
        assert out["checks"][0]["verdict"] == "fail"

    def test_check_errors_are_captured(self):
        # astheno on the broken-J product raises NotIntegrable internally;
        # the runner must convert it into a failing check, not crash
        mf = resolve_manifest({
            "factors": [{"builtin": "sasakian_heisenberg"},
                        {"builtin": "cosymplectic_flat"}],
            "product": {"a": 1.0, "b": 1.0, "tamper": {"broken_j": True}},
            "checks": ["astheno"],
            "sampling": {"count": 6},
        })
        out = run(mf)
        assert out["overall_verdict"] == "fail"
        assert "NotIntegrable" in out["checks"][0]["details"]["error"]


class TestDeterminism:
    def test_byte_identical_reports(self):
        mf1 = resolve_manifest(dict(MINIMAL, sampling={"count": 6}))
        mf2 = resolve_manifest(dict(MINIMAL, sampling={"count": 6}))
        r1 = canonical_json(strip_timings(run(mf1)))
        r2 = canonical_json(strip_timings(run(mf2)))
        assert r1 == r2

    def test_timings_isolated(self):
        mf = resolve_manifest(dict(MINIMAL, sampling={"count": 4}))
        out = run(mf)
        assert "timings" in out
        stripped = strip_timings(out)
        assert "timings" not in stripped


class TestEmitAndMain:
    def test_table1_cli_markdown(self, tmp_path, capsys):
        out = tmp_path / "t1.md"
        code = main(["table1", "--samples", "4", "--format", "md",
                     "--ab", "0,1", "--out", str(out)])
        assert code == EXIT_OK
        text = out.read_text()
        assert report.TABLE1_HEADER in text
        assert text.count("Yes") == 9

    def test_verify_json_roundtrip_and_report_rerender(self, tmp_path):
        m = write_manifest(tmp_path, dict(MINIMAL, sampling={"count": 4},
                                          product={"a": 0.0, "b": 1.0}))
        out = tmp_path / "r.json"
        code = main(["verify", m, "--out", str(out)])
        assert code == EXIT_OK
        data = json.loads(out.read_text())
        assert data["engine"]["name"] == "tsgeom"
        md_out = tmp_path / "r.md"
        code = main(["report", str(out), "--format", "md", "--out",
                     str(md_out)])
        assert code == EXIT_OK
        assert "Verification report" in md_out.read_text()

    def test_classify_builtins(self, tmp_path, capsys):
        m = write_manifest(tmp_path, {
            "factors": [{"builtin": "sasakian_heisenberg"},
                        {"builtin": "kenmotsu_warped"}],
            "checks": [],
            "sampling": {"count": 16},
        })
        code = main(["classify", m])
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        c1, c2 = data["classification"]
        assert c1["class"] == "sasakian"
        assert abs(c1["alpha"] - 1.0) < 1e-7
        assert c2["class"] == "kenmotsu"
        assert abs(c2["beta"] - 1.0) < 1e-7

    def test_ab_flag_overrides_grid(self, tmp_path):
        m = write_manifest(tmp_path, dict(MINIMAL, sampling={"count": 4}))
        out = tmp_path / "r.json"
        code = main(["verify", m, "--ab", "2,1", "--out", str(out)])
        assert code == EXIT_OK
        data = json.loads(out.read_text())
        assert data["manifest"]["ab_grid"] == [[2.0, 1.0]]
        assert len(data["checks"]) == 1
        assert "a=2,b=1" in data["checks"][0]["name"]

    def test_canonical_json_shortest_roundtrip_floats(self):
        s = canonical_json({"x": 0.1, "y": 1.0 / 3.0})
        assert '"x":0.1' in s
        assert json.loads(s)["y"] == 1.0 / 3.0
