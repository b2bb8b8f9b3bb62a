import json
from pathlib import Path

import numpy as np
import pytest

from osl_lab import cli

REPO = Path(__file__).resolve().parents[1]


def write_config(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


MINIMAL = """
[base]
kind = "rotation"

[cocycle]
name = "constant"

[cocycle.params]
matrix = [[4.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]

[run]
pipelines = ["spectrum"]
scales = [50]
samples = 2
seed = 1
"""


class TestRun:
    def test_minimal_spectrum(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        rc = cli.main(["run", "--config", cfg, "--out-dir",
                       str(tmp_path / "out")])
        assert rc == 0
        lines = (tmp_path / "out" / "spectrum.csv").read_text().splitlines()
        assert lines[0] == ("scale_n,index_i,exponent_nats_per_step,"
                            "std_error_nats_per_step")
        values = [float(line.split(",")[2]) for line in lines[1:]]
        assert values == pytest.approx([np.log(4), np.log(2), 0.0], abs=1e-12)

    def test_invalid_tau_exit_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL + "tau = [2, 2]\n")
        rc = cli.main(["run", "--config", cfg, "--out-dir",
                       str(tmp_path / "out")])
        assert rc == 2
        assert "run.tau" in capsys.readouterr().err

    def test_degenerate_pipeline_exit_3(self, tmp_path):
        cfg = write_config(tmp_path, """
[base]
kind = "rotation"

[cocycle]
name = "constant"

[cocycle.params]
matrix = [[1.0, 0.0], [0.0, 1.0]]

[run]
pipelines = ["spectrum", "oseledets"]
scales = [16]
samples = 2
seed = 1
tau = [1]
""")
        rc = cli.main(["run", "--config", cfg, "--out-dir",
                       str(tmp_path / "out")])
        assert rc == 3

    def test_json_config_accepted(self, tmp_path):
        cfg_dict = {
            "base": {"kind": "rotation"},
            "cocycle": {"name": "constant",
                        "params": {"matrix": [[2.0, 0.0], [0.0, 1.0]]}},
            "run": {"pipelines": ["spectrum"], "scales": [10],
                    "samples": 1, "seed": 0},
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg_dict))
        rc = cli.main(["run", "--config", str(path), "--out-dir",
                       str(tmp_path / "out")])
        assert rc == 0

    def test_replay_byte_identical(self, tmp_path):
        cfg = str(REPO / "configs" / "golden_schrodinger.toml")
        for d in ("a", "b"):
            rc = cli.main(["run", "--config", cfg, "--out-dir",
                           str(tmp_path / d)])
            assert rc == 0
        for name in ("spectrum.csv", "deviation.csv", "continuity.csv",
                     "oseledets.jsonl"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())

    def test_json_output_format(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        rc = cli.main(["run", "--config", cfg, "--out-dir",
                       str(tmp_path / "out"), "--format", "json"])
        assert rc == 0
        data = json.loads((tmp_path / "out" / "spectrum.json").read_text())
        assert data[0]["scale_n"] == 50

    def test_manifest_contents(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        cli.main(["run", "--config", cfg, "--out-dir", str(tmp_path / "out")])
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["seed"] == 1
        assert "spectrum" in manifest["stages"]
        assert manifest["stages"]["spectrum"]["status"] == "ok"
        assert len(manifest["config_hash"]) == 64

    def test_plot_data_two_columns(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        cli.main(["run", "--config", cfg, "--out-dir", str(tmp_path / "out")])
        for line in (tmp_path / "out" / "spectrum_L1.dat").read_text().splitlines():
            assert len(line.split()) == 2


class TestValidate:
    def test_valid_config(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL)
        assert cli.main(["validate", "--config", cfg]) == 0
        assert "OK" in capsys.readouterr().out

    def test_unknown_catalog_name(self, tmp_path, capsys):
        bad = MINIMAL.replace('name = "constant"', 'name = "nonsense"')
        cfg = write_config(tmp_path, bad)
        assert cli.main(["validate", "--config", cfg]) == 2
        assert "cocycle.name" in capsys.readouterr().err

    def test_symbolic_window_warning(self, tmp_path, capsys):
        cfg = write_config(tmp_path, """
[base]
kind = "bernoulli"
weights = [0.5, 0.5]

[cocycle]
name = "diagonal_random"

[cocycle.params]
values = [2.0, 0.5]

[run]
pipelines = ["spectrum"]
scales = [4194304]
samples = 1
seed = 0
""")
        assert cli.main(["validate", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "warning" in out and "n_max" in out

    def test_base_cocycle_mismatch(self, tmp_path, capsys):
        cfg = write_config(tmp_path, """
[base]
kind = "rotation"

[cocycle]
name = "diagonal_random"

[cocycle.params]
values = [2.0, 0.5]

[run]
pipelines = ["spectrum"]
scales = [10]
samples = 1
seed = 0
""")
        assert cli.main(["validate", "--config", cfg]) == 2
        assert "base.kind" in capsys.readouterr().err

    def test_unsorted_scales(self, tmp_path, capsys):
        cfg = write_config(tmp_path, MINIMAL.replace("[50]", "[50, 10]"))
        assert cli.main(["validate", "--config", cfg]) == 2
        assert "run.scales" in capsys.readouterr().err


class TestDescribe:
    def test_schrodinger_formula(self, capsys):
        assert cli.main(["describe", "schrodinger"]) == 0
        out = capsys.readouterr().out
        assert "cos(2 pi x)" in out and "energy" in out

    def test_pipelines_list(self, capsys):
        assert cli.main(["describe", "pipelines"]) == 0
        out = capsys.readouterr().out
        for p in cli.PIPELINES:
            assert p in out

    def test_ap_contract(self, capsys):
        assert cli.main(["describe", "ap"]) == 0
        out = capsys.readouterr().out
        assert "gaps" in out and "angles" in out and "kappa / eps" in out

    def test_unknown_name(self, capsys):
        assert cli.main(["describe", "wat"]) == 2
