import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tensorfill import __version__
from tensorfill.cli import main
from tensorfill.config import config_hash
from tensorfill.sptn import read_tensor, write_tensor
from tensorfill.tensor import DenseTensor, SparseTensor


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run_json(capsys, argv):
    code = main(argv + ["--json"])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else json.loads(err))


@pytest.fixture
def truth_file(tmp_path):
    spec = write_json(tmp_path / "gen.json", {"kind": "lowrank", "shape": [8, 8, 8], "rank": 1, "seed": 0,
                                              "name": "r1"})
    out = tmp_path / "truth.sptn"
    assert main(["generate", spec, str(out), "--quiet"]) == 0
    return out


class TestGenerate:
    def test_byte_identical(self, tmp_path, truth_file):
        again = tmp_path / "again.sptn"
        main(["generate", str(tmp_path / "gen.json"), str(again), "--quiet"])
        assert again.read_bytes() == truth_file.read_bytes()

    def test_provenance_header(self, truth_file):
        header = json.loads(truth_file.read_text().splitlines()[0])
        prov = header["provenance"]
        assert prov["tool"] == "tensorfill" and prov["version"] == __version__ and prov["seed"] == 0
        assert prov["config_sha256"] == config_hash({"kind": "lowrank", "shape": [8, 8, 8], "rank": 1, "seed": 0,
                                                     "name": "r1"})

    def test_seed_flag_overrides(self, tmp_path, truth_file):
        other = tmp_path / "other.sptn"
        main(["generate", str(tmp_path / "gen.json"), str(other), "--seed", "5", "--quiet"])
        assert not np.array_equal(read_tensor(other).values, read_tensor(truth_file).values)

    @pytest.mark.parametrize("doc", [
        {"kind": "smooth", "shape": [4, 5, 3], "frequency": 1.0},
        {"kind": "hpo", "learner": "knn", "axes": [{"name": "k", "values": [1, 5]}, {"name": "p", "values": [1, 2]}]},
        {"kind": "query", "table": {"rows": 60}, "predicates": [{"column": "birth_year", "op": "<=", "values": [1950, 1990]}]},
    ])
    def test_other_kinds(self, tmp_path, doc):
        out = tmp_path / "t.sptn"
        assert main(["generate", write_json(tmp_path / "k.json", doc), str(out), "--quiet"]) == 0
        assert read_tensor(out).values.min() >= 0


class TestEndToEnd:
    def test_sample_complete(self, tmp_path, truth_file, capsys):
        obs = tmp_path / "obs.sptn"
        code, s = run_json(capsys, ["sample", str(truth_file), str(obs), "--fraction", "0.2", "--seed", "0"])
        assert code == 0 and s["nnz"] == round(0.2 * 512)
        pred = tmp_path / "pred.sptn"
        code, s = run_json(capsys, ["complete", str(obs), str(pred), "--method", "cpd", "--rank", "1",
                                    "--truth", str(truth_file)])
        assert code == 0 and s["mae"] < 1e-3
        assert read_tensor(pred).shape == (8, 8, 8)

    def test_config_and_flags(self, tmp_path, truth_file, capsys):
        obs = tmp_path / "obs.sptn"
        main(["sample", str(truth_file), str(obs), "--fraction", "0.2", "--quiet"])
        cfg = write_json(tmp_path / "m.json", {"method": "tucker", "rank": 2, "train": {"max_epochs": 5}})
        code, s = run_json(capsys, ["complete", str(obs), str(tmp_path / "p.sptn"), "--config", cfg,
                                    "--method", "cpd-s", "--lambda", "0.5"])
        assert code == 0 and s["method"] == "cpd-s" and s["stop_reason"] == "max-epochs"

    def test_ensemble_outputs(self, tmp_path, truth_file):
        obs = tmp_path / "obs.sptn"
        main(["sample", str(truth_file), str(obs), "--fraction", "0.2", "--quiet"])
        spec = write_json(tmp_path / "e.json", {"method": "tensemble-cpd-mean", "ranks": [1, 2],
                                                "train": {"max_epochs": 50}})
        out = tmp_path / "ens"
        assert main(["ensemble", str(obs), str(out), "--spec", spec, "--quiet"]) == 0
        assert (out / "prediction.sptn").exists()
        assert json.loads((out / "provenance.json").read_text())["command"] == "ensemble"


class TestExperiments:
    def test_benchmark(self, tmp_path, truth_file):
        spec = write_json(tmp_path / "b.json", {"tensors": [{"name": "r1", "path": str(truth_file)}],
                                                "methods": [{"method": "cpd", "rank": 1}],
                                                "fractions": [0.2], "repetitions": 2})
        out = tmp_path / "bench"
        assert main(["benchmark", spec, str(out), "--quiet"]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert json.loads(lines[0][2:])["command"] == "benchmark"
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 4 and {r["method"] for r in rows} == {"naive", "cpd"}
        assert len(json.loads((out / "report.json").read_text())["rows"]) == 4

    def test_relative_tensor_path(self, tmp_path, truth_file):
        spec = write_json(tmp_path / "b.json", {"tensors": [{"name": "r1", "path": "truth.sptn"}],
                                                "methods": ["naive"], "repetitions": 1})
        assert main(["benchmark", spec, str(tmp_path / "o"), "--quiet"]) == 0

    def test_inline_generated_tensor_rankscan(self, tmp_path, capsys):
        spec = write_json(tmp_path / "r.json", {"tensor": {"name": "g", "generate": {"kind": "lowrank", "shape": [5, 5, 5],
                                                                                     "rank": 1}},
                                                "ranks": [1]})
        code, s = run_json(capsys, ["rankscan", spec, str(tmp_path / "rs")])
        assert code == 0 and s["scan"][0][1] < 1e-3

    def test_timing(self, tmp_path, truth_file):
        spec = write_json(tmp_path / "t.json", {"tensors": [{"name": "r1", "path": str(truth_file)}],
                                                "methods": [{"method": "cpd", "rank": 1, "train": {"max_epochs": 20}}],
                                                "repetitions": 1})
        assert main(["timing", spec, str(tmp_path / "tm"), "--quiet"]) == 0
        rows = list(csv.DictReader((tmp_path / "tm" / "timing.csv").read_text().splitlines()[1:]))
        assert all(float(r["seconds_mean"]) > 0 for r in rows)


class TestConvert:
    def test_json_sparse(self, tmp_path):
        src = write_json(tmp_path / "in.json", {"shape": [2, 3], "entries": [[0, 1, 0.5], [1, 2, 2.0]]})
        out = tmp_path / "o.sptn"
        assert main(["convert", src, str(out), "--quiet"]) == 0
        t = read_tensor(out)
        assert isinstance(t, SparseTensor) and t.values.tolist() == [0.5, 2.0] and t.name == "in"

    def test_csv_inferred_shape(self, tmp_path):
        src = tmp_path / "in.csv"
        src.write_text("i,j,value\n0,0,1.0\n2,1,3.0\n")
        out = tmp_path / "o.sptn"
        assert main(["convert", str(src), str(out), "--quiet"]) == 0
        assert read_tensor(out).shape == (3, 2)

    def test_dense(self, tmp_path):
        src = write_json(tmp_path / "in.json", {"values": [[1.0, 2.0], [3.0, 4.0]]})
        out = tmp_path / "o.sptn"
        assert main(["convert", src, str(out), "--dense", "--quiet"]) == 0
        assert isinstance(read_tensor(out), DenseTensor)


class TestErrors:
    def test_unknown_key_exit_2(self, tmp_path, truth_file, capsys):
        obs = tmp_path / "obs.sptn"
        write_tensor(read_tensor(truth_file).to_sparse(), obs)
        cfg = write_json(tmp_path / "bad.json", {"method": "cpd", "rnak": 2})
        code, err = run_json(capsys, ["complete", str(obs), str(tmp_path / "p.sptn"), "--config", cfg])
        assert code == 2 and err["key"] == "rnak" and err["error"] == "config"

    def test_unknown_generator_key(self, tmp_path, capsys):
        spec = write_json(tmp_path / "g.json", {"kind": "lowrank", "shpe": [2, 2]})
        code, err = run_json(capsys, ["generate", spec, str(tmp_path / "o.sptn")])
        assert code == 2 and err["key"] == "shpe"

    def test_missing_input_exit_3(self, tmp_path, capsys):
        code, err = run_json(capsys, ["sample", str(tmp_path / "nope.sptn"), str(tmp_path / "o.sptn"),
                                      "--fraction", "0.1"])
        assert code == 3 and err["error"] == "io"

    def test_malformed_tensor_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.sptn"
        bad.write_text("not a header\n")
        code, _ = run_json(capsys, ["sample", str(bad), str(tmp_path / "o.sptn"), "--fraction", "0.1"])
        assert code == 2

    def test_bad_threads(self, tmp_path, truth_file, capsys):
        code, err = run_json(capsys, ["sample", str(truth_file), str(tmp_path / "o.sptn"), "--fraction", "0.1",
                                      "--threads", "0"])
        assert code == 2 and err["key"] == "threads"

    def test_creates_parent_dirs_without_leftovers(self, tmp_path, truth_file, capsys):
        target = tmp_path / "missing_dir" / "o.sptn"
        code, _ = run_json(capsys, ["sample", str(truth_file), str(target), "--fraction", "0.1"])
        assert code == 0 and target.exists()
        assert not list(target.parent.glob("*.tmp*"))


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "tensorfill", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
