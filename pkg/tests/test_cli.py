import csv
import io
import json

import pytest

from rideleak.cli import main
from rideleak.road_network import dump_edge_list, grid_graph


def simulate(tmp_path, *extra, name="run"):
    out = tmp_path / name
    argv = ["simulate", "--grid", "10x10", "--eta", "8", "--l", "2", "--m", "5",
            "--drivers", "30", "--seed", "42", "--out", str(out), *extra]
    return main(argv), out


class TestSimulate:
    def test_one_transcript_with_all_diffs(self, tmp_path):
        code, out = simulate(tmp_path)
        assert code == 0
        files = sorted(out.iterdir())
        assert [f.name for f in files] == ["transcript_0000.json"]
        doc = json.loads(files[0].read_text())
        assert sum(len(d["diffs"]) for d in doc["per_driver"]) == 8 * 5 * 30
        assert "rider_hidden" not in doc

    def test_byte_identical(self, tmp_path):
        _, a = simulate(tmp_path, "--queries", "3", name="a")
        _, b = simulate(tmp_path, "--queries", "3", name="b")
        for fa, fb in zip(sorted(a.iterdir()), sorted(b.iterdir())):
            assert fa.read_bytes() == fb.read_bytes()

    def test_zero_drivers(self, tmp_path):
        assert main(["simulate", "--drivers", "0", "--out", str(tmp_path)]) == 2

    def test_diameter_too_big(self, tmp_path):
        assert main(["simulate", "--l", "1", "--m", "4", "--out", str(tmp_path)]) == 2

    def test_bad_flag(self):
        assert main(["simulate", "--l", "banana"]) == 2

    def test_missing_graph_file(self, tmp_path):
        assert main(["simulate", "--graph", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]) == 3

    def test_graph_file_and_config(self, tmp_path):
        gfile = tmp_path / "g.txt"
        gfile.write_text("# 6x6 grid\n" + dump_edge_list(grid_graph(6, 6)))
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(f"graph = {gfile}\neta = 3\nl = 4\nm = 2\ndrivers = 5\nreveal_truth = true\n")
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(cfg), "--drivers", "7", "--out", str(out)]) == 0
        doc = json.loads((out / "transcript_0000.json").read_text())
        assert doc["config"]["eta"] == 3 and doc["config"]["l"] == 4
        assert len(doc["per_driver"]) == 7  # flag beats file
        assert "rider_hidden" in doc


class TestAttack:
    def test_uniform_blocks_full_recovery(self, tmp_path):
        code, out = simulate(tmp_path, "--drivers", "100", "--placement", "uniform-blocks", "--reveal-truth")
        assert code == 0
        reports = tmp_path / "reports"
        assert main(["attack", str(out), "--out", str(reports)]) == 0
        doc = json.loads((reports / "report_0000.json").read_text())
        assert doc["complete"] is True
        assert doc["exact_match"]["rider"] is True
        assert all(doc["exact_match"]["drivers"].values())
        assert len(doc["drivers"]) == 100

    def test_grid_drivers_with_map(self, tmp_path):
        code, out = simulate(tmp_path, "--drivers", "200", "--queries", "2", "--reveal-truth")
        reports = tmp_path / "reports"
        assert main(["attack", str(out), "--out", str(reports)]) == 0
        for f in sorted(reports.iterdir()):
            doc = json.loads(f.read_text())
            assert doc["complete"] and doc["exact_match"]["rider"]
            assert all(doc["exact_match"]["drivers"].values())

    def test_single_driver_incomplete(self, tmp_path, capsys):
        _, out = simulate(tmp_path, "--drivers", "1", "--l", "4", "--m", "2")
        capsys.readouterr()
        assert main(["attack", str(out), "--leakage-only"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["complete"] is False
        assert "rider_vec" not in doc
        assert len(doc["per_block"]) == 8 * 2

    def test_forged_transcript(self, tmp_path):
        _, out = simulate(tmp_path)
        path = out / "transcript_0000.json"
        doc = json.loads(path.read_text())
        doc["per_driver"][0]["diffs"][0][2] = 3  # both +3 and -3 at the same 2-bit block
        doc["per_driver"][1]["diffs"][0][2] = -3
        path.write_text(json.dumps(doc))
        assert main(["attack", str(path)]) == 4

    def test_not_json(self, tmp_path):
        p = tmp_path / "transcript_0000.json"
        p.write_text("{")
        assert main(["attack", str(p)]) == 4

    def test_missing_input(self, tmp_path):
        assert main(["attack", str(tmp_path / "absent.json")]) == 3

    def test_same_rider_needs_matching_config(self, tmp_path):
        _, a = simulate(tmp_path, name="a")
        _, b = simulate(tmp_path, "--l", "1", name="b")
        assert main(["attack", "--same-rider", str(a / "transcript_0000.json"),
                     str(b / "transcript_0000.json")]) == 2


class TestCoupon:
    def test_table_rows(self, capsys):
        assert main(["coupon", "--l-range", "1..4", "--trials", "100000", "--seed", "5"]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert [r["l"] for r in rows] == ["1", "2", "3", "4"]
        assert [r["closed_form_ceil"] for r in rows] == ["3", "9", "22", "55"]

    def test_single_trial(self, capsys):
        assert main(["coupon", "--l-range", "2", "--trials", "1"]) == 0
        (row,) = csv.DictReader(io.StringIO(capsys.readouterr().out))
        assert float(row["mc_std"]) == 0.0

    def test_repeatable(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            assert main(["coupon", "--l-range", "1..3", "--trials", "500", "--seed", "8", "--out", str(p)]) == 0
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.parametrize("rng", ["0..3", "3..2", "x", "1..17"])
    def test_bad_range(self, rng):
        assert main(["coupon", "--l-range", rng, "--trials", "10"]) == 2


class TestLemmaCheck:
    def test_l4(self, capsys):
        assert main(["lemma-check", "--l-max", "4"]) == 0
        assert "total: 30 cases, 0 failures" in capsys.readouterr().out

    def test_l1(self, capsys):
        assert main(["lemma-check", "--l-max", "1"]) == 0
        assert "total: 2 cases, 0 failures" in capsys.readouterr().out

    def test_l9(self):
        assert main(["lemma-check", "--l-max", "9"]) == 2
