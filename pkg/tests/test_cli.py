import json

import numpy as np
import pytest

from slln_semigroups import cli
from slln_semigroups.cli import ConfigError, RunReport, config_from_dict, main, parse_config, run, summarize

B4 = [[0, 0.3, 0, 0], [0.1, 0, 0, 0.2], [0, 0, 0, 0.1], [0.2, 0, 0.1, 0]]


def two_point_cfg(experiment="slln", **extra):
    raw = {
        "schema_version": 1,
        "experiment": experiment,
        "dim": 4,
        "ensemble": {"L0": {"spectrum": [1, 2, 3, 4]}, "law": {"type": "two_point", "B": B4}},
    }
    raw.update(extra)
    return raw


def write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


class TestParse:
    def test_defaults_filled(self, tmp_path):
        cfg = parse_config(write(tmp_path, two_point_cfg()))
        assert cfg.grid_points == 64 and cfg.T == 1.0 and cfg.p == 2.0 and cfg.trials == 1000
        assert cfg.n_list == [2**k for k in range(2, 13)]
        assert cfg.ensemble.dim == 4
        assert cfg.ensemble.C == pytest.approx(np.linalg.norm(np.array(B4), 2))

    def test_weights_error_names_field(self):
        raw = two_point_cfg()
        raw["ensemble"]["law"] = {"type": "discrete", "weights": [0.45, 0.45],
                                  "support": [B4, (-np.array(B4)).tolist()]}
        with pytest.raises(ConfigError) as info:
            config_from_dict(raw)
        assert info.value.field == "ensemble.law.weights"

    def test_uncentred_support(self):
        raw = two_point_cfg()
        raw["ensemble"]["law"] = {"type": "discrete", "weights": [0.5, 0.5],
                                  "support": [B4, np.zeros((4, 4)).tolist()]}
        with pytest.raises(ConfigError) as info:
            config_from_dict(raw)
        assert info.value.field == "ensemble.law.support"

    def test_n_list_order(self):
        with pytest.raises(ConfigError, match="increasing") as info:
            config_from_dict(two_point_cfg(n_list=[8, 4]))
        assert info.value.field == "n_list"

    def test_missing_matrix_file(self, tmp_path):
        raw = two_point_cfg()
        raw["ensemble"]["L0"] = "missing.csv"
        with pytest.raises(ConfigError, match="not found") as info:
            parse_config(write(tmp_path, raw))
        assert info.value.field == "ensemble.L0"

    def test_matrix_from_csv(self, tmp_path):
        (tmp_path / "L0.csv").write_text("1,0.5\n0,2\n")
        raw = {"experiment": "slln", "ensemble": {"L0": "L0.csv", "law": {"type": "two_point",
                                                                           "B": [[0.1, 0], [0, -0.1]]}}}
        cfg = parse_config(write(tmp_path, raw))
        np.testing.assert_array_equal(cfg.ensemble.L0, [[1, 0.5], [0, 2]])

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="malformed"):
            parse_config(path)

    @pytest.mark.parametrize(
        "patch, field",
        [
            ({"experiment": "nope"}, "experiment"),
            ({"schema_version": 7}, "schema_version"),
            ({"trials": 1}, "trials"),
            ({"T": -1}, "T"),
            ({"seeds": []}, "seeds"),
            ({"tolerances": {"bogus": 1}}, "tolerances.bogus"),
            ({"dim": 3}, "dim"),
            ({"x": [1, 2]}, "x"),
        ],
    )
    def test_field_errors(self, patch, field):
        with pytest.raises(ConfigError) as info:
            config_from_dict(two_point_cfg(**patch))
        assert info.value.field == field

    def test_c_too_small(self):
        raw = two_point_cfg()
        raw["ensemble"]["C"] = 0.01
        with pytest.raises(ConfigError) as info:
            config_from_dict(raw)
        assert info.value.field == "ensemble.C"

    def test_depolarize_needs_law(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict({"experiment": "depolarize"})
        assert info.value.field == "xi_law"


class TestRun:
    def test_one_point_slln(self, tmp_path):
        raw = {"experiment": "slln", "n_list": [4, 64, 1024], "seeds": [0, 1],
               "ensemble": {"L0": [[1, 0.4], [0, 2]], "law": {"type": "discrete", "weights": [1.0],
                                                             "support": [[[0, 0], [0, 0]]]}}}
        rep = run(config_from_dict(raw, tmp_path), out=tmp_path / "o")
        assert rep.passed
        for per_seed in rep.series["sup_error"].values():
            assert max(per_seed.values()) <= 1e-10

    def test_martingale_audit_n3(self, tmp_path):
        raw = two_point_cfg("martingale_audit", n=3, audit_cases=50, n_list=[8, 64])
        rep = run(config_from_dict(raw), out=tmp_path)
        assert rep.passed
        decomp = [c for c in rep.checks if c.name.startswith("martingale.decomposition")]
        assert decomp and all(c.value <= 1e-10 for c in decomp)

    def test_depolarize_constant(self, tmp_path):
        raw = {"experiment": "depolarize", "xi_law": {"type": "constant", "value": 1.0},
               "n_list": [100, 10_000, 1_000_000]}
        rep = run(config_from_dict(raw), out=tmp_path)
        assert rep.passed
        c = [c for c in rep.checks if c.name.startswith("depolarize.coeff_error")][0]
        assert c.value < 2e-6
        text = (tmp_path / "depolarize_seed0.csv").read_bytes()
        assert b"\r" not in text
        assert text.splitlines()[0] == b"seed,n,coeff_product_error,coeff_sum_error,trace_distance"

    @pytest.mark.parametrize("experiment", ["chernoff", "burkholder", "tail"])
    def test_other_experiments_pass(self, tmp_path, experiment):
        raw = two_point_cfg(experiment, n_list=[8, 32, 128], trials=500, grid_points=16)
        assert run(config_from_dict(raw), out=tmp_path).passed

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_smoothness(self, tmp_path, p):
        rep = run(config_from_dict({"experiment": "smoothness", "p": p, "samples": 2000}), out=tmp_path)
        assert rep.passed

    def test_bit_identical(self, tmp_path):
        raw = two_point_cfg(n_list=[4, 16, 64], seeds=[3, 4], grid_points=8)
        a = run(config_from_dict(raw), out=tmp_path / "a")
        b = run(config_from_dict(raw), out=tmp_path / "b", threads=2)
        assert a.csv_paths and len(a.csv_paths) == len(b.csv_paths)
        for pa, pb in zip(a.csv_paths, b.csv_paths):
            assert "seed" in pa
            assert open(pa, "rb").read() == open(pb, "rb").read()

    def test_report_files(self, tmp_path):
        run(config_from_dict(two_point_cfg(n_list=[4, 8], grid_points=4)), out=tmp_path)
        d = json.loads((tmp_path / "report.json").read_text())
        assert d["passed"] is True and d["experiment"] == "slln"
        assert (tmp_path / "summary.txt").read_text().strip().endswith("PASS")

    def test_stage_error_has_context(self, tmp_path, monkeypatch):
        def boom(*a):
            raise ArithmeticError("bad")

        monkeypatch.setitem(cli._DRIVERS, "slln", boom)
        with pytest.raises(RuntimeError, match="stage 'slln'"):
            run(config_from_dict(two_point_cfg()), out=tmp_path)


class TestSummarize:
    def test_single_echo(self, tmp_path):
        rep = run(config_from_dict(two_point_cfg(n_list=[4, 8], grid_points=4)), out=tmp_path)
        s = summarize([rep])
        assert s["reports"] == 1 and s["passed"] == 1
        for c in rep.checks:
            assert s["worst_margin"][c.name.split("[")[0]] == c.margin

    def test_fifty_seeds(self, tmp_path):
        raw = two_point_cfg(n_list=[16, 256, 4096], seeds=list(range(50)), grid_points=16)
        rep = run(config_from_dict(raw), out=tmp_path)
        ser = summarize([rep])["series"]["sup_error"]
        assert ser["count"] == [50, 50, 50]
        assert ser["monotone_decreasing"]
        assert ser["median"][0] / ser["median"][-1] >= 5

    def test_round_trip(self, tmp_path):
        rep = run(config_from_dict(two_point_cfg(n_list=[4, 8], grid_points=4)), out=tmp_path)
        back = RunReport.from_dict(json.loads((tmp_path / "report.json").read_text()))
        assert summarize([back]) == summarize([rep])

    def test_mixed_types(self, tmp_path):
        a = RunReport("slln", {}, [0])
        b = RunReport("tail", {}, [0])
        with pytest.raises(ValueError, match="mixed"):
            summarize([a, b])

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])


class TestMain:
    def test_validate(self, tmp_path, capsys):
        assert main(["validate", str(write(tmp_path, two_point_cfg()))]) == 0
        assert main(["validate", str(write(tmp_path, two_point_cfg(n_list=[8, 4]), "b.json"))]) == 2
        assert "n_list" in capsys.readouterr().err

    def test_run_and_summarize(self, tmp_path, capsys):
        cfg = write(tmp_path, two_point_cfg(n_list=[4, 16], grid_points=4, output="res"))
        assert main(["run", str(cfg), "--seed", "9"]) == 0
        assert (tmp_path / "res" / "slln_seed9.csv").exists()
        assert main(["summarize", str(tmp_path / "res" / "report.json"),
                     "--json", str(tmp_path / "agg.json")]) == 0
        assert json.loads((tmp_path / "agg.json").read_text())["reports"] == 1

    def test_failing_check_exit_code(self, tmp_path):
        raw = two_point_cfg("chernoff", n_list=[8, 32, 128], grid_points=8,
                            tolerances={"chernoff.slope_min": -0.9, "chernoff.slope_max": -0.8})
        assert main(["run", str(write(tmp_path, raw)), "--out", str(tmp_path / "o")]) == 1

    def test_summarize_missing_file(self, tmp_path):
        assert main(["summarize", str(tmp_path / "nope.json")]) == 2
