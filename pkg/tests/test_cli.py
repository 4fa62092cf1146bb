import csv
import json
import math
import pathlib

import pytest

from spdeblowup.cli import EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION, main

DATA = pathlib.Path(__file__).parent / "data"


def _write(tmp_path, obj, name="cfg.json"):
    f = tmp_path / name
    f.write_text(json.dumps(obj, indent=2))
    return str(f)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


ZERO_K = {
    "params": {"beta1": 1, "beta2": 1, "gamma1": 1, "gamma2": 1, "k": [[0, 0], [0, 0]], "hurst": 0.7,
               "initial": {"type": "eigen", "c1": 1, "c2": 2}},
}


def _table(rows):
    return {(r[0], r[1]): r for r in rows[1:]}


class TestBounds:
    def test_minimal_values(self, tmp_path, capsys):
        cfg = _write(tmp_path, ZERO_K)
        assert main(["bounds", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
        t = _table(_read_csv(tmp_path / "o" / "bounds.csv"))
        assert float(t[("lambda", "")][2]) == 1.0
        assert float(t[("psi_sup", "")][2]) == 0.5
        assert float(t[("theta_lower", "")][2]) == pytest.approx(1.0)
        assert float(t[("theta_u1", "")][2]) == pytest.approx(16 / (3 * math.pi))
        assert (tmp_path / "o" / "bounds.txt").exists()
        assert "theta_u1" in capsys.readouterr().out

    def test_coupling_failure_routes_rows(self, tmp_path):
        obj = json.loads(json.dumps(ZERO_K))
        obj["params"].update(beta1=2, k=[[0.1, 0.0], [0.1, 0.0]])
        cfg = _write(tmp_path, obj)
        assert main(["bounds", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
        t = _table(_read_csv(tmp_path / "bounds.csv"))
        for q in ("rho1", "theta_lower", "theta_u2", "tail_concentration", "tail_markov"):
            assert t[(q, "")][3] == "inapplicable"
        assert t[("theta_lower_1", "")][3] == "ok"
        assert t[("theta_lower_2", "")][3] == "ok"

    def test_golden(self, tmp_path):
        assert main(["bounds", "--config", str(DATA / "golden_config.json"), "--out", str(tmp_path)]) == EXIT_OK
        got = _read_csv(tmp_path / "bounds.csv")
        want = _read_csv(DATA / "bounds_golden.csv")
        assert len(got) == len(want)
        for g, w in zip(got, want):
            assert g[:2] == w[:2] and g[3:] == w[3:]
            if w[2] in ("", "true", "false") or g[2] == w[2]:
                assert g[2] == w[2]
            else:
                assert float(g[2]) == pytest.approx(float(w[2]), rel=1e-9)


class TestSimulate:
    def _cfg(self, tmp_path, **camp):
        obj = json.loads(json.dumps(ZERO_K))
        obj["params"]["initial"] = {"type": "eigen", "c1": 1, "c2": 1}
        c = {"name": "deg", "t_max": 4, "n_steps": 400, "n_paths": 3, "seed": 1, "pipelines": ["lower_star", "upper_1"]}
        c.update(camp)
        obj["campaigns"] = [c]
        obj["output"] = {"dir": str(tmp_path / "out")}
        return _write(tmp_path, obj)

    def test_degenerate_campaign_files(self, tmp_path, capsys):
        cfg = self._cfg(tmp_path, dump_paths=True)
        assert main(["simulate", "--config", cfg]) == EXIT_OK
        rep = json.loads((tmp_path / "out" / "deg.json").read_text())
        assert rep["summary"]["lower_star"]["mean"] == pytest.approx(2.0, abs=1e-12)
        assert rep["summary"]["upper_1"]["mean"] == pytest.approx(8 / math.pi, abs=1e-12)
        rows = _read_csv(tmp_path / "out" / "deg_paths.csv")
        assert rows[0][0] == "index" and len(rows) == 4
        assert (tmp_path / "out" / "deg_summary.csv").exists()
        assert "violations=0" in capsys.readouterr().out

    @pytest.mark.parametrize("T,expected", [(2.0, 0.0), (3.0, 1.0)])
    def test_deterministic_probability(self, tmp_path, T, expected):
        cfg = self._cfg(tmp_path, bound_T=T, pipelines=["upper_1"])
        assert main(["simulate", "--config", cfg]) == EXIT_OK
        rep = json.loads((tmp_path / "out" / "deg.json").read_text())
        assert rep["summary"]["upper_1"]["p_le_T"]["estimate"] == expected

    def test_thread_count_invariance(self, tmp_path):
        obj = {
            "params": {"beta1": 1, "beta2": 1, "gamma1": "sandwich", "gamma2": "sandwich",
                       "k": [[0.6, 0.6], [0.6, 0.6]], "hurst": 0.7},
            "campaigns": [{"name": "r", "t_max": 4, "n_steps": 200, "n_paths": 16, "seed": 2,
                           "pipelines": ["lower_star", "upper_1"]}],
        }
        cfg = _write(tmp_path, obj)
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"])
        assert (tmp_path / "a" / "r.json").read_bytes() == (tmp_path / "b" / "r.json").read_bytes()

    def test_no_campaigns(self, tmp_path):
        assert main(["simulate", "--config", _write(tmp_path, ZERO_K)]) == EXIT_CONFIG


class TestValidate:
    def _cfg(self, tmp_path, mutate=False):
        obj = json.loads(json.dumps(ZERO_K))
        obj["validate"] = {"profile": "quick", "mutate_rho2": mutate}
        return _write(tmp_path, obj)

    def test_quick_profile_passes(self, tmp_path, capsys):
        assert main(["validate", "--config", self._cfg(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "PASS sandwich_order" in out

    def test_mutation_canary_fails(self, tmp_path, capsys):
        assert main(["validate", "--config", self._cfg(tmp_path, mutate=True)]) == EXIT_VALIDATION
        assert "FAIL sandwich_order" in capsys.readouterr().out


class TestExitCodes:
    def test_empty_config(self, tmp_path):
        f = tmp_path / "e.json"
        f.write_text("")
        code = main(["validate", "--config", str(f)])
        assert code == EXIT_CONFIG and code != EXIT_VALIDATION

    def test_no_subcommand(self):
        assert main([]) == EXIT_CONFIG

    def test_missing_config_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["bounds"])
        assert info.value.code == EXIT_CONFIG

    def test_unknown_key_message(self, tmp_path, capsys):
        f = tmp_path / "bad.json"
        f.write_text('{\n  "params": {},\n  "bogus": 1\n}\n')
        assert main(["bounds", "--config", str(f)]) == EXIT_CONFIG
        assert "bad.json:3: unknown key 'bogus'" in capsys.readouterr().err

    def test_bad_threads(self, tmp_path):
        assert main(["bounds", "--config", _write(tmp_path, ZERO_K), "--threads", "0"]) == EXIT_CONFIG
