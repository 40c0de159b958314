import json
import math

import numpy as np
import pytest

from squint.harness_cli import (
    ConfigError,
    audit_csv,
    gen_adversarial_shift,
    gen_stochastic,
    gen_uniform_signed,
    main,
    parse_config,
    run_experiment,
)

from test_polytopes import DIAMOND


def experts_config(tmp_path, **overrides):
    doc = {
        "schema": "squint-experiment/1",
        "mode": "experts",
        "horizon": 40,
        "num_experts": 3,
        "algorithm": {"name": "squint", "prior": {"kind": "improper"}},
        "environment": {"name": "stochastic", "means": [0.2, 0.5, 0.8], "seed": 11},
        "report": {"singletons": True, "near_best_fraction": 0.1},
        "output": {
            "csv": str(tmp_path / "run.csv"),
            "summary": str(tmp_path / "run.json"),
        },
        "potential_every": 10,
    }
    doc.update(overrides)
    return doc


def comb_config(tmp_path, **overrides):
    doc = {
        "schema": "squint-experiment/1",
        "mode": "combinatorial",
        "horizon": 30,
        "concept_class": {"kind": "k_subsets", "num_components": 4, "subset_size": 2},
        "algorithm": {"name": "component_iprod"},
        "environment": {"name": "uniform_signed", "seed": 5},
        "report": {"vertices": True},
        "output": {
            "csv": str(tmp_path / "comb.csv"),
            "summary": str(tmp_path / "comb.json"),
        },
    }
    doc.update(overrides)
    return doc


class TestGenerators:
    def test_all_zero_and_all_one_means(self):
        z = gen_stochastic(3, [0.0, 0.0, 0.0], seed=1, horizon=50)
        o = gen_stochastic(3, [1.0, 1.0, 1.0], seed=1, horizon=50)
        assert np.all(z == 0.0)
        assert np.all(o == 1.0)

    def test_empirical_means_within_band(self):
        t = 10**5
        means = np.array([0.1, 0.5, 0.9])
        stream = gen_stochastic(3, means, seed=7, horizon=t)
        emp = stream.mean(axis=0)
        sigma = np.sqrt(means * (1 - means) / t)
        assert np.all(np.abs(emp - means) <= 3.0 * sigma)

    def test_shift_segments(self):
        stream = gen_adversarial_shift(3, segment_length=10, seed=0, horizon=60)
        for t in range(60):
            best = (t // 10) % 3
            assert stream[t, best] == 0.0
            assert stream[t].sum() == 2.0

    def test_single_segment_constant_best(self):
        stream = gen_adversarial_shift(4, segment_length=100, seed=0, horizon=100)
        assert np.all(stream[:, 0] == 0.0)
        assert np.all(stream[:, 1:] == 1.0)

    def test_signed_range_and_determinism(self):
        a = gen_uniform_signed(5, seed=2, horizon=100)
        b = gen_uniform_signed(5, seed=2, horizon=100)
        np.testing.assert_array_equal(a, b)
        assert np.all(np.abs(a) <= 1.0)


class TestConfigValidation:
    def test_unknown_top_level_key(self, tmp_path):
        doc = experts_config(tmp_path)
        doc["surprise"] = 1
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config(doc)

    def test_unknown_nested_key(self, tmp_path):
        doc = experts_config(tmp_path)
        doc["environment"]["extra"] = True
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config(doc)

    def test_wrong_schema(self, tmp_path):
        doc = experts_config(tmp_path, schema="other/9")
        with pytest.raises(ConfigError, match="schema"):
            parse_config(doc)

    def test_env_param_mismatch(self, tmp_path):
        doc = experts_config(tmp_path)
        doc["environment"] = {"name": "stochastic", "seed": 1, "segment_length": 5}
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_signed_losses_rejected_for_experts(self, tmp_path):
        doc = experts_config(tmp_path)
        doc["environment"] = {"name": "uniform_signed", "seed": 1}
        with pytest.raises(ConfigError):
            parse_config(doc)


class TestRunExperiment:
    def test_improper_run_has_no_violations(self, tmp_path):
        summary = run_experiment(parse_config(experts_config(tmp_path)))
        assert summary["any_violation"] is False
        assert summary["max_potential"] <= 1e-9
        assert summary["near_best"]["violated"] is False
        assert all(not a.get("violated", False) for a in summary["audits"])

    def test_zero_horizon(self, tmp_path):
        doc = experts_config(tmp_path, horizon=0)
        doc["report"] = {"subsets": [[0]]}
        summary = run_experiment(parse_config(doc))
        assert summary["rounds"] == 0
        assert summary["any_violation"] is False
        with open(doc["output"]["csv"]) as fh:
            lines = fh.read().strip().splitlines()
        assert len(lines) == 1  # header only

    def test_reruns_are_byte_identical(self, tmp_path):
        for sub, name in ((tmp_path / "a", "a"), (tmp_path / "b", "b")):
            sub.mkdir()
        doc_a = experts_config(tmp_path / "a")
        doc_b = experts_config(tmp_path / "b")
        run_experiment(parse_config(doc_a))
        run_experiment(parse_config(doc_b))
        csv_a = (tmp_path / "a" / "run.csv").read_bytes()
        csv_b = (tmp_path / "b" / "run.csv").read_bytes()
        assert csv_a == csv_b
        ja = json.loads((tmp_path / "a" / "run.json").read_text())
        jb = json.loads((tmp_path / "b" / "run.json").read_text())
        ja["config"]["output"] = jb["config"]["output"] = None
        assert ja == jb

    def test_hedge_run_emits_no_bound_columns(self, tmp_path):
        doc = experts_config(tmp_path, algorithm={"name": "hedge", "eta": 1.0})
        run_experiment(parse_config(doc))
        with open(doc["output"]["csv"]) as fh:
            header = fh.readline().strip().split(",")
        assert not any(h.startswith("bound_") for h in header)

    def test_iprod_run(self, tmp_path):
        doc = experts_config(tmp_path, algorithm={"name": "iprod"}, horizon=20)
        summary = run_experiment(parse_config(doc))
        assert summary["any_violation"] is False

    def test_combinatorial_run(self, tmp_path):
        summary = run_experiment(parse_config(comb_config(tmp_path)))
        assert summary["any_violation"] is False
        assert summary["max_potential"] <= 1e-9
        assert len(summary["audits"]) == 6  # C(4,2) vertices
        for audit in summary["audits"]:
            assert audit["regret"] <= audit["bound"]

    def test_combinatorial_dag_run(self, tmp_path):
        doc = comb_config(
            tmp_path,
            concept_class={"kind": "dag_paths", "dag": DIAMOND},
            horizon=25,
        )
        summary = run_experiment(parse_config(doc))
        assert summary["any_violation"] is False


class TestAudit:
    def test_clean_run_passes_audit(self, tmp_path):
        doc = experts_config(tmp_path)
        run_experiment(parse_config(doc))
        ok, problems = audit_csv(doc["output"]["csv"])
        assert ok, problems

    def test_tampered_run_fails_audit(self, tmp_path):
        doc = experts_config(tmp_path)
        run_experiment(parse_config(doc))
        path = doc["output"]["csv"]
        with open(path) as fh:
            lines = fh.readlines()
        header = lines[0].strip().split(",")
        col = header.index("R_S0")
        parts = lines[-1].strip().split(",")
        parts[col] = "1e9"
        lines[-1] = ",".join(parts) + "\n"
        with open(path, "w") as fh:
            fh.writelines(lines)
        ok, problems = audit_csv(path)
        assert not ok
        assert problems


class TestCli:
    def test_run_and_audit_roundtrip(self, tmp_path):
        doc = experts_config(tmp_path)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(doc))
        assert main(["run", str(cfg_path)]) == 0
        assert main(["audit", doc["output"]["csv"]]) == 0

    def test_run_rejects_bad_config(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"schema": "nope"}))
        assert main(["run", str(cfg_path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_enumerate(self, tmp_path, capsys):
        spec = tmp_path / "cls.json"
        spec.write_text(json.dumps({"kind": "k_subsets", "num_components": 4, "subset_size": 2}))
        assert main(["enumerate", str(spec)]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 6
        assert all(line.count("1") == 2 for line in out)

    def test_grid(self, capsys):
        assert main(["grid", "8"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert [float(x) for x in out] == [0.5, 0.25, 0.125, 0.0625]

    def test_grid_rejects_bad_horizon(self, capsys):
        assert main(["grid", "0"]) == 2
