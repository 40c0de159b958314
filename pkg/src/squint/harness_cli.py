"""Batch experiment driver and command-line interface.

Runs a configured algorithm over a generated loss stream, writes one CSV row
per round (losses, weights or usage, audited regret/variance/bound columns,
sampled potential) plus a JSON summary, and flags any round where a measured
aggregate regret exceeds its guarantee.

Determinism is part of the contract: streams come from the counter-based
Philox generator keyed by the config seed, floats are serialized with
shortest round-trip repr, and JSON keys are sorted, so identical configs
produce byte-identical outputs.

Subcommands: ``run`` (config -> outputs), ``audit`` (re-verify an existing
CSV), ``enumerate`` (list a concept class's vertices), ``grid`` (print the
learning-rate grid for a horizon).  Exit status is nonzero iff a bound
violation or invariant failure is detected.
"""

from __future__ import annotations

import argparse
import csv
import json

import sys
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import component_iprod as ci
from . import experts as ex
from . import regret_bounds as rb
from .polytopes import DagPaths, ExplicitVertices, KSubsets

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "gen_stochastic",
    "gen_adversarial_shift",
    "gen_uniform_signed",
    "generate_stream",
    "run_experiment",
    "audit_csv",
    "main",
]

SCHEMA = "squint-experiment/1"
SUMMARY_SCHEMA = "squint-summary/1"

class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""

def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))

def gen_stochastic(num_experts: int, means, seed: int, horizon: int) -> np.ndarray:
    """Independent Bernoulli losses, coordinate k with the given mean."""
    means = np.asarray(means, dtype=float)
    if means.shape != (num_experts,):
        raise ValueError(f"means must have length {num_experts}")
    if np.any((means < 0.0) | (means > 1.0)):
        raise ValueError("means must lie in [0, 1]")
    draws = _rng(seed).random((horizon, num_experts))
    return (draws < means[None, :]).astype(float)

def gen_adversarial_shift(
    num_experts: int, segment_length: int, seed: int, horizon: int, noise: float = 0.0
) -> np.ndarray:
    """Rotating best expert: per segment one expert has loss 0, others 1.

    With ``noise`` > 0 each entry is flipped independently with that
    probability, keeping losses in {0, 1}.
    """
    if segment_length < 1:
        raise ValueError(f"segment length must be >= 1, got {segment_length}")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0, 1]")
    t_idx = np.arange(horizon)
    best = (t_idx // segment_length) % num_experts
    losses = np.ones((horizon, num_experts))
    losses[t_idx, best] = 0.0
    if noise > 0.0:
        flips = _rng(seed).random((horizon, num_experts)) < noise
        losses = np.where(flips, 1.0 - losses, losses)
    return losses

def gen_uniform_signed(num_components: int, seed: int, horizon: int) -> np.ndarray:
    """Independent uniform losses on [-1, +1] (combinatorial mode)."""
    return _rng(seed).uniform(-1.0, 1.0, (horizon, num_components))

_ENV_PARAMS = {
    "stochastic": {"means"},
    "adversarial_shift": {"segment_length", "noise"},
    "uniform_signed": set(),
}

def generate_stream(env: dict, dim: int, horizon: int) -> np.ndarray:
    name = env["name"]
    if name == "stochastic":
        return gen_stochastic(dim, env["means"], env["seed"], horizon)
    if name == "adversarial_shift":
        return gen_adversarial_shift(
            dim, env["segment_length"], env["seed"], horizon, env.get("noise", 0.0)
        )
    if name == "uniform_signed":
        return gen_uniform_signed(dim, env["seed"], horizon)
    raise ConfigError(f"unknown environment {name!r}")

def _require_keys(doc: dict, required: set, optional: set, where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(doc) - required - optional
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")

@dataclass
class ExperimentConfig:
    doc: dict
    mode: str
    horizon: int
    environment: dict
    algorithm: dict
    report: dict
    output_csv: str
    output_summary: str
    potential_every: int = 10
    num_experts: int | None = None
    prior_pi: list | None = None
    concept_class: Any = None
    prior_vec: list | None = None
    t_max: int | None = None

def _parse_concept_class(doc: dict):
    _require_keys(
        doc, {"kind"}, {"num_components", "subset_size", "dag", "vertices"}, "concept_class"
    )
    kind = doc["kind"]
    if kind == "k_subsets":
        _require_keys(doc, {"kind", "num_components", "subset_size"}, set(), "concept_class")
        return KSubsets(int(doc["num_components"]), int(doc["subset_size"]))
    if kind == "dag_paths":
        _require_keys(doc, {"kind", "dag"}, set(), "concept_class")
        return DagPaths.from_json(doc["dag"])
    if kind == "explicit":
        _require_keys(doc, {"kind", "vertices"}, set(), "concept_class")
        return ExplicitVertices(doc["vertices"])
    raise ConfigError(f"unknown concept class kind {kind!r}")

def _parse_prior(doc: dict) -> ex.LearningRatePrior:
    _require_keys(doc, {"kind"}, {"a", "b", "etas", "masses"}, "algorithm.prior")
    kind = doc["kind"]
    if kind == "conjugate":
        return ex.ConjugatePrior(a=float(doc.get("a", 0.0)), b=float(doc.get("b", 0.0)))
    if kind == "improper":
        return ex.ImproperPrior()
    if kind == "cv":
        return ex.CVPrior()
    if kind == "grid":
        if "etas" not in doc:
            raise ConfigError("grid prior requires etas")
        etas = np.asarray(doc["etas"], dtype=float)
        if "masses" in doc:
            return ex.DiscreteGridPrior(etas=etas, masses=np.asarray(doc["masses"], dtype=float))
        return ex.DiscreteGridPrior.uniform_on(etas)
    raise ConfigError(f"unknown prior kind {kind!r}")

def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document; unknown keys anywhere are rejected."""
    _require_keys(
        doc,
        {"schema", "mode", "horizon", "environment", "algorithm", "output"},
        {"report", "potential_every", "num_experts", "prior_pi", "concept_class", "prior_vec"},
        "config",
    )
    if doc["schema"] != SCHEMA:
        raise ConfigError(f"unsupported schema {doc['schema']!r}, expected {SCHEMA!r}")
    mode = doc["mode"]
    if mode not in ("experts", "combinatorial"):
        raise ConfigError(f"unknown mode {mode!r}")
    horizon = int(doc["horizon"])
    if horizon < 0:
        raise ConfigError("horizon must be nonnegative")

    env = doc["environment"]
    _require_keys(env, {"name", "seed"}, {"means", "segment_length", "noise"}, "environment")
    if env["name"] not in _ENV_PARAMS:
        raise ConfigError(f"unknown environment {env['name']!r}")
    extra = set(env) - {"name", "seed"} - _ENV_PARAMS[env["name"]]
    if extra:
        raise ConfigError(f"environment {env['name']!r} does not accept {sorted(extra)}")

    out = doc["output"]
    _require_keys(out, {"csv", "summary"}, set(), "output")

    cfg = ExperimentConfig(
        doc=doc,
        mode=mode,
        horizon=horizon,
        environment=env,
        algorithm=doc["algorithm"],
        report=doc.get("report", {}),
        output_csv=out["csv"],
        output_summary=out["summary"],
        potential_every=int(doc.get("potential_every", 10)),
    )
    if cfg.potential_every < 0:
        raise ConfigError("potential_every must be nonnegative (0 disables sampling)")

    algo = doc["algorithm"]
    if mode == "experts":
        if "num_experts" not in doc:
            raise ConfigError("experts mode requires num_experts")
        cfg.num_experts = int(doc["num_experts"])
        if cfg.num_experts < 1:
            raise ConfigError("num_experts must be positive")
        cfg.prior_pi = doc.get("prior_pi")
        _require_keys(algo, {"name"}, {"prior", "eta", "grid_t_max"}, "algorithm")
        if algo["name"] == "squint":
            if "prior" not in algo:
                raise ConfigError("squint requires a prior")
            _parse_prior(algo["prior"])
        elif algo["name"] == "hedge":
            if "eta" not in algo or float(algo["eta"]) <= 0.0:
                raise ConfigError("hedge requires a positive eta")
        elif algo["name"] == "iprod":
            pass
        else:
            raise ConfigError(f"unknown experts algorithm {algo['name']!r}")
        _require_keys(
            cfg.report, set(), {"subsets", "singletons", "near_best_fraction"}, "report"
        )
        if env["name"] == "uniform_signed":
            raise ConfigError("experts mode requires losses in [0, 1]")
    else:
        if "concept_class" not in doc:
            raise ConfigError("combinatorial mode requires concept_class")
        cfg.concept_class = _parse_concept_class(doc["concept_class"])
        cfg.prior_vec = doc.get("prior_vec")
        _require_keys(algo, {"name"}, {"t_max"}, "algorithm")
        if algo["name"] != "component_iprod":
            raise ConfigError(f"unknown combinatorial algorithm {algo['name']!r}")
        cfg.t_max = int(algo.get("t_max", max(horizon, 1)))
        _require_keys(cfg.report, set(), {"comparators", "vertices"}, "report")
    return cfg

def _fmt(x: float) -> str:
    return repr(float(x))

def _experts_bound(algo: dict, agg: rb.SubsetAggregate, t: int) -> float | None:
    if algo["name"] != "squint":
        return None
    kind = algo["prior"]["kind"]
    if kind == "conjugate":
        a = float(algo["prior"].get("a", 0.0))
        b = float(algo["prior"].get("b", 0.0))
        return rb.bound_theorem1(agg.v_agg, agg.pi_mass, a, b)
    if kind == "improper":
        return rb.bound_theorem3(agg.v_agg, agg.pi_mass, t)
    if kind == "cv":
        return rb.bound_theorem2(agg.v_agg, agg.pi_mass)
    return None

def _run_experts(cfg: ExperimentConfig) -> dict:
    k = cfg.num_experts
    losses = generate_stream(cfg.environment, k, cfg.horizon)
    prior = np.asarray(cfg.prior_pi, dtype=float) if cfg.prior_pi else np.full(k, 1.0 / k)
    state = ex.ExpertGameState.from_prior(prior)
    algo = cfg.algorithm
    prior_spec = _parse_prior(algo["prior"]) if algo["name"] == "squint" else None

    subsets = [sorted(set(int(i) for i in s)) for s in cfg.report.get("subsets", [])]
    if cfg.report.get("singletons", False):
        subsets += [[i] for i in range(k)]
    has_bound = algo["name"] == "squint" and algo["prior"]["kind"] in (
        "conjugate",
        "improper",
        "cv",
    )

    header = ["t"] + [f"loss_{i + 1}" for i in range(k)] + [f"w_{i + 1}" for i in range(k)]
    for j in range(len(subsets)):
        header += [f"R_S{j}", f"V_S{j}"] + ([f"bound_S{j}"] if has_bound else [])
    header.append("potential")

    history = [] if algo["name"] == "iprod" else None
    iprod_grid = None
    if algo["name"] == "iprod":
        iprod_grid = ex.DiscreteGridPrior.uniform_on(
            ci.learning_rate_grid(int(algo.get("grid_t_max", max(cfg.horizon, 1))))
        )

    rows = []
    any_violation = False
    max_potential = None
    for t in range(cfg.horizon):
        if algo["name"] == "squint":
            w = ex.weights_for_prior(state, prior_spec)
        elif algo["name"] == "hedge":
            w = ex.hedge_weights(state, float(algo["eta"]))
        else:
            w = ex.iprod_weights_grid(
                np.asarray(history).reshape(-1, k), state.prior, iprod_grid
            )
        loss_t = losses[t]
        state = ex.update(state, w, loss_t)
        if history is not None:
            history.append(float(w @ loss_t) - loss_t)

        row = [str(state.t)] + [_fmt(x) for x in loss_t] + [_fmt(x) for x in w]
        for subset in subsets:
            agg = rb.aggregate_subset(state, subset)
            row += [_fmt(agg.r_agg), _fmt(agg.v_agg)]
            if has_bound:
                bound = _experts_bound(algo, agg, state.t)
                row.append(_fmt(bound))
                if agg.r_agg > bound:
                    any_violation = True
        if (
            cfg.potential_every > 0
            and prior_spec is not None
            and state.t % cfg.potential_every == 0
        ):
            phi = ex.potential(state, prior_spec)
            max_potential = phi if max_potential is None else max(max_potential, phi)
            if phi > 1e-9:
                any_violation = True
            row.append(_fmt(phi))
        else:
            row.append("")
        rows.append(row)

    audits = []
    for j, subset in enumerate(subsets):
        agg = rb.aggregate_subset(state, subset) if cfg.horizon else None
        entry = {"name": f"S{j}", "subset": subset}
        if agg is not None:
            entry.update(
                pi_mass=agg.pi_mass, regret=agg.r_agg, variance=agg.v_agg
            )
            bound = _experts_bound(algo, agg, state.t) if has_bound else None
            if bound is not None:
                entry.update(bound=bound, violated=agg.r_agg > bound)
        audits.append(entry)

    frac = cfg.report.get("near_best_fraction")
    near_best = None
    if frac is not None and cfg.horizon > 0:
        best = float(state.cum_loss.min())
        members = [i for i in range(k) if state.cum_loss[i] <= best + float(frac) * state.t]
        agg = rb.aggregate_subset(state, members)
        near_best = {
            "subset": members,
            "pi_mass": agg.pi_mass,
            "regret": agg.r_agg,
            "variance": agg.v_agg,
        }
        if has_bound:
            bound = _experts_bound(cfg.algorithm, agg, state.t)
            near_best.update(bound=bound, violated=agg.r_agg > bound)
            any_violation = any_violation or agg.r_agg > bound

    return {
        "header": header,
        "rows": rows,
        "audits": audits,
        "near_best": near_best,
        "any_violation": any_violation,
        "max_potential": max_potential,
    }

def _run_combinatorial(cfg: ExperimentConfig) -> dict:
    cls = cfg.concept_class
    k = cls.num_components
    losses = generate_stream(cfg.environment, k, cfg.horizon)
    prior_vec = np.asarray(cfg.prior_vec, dtype=float) if cfg.prior_vec else None
    game = ci.make_game(cls, prior_vec=prior_vec, t_max=cfg.t_max)

    comparators = [np.asarray(c, dtype=float) for c in cfg.report.get("comparators", [])]
    if cfg.report.get("vertices", False):
        comparators += list(cls.vertices())
    entropies = [rb.binary_relative_entropy(v, game.prior_vec) for v in comparators]

    header = ["t"] + [f"loss_{i + 1}" for i in range(k)] + [f"u_{i + 1}" for i in range(k)]
    for j in range(len(comparators)):
        header += [f"R_C{j}", f"V_C{j}", f"bound_C{j}"]
    header.append("potential")

    rows = []
    any_violation = False
    max_potential = None
    for t in range(cfg.horizon):
        u = ci.play(game)
        loss_t = losses[t]
        ci.observe(game, loss_t)
        row = [str(game.t)] + [_fmt(x) for x in loss_t] + [_fmt(x) for x in u]
        for v, entropy in zip(comparators, entropies):
            r_v, v_v = ci.comparator_stats(game, v)
            bound = rb.bound_theorem4(v_v, entropy, k, cfg.t_max)
            row += [_fmt(r_v), _fmt(v_v), _fmt(bound)]
            if r_v > bound:
                any_violation = True
        if cfg.potential_every > 0 and game.t % cfg.potential_every == 0:
            phi = ci.potential(game)
            max_potential = phi if max_potential is None else max(max_potential, phi)
            if phi > 1e-9:
                any_violation = True
            row.append(_fmt(phi))
        else:
            row.append("")
        rows.append(row)

    audits = []
    for j, (v, entropy) in enumerate(zip(comparators, entropies)):
        r_v, v_v = ci.comparator_stats(game, v)
        bound = rb.bound_theorem4(v_v, entropy, k, cfg.t_max) if cfg.horizon else None
        entry = {
            "name": f"C{j}",
            "comparator": [float(x) for x in v],
            "entropy": entropy,
            "regret": r_v,
            "variance": v_v,
        }
        if bound is not None:
            entry.update(bound=bound, violated=r_v > bound)
        audits.append(entry)

    return {
        "header": header,
        "rows": rows,
        "audits": audits,
        "near_best": None,
        "any_violation": any_violation,
        "max_potential": max_potential,
    }

def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute a parsed config; writes the CSV and summary, returns the summary."""
    result = _run_experts(cfg) if cfg.mode == "experts" else _run_combinatorial(cfg)

    with open(cfg.output_csv, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result["header"])
        writer.writerows(result["rows"])

    summary = {
        "schema": SUMMARY_SCHEMA,
        "config": cfg.doc,
        "rounds": cfg.horizon,
        "audits": result["audits"],
        "any_violation": result["any_violation"],
        "max_potential": result["max_potential"],
    }
    if result["near_best"] is not None:
        summary["near_best"] = result["near_best"]
    with open(cfg.output_summary, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return summary

def audit_csv(csv_path: str) -> tuple[bool, list[str]]:
    """Re-verify every bound column of an existing run CSV.

    Returns (ok, messages): ok is False iff some measured regret column
    exceeds its bound column in any row.
    """
    problems = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        pairs = []
        for i, name in enumerate(header):
            if name.startswith("bound_"):
                target = "R_" + name[len("bound_"):]
                if target not in header:
                    problems.append(f"column {name} has no matching {target}")
                    continue
                pairs.append((header.index(target), i, name))
        for row in reader:
            for r_idx, b_idx, name in pairs:
                if float(row[r_idx]) > float(row[b_idx]):
                    problems.append(
                        f"t={row[0]}: R={row[r_idx]} exceeds {name}={row[b_idx]}"
                    )
    return (not problems, problems)

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="squint", description="run and audit online-prediction experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")

    p_audit = sub.add_parser("audit", help="re-verify bounds in a run CSV")
    p_audit.add_argument("csv", help="path to a CSV produced by run")

    p_enum = sub.add_parser("enumerate", help="list a concept class's vertices")
    p_enum.add_argument("spec", help="path to a JSON concept-class spec")
    p_enum.add_argument("--cap", type=int, default=10**5)

    p_grid = sub.add_parser("grid", help="print the learning-rate grid for a horizon")
    p_grid.add_argument("horizon", type=int)

    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
            cfg = parse_config(doc)
        except (OSError, json.JSONDecodeError, ConfigError, ValueError) as err:
            print(f"config error: {err}", file=sys.stderr)
            return 2
        summary = run_experiment(cfg)
        print(json.dumps({"any_violation": summary["any_violation"]}, sort_keys=True))
        return 2 if summary["any_violation"] else 0

    if args.command == "audit":
        try:
            ok, problems = audit_csv(args.csv)
        except (OSError, ValueError) as err:
            print(f"audit error: {err}", file=sys.stderr)
            return 2
        for p in problems:
            print(p)
        print("OK" if ok else "VIOLATIONS FOUND")
        return 0 if ok else 2

    if args.command == "enumerate":
        try:
            with open(args.spec) as fh:
                cls = _parse_concept_class(json.load(fh))
            verts = cls.vertices(cap=args.cap)
        except (OSError, json.JSONDecodeError, ConfigError, ValueError) as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        for row in verts:
            print(",".join(str(int(x)) for x in row))
        return 0

    if args.command == "grid":
        try:
            etas = ci.learning_rate_grid(args.horizon)
        except ValueError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        for eta in etas:
            print(_fmt(eta))
        return 0

    return 2

if __name__ == "__main__":
    sys.exit(main())
