"""Configuration-driven experiment runner.

Commands: ``run`` (full experiment), ``validate`` (spectral/assumption
report), ``rates`` (theoretical rate reports), ``counterexample`` (the
two-agent separate-regularizer preset).  Configs are JSON with strict
key checking; trajectories are written as deterministic CSV.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import analysis, costs as costs_mod, engine, netgraph, prox as prox_mod
from .costs import read_libsvm  # re-exported: part of the CLI surface

__all__ = ["ExperimentConfig", "parse_config", "run_experiment", "read_libsvm", "main"]


class ConfigError(ValueError):
    pass


PROBLEMS = ("lasso_quadratic", "logistic_l1", "counterexample")

# Algorithms runnable from a config.  Triple-backed names run through the
# primal-dual engine; PGEXTRA/DLADMM use per-agent regularizers.
TRIPLE_ALGOS = {
    "ProxED": "ExactDiffusion",
    "ProxATC1": "AugDGM",
    "ProxATC2": "ATCTracking",
    "ExactDiffusion": "ExactDiffusion",
    "NIDS": "NIDS",
    "AugDGM": "AugDGM",
    "ATCTracking": "ATCTracking",
    "DIGing": "DIGing",
    "EXTRA": "EXTRA",
    "DLM": "DLM",
}
SEPARATE_ALGOS = ("PGEXTRA", "DLADMM")
# Algorithms whose assumption check needs eigenvalues of A in [0,1];
# their combination matrix is redefined as 0.5(I + A).
NEEDS_SHIFT = {"ProxATC1", "ProxATC2", "AugDGM", "ATCTracking", "DIGing"}

CSV_HEADER = "iter,comm_rounds,rel_sq_error,r_primal,r_dual,r_prox"


@dataclass
class AlgorithmConfig:
    name: str
    mu: object = "auto"  # float or the string "auto"


@dataclass
class GraphConfig:
    kind: str = "random_connected"
    K: int = 20
    seed: int = 7
    extra_edge_prob: float = 0.2


@dataclass
class DataConfig:
    source: str = "synthetic"  # synthetic | libsvm
    n_samples: int = 500
    dim: int = 30
    seed: int = 3
    flip_prob: float = 0.1
    path: str = None
    normalize: bool = True
    label_map: tuple = None


@dataclass
class ExperimentConfig:
    problem: str
    graph: GraphConfig = field(default_factory=GraphConfig)
    algorithms: list = field(default_factory=list)
    lam: float = 1e-4
    rho: float = 2e-3
    eta: float = 1.0
    c: float = 0.5
    M: int = 2000  # counterexample dimension
    iters: int = None
    record_every: int = 1
    output_dir: str = "decprox_out"
    data: DataConfig = field(default_factory=DataConfig)
    init_seed: int = None
    partition_seed: int = 0


_TOP_KEYS = {
    "problem", "graph", "algorithms", "lambda", "rho", "eta", "c", "M",
    "iters", "record_every", "output_dir", "data", "seeds",
}
_GRAPH_KEYS = {"kind", "K", "seed", "extra_edge_prob"}
_DATA_KEYS = {"source", "n_samples", "dim", "seed", "flip_prob",
              "path", "normalize", "label_map"}
_SEED_KEYS = {"init", "partition"}


def _reject_unknown(d, allowed, where):
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def parse_config(path):
    """Load and resolve a JSON experiment config with strict key checks."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e

    _reject_unknown(raw, _TOP_KEYS, "config")
    if "problem" not in raw:
        raise ConfigError("missing required key: problem")
    problem = raw["problem"]
    if problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {PROBLEMS}, got {problem!r}")

    graph_raw = raw.get("graph", {})
    _reject_unknown(graph_raw, _GRAPH_KEYS, "graph")
    graph = GraphConfig(**graph_raw)

    data_raw = raw.get("data", {})
    _reject_unknown(data_raw, _DATA_KEYS, "data")
    if "label_map" in data_raw and data_raw["label_map"] is not None:
        data_raw["label_map"] = tuple(data_raw["label_map"])
    data = DataConfig(**data_raw)

    seeds = raw.get("seeds", {})
    _reject_unknown(seeds, _SEED_KEYS, "seeds")

    algos = []
    default_algos = (["PGEXTRA", "DLADMM", "ProxED"] if problem == "counterexample"
                     else ["ProxED", "ProxATC1", "ProxATC2"])
    for entry in raw.get("algorithms", default_algos):
        if isinstance(entry, str):
            entry = {"name": entry}
        _reject_unknown(entry, {"name", "mu"}, "algorithm entry")
        name = entry.get("name")
        if name not in TRIPLE_ALGOS and name not in SEPARATE_ALGOS:
            raise ConfigError(f"unknown algorithm: {name!r}")
        mu = entry.get("mu", "auto")
        if mu != "auto" and (not isinstance(mu, (int, float)) or mu <= 0):
            raise ConfigError(f"mu must be positive or 'auto', got {mu!r}")
        algos.append(AlgorithmConfig(name=name, mu=mu))

    cfg = ExperimentConfig(
        problem=problem,
        graph=graph,
        algorithms=algos,
        lam=raw.get("lambda", 1e-4),
        rho=raw.get("rho", 2e-3),
        eta=raw.get("eta", 1.0),
        c=raw.get("c", 0.5),
        M=raw.get("M", 2000),
        iters=raw.get("iters", 20000 if problem == "counterexample" else 5000),
        record_every=raw.get("record_every", 1),
        output_dir=raw.get("output_dir", "decprox_out"),
        data=data,
        init_seed=seeds.get("init"),
        partition_seed=seeds.get("partition", 0),
    )
    _check_domains(cfg)
    return cfg


def _check_domains(cfg):
    for name, val in (("lambda", cfg.lam), ("rho", cfg.rho), ("eta", cfg.eta),
                      ("c", cfg.c)):
        if not isinstance(val, (int, float)) or val <= 0:
            raise ConfigError(f"{name} must be a positive number, got {val!r}")
    if cfg.iters < 1:
        raise ConfigError("iters must be >= 1")
    if cfg.record_every < 1:
        raise ConfigError("record_every must be >= 1")
    if cfg.problem == "counterexample":
        if cfg.M < 2 or cfg.M % 2:
            raise ConfigError(f"M must be even and >= 2, got {cfg.M}")
        if cfg.graph.K != 2:
            cfg.graph = GraphConfig(kind="complete", K=2, seed=0,
                                    extra_edge_prob=0.0)
    if not (0 <= cfg.data.flip_prob <= 1):
        raise ConfigError("data.flip_prob must be in [0,1]")
    if cfg.data.source not in ("synthetic", "libsvm"):
        raise ConfigError("data.source must be 'synthetic' or 'libsvm'")
    if cfg.data.source == "libsvm" and not cfg.data.path:
        raise ConfigError("data.source 'libsvm' requires data.path")


# ---------------------------------------------------------------------------
# problem construction

@dataclass
class Problem:
    costs: object
    common_prox: object
    per_agent_prox: list
    w_star: np.ndarray
    graph: object
    A: np.ndarray
    laplacian: np.ndarray


def build_problem(cfg):
    g = netgraph.build_graph(cfg.graph.kind, cfg.graph.K, seed=cfg.graph.seed,
                             extra_edge_prob=cfg.graph.extra_edge_prob)
    A = netgraph.metropolis_matrix(g)
    L = netgraph.laplacian_matrix(g)
    K = g.K

    if cfg.problem == "lasso_quadratic":
        M = cfg.data.dim
        rng = np.random.default_rng(cfg.data.seed)
        targets = rng.standard_normal((K, M))
        costs = costs_mod.quadratic_cost(cfg.eta, K, M, targets=targets)
        common = prox_mod.L1Prox(cfg.rho)
        w_star = prox_mod.prox_l1(targets.mean(axis=0), cfg.rho / cfg.eta)
        per_agent = [common] * K

    elif cfg.problem == "logistic_l1":
        if cfg.data.source == "synthetic":
            dataset = costs_mod.synthetic_classification(
                cfg.data.n_samples, cfg.data.dim, seed=cfg.data.seed,
                flip_prob=cfg.data.flip_prob)
        else:
            dataset = read_libsvm(cfg.data.path, normalize=cfg.data.normalize,
                                  label_map=cfg.data.label_map)
        shards = costs_mod.partition_data(dataset, K, seed=cfg.partition_seed)
        costs = costs_mod.logistic_cost(shards, cfg.lam)
        common = prox_mod.L1Prox(cfg.rho)
        w_star = analysis.centralized_reference(costs, common)
        per_agent = [common] * K

    else:  # counterexample
        pair = prox_mod.build_counterexample(cfg.M)
        costs = costs_mod.quadratic_cost(cfg.eta, K, cfg.M)
        # Weight 1/K so the common-regularizer runs target the same
        # minimizer as the separate runs, whose effective non-smooth part
        # is the average (R1 + R2)/K.
        common = prox_mod.ChainSumProx(pair, weight=1.0 / K)
        per_agent = [prox_mod.CounterexampleProx("R1", pair),
                     prox_mod.CounterexampleProx("R2", pair)]
        w_star = analysis.centralized_reference(costs, common)

    return Problem(costs=costs, common_prox=common, per_agent_prox=per_agent,
                   w_star=w_star, graph=g, A=A, laplacian=L)


def resolve_algorithm(acfg, cfg, problem):
    """Build the engine spec plus the spectral/rate context for one algorithm."""
    name = acfg.name
    A = netgraph.shift_positive(problem.A) if name in NEEDS_SHIFT else problem.A
    nu, delta = problem.costs.nu, problem.costs.delta

    if name in TRIPLE_ALGOS:
        triple_id = TRIPLE_ALGOS[name]
        if triple_id == "DLM":
            mu = acfg.mu
            if mu == "auto":
                # sigma_max(C) = c mu sigma_max(L) depends on mu itself;
                # solving mu = 0.9 (2 - c mu sL)/delta for mu:
                sL = float(np.linalg.eigvalsh(problem.laplacian)[-1])
                mu = 2.0 / (delta / 0.9 + cfg.c * sL)
            triple = netgraph.table1_matrices(
                "DLM", A, c=cfg.c, mu=mu, L=problem.laplacian)
            report = netgraph.validate_assumptions(triple)
        else:
            triple = netgraph.table1_matrices(triple_id, A, c=cfg.c)
            report = netgraph.validate_assumptions(triple)
            mu = acfg.mu
            if mu == "auto":
                mu = 0.9 * (2.0 - report.sigma_max_C) / delta
        spec = engine.AlgorithmSpec(
            family="PUDA_general", mu=mu, prox=problem.common_prox,
            triple=triple, label=name,
            comm_rounds_per_iter=engine.COMM_ROUNDS.get(name, 1))
        rate = None
        if report.sigma_min_Bsq > 0:
            try:
                if report.assumption2_ok:
                    rate = analysis.theoretical_rate(
                        "Thm1", mu, nu, delta,
                        report.sigma_max_C, report.sigma_min_Bsq)
                elif report.assumption4_ok:
                    rate = analysis.theoretical_rate(
                        "Thm4", mu, nu, delta,
                        report.sigma_max_C, report.sigma_min_Bsq)
            except ValueError:
                rate = None
        return spec, report, rate

    if name == "PGEXTRA":
        mu = acfg.mu if acfg.mu != "auto" else 0.9 / delta
        spec = engine.AlgorithmSpec(
            family="PGEXTRA", mu=mu, prox=problem.per_agent_prox, A=A,
            label=name)
        return spec, None, None

    if name == "DLADMM":
        mu = acfg.mu if acfg.mu != "auto" else 0.9 / delta
        spec = engine.AlgorithmSpec(
            family="DLADMM", mu=mu, prox=problem.per_agent_prox,
            laplacian=problem.laplacian, c=cfg.c, label=name)
        return spec, None, None

    raise ConfigError(f"unknown algorithm: {name!r}")


# ---------------------------------------------------------------------------
# output

def _fmt(x):
    if x is None:
        return ""
    return format(float(x), ".17g")


def write_trajectory_csv(path, record):
    lines = [CSV_HEADER]
    for i, (it, cr, err) in enumerate(zip(record.iterations,
                                          record.comm_rounds, record.errors)):
        res = record.residuals[i] if i < len(record.residuals) else None
        r1, r2, r3 = res if res is not None else (None, None, None)
        lines.append(",".join([str(it), str(cr), _fmt(err),
                               _fmt(r1), _fmt(r2), _fmt(r3)]))
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def _config_dict(cfg):
    return {
        "problem": cfg.problem,
        "graph": vars(cfg.graph),
        "algorithms": [{"name": a.name, "mu": a.mu} for a in cfg.algorithms],
        "lambda": cfg.lam, "rho": cfg.rho, "eta": cfg.eta, "c": cfg.c,
        "M": cfg.M, "iters": cfg.iters, "record_every": cfg.record_every,
        "output_dir": cfg.output_dir,
        "data": {k: (list(v) if isinstance(v, tuple) else v)
                 for k, v in vars(cfg.data).items()},
        "seeds": {"init": cfg.init_seed, "partition": cfg.partition_seed},
    }


def run_experiment(cfg):
    """Run every configured algorithm; write one CSV per algorithm plus a
    summary table and a metadata sidecar.  Returns the summary rows."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    problem = build_problem(cfg)
    summary = []
    any_diverged = False

    for acfg in cfg.algorithms:
        spec, report, rate = resolve_algorithm(acfg, cfg, problem)
        residual_fn = None
        if spec.family == "PUDA_general":
            residual_fn = lambda st, s=spec: analysis.fixed_point_residuals(
                st, problem.costs, s.prox, s.triple, s.mu)
        record = engine.run(spec, problem.costs, problem.w_star, cfg.iters,
                            record_every=cfg.record_every,
                            seed=cfg.init_seed, residual_fn=residual_fn)
        any_diverged |= record.diverged

        csv_path = os.path.join(cfg.output_dir, f"{acfg.name}.csv")
        write_trajectory_csv(csv_path, record)

        verdict = ""
        empirical_ratio = ""
        if not record.diverged and len(record.errors) >= 100:
            fv = analysis.classify_decay(record)
            verdict = fv.classification
            if fv.geometric_ratio_windows:
                empirical_ratio = _fmt(fv.geometric_ratio_windows[-1])
        summary.append({
            "algorithm": acfg.name,
            "mu": spec.mu,
            "theoretical_gamma": rate.gamma if rate else None,
            "empirical_ratio": empirical_ratio,
            "final_error": record.errors[-1] if record.errors else None,
            "comm_rounds": record.comm_rounds[-1] if record.comm_rounds else 0,
            "verdict": verdict,
            "diverged": record.diverged,
            "note": record.note,
        })

    with open(os.path.join(cfg.output_dir, "summary.csv"), "w", newline="") as f:
        f.write("algorithm,mu,theoretical_gamma,empirical_ratio,"
                "final_error,comm_rounds,verdict,diverged\n")
        for row in summary:
            f.write(",".join([
                row["algorithm"], _fmt(row["mu"]),
                _fmt(row["theoretical_gamma"]), str(row["empirical_ratio"]),
                _fmt(row["final_error"]), str(row["comm_rounds"]),
                row["verdict"], str(row["diverged"]).lower(),
            ]) + "\n")
    with open(os.path.join(cfg.output_dir, "metadata.json"), "w") as f:
        json.dump(_config_dict(cfg), f, indent=2, sort_keys=True)
    return summary, any_diverged


# ---------------------------------------------------------------------------
# commands

def _cmd_run(args):
    cfg = parse_config(args.config)
    summary, diverged = run_experiment(cfg)
    for row in summary:
        gamma = _fmt(row["theoretical_gamma"]) or "-"
        print(f"{row['algorithm']:>14s}  mu={row['mu']:.6g}  gamma={gamma}"
              f"  final={_fmt(row['final_error'])}  verdict={row['verdict'] or '-'}"
              f"{'  DIVERGED' if row['diverged'] else ''}")
    return 3 if diverged else 0


def _cmd_validate(args):
    cfg = parse_config(args.config)
    problem = build_problem(cfg)
    for acfg in cfg.algorithms:
        spec, report, rate = resolve_algorithm(acfg, cfg, problem)
        if report is None:
            print(f"{acfg.name:>14s}  (no consensus triple; separate-prox method)")
            continue
        print(f"{acfg.name:>14s}  sigma_max(C)={report.sigma_max_C:.6f}"
              f"  sigma_min(B^2)={report.sigma_min_Bsq:.6f}"
              f"  lambda2(A_bar)={report.lambda2_A:.6f}"
              f"  A2={'ok' if report.assumption2_ok else 'FAIL'}"
              f"  A4={'ok' if report.assumption4_ok else 'FAIL'}")
    return 0


def _cmd_rates(args):
    cfg = parse_config(args.config)
    problem = build_problem(cfg)
    for acfg in cfg.algorithms:
        spec, report, rate = resolve_algorithm(acfg, cfg, problem)
        if rate is None:
            print(f"{acfg.name:>14s}  (no applicable rate theorem)")
        else:
            print(f"{acfg.name:>14s}  {rate.theorem}  mu={rate.mu:.6g}"
                  f"  mu_bound={rate.mu_bound:.6g}  gamma={rate.gamma:.8f}"
                  f"  feasible={rate.feasible}")
    return 0


def _cmd_counterexample(args):
    cfg = ExperimentConfig(
        problem="counterexample",
        graph=GraphConfig(kind="complete", K=2, seed=0, extra_edge_prob=0.0),
        algorithms=[AlgorithmConfig("PGEXTRA", 0.005),
                    AlgorithmConfig("DLADMM", 0.005),
                    AlgorithmConfig("ProxED", 0.005)],
        eta=1.0, c=1.0, M=args.M, iters=args.iters,
        output_dir=args.out,
    )
    if cfg.M < 2 or cfg.M % 2:
        print(f"M must be even and >= 2, got {cfg.M}", file=sys.stderr)
        return 2
    summary, diverged = run_experiment(cfg)
    for row in summary:
        print(f"{row['algorithm']:>14s}  final={_fmt(row['final_error'])}"
              f"  verdict={row['verdict'] or '-'}")
    return 3 if diverged else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="decprox",
        description="Decentralized proximal gradient experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a full experiment from a JSON config")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("validate", help="spectral/assumption report only")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("rates", help="theoretical rate reports without running")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_rates)

    p = sub.add_parser("counterexample",
                       help="two-agent separate-regularizer preset")
    p.add_argument("--M", type=int, default=2000)
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--out", default="decprox_counterexample")
    p.set_defaults(fn=_cmd_counterexample)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except engine.DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
