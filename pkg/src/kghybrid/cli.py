"""Command-line entry point: ``kghybrid <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import cookworld
from .config import ConfigError, ExperimentConfig, load_config
from .grouping import read_jsonl, write_jsonl
from .harness import NoiseSpec, evaluate, observed_vocabulary, relative_change
from .kg import KnowledgeGraph
from .miner import GLOBAL_MODES, RuleBook, mine_rules, sweep_tau
from .policy import HybridPolicy
from .pruner import PrunerConfig, PrunerModel, train_pruner
from .teacher import QConfig, QPolicy, collect_demos, make_teacher, oracle_policy, train_q

log = logging.getLogger("kghybrid")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _envs(args, split: str) -> list[cookworld.Env]:
    if getattr(args, "manifest", None):
        with open(args.manifest, encoding="utf-8") as f:
            return cookworld.envs_from_manifest(json.load(f), split)
    data = cookworld.manifest(args.seed, args.difficulty, args.n_train, args.n_test)
    return cookworld.envs_from_manifest(data, split)


def _add_env_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="env manifest from gen-envs (overrides the flags below)")
    p.add_argument("--difficulty", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="master seed for env generation")
    p.add_argument("--n-train", type=int, default=10)
    p.add_argument("--n-test", type=int, default=10)


def _load_policy(args):
    if getattr(args, "q_policy", None):
        return QPolicy.load(args.q_policy)
    if args.rules and args.pruner:
        return HybridPolicy(PrunerModel.load(args.pruner), RuleBook.load(args.rules))
    if getattr(args, "oracle", False):
        return oracle_policy
    raise ValueError("give --rules and --pruner, --q-policy, or --oracle")


def cmd_gen_envs(args) -> int:
    data = cookworld.manifest(args.seed, args.difficulty, args.n_train, args.n_test)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(data, f, sort_keys=True, indent=1)
    print(f"wrote {len(data['train'])} train and {len(data['test'])} test envs to {args.out}")
    return 0


def cmd_train_teacher(args) -> int:
    cfg = QConfig(episodes=args.episodes, seed=args.seed, alpha=args.alpha, gamma=args.gamma)
    q = train_q(_envs(args, "train"), cfg)
    q.save(args.out)
    last = q.history[-1] if q.history else {}
    print(f"trained Q for {args.episodes} episodes; last block mean score {last.get('mean_score', float('nan')):.3f}")
    return 0


def cmd_collect_demos(args) -> int:
    q = QPolicy.load(args.q_policy) if args.q_policy else None
    teacher = make_teacher(args.teacher, args.seed, q)
    ds = collect_demos(teacher, _envs(args, "train"), args.epsilon, args.n, args.seed, args.teacher)
    write_jsonl(ds.records, args.out)
    print(f"wrote {len(ds)} records from {ds.meta['episodes']} episodes to {args.out}")
    return 0


def cmd_mine_rules(args) -> int:
    rb = mine_rules(read_jsonl(args.demos), args.tau, args.global_mode)
    rb.save(args.out)
    sizes = ", ".join(f"{t}={len(r)}" for t, r in rb.rules.items())
    print(f"wrote rules (tau={args.tau}) to {args.out}: {sizes}")
    return 0


def cmd_train_pruner(args) -> int:
    cfg = PrunerConfig(epochs=args.epochs, learning_rate=args.lr, l2=args.l2, seed=args.seed,
                       use_counts=args.use_counts)
    m = train_pruner(read_jsonl(args.demos), cfg)
    m.save(args.out)
    print(f"train loss {m.train_loss:.4f}, held-out accuracy {m.holdout_accuracy:.4f}; wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    envs = _envs(args, args.split)
    policy = _load_policy(args)
    nodes, relations = observed_vocabulary(envs)
    res = evaluate(policy, envs, NoiseSpec(args.noise_add, args.noise_drop, args.noise_seed), args.episodes,
                   nodes, relations)
    print(json.dumps(res.to_json(), sort_keys=True))
    return 0


def cmd_robustness(args) -> int:
    envs = _envs(args, "train")
    policy = _load_policy(args)
    nodes, relations = observed_vocabulary(envs)
    clean = evaluate(policy, envs, None, args.episodes, nodes, relations).mean
    print(f"clean: {clean:.3f}")
    print("add\tdrop\tscore\trelative")
    for k in _floats(args.add):
        for p in _floats(args.drop):
            res = evaluate(policy, envs, NoiseSpec(k, p, args.noise_seed), args.episodes, nodes, relations)
            print(f"{k:g}\t{p:g}\t{res.mean:.3f}\t{100 * relative_change(res.mean, clean):+.1f}%")
    return 0


def _explain_state(args) -> tuple[KnowledgeGraph, list[str]]:
    if args.state:
        with open(args.state, encoding="utf-8") as f:
            data = json.load(f)
        if isinstance(data, list):
            if not args.candidate:
                raise ValueError("a bare graph file needs --candidate actions")
            return KnowledgeGraph.from_json(data), list(args.candidate)
        if "spec" in data:
            env = cookworld.Env.from_json(data)
            return env.state.graph, args.candidate or env.action_candidates()
        if "graph" in data and "candidates" in data:
            return KnowledgeGraph.from_json(data["graph"]), list(data["candidates"])
        raise ValueError("state file must be an env dump, a graph, or {graph, candidates}")
    env = cookworld.Env(cookworld.EnvSpec(args.difficulty, args.seed))
    for _ in range(args.steps):
        if env.state.done:
            break
        env.step(oracle_policy(env.state.graph, env.action_candidates()))
    if env.state.done:
        raise ValueError("episode ended before the requested step")
    if args.save_state:
        with open(args.save_state, "w", encoding="utf-8") as f:
            f.write(env.dumps())
    return env.state.graph, env.action_candidates()


def cmd_explain(args) -> int:
    policy = HybridPolicy(PrunerModel.load(args.pruner), RuleBook.load(args.rules))
    graph, candidates = _explain_state(args)
    _, explanation = policy.act(graph, candidates)
    if args.json:
        print(json.dumps(explanation.to_json(), sort_keys=True, indent=1))
    else:
        print(explanation.table())
    return 0


def cmd_run_all(args) -> int:
    from .experiment import run_experiment

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    run_experiment(cfg, args.out)
    print(f"wrote report.json, tables.md and tables.csv to {args.out}")
    return 0


def cmd_sweep_tau(args) -> int:
    rows = sweep_tau(read_jsonl(args.demos), _floats(args.taus))
    for row in rows:
        sizes = ", ".join(f"{t}={n}" for t, n in row["sizes"].items())
        print(f"tau={row['tau']:g}: {sizes}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kghybrid", description="Hybrid rule/learned policies on cooking games.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-envs", help="write a train/test env manifest")
    p.add_argument("--difficulty", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=10)
    p.add_argument("--n-test", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_envs)

    p = sub.add_parser("train-teacher", help="train the linear Q teacher")
    _add_env_args(p)
    p.add_argument("--episodes", type=int, default=3000)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("collect-demos", help="roll out a teacher and write labelled states")
    _add_env_args(p)
    p.add_argument("--teacher", choices=("oracle", "q", "random"), default="oracle")
    p.add_argument("--q-policy", help="trained Q policy for --teacher q")
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect_demos)

    p = sub.add_parser("mine-rules", help="mine supporting edge sets from demos")
    p.add_argument("--demos", required=True)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--global-mode", choices=GLOBAL_MODES, default="abstract")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine_rules)

    p = sub.add_parser("train-pruner", help="fit the action-type classifier")
    p.add_argument("--demos", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--use-counts", action="store_true", help="also feed per-relation edge counts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_pruner)

    for name, func, helptext in (("eval", cmd_eval, "mean normalized score of a policy"),
                                 ("robustness", cmd_robustness, "score over a noise grid on train envs")):
        p = sub.add_parser(name, help=helptext)
        _add_env_args(p)
        p.add_argument("--rules")
        p.add_argument("--pruner")
        p.add_argument("--q-policy")
        p.add_argument("--oracle", action="store_true")
        p.add_argument("--episodes", type=int, default=5)
        p.add_argument("--noise-seed", type=int, default=0)
        if name == "eval":
            p.add_argument("--split", choices=("train", "test"), default="test")
            p.add_argument("--noise-add", type=float, default=0.0)
            p.add_argument("--noise-drop", type=float, default=0.0)
        else:
            p.add_argument("--add", default="0.2,0.4,0.6")
            p.add_argument("--drop", default="0,0.03,0.06")
        p.set_defaults(func=func)

    p = sub.add_parser("explain", help="score breakdown for one state")
    p.add_argument("--rules", required=True)
    p.add_argument("--pruner", required=True)
    p.add_argument("--state", help="env dump, graph list, or {graph, candidates} JSON")
    p.add_argument("--candidate", action="append", help="candidate action (repeatable)")
    p.add_argument("--difficulty", type=int, default=1, help="without --state: generate this game")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=0, help="oracle steps to play before explaining")
    p.add_argument("--save-state", help="write the generated state as an env dump")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("run-all", help="full pipeline and report")
    p.add_argument("--config", help="key = value config file (defaults if omitted)")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run_all)

    p = sub.add_parser("sweep-tau", help="supporting set sizes over thresholds")
    p.add_argument("--demos", required=True)
    p.add_argument("--taus", default="0.1,0.2,0.3,0.5,0.8,1.0")
    p.set_defaults(func=cmd_sweep_tau)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
