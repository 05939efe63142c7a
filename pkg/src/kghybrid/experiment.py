"""End-to-end pipeline: envs, teacher, demos, rules, pruner, evaluation, report."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import replace

import numpy as np

from . import cookworld, vocab
from .config import ExperimentConfig, dump_config
from .harness import (NoiseSpec, evaluate, network_selector_baseline, observed_vocabulary,
                      relative_change)
from .miner import RuleBook, mine_rules
from .policy import HybridPolicy
from .pruner import PrunerModel, train_pruner
from .teacher import QPolicy, collect_demos, make_teacher, train_q

log = logging.getLogger(__name__)

DEVIATIONS = [
    "hyperparameters are fixed in the config; no validation-set model selection",
    "small scale: env, demo and episode counts come from the config "
    "(defaults: 10 train + 10 test envs, 20000 demos, 5 episodes per env and cell)",
]

# stream tags for derived seeds
_DEMOS, _Q, _NOISE, _RANDOM_TEACHER, _PRUNER, _NETWORK = range(1, 7)


def derived_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence([master, *path]).generate_state(1)[0])


def _rulebook_summary(rb: RuleBook) -> dict:
    return {
        "tau": rb.tau,
        "sizes": {t: len(rb.rules.get(t, [])) for t in vocab.ACTION_TYPES},
        "top": {t: [{"edge": r.edge.to_json(), "importance": round(r.importance, 6)}
                    for r in rb.rules.get(t, [])[:6]] for t in vocab.ACTION_TYPES},
    }


def _fit_hybrid(cfg: ExperimentConfig, d: int, teacher_kind: str, envs, q: QPolicy | None):
    seed = derived_seed(cfg.master_seed, d, _DEMOS)
    teacher = make_teacher(teacher_kind, derived_seed(cfg.master_seed, d, _RANDOM_TEACHER), q)
    demos = collect_demos(teacher, envs, cfg.demo_epsilon, cfg.n_demos, seed, teacher_kind)
    rb = mine_rules(demos.records, cfg.tau)
    pm = train_pruner(demos.records, replace(cfg.pruner, seed=derived_seed(cfg.master_seed, d, _PRUNER)))
    return demos, rb, pm, HybridPolicy(pm, rb)


def _cell(res) -> dict:
    return res.to_json()


def run_difficulty(cfg: ExperimentConfig, d: int, out_dir: str | None = None) -> dict:
    t0 = time.time()
    train_seeds, test_seeds = cookworld.split_seeds(cfg.master_seed, d, cfg.n_train, cfg.n_test)
    train_envs = cookworld.env_set(d, train_seeds)
    test_envs = cookworld.env_set(d, test_seeds)
    nodes, relations = observed_vocabulary(train_envs + test_envs)
    ablate = cfg.teacher_ablation and d in cfg.ablation_difficulties

    q = None
    if cfg.baseline_q or cfg.teacher == "q" or ablate:
        q = train_q(train_envs, replace(cfg.q, seed=derived_seed(cfg.master_seed, d, _Q)))
        log.info("d%d: Q teacher trained (%.0fs)", d, time.time() - t0)

    demos, rb, pm, hybrid = _fit_hybrid(cfg, d, cfg.teacher, train_envs, q)
    log.info("d%d: demos, rules and pruner ready (%.0fs)", d, time.time() - t0)
    if out_dir:
        art = os.path.join(out_dir, "artifacts", f"d{d}")
        os.makedirs(art, exist_ok=True)
        rb.save(os.path.join(art, "rules.json"))
        pm.save(os.path.join(art, "pruner.json"))

    policies = {"hybrid": hybrid}
    if cfg.baseline_q:
        policies["vanilla_q"] = q

    section: dict = {
        "seeds": {"train": train_seeds, "test": test_seeds},
        "noise_vocabulary": {"nodes": len(nodes), "relations": len(relations)},
        "pruner": {"train_loss": pm.train_loss, "holdout_accuracy": pm.holdout_accuracy},
        "rulebook": _rulebook_summary(rb),
        "demos": {"n": len(demos), "episodes": demos.meta["episodes"], "teacher": cfg.teacher},
    }
    if q is not None:
        section["q_training_curve"] = q.history

    gen = {}
    for name, pol in policies.items():
        gen[name] = {
            "train": _cell(evaluate(pol, train_envs, None, cfg.episodes, nodes, relations)),
            "test": _cell(evaluate(pol, test_envs, None, cfg.episodes, nodes, relations)),
        }
    section["generalization"] = gen
    log.info("d%d: clean evaluation done (%.0fs)", d, time.time() - t0)

    robust = []
    for i, k in enumerate(cfg.noise_add):
        for j, p in enumerate(cfg.noise_drop):
            noise = NoiseSpec(k, p, derived_seed(cfg.master_seed, d, _NOISE, i, j))
            row = {"add": k, "drop": p}
            for name, pol in policies.items():
                res = evaluate(pol, train_envs, noise, cfg.episodes, nodes, relations)
                clean = gen[name]["train"]["mean"]
                row[name] = {"score": res.mean, "relative_change": relative_change(res.mean, clean),
                             "min": res.minimum, "max": res.maximum, "episodes": res.episodes}
            robust.append(row)
    section["robustness"] = robust
    log.info("d%d: noise grid done (%.0fs)", d, time.time() - t0)

    if ablate:
        teachers = {}
        for kind in ("oracle", "q", "random"):
            pol = hybrid if kind == cfg.teacher else _fit_hybrid(cfg, d, kind, train_envs, q)[3]
            teachers[kind] = {
                "train": _cell(evaluate(pol, train_envs, None, cfg.episodes, nodes, relations)),
                "test": _cell(evaluate(pol, test_envs, None, cfg.episodes, nodes, relations)),
            }
        section["teacher_ablation"] = teachers
    if cfg.baseline_network and d in cfg.ablation_difficulties:
        net = network_selector_baseline(
            demos.records, pm, replace(cfg.network, seed=derived_seed(cfg.master_seed, d, _NETWORK)))
        section["selector_ablation"] = {
            "rule": gen["hybrid"],
            "network": {
                "train": _cell(evaluate(net, train_envs, None, cfg.episodes, nodes, relations)),
                "test": _cell(evaluate(net, test_envs, None, cfg.episodes, nodes, relations)),
            },
        }
    log.info("d%d: finished (%.0fs)", d, time.time() - t0)
    return section


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> dict:
    cfg.validate()
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    report = {
        "config": cfg.to_json(),
        "deviations": DEVIATIONS,
        "difficulties": {str(d): run_difficulty(cfg, d, out_dir) for d in cfg.difficulties},
    }
    if out_dir:
        write_report(report, out_dir)
        with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as f:
            f.write(dump_config(cfg))
    return report


# ---------------------------------------------------------------- output


def write_report(report: dict, out_dir: str) -> None:
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, indent=1)
        f.write("\n")
    with open(os.path.join(out_dir, "tables.md"), "w", encoding="utf-8") as f:
        f.write(render_markdown(report))
    with open(os.path.join(out_dir, "tables.csv"), "w", encoding="utf-8", newline="") as f:
        f.write(render_csv(report))


def _pct(x: float) -> str:
    return f"{100 * x:.1f}"


def _md_table(header: list[str], rows: list[list[str]]) -> str:
    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(out) + "\n"


def render_markdown(report: dict) -> str:
    diffs = list(report["difficulties"])
    secs = report["difficulties"]
    parts = ["# Results\n", "Scores are mean normalized scores x 100.\n"]

    policies = sorted({p for d in diffs for p in secs[d]["generalization"]}, key=lambda p: p != "vanilla_q")
    header = ["policy"] + [f"d{d} {split}" for split in ("train", "test") for d in diffs]
    rows = []
    for p in policies:
        row = [p]
        for split in ("train", "test"):
            for d in diffs:
                cell = secs[d]["generalization"].get(p)
                row.append(_pct(cell[split]["mean"]) if cell else "-")
        rows.append(row)
    parts += ["## Generalization\n", _md_table(header, rows)]

    header = ["(add, drop)"] + [f"d{d} {p}" for d in diffs for p in policies]
    rows = []
    n_rows = len(secs[diffs[0]]["robustness"])
    for i in range(n_rows):
        first = secs[diffs[0]]["robustness"][i]
        row = [f"({first['add']:g}, {first['drop']:g})"]
        for d in diffs:
            cell = secs[d]["robustness"][i]
            for p in policies:
                c = cell.get(p)
                row.append(f"{_pct(c['score'])} ({100 * c['relative_change']:+.0f}%)" if c else "-")
        rows.append(row)
    parts += ["## Robustness (training envs)\n", _md_table(header, rows)]

    abl = [d for d in diffs if "teacher_ablation" in secs[d]]
    if abl:
        header = ["teacher"] + [f"d{d} {s}" for d in abl for s in ("train", "test")]
        rows = []
        for kind in ("oracle", "q", "random"):
            row = [kind]
            for d in abl:
                c = secs[d]["teacher_ablation"][kind]
                row += [_pct(c["train"]["mean"]), _pct(c["test"]["mean"])]
            rows.append(row)
        parts += ["## Teacher ablation\n", _md_table(header, rows)]

    abl = [d for d in diffs if "selector_ablation" in secs[d]]
    if abl:
        header = ["selector"] + [f"d{d} {s}" for d in abl for s in ("train", "test")]
        rows = []
        for kind in ("rule", "network"):
            row = [kind]
            for d in abl:
                c = secs[d]["selector_ablation"][kind]
                row += [_pct(c["train"]["mean"]), _pct(c["test"]["mean"])]
            rows.append(row)
        parts += ["## Selector ablation\n", _md_table(header, rows)]

    parts.append("## Deviations\n")
    parts += [f"- {x}" for x in report["deviations"]]
    return "\n".join(parts) + "\n"


def render_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "difficulty", "policy", "split", "add", "drop", "score", "relative_change"])
    for d, sec in report["difficulties"].items():
        for p, cell in sec["generalization"].items():
            for split in ("train", "test"):
                w.writerow(["generalization", d, p, split, 0, 0, cell[split]["mean"], ""])
        for row in sec["robustness"]:
            for p, c in row.items():
                if isinstance(c, dict):
                    w.writerow(["robustness", d, p, "train", row["add"], row["drop"], c["score"],
                                c["relative_change"]])
        for kind, cell in sec.get("teacher_ablation", {}).items():
            for split in ("train", "test"):
                w.writerow(["teacher_ablation", d, f"hybrid[{kind}]", split, 0, 0, cell[split]["mean"], ""])
        for kind, cell in sec.get("selector_ablation", {}).items():
            for split in ("train", "test"):
                w.writerow(["selector_ablation", d, kind, split, 0, 0, cell[split]["mean"], ""])
    return buf.getvalue()
