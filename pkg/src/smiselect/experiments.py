"""Selection-level experiments on labelled manifests: purity, budget sweeps,
label efficiency."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import (SplitSpec, SyntheticConfig, budget_constraint, dominant_label,
                       feature_matrix, generate_synthetic, random_select, report, split)
from .kernel import KernelConfig, build_kernel
from .optimizer import GreedyConfig, greedy_select
from .smi import SmiKind


@dataclass
class SelectionTask:
    """A ground set, a target set and the kernel between them."""

    ground: list
    target: list
    kernel: object
    label_field: str = "speaker"

    @property
    def target_label(self):
        return dominant_label(self.target, self.label_field)

    def matched_seconds(self, selection):
        lab = self.target_label
        return float(sum(self.ground[i].duration_s for i in selection.selected
                         if self.ground[i].label(self.label_field) == lab))


def make_task(ground, target, kernel_cfg=KernelConfig(), label_field="speaker"):
    kernel = build_kernel(feature_matrix(ground), feature_matrix(target), kernel_cfg,
                          need_ground_ground=True)
    return SelectionTask(ground, target, kernel, label_field)


def synthetic_task(seed, synth=None, target_size=10, label_field="speaker", target_cluster=0,
                   kernel_cfg=None):
    """Synthetic corpus split with a target drawn from one cluster."""
    synth = synth or SyntheticConfig(seed=seed)
    records = generate_synthetic(synth)
    hier = synth.speakers_per_cluster > 1
    if label_field == "accent" and not hier:
        raise ValueError("accent targets need speakers_per_cluster > 1")
    label = f"acc{target_cluster}" if label_field == "accent" else (
        f"acc{target_cluster}_spk0" if hier else f"spk{target_cluster}")
    ground, target, _, _ = split(records, SplitSpec(target_size=target_size, seed=seed,
                                                    target_label=label,
                                                    label_field=label_field))
    kernel_cfg = kernel_cfg or KernelConfig(seed=seed)
    return make_task(ground, target, kernel_cfg, label_field)


def select(task: SelectionTask, kind, budget_s, cfg=GreedyConfig()):
    return greedy_select(kind, task.kernel, budget_constraint(task.ground, budget_s), cfg)


def purity(task: SelectionTask, selection):
    rep = report(selection, task.ground, task.target)
    return getattr(rep, f"purity_by_{task.label_field}")


def budget_sweep(task: SelectionTask, budgets, kinds=("flmi", "gcmi", "logdmi"),
                 cfg=GreedyConfig(), random_seed=0):
    """One row per (method, budget): size, cost, objective, purity, matched seconds."""
    rows = []
    for budget in budgets:
        constraint = budget_constraint(task.ground, budget)
        runs = [(SmiKind.parse(k).value, greedy_select(k, task.kernel, constraint, cfg))
                for k in kinds]
        runs.append(("random", random_select(task.ground, constraint, seed=random_seed)))
        for method, sel in runs:
            rows.append({
                "method": method,
                "budget_s": float(budget),
                "num_selected": len(sel.selected),
                "total_cost_s": sel.total_cost_s,
                "objective_value": (None if np.isnan(sel.objective_value)
                                    else sel.objective_value),
                "purity": purity(task, sel),
                "matched_s": task.matched_seconds(sel),
            })
    return rows


def budget_to_reach(task: SelectionTask, select_fn, goal_s, budgets):
    """Smallest budget on the grid whose selection holds ``goal_s`` seconds of
    target-label audio, or ``inf`` if none does."""
    for b in sorted(budgets):
        if task.matched_seconds(select_fn(b)) >= goal_s:
            return float(b)
    return float("inf")


def label_efficiency(task: SelectionTask, kind="flmi", reference_budget=360.0, level=0.9,
                     budgets=None, random_seed=0):
    """Budget ratio ``method / random`` to collect the same amount of on-target audio.

    The goal is ``level`` times the target-label seconds that ``kind`` selects
    at ``reference_budget``; each method's required budget is the smallest grid
    budget reaching that goal.
    """
    if budgets is None:
        total = float(sum(r.duration_s for r in task.ground))
        budgets = np.arange(30.0, total + 30.0, 30.0)
    goal = level * task.matched_seconds(select(task, kind, reference_budget))

    def smi(b):
        return select(task, kind, b)

    def rnd(b):
        return random_select(task.ground, budget_constraint(task.ground, b), seed=random_seed)

    b_smi = budget_to_reach(task, smi, goal, budgets)
    b_rand = budget_to_reach(task, rnd, goal, budgets)
    return {"goal_s": goal, "budget_smi": b_smi, "budget_random": b_rand,
            "ratio": b_smi / b_rand}
