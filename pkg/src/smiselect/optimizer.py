"""Greedy maximization of an SMI objective under a knapsack (duration) budget."""
from __future__ import annotations

import heapq
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .kernel import SimilarityKernel
from .smi import DEFAULT_EPS, SelectionState, SmiKind, evaluate

logger = logging.getLogger(__name__)

VARIANTS = ("plain_gain", "gain_per_cost")
BRUTE_FORCE_MAX = 20


@dataclass(frozen=True)
class BudgetConstraint:
    budget_s: float
    costs: np.ndarray

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=np.float64).reshape(-1)
        if not self.budget_s > 0:
            raise ValueError(f"budget must be positive, got {self.budget_s}")
        if costs.size and not np.all(costs > 0):
            raise ValueError("all item costs must be positive")
        if not np.all(np.isfinite(costs)):
            raise ValueError("item costs must be finite")
        object.__setattr__(self, "budget_s", float(self.budget_s))
        object.__setattr__(self, "costs", costs)

    @classmethod
    def unit(cls, n, budget):
        """Cardinality constraint: every item costs 1, at most ``budget`` items."""
        return cls(float(budget), np.ones(n))


@dataclass(frozen=True)
class GreedyConfig:
    variant: str = "plain_gain"
    lazy: bool = False
    # stop once every feasible gain falls below this; 0 disables the threshold
    min_gain: float = 0.0
    eps: float = DEFAULT_EPS
    # None -> ties broken by lower index; an int seeds a random tie order
    seed: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.min_gain < 0:
            raise ValueError("min_gain must be >= 0")


@dataclass
class SelectionResult:
    selected: list
    per_step_gain: list
    total_cost_s: float
    objective_value: float
    rounds_evaluated: int
    budget_s: float
    function: str
    config: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.selected)

    def to_dict(self):
        d = asdict(self)
        d["selected"] = [x if isinstance(x, str) else int(x) for x in self.selected]
        d["per_step_gain"] = [float(g) for g in self.per_step_gain]
        return d


def _check_inputs(kernel, constraint):
    if kernel.n_ground == 0:
        raise ValueError("ground set is empty")
    if constraint.costs.size != kernel.n_ground:
        raise ValueError(f"{constraint.costs.size} costs for a ground set of {kernel.n_ground}")


def _tie_priority(n, seed):
    if seed is None:
        return np.arange(n)
    return np.random.default_rng(seed).permutation(n)


def _finish(kind, kernel, constraint, cfg, state, spent, evaluations):
    warnings = []
    if not state.chosen and np.all(constraint.costs > constraint.budget_s):
        msg = f"budget {constraint.budget_s:g}s is below every item's cost; nothing selected"
        logger.warning(msg)
        warnings.append("budget_below_min_cost")
    return SelectionResult(
        selected=list(state.chosen),
        per_step_gain=list(state.history),
        total_cost_s=float(spent),
        objective_value=evaluate(kind, state.chosen, kernel, cfg.eps),
        rounds_evaluated=int(evaluations),
        budget_s=constraint.budget_s,
        function=kind.value,
        config=asdict(cfg),
        warnings=warnings,
    )


def greedy_select(kind, kernel: SimilarityKernel, constraint: BudgetConstraint,
                  cfg: GreedyConfig = GreedyConfig()) -> SelectionResult:
    """Plain greedy: every round re-scores every feasible candidate.

    Candidates whose cost exceeds the remaining budget are dropped for good
    (the remaining budget only shrinks) and selection continues with the rest.
    Ties on score go to the cheaper item, then the lower tie priority.
    """
    if cfg.lazy:
        return lazy_greedy_select(kind, kernel, constraint, cfg)
    kind = SmiKind.parse(kind)
    _check_inputs(kernel, constraint)
    costs = constraint.costs
    prio = _tie_priority(kernel.n_ground, cfg.seed)
    state = SelectionState(kind, kernel, cfg.eps)
    alive = np.ones(kernel.n_ground, dtype=bool)
    spent, evaluations = 0.0, 0
    while True:
        alive &= spent + costs <= constraint.budget_s
        if not alive.any():
            break
        gains = state.gains()
        evaluations += int(alive.sum())
        cand = alive.copy()
        if cfg.min_gain > 0:
            cand &= gains >= cfg.min_gain
            if not cand.any():
                break
        idx = np.flatnonzero(cand)
        score = gains[idx] if cfg.variant == "plain_gain" else gains[idx] / costs[idx]
        best = idx[np.lexsort((prio[idx], costs[idx], -score))[0]]
        state.commit(best, gains[best])
        spent += costs[best]
        alive[best] = False
    return _finish(kind, kernel, constraint, cfg, state, spent, evaluations)


def lazy_greedy_select(kind, kernel: SimilarityKernel, constraint: BudgetConstraint,
                       cfg: GreedyConfig = GreedyConfig()) -> SelectionResult:
    """Accelerated greedy using stale gains as upper bounds.

    Only the top of a max-heap is re-scored; it is taken when its fresh score
    still beats the next stale bound.  For modular objectives (GCMI) bounds never
    go stale, so no re-scoring happens at all.  ``rounds_evaluated`` counts
    actual gain evaluations.

    Stale gains are upper bounds only for submodular objectives.  LogDMI is not
    submodular, so for it every candidate is re-scored each round, which keeps
    the result identical to :func:`greedy_select`.
    """
    kind = SmiKind.parse(kind)
    if not kind.submodular:
        logger.info("%s is not submodular; lazy evaluation falls back to full sweeps",
                    kind.value)
        return greedy_select(kind, kernel, constraint, replace(cfg, lazy=False))
    _check_inputs(kernel, constraint)
    costs = constraint.costs
    per_cost = cfg.variant == "gain_per_cost"
    prio = _tie_priority(kernel.n_ground, cfg.seed)
    state = SelectionState(kind, kernel, cfg.eps)
    budget = constraint.budget_s

    feasible = np.flatnonzero(costs <= budget)
    gains = state.gains()
    evaluations = int(feasible.size)
    heap = []
    for x in feasible:
        g = gains[x]
        if cfg.min_gain > 0 and g < cfg.min_gain:
            continue
        s = g / costs[x] if per_cost else g
        # entries: (-score, cost, tie priority, index, round stamp, gain)
        heap.append((-s, costs[x], prio[x], int(x), 0, g))
    heapq.heapify(heap)

    spent = 0.0
    while heap:
        neg_s, c, p, x, stamp, g = heapq.heappop(heap)
        if spent + c > budget:
            continue
        if stamp != len(state.chosen) and not kind.modular:
            g = state.marginal_gain(x)
            evaluations += 1
            if cfg.min_gain > 0 and g < cfg.min_gain:
                continue
            s = g / c if per_cost else g
            entry = (-s, c, p, x, len(state.chosen), g)
            if heap and heap[0][:4] < entry[:4]:
                heapq.heappush(heap, entry)
                continue
        state.commit(x, g)
        spent += c
    return _finish(kind, kernel, constraint, cfg, state, spent, evaluations)


def brute_force_select(kind, kernel: SimilarityKernel, constraint: BudgetConstraint,
                       eps: float = DEFAULT_EPS) -> SelectionResult:
    """Exhaustive optimum over all feasible subsets (test oracle, ``n <= 20``).

    Ties go to the lexicographically smallest sorted index tuple.
    """
    kind = SmiKind.parse(kind)
    _check_inputs(kernel, constraint)
    n = kernel.n_ground
    if n > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX} items, got {n}")
    costs = constraint.costs
    budget = constraint.budget_s
    best_val, best_set = 0.0, ()
    evaluations = 0

    # depth-first over index-increasing subsets; infeasible branches are pruned
    stack = [((), 0.0, 0)]
    while stack:
        subset, cost, start = stack.pop()
        for j in range(start, n):
            c = cost + costs[j]
            if c > budget:
                continue
            cand = subset + (j,)
            val = evaluate(kind, cand, kernel, eps)
            evaluations += 1
            if val > best_val or (val == best_val and cand < best_set):
                best_val, best_set = val, cand
            stack.append((cand, c, j + 1))

    gains, prev = [], 0.0
    for k in range(1, len(best_set) + 1):
        cur = evaluate(kind, best_set[:k], kernel, eps)
        gains.append(cur - prev)
        prev = cur
    return SelectionResult(
        selected=list(best_set),
        per_step_gain=gains,
        total_cost_s=float(sum(costs[j] for j in best_set)),
        objective_value=float(best_val),
        rounds_evaluated=evaluations,
        budget_s=budget,
        function=kind.value,
        config={"variant": "brute_force", "eps": eps},
    )
