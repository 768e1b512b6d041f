"""Budget-constrained Monte Carlo Tree Search for the most damaging attack path."""

from __future__ import annotations

import math
import random
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

from .asm import AugmentedModel
from .ci import Category
from .engine import CyberEngine, CyberState, trace_records
from .simulation.scenario import KPIResult


@dataclass(frozen=True)
class SearchConfig:
    budget: float
    iterations: int = 1000
    exploration_constant: float = math.sqrt(2)
    rollout_depth_limit: int | None = None
    rng_seed: int = 0
    time_limit: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.budget > 0:
            raise ValueError("budget must be > 0")
        if self.exploration_constant < 0:
            raise ValueError("exploration_constant must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "budget": self.budget,
            "iterations": self.iterations,
            "exploration_constant": self.exploration_constant,
            "rollout_depth_limit": self.rollout_depth_limit,
            "rng_seed": self.rng_seed,
            "time_limit": self.time_limit,
        }


class SearchNode:
    __slots__ = ("state", "parent", "action", "children", "untried", "visits", "total_reward")

    def __init__(self, state: CyberState, untried: list[str], parent: SearchNode | None = None, action: str | None = None):
        self.state = state
        self.parent = parent
        self.action = action
        self.children: dict[str, SearchNode] = {}
        self.untried = untried
        self.visits = 0
        self.total_reward = 0.0

    @property
    def mean_reward(self) -> float:
        return self.total_reward / self.visits if self.visits else 0.0

    def iter_nodes(self):
        stack = [self]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(n.children.values())


def uct_score(total_reward: float, visits: int, parent_visits: int, c: float) -> float:
    """Mean reward plus exploration bonus; unvisited children score +inf."""
    if visits == 0:
        return math.inf
    return total_reward / visits + c * math.sqrt(math.log(parent_visits) / visits)


def random_walk(
    engine: CyberEngine,
    state: CyberState,
    budget: float,
    rng: random.Random,
    depth_limit: int | None = None,
) -> CyberState:
    """Uniformly pick affordable actions until none is left (or the depth cap)."""
    steps = 0
    while depth_limit is None or steps < depth_limit:
        options = engine.affordable_actions(state, budget)
        if not options:
            break
        state = engine.step(state, options[rng.randrange(len(options))])
        steps += 1
    return state


def rollout(
    model: AugmentedModel,
    state: CyberState,
    budget: float,
    rng: random.Random,
    depth_limit: int | None = None,
) -> tuple[float, CyberState]:
    terminal = random_walk(model.engine, state, budget, rng, depth_limit)
    return model.y(terminal), terminal


@dataclass
class AttackPath:
    actions: list[str]
    costs: list[float]
    total_cost: float
    budget: float
    y: float
    trace: list[CyberState]
    initial: CyberState
    kpi: KPIResult | None = None
    flags: list[str] = field(default_factory=list)
    stats: dict[str, Any] = field(default_factory=dict)

    def to_document(self, model: AugmentedModel, step_y: bool = True) -> dict[str, Any]:
        engine = model.engine
        doc: dict[str, Any] = {
            "kind": "attack_path",
            "actions": list(self.actions),
            "costs": list(self.costs),
            "total_cost": self.total_cost,
            "budget": self.budget,
            "y": self.y,
            "p_cdf": None,
            "flags": list(self.flags),
            "stats": dict(self.stats),
            "trace": trace_records(engine, self.initial, self.trace),
        }
        if step_y:
            doc["step_y"] = [model.y(self.actions[: i + 1]) for i in range(len(self.actions))]
        if self.kpi is not None:
            doc["kpi"] = self.kpi.to_dict()
        return doc


class MCTS:
    """UCT search that commits one action per decision step.

    Each decision step runs ``iterations`` iterations (select by UCT, expand
    one untried action, random rollout to a terminal state, back up
    ``1 - y``) and then commits the root child with the highest mean reward,
    lowest action id on ties. The committed subtree is reused.
    """

    def __init__(self, model: AugmentedModel, config: SearchConfig):
        self.model = model
        self.engine = model.engine
        self.config = config
        self.rng = random.Random(config.rng_seed)
        self.iterations_run = 0
        self.decision_steps = 0
        self.root: SearchNode | None = None
        self.initial = self.engine.init_states()
        self._stats0 = dict(model.stats)

    def _node(self, state: CyberState, parent=None, action=None) -> SearchNode:
        return SearchNode(state, self.engine.affordable_actions(state, self.config.budget), parent, action)

    def _select_child(self, node: SearchNode) -> SearchNode:
        c = self.config.exploration_constant
        log_n = math.log(node.visits) if node.visits > 0 else 0.0
        best, best_score, best_id = None, -math.inf, None
        for aid, child in node.children.items():
            if child.visits == 0:
                score = math.inf
            else:
                score = child.total_reward / child.visits + c * math.sqrt(log_n / child.visits)
            if score > best_score or (score == best_score and aid < best_id):
                best, best_score, best_id = child, score, aid
        return best

    def iterate(self, root: SearchNode) -> float:
        node = root
        while True:
            if node.untried:
                aid = node.untried.pop(self.rng.randrange(len(node.untried)))
                child = self._node(self.engine.step(node.state, aid), node, aid)
                node.children[aid] = child
                node = child
                break
            if not node.children:
                break
            node = self._select_child(node)
        y, _ = rollout(self.model, node.state, self.config.budget, self.rng, self.config.rollout_depth_limit)
        reward = 1.0 - y
        while node is not None:
            node.visits += 1
            node.total_reward += reward
            node = node.parent
        self.iterations_run += 1
        return reward

    @staticmethod
    def best_child(node: SearchNode) -> SearchNode | None:
        best = None
        for aid in sorted(node.children):
            child = node.children[aid]
            if child.visits == 0:
                continue
            if best is None or child.mean_reward > best.mean_reward:
                best = child
        return best

    def search(self, stop: Callable[[int], bool] | None = None) -> AttackPath:
        """Run decision steps until the committed state is terminal.

        ``stop`` is polled after every iteration with the total iteration
        count; returning True ends the search early with the best path the
        tree currently supports (always within budget).
        """
        self.model.check_handlers()
        cfg = self.config
        root = self.root = self._node(self.initial)
        flags: list[str] = []
        if not root.untried:
            flags.append("no_affordable_entry_point")
        interrupted = False
        try:
            while root.untried or root.children:
                started = time.monotonic()
                for i in range(cfg.iterations):
                    self.iterate(root)
                    if stop is not None and stop(self.iterations_run):
                        interrupted = True
                        break
                    if cfg.time_limit is not None and time.monotonic() - started >= cfg.time_limit:
                        break
                if interrupted:
                    break
                best = self.best_child(root)
                best.parent = None
                root = self.root = best
                self.decision_steps += 1
        except KeyboardInterrupt:
            interrupted = True
        if interrupted:
            flags.append("interrupted")
            node = root
            while (nxt := self.best_child(node)) is not None:
                node = nxt
            final = node.state
        else:
            final = root.state
        return self._path(final, flags)

    def _path(self, final: CyberState, flags: list[str]) -> AttackPath:
        actions = list(final.action_log)
        trace = self.engine.replay(actions, self.initial, self.config.budget)
        kpi = self.model.evaluate(actions)
        costs = [self.engine.cost[a] for a in actions]
        return AttackPath(
            actions=actions,
            costs=costs,
            total_cost=math.fsum(costs),
            budget=self.config.budget,
            y=kpi.y,
            trace=trace,
            initial=self.initial,
            kpi=kpi,
            flags=flags,
            stats={
                "iterations": self.iterations_run,
                "decision_steps": self.decision_steps,
                # simulator counters for this search only; the model cache may be shared
                **{k: v - self._stats0.get(k, 0) for k, v in self.model.stats.items()},
            },
        )


def search(model: AugmentedModel, config: SearchConfig, stop: Callable[[int], bool] | None = None) -> AttackPath:
    return MCTS(model, config).search(stop)


def enumerate_sequences(engine: CyberEngine, budget: float, limit: int = 10**6) -> list[tuple[str, ...]]:
    """Every maximal (terminal) action sequence reachable under ``budget``."""
    out: list[tuple[str, ...]] = []
    stack = [engine.init_states()]
    while stack:
        st = stack.pop()
        options = engine.affordable_actions(st, budget)
        if not options:
            out.append(st.action_log)
            if len(out) > limit:
                raise ValueError(f"more than {limit} feasible sequences")
            continue
        for a in reversed(options):
            stack.append(engine.step(st, a))
    return out


def impact_set(engine: CyberEngine, actions) -> frozenset[str]:
    return frozenset(a for a in actions if engine.ci.actions[a].category is Category.IMPACT)
