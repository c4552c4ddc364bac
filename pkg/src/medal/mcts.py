"""Confidence-guided MCTS over unmasking prefixes.

One search iteration walks the tree from the root by UCB through already
expanded nodes, then drives a descent: expand the frontier node into its
pooled top-k2 scored actions, simulate every new child once (apply the
action, then complete the sequence from a single model prediction),
backpropagate each child's information-gain reward along the shared path,
and step to the best child, repeating until the descent reaches init_length
revealed tokens. Nodes at that depth enter the candidate pool; they stay
selectable but are never expanded, and re-selecting one backpropagates its
stored creation reward. The per-iteration descent is what lets a budget of
64 * candidate_count simulations reach pool depth: one descent costs about
init_length * k2 simulations and its final expansion delivers up to k2
candidates at once. The search stops when the pool holds candidate_count
entries or the simulation budget runs out (the pool is then returned
short, flagged exhausted).

SearchNode, ucb_select and backpropagate are deliberately generic over the
state/action payload: the schedule-space search in the theory module reuses
them with set-valued actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .errors import AlreadyExpanded, ConfigError, NoChildren
from .reward import EntropyProfile, RewardRecord, cumulative_gain, entropy_profile, info_gain
from .scoring import build_candidates
from .seqcore import SeqState, UnmaskAction, apply_action, apply_many, masked_positions


@dataclass(frozen=True)
class SearchConfig:
    k1: int = 3
    k2: int = 5
    gamma: float = 5.0
    epsilon: float = 1e-8
    c_explore: float = math.sqrt(2.0)
    candidate_count: int = 3
    init_length: int = 20
    max_simulations: int | None = None  # None -> 64 * candidate_count
    seed: int = 1
    rollout_mode: str = "sample"
    use_entropy_penalty: bool = True

    @property
    def budget(self) -> int:
        if self.max_simulations is None:
            return 64 * self.candidate_count
        return self.max_simulations

    def validate(self) -> None:
        if self.k1 < 1 or self.k2 < 1:
            raise ConfigError("k1 and k2 must be >= 1")
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.c_explore < 0:
            raise ConfigError("c_explore must be >= 0")
        if self.candidate_count < 1:
            raise ConfigError("candidate_count must be >= 1")
        if self.init_length < 0:
            raise ConfigError("init_length must be >= 0")
        if self.budget < self.candidate_count:
            raise ConfigError("simulation budget below candidate_count")
        if self.rollout_mode not in ("sample", "argmax"):
            raise ConfigError(f"unknown rollout_mode {self.rollout_mode!r}")

    def to_json(self) -> dict:
        return {
            "k1": self.k1,
            "k2": self.k2,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "c_explore": self.c_explore,
            "candidate_count": self.candidate_count,
            "init_length": self.init_length,
            "max_simulations": self.max_simulations,
            "seed": self.seed,
            "rollout_mode": self.rollout_mode,
            "use_entropy_penalty": self.use_entropy_penalty,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SearchConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(obj) - known
        if bad:
            raise ConfigError(f"unknown search config keys {sorted(bad)}")
        cfg = cls(**obj)
        cfg.validate()
        return cfg


class SearchNode:
    """Tree node; edge statistics live on the child of the edge.

    visit_count follows N(x) = sum_a N(x, a) + 1: a node is born visited
    once, and grows by one each time a reward passes through it as a parent.
    """

    __slots__ = (
        "state",
        "action",
        "prior",
        "index",
        "children",
        "_by_action",
        "expanded",
        "terminal",
        "terminal_reward",
        "visit_count",
        "edge_visits",
        "edge_value",
    )

    def __init__(self, state: Any, action: Any = None, prior: float = 0.0, index: int = 0):
        self.state = state
        self.action = action
        self.prior = prior
        self.index = index
        self.children: list[SearchNode] = []
        self._by_action: dict[Any, SearchNode] = {}
        self.expanded = False
        self.terminal = False
        self.terminal_reward = 0.0
        self.visit_count = 1
        self.edge_visits = 0
        self.edge_value = 0.0

    @property
    def q(self) -> float:
        return self.edge_value / self.edge_visits if self.edge_visits else 0.0

    def child(self, action: Any) -> "SearchNode":
        return self._by_action[action]

    def add_child(self, node: "SearchNode") -> None:
        self.children.append(node)
        self._by_action[node.action] = node


def ucb_select(node: SearchNode, c_explore: float):
    """Action of the child maximizing Q + c * sqrt(ln N(x) / N(x, a)).

    Unvisited children are taken first, highest prior score leading. All
    ties resolve by creation order, which expansion builds as (score desc,
    position asc, token asc).
    """
    if not node.children:
        raise NoChildren("cannot select from a node with no children")
    unvisited = [ch for ch in node.children if ch.edge_visits == 0]
    if unvisited:
        best = max(unvisited, key=lambda ch: (ch.prior, -ch.index))
        return best.action
    log_n = math.log(node.visit_count)

    def key(ch: SearchNode):
        bonus = c_explore * math.sqrt(log_n / ch.edge_visits)
        return (ch.q + bonus, ch.prior, -ch.index)

    return max(node.children, key=key).action


def backpropagate(path: list[tuple[SearchNode, SearchNode]], reward: float) -> None:
    """Add one visit and `reward` along (parent, child) edges, root first."""
    for parent, child in path:
        parent.visit_count += 1
        child.edge_visits += 1
        child.edge_value += reward


def check_node_invariant(node: SearchNode) -> bool:
    return node.visit_count == sum(ch.edge_visits for ch in node.children) + 1


def expand(node: SearchNode, model, cfg: SearchConfig, *, output=None) -> list[SearchNode]:
    """Create children for the pooled top-k2 actions of node.state."""
    if node.expanded:
        raise AlreadyExpanded("node already expanded")
    if node.terminal:
        raise AlreadyExpanded("pool nodes are frozen; they cannot expand")
    if output is None:
        output = model.predict(node.state)
    cands = build_candidates(
        node.state,
        output,
        cfg.k1,
        cfg.k2,
        cfg.gamma,
        cfg.epsilon,
        use_entropy_penalty=cfg.use_entropy_penalty,
    )
    for action, score in cands.pooled:
        child = SearchNode(
            state=apply_action(node.state, action),
            action=action,
            prior=score,
            index=len(node.children),
        )
        node.add_child(child)
    node.expanded = True
    return list(node.children)


def _fill_remaining(state: SeqState, output, mode: str, rng: np.random.Generator) -> SeqState:
    """Complete every masked position from one prediction (no further calls)."""
    positions = masked_positions(state)
    if not positions:
        return state
    matrix = output.matrix(positions)
    shifted = matrix - matrix.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    probs = ex / ex.sum(axis=1, keepdims=True)
    if mode == "argmax":
        tokens = probs.argmax(axis=1)
    else:
        cum = probs.cumsum(axis=1)
        draws = rng.random(len(positions))
        tokens = np.minimum(
            (cum < draws[:, None]).sum(axis=1), probs.shape[1] - 1
        )
    acts = [UnmaskAction(p, int(t)) for p, t in zip(positions, tokens)]
    return apply_many(state, acts)


def simulate(
    model,
    state: SeqState,
    action: UnmaskAction,
    rng: np.random.Generator,
    *,
    mode: str = "sample",
    before: EntropyProfile | None = None,
) -> tuple[RewardRecord, SeqState]:
    """Reward the action and roll the resulting state out to completion.

    Costs one model call for the post-action state (none when the action
    completes the sequence); the rollout reuses that same prediction.
    """
    if before is None:
        before = entropy_profile(model, state)
    next_state = apply_action(state, action)
    if next_state.is_complete:
        record = info_gain(model, state, action, before=before)
        return record, next_state
    after_output = model.predict(next_state)
    record = info_gain(model, state, action, before=before, after_output=after_output)
    completion = _fill_remaining(next_state, after_output, mode, rng)
    return record, completion


@dataclass(frozen=True)
class CandidateEntry:
    """A pooled initialization: a state with init_length revealed tokens."""

    order: int
    state: SeqState
    path: tuple[UnmaskAction, ...]
    reward: float  # r_ig at creation
    score: float  # cumulative gain from the root
    completion: SeqState

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "path": [[a.position, a.token] for a in self.path],
            "reward": self.reward,
            "score": self.score,
            "tokens": list(self.state.tokens),
        }


@dataclass
class CandidatePool:
    capacity: int
    entries: list[CandidateEntry] = field(default_factory=list)
    exhausted: bool = False  # budget ran out before the pool filled
    _seen: set[tuple[int, ...]] = field(default_factory=set)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def add(self, entry: CandidateEntry) -> bool:
        """Insert unless an identical state is pooled already."""
        key = entry.state.tokens
        if key in self._seen:
            return False
        self._seen.add(key)
        self.entries.append(entry)
        return True


def run_cgmcts(
    model,
    root_state: SeqState,
    cfg: SearchConfig,
    *,
    rng: np.random.Generator | None = None,
    trace: Callable[[dict], None] | None = None,
) -> CandidatePool:
    """Search for candidate_count high-value prefixes of depth init_length.

    The root's generation region must be fully masked. max_simulations
    budgets child simulations (a re-selected pool node costs one); the
    final expansion of a descent may overshoot by at most k2 - 1 so that
    sibling candidates are never half-created. init_length == 0
    short-circuits to a pool holding only the root (no search, no model
    calls), which keeps the no-search decode path exact.
    """
    cfg.validate()
    if root_state.reveal_count() != 0:
        raise ConfigError("search root must have a fully masked generation region")
    if cfg.init_length > root_state.gen_length:
        raise ConfigError("init_length exceeds the generation region")
    pool = CandidatePool(capacity=cfg.candidate_count)
    if cfg.init_length == 0:
        pool.add(
            CandidateEntry(
                order=0,
                state=root_state,
                path=(),
                reward=0.0,
                score=0.0,
                completion=root_state,
            )
        )
        return pool
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    root = SearchNode(root_state)
    root_output = model.predict(root_state)
    root_profile = entropy_profile(model, root_state, output=root_output)

    sims = 0
    it = 0
    while sims < cfg.budget and not pool.full:
        node = root
        path: list[tuple[SearchNode, SearchNode]] = []
        while node.expanded and node.children and not node.terminal:
            chosen = ucb_select(node, cfg.c_explore)
            child = node.child(chosen)
            path.append((node, child))
            node = child

        selected = [[c.action.position, c.action.token] for _, c in path]
        expanded_actions: list[list[int]] = []
        rewards: list[float] = []

        if node.terminal:
            backpropagate(path, node.terminal_reward)
            rewards.append(node.terminal_reward)
            sims += 1
        else:
            # descend: expand level by level toward the pool depth
            while not node.terminal and not pool.full and sims < cfg.budget:
                if node is root:
                    output, before = root_output, root_profile
                else:
                    output = model.predict(node.state)
                    before = entropy_profile(model, node.state, output=output)
                prefix = tuple(c.action for _, c in path)
                for child in expand(node, model, cfg, output=output):
                    record, completion = simulate(
                        model,
                        node.state,
                        child.action,
                        rng,
                        mode=cfg.rollout_mode,
                        before=before,
                    )
                    sims += 1
                    backpropagate(path + [(node, child)], record.r_ig)
                    expanded_actions.append(
                        [child.action.position, child.action.token]
                    )
                    rewards.append(record.r_ig)
                    if child.state.reveal_count() >= cfg.init_length:
                        child.terminal = True
                        child.terminal_reward = record.r_ig
                        gain = cumulative_gain(
                            model,
                            root_state,
                            child.state,
                            root_profile=root_profile,
                            state_profile=record.after,
                        )
                        pool.add(
                            CandidateEntry(
                                order=len(pool.entries),
                                state=child.state,
                                path=prefix + (child.action,),
                                reward=record.r_ig,
                                score=gain,
                                completion=completion,
                            )
                        )
                        if pool.full:
                            break
                if pool.full or not node.children:
                    break
                chosen = ucb_select(node, cfg.c_explore)
                child = node.child(chosen)
                path.append((node, child))
                node = child

        if trace is not None:
            trace(
                {
                    "iter": it,
                    "selected_path": selected,
                    "expanded_actions": expanded_actions,
                    "reward": rewards,
                    "pool_size": len(pool.entries),
                }
            )
        it += 1

    if not pool.full:
        pool.exhausted = True
    return pool


def config_with_depth(cfg: SearchConfig, init_length: int) -> SearchConfig:
    """Copy of cfg at a different init depth (sweeps use this)."""
    return replace(cfg, init_length=init_length)
