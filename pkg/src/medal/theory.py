"""Unmasking-schedule analysis: entropy-gap costs and exact dependence errors.

A schedule is an ordered list of disjoint position sets revealed together.
Each step pays two quantities at its realized context:

* entropy gap B = sum of per-position predictive entropies minus their max,
  a model-only upper bound on how much joint structure a parallel commit
  can miss;
* dependence error, the KL divergence between the exact joint posterior
  over the step and the product of its per-position marginals (tabular
  models only).

For any calibrated model the dependence error never exceeds the gap
(pointwise per step), so summed gaps J upper-bound the total dependence
error of the whole schedule. verify_lemma1 checks that inequality
exhaustively; verify_theorem1 runs a UCT search over schedule space and
checks it converges on minimal-J schedules, beating greedy and random
baselines. The weighted objective j_lambda(cost) = lam_dep * B +
lam_mod * sum(prox) generalizes J with a per-position uncertainty proxy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .errors import (
    BoundViolated,
    ConfigError,
    InstanceTooLarge,
    SubsetNotMasked,
)
from .mcts import SearchNode, backpropagate, ucb_select
from .reward import _softmax
from .seqcore import SeqState, UnmaskAction, apply_many, masked_positions

PROXIES = ("entropy", "one_minus_maxprob", "top2_margin")
ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True)
class Schedule:
    """Ordered disjoint position sets; steps sorted internally for identity."""

    steps: tuple[tuple[int, ...], ...]

    @classmethod
    def of(cls, steps: Sequence[Sequence[int]]) -> "Schedule":
        norm = tuple(tuple(sorted(int(p) for p in step)) for step in steps)
        seen: set[int] = set()
        for step in norm:
            if not step:
                raise ConfigError("schedule steps must be non-empty")
            if len(set(step)) != len(step) or seen & set(step):
                raise ConfigError("schedule steps must be disjoint")
            seen.update(step)
        return cls(norm)

    def positions(self) -> set[int]:
        return {p for step in self.steps for p in step}

    def to_json(self) -> list[list[int]]:
        return [list(step) for step in self.steps]


@dataclass(frozen=True)
class ScheduleCost:
    schedule: Schedule
    per_step_gap: tuple[float, ...]
    per_step_dep: tuple[float, ...] | None
    per_step_proxy: tuple[float, ...] | None
    committed: tuple[tuple[int, int], ...]

    @property
    def j(self) -> float:
        return float(sum(self.per_step_gap))

    @property
    def dep_total(self) -> float | None:
        return None if self.per_step_dep is None else float(sum(self.per_step_dep))

    def to_json(self) -> dict:
        return {
            "schedule": self.schedule.to_json(),
            "per_step_gap": list(self.per_step_gap),
            "per_step_dep": list(self.per_step_dep) if self.per_step_dep else None,
            "per_step_proxy": list(self.per_step_proxy) if self.per_step_proxy else None,
            "j": self.j,
            "dep_total": self.dep_total,
        }


def j_lambda(cost: ScheduleCost, lam_dep: float = 1.0, lam_mod: float = 0.0) -> float:
    """Weighted objective; (1, 0) recovers plain J."""
    total = lam_dep * cost.j
    if lam_mod != 0.0:
        if cost.per_step_proxy is None:
            raise ConfigError("cost has no proxy terms; rerun schedule_cost with proxy=")
        total += lam_mod * float(sum(cost.per_step_proxy))
    return float(total)


def _subset_check(state: SeqState, positions: Sequence[int]) -> list[int]:
    subset = sorted(int(p) for p in positions)
    if not subset:
        raise SubsetNotMasked("subset must be non-empty")
    masked = set(masked_positions(state))
    bad = [p for p in subset if p not in masked]
    if bad:
        raise SubsetNotMasked(f"positions {bad} are not masked")
    return subset


def position_entropies(model, state: SeqState, positions: Sequence[int], *, output=None) -> np.ndarray:
    """Exact predictive entropies (nats) at the given masked positions."""
    subset = _subset_check(state, positions)
    if output is None:
        output = model.predict(state)
    probs = _softmax(output.matrix(subset))
    return kernels.entropy_rows(probs)


def entropy_gap(model, state: SeqState, positions: Sequence[int], *, output=None) -> float:
    """B(positions | state) = sum of entropies minus their max; >= 0."""
    ent = position_entropies(model, state, positions, output=output)
    return float(ent.sum() - ent.max())


def dependence_error(model, state: SeqState, positions: Sequence[int]) -> float:
    """KL(joint posterior over positions || product of its marginals).

    Needs exact conditionals, i.e. a tabular model. Raises ZeroMassContext
    when the revealed context has no mass, SubsetNotMasked for positions
    outside the masked set.
    """
    subset = _subset_check(state, positions)
    if not hasattr(model, "masked_conditional"):
        raise ConfigError("dependence_error requires a model with exact conditionals")
    mpos, cond = model.masked_conditional(state)
    axes = tuple(mpos.index(p) for p in subset)
    other = tuple(a for a in range(cond.ndim) if a not in axes)
    joint = cond.sum(axis=other) if other else cond
    # put subset axes in subset order
    joint = np.transpose(joint, np.argsort(np.argsort(axes)))
    log_prod = np.zeros_like(joint)
    for axis in range(joint.ndim):
        marg = joint.sum(axis=tuple(a for a in range(joint.ndim) if a != axis))
        shape = [1] * joint.ndim
        shape[axis] = -1
        with np.errstate(divide="ignore"):
            log_prod = log_prod + np.log(marg).reshape(shape)
    mask = joint > 0.0
    with np.errstate(divide="ignore"):
        kl = float((joint[mask] * (np.log(joint[mask]) - log_prod[mask])).sum())
    return max(kl, 0.0)


def _commit_step(
    probs: np.ndarray,
    subset: list[int],
    policy: str,
    rng: np.random.Generator | None,
) -> list[UnmaskAction]:
    if policy == "argmax":
        tokens = probs.argmax(axis=1)
    elif policy == "sample":
        if rng is None:
            raise ConfigError("sample rollout policy needs an rng")
        cum = probs.cumsum(axis=1)
        draws = rng.random(len(subset))
        tokens = np.minimum((cum < draws[:, None]).sum(axis=1), probs.shape[1] - 1)
    else:
        raise ConfigError(f"unknown rollout policy {policy!r}")
    return [UnmaskAction(p, int(t)) for p, t in zip(subset, tokens)]


def schedule_cost(
    model,
    root: SeqState,
    schedule: Schedule,
    *,
    rollout_policy: str = "argmax",
    rng: np.random.Generator | None = None,
    proxy: str | None = None,
    with_dependence: bool | None = None,
) -> ScheduleCost:
    """Walk a schedule from `root`, realizing contexts with the rollout policy.

    Per step, at the context reached so far: the entropy gap, the exact
    dependence error when the model supports it (with_dependence=None
    auto-detects; False skips), and optionally a summed per-position
    uncertainty proxy. Committed tokens are recorded so the walk is
    reproducible.
    """
    if proxy is not None and proxy not in PROXIES:
        raise ConfigError(f"unknown proxy {proxy!r}; choose from {PROXIES}")
    if with_dependence is None:
        with_dependence = hasattr(model, "masked_conditional")
    gaps: list[float] = []
    deps: list[float] = []
    proxies: list[float] = []
    committed: list[tuple[int, int]] = []
    cur = root
    for step in schedule.steps:
        subset = _subset_check(cur, step)
        output = model.predict(cur)
        probs = _softmax(output.matrix(subset))
        ent = kernels.entropy_rows(probs)
        gaps.append(float(ent.sum() - ent.max()))
        if with_dependence:
            deps.append(dependence_error(model, cur, subset))
        if proxy == "entropy":
            proxies.append(float(ent.sum()))
        elif proxy == "one_minus_maxprob":
            proxies.append(float((1.0 - probs.max(axis=1)).sum()))
        elif proxy == "top2_margin":
            part = np.partition(probs, probs.shape[1] - 2, axis=1)
            proxies.append(float((part[:, -1] - part[:, -2]).sum()))
        acts = _commit_step(probs, subset, rollout_policy, rng)
        committed.extend((a.position, a.token) for a in acts)
        cur = apply_many(cur, acts)
    return ScheduleCost(
        schedule=schedule,
        per_step_gap=tuple(gaps),
        per_step_dep=tuple(deps) if with_dependence else None,
        per_step_proxy=tuple(proxies) if proxy is not None else None,
        committed=tuple(committed),
    )


# ---------------------------------------------------------------------------
# schedule enumeration


def _resolve_sizes(m: int, k: int, step_size) -> list[int] | None:
    """None stays None (free sizes, full cover); int/list become per-step sizes."""
    if step_size is None:
        if k > m:
            raise ConfigError(f"cannot split {m} positions into {k} non-empty steps")
        return None
    if isinstance(step_size, int):
        sizes = [step_size] * k
    else:
        sizes = [int(s) for s in step_size]
        if len(sizes) != k:
            raise ConfigError(f"need {k} step sizes, got {len(sizes)}")
    if any(s < 1 for s in sizes):
        raise ConfigError("step sizes must be >= 1")
    if sum(sizes) > m:
        raise ConfigError(f"step sizes consume {sum(sizes)} of {m} positions")
    return sizes


def count_schedules(m: int, k: int, step_size=None) -> int:
    """Number of schedules enumerate_schedules would yield."""
    sizes = _resolve_sizes(m, k, step_size)
    if sizes is not None:
        total = 1
        left = m
        for s in sizes:
            total *= math.comb(left, s)
            left -= s
        return total

    def free(m_left: int, k_left: int) -> int:
        if k_left == 1:
            return 1
        return sum(
            math.comb(m_left, s) * free(m_left - s, k_left - 1)
            for s in range(1, m_left - k_left + 2)
        )

    return free(m, k)


def _next_step_choices(remaining: tuple[int, ...], k_left: int, sizes: list[int] | None, depth: int) -> list[tuple[int, ...]]:
    """Feasible next steps in lexicographic order."""
    m = len(remaining)
    if sizes is not None:
        return [tuple(c) for c in combinations(remaining, sizes[depth])]
    if k_left == 1:
        return [remaining]
    out: list[tuple[int, ...]] = []
    for s in range(1, m - k_left + 2):
        out.extend(tuple(c) for c in combinations(remaining, s))
    return out


def enumerate_schedules(
    positions: Sequence[int],
    k: int,
    step_size=None,
    *,
    cap: int = ENUMERATION_CAP,
) -> Iterator[Schedule]:
    """All K-step schedules in lexicographic order.

    step_size None: every ordered partition of `positions` into k non-empty
    steps (full cover). int or list: fixed per-step sizes drawn from the
    positions, cover not required. Raises InstanceTooLarge past `cap`.
    """
    pos = tuple(sorted(int(p) for p in positions))
    if len(set(pos)) != len(pos):
        raise ConfigError("positions must be distinct")
    if k < 1:
        raise ConfigError("k must be >= 1")
    total = count_schedules(len(pos), k, step_size)
    if total > cap:
        raise InstanceTooLarge(f"{total} schedules exceeds cap {cap}")
    sizes = _resolve_sizes(len(pos), k, step_size)

    def rec(remaining: tuple[int, ...], depth: int, acc: list[tuple[int, ...]]) -> Iterator[Schedule]:
        if depth == k:
            yield Schedule(tuple(acc))
            return
        for step in _next_step_choices(remaining, k - depth, sizes, depth):
            left = tuple(p for p in remaining if p not in set(step))
            acc.append(step)
            yield from rec(left, depth + 1, acc)
            acc.pop()

    return rec(pos, 0, [])


def oracle_min_schedule(
    model,
    root: SeqState,
    k: int,
    step_size=None,
    *,
    cap: int = ENUMERATION_CAP,
) -> ScheduleCost:
    """Exhaustive minimum-J schedule (ties: first in lexicographic order)."""
    best: ScheduleCost | None = None
    for sched in enumerate_schedules(masked_positions(root), k, step_size, cap=cap):
        cost = schedule_cost(model, root, sched, with_dependence=False)
        if best is None or cost.j < best.j:
            best = cost
    if best is None:
        raise ConfigError("no feasible schedule")
    return best


def greedy_schedule(model, root: SeqState, k: int, step_size=None) -> ScheduleCost:
    """Baseline: pick the feasible next step of minimal gap at each context."""
    sizes = _resolve_sizes(len(masked_positions(root)), k, step_size)
    cur = root
    steps: list[tuple[int, ...]] = []
    for depth in range(k):
        remaining = tuple(masked_positions(cur))
        choices = _next_step_choices(remaining, k - depth, sizes, depth)
        output = model.predict(cur)
        best_step, best_gap = None, None
        for step in choices:
            gap = entropy_gap(model, cur, step, output=output)
            if best_gap is None or gap < best_gap - 1e-15:
                best_step, best_gap = step, gap
        probs = _softmax(output.matrix(list(best_step)))
        cur = apply_many(cur, _commit_step(probs, list(best_step), "argmax", None))
        steps.append(best_step)
    return schedule_cost(model, root, Schedule(tuple(steps)), with_dependence=False)


def random_schedule(
    model, root: SeqState, k: int, rng: np.random.Generator, step_size=None
) -> ScheduleCost:
    """Baseline: uniform feasible step at each context, argmax commits."""
    sizes = _resolve_sizes(len(masked_positions(root)), k, step_size)
    cur = root
    steps: list[tuple[int, ...]] = []
    for depth in range(k):
        remaining = tuple(masked_positions(cur))
        choices = _next_step_choices(remaining, k - depth, sizes, depth)
        step = choices[int(rng.integers(len(choices)))]
        output = model.predict(cur)
        probs = _softmax(output.matrix(list(step)))
        cur = apply_many(cur, _commit_step(probs, list(step), "argmax", None))
        steps.append(step)
    return schedule_cost(model, root, Schedule(tuple(steps)), with_dependence=False)


# ---------------------------------------------------------------------------
# UCT over schedule space (reuses the generic tree pieces from mcts)


class _WalkState:
    """Search-node payload: realized context plus the schedule prefix."""

    __slots__ = ("seq", "steps", "gaps")

    def __init__(self, seq: SeqState, steps: tuple[tuple[int, ...], ...], gaps: tuple[float, ...]):
        self.seq = seq
        self.steps = steps
        self.gaps = gaps


def search_schedules(
    model,
    root: SeqState,
    k: int,
    budget: int,
    *,
    step_size=None,
    seed: int = 0,
    c_explore: float = math.sqrt(2.0),
    snapshots: Sequence[int] | None = None,
) -> tuple[ScheduleCost, dict[int, float]]:
    """UCT over schedule prefixes minimizing J (reward is -J of completions).

    Returns the best complete schedule found and, when `snapshots` is
    given, the best J after each listed iteration count (best-so-far, so
    snapshot values are non-increasing).
    """
    sizes = _resolve_sizes(len(masked_positions(root)), k, step_size)
    rng = np.random.default_rng(seed)
    marks = sorted(set(snapshots)) if snapshots else []
    snap: dict[int, float] = {}

    best_j: float | None = None
    best_steps: tuple[tuple[int, ...], ...] | None = None

    def consider(steps: tuple[tuple[int, ...], ...], j: float) -> None:
        nonlocal best_j, best_steps
        if best_j is None or j < best_j - 1e-15:
            best_j, best_steps = j, steps

    def rollout(ws: _WalkState) -> float:
        """Finish the prefix with uniform random feasible steps; returns J."""
        cur, steps, gaps = ws.seq, list(ws.steps), list(ws.gaps)
        while len(steps) < k:
            remaining = tuple(masked_positions(cur))
            choices = _next_step_choices(remaining, k - len(steps), sizes, len(steps))
            step = choices[int(rng.integers(len(choices)))]
            output = model.predict(cur)
            probs = _softmax(output.matrix(list(step)))
            ent = kernels.entropy_rows(probs)
            gaps.append(float(ent.sum() - ent.max()))
            cur = apply_many(cur, _commit_step(probs, list(step), "argmax", None))
            steps.append(step)
        j = float(sum(gaps))
        consider(tuple(steps), j)
        return j

    root_node = SearchNode(_WalkState(root, (), ()))

    for it in range(budget):
        node = root_node
        path: list[tuple[SearchNode, SearchNode]] = []
        while node.expanded and node.children and not node.terminal:
            action = ucb_select(node, c_explore)
            child = node.child(action)
            path.append((node, child))
            node = child

        if node.terminal:
            backpropagate(path, node.terminal_reward)
        else:
            ws: _WalkState = node.state
            remaining = tuple(masked_positions(ws.seq))
            output = model.predict(ws.seq)
            for step in _next_step_choices(remaining, k - len(ws.steps), sizes, len(ws.steps)):
                probs = _softmax(output.matrix(list(step)))
                ent = kernels.entropy_rows(probs)
                gap = float(ent.sum() - ent.max())
                seq = apply_many(ws.seq, _commit_step(probs, list(step), "argmax", None))
                child = SearchNode(
                    state=_WalkState(seq, ws.steps + (step,), ws.gaps + (gap,)),
                    action=step,
                    prior=-gap,
                    index=len(node.children),
                )
                node.add_child(child)
                if len(child.state.steps) == k:
                    j = float(sum(child.state.gaps))
                    consider(child.state.steps, j)
                    child.terminal = True
                    child.terminal_reward = -j
                    reward = -j
                else:
                    reward = -rollout(child.state)
                backpropagate(path + [(node, child)], reward)
            node.expanded = True

        if it + 1 in marks:
            snap[it + 1] = best_j if best_j is not None else float("inf")

    if best_steps is None:
        raise ConfigError("schedule search found no complete schedule")
    cost = schedule_cost(model, root, Schedule(best_steps), with_dependence=False)
    return cost, snap


# ---------------------------------------------------------------------------
# verifiers


def verify_lemma1(
    model,
    root: SeqState,
    *,
    schedules: Sequence[Schedule] | None = None,
    tol: float = 1e-9,
    cap: int = ENUMERATION_CAP,
) -> dict:
    """Check sum(DepErr) <= sum(B) + tol for every given schedule.

    Defaults to every full-cover schedule of every step count. Returns a
    report with the tightest approach to equality; raises BoundViolated
    with the offending schedule otherwise.
    """
    if schedules is None:
        positions = masked_positions(root)
        schedules = [
            s
            for k in range(1, len(positions) + 1)
            for s in enumerate_schedules(positions, k, cap=cap)
        ]
    checked = 0
    max_excess = float("-inf")
    min_slack = float("inf")
    tightest: Schedule | None = None
    for sched in schedules:
        cost = schedule_cost(model, root, sched, with_dependence=True)
        dep, gap = cost.dep_total, cost.j
        excess = dep - gap
        if excess > tol:
            raise BoundViolated(
                f"dependence {dep} exceeds gap {gap} on schedule {sched.to_json()}"
            )
        if excess > max_excess:
            max_excess = excess
        if gap - dep < min_slack:
            min_slack = gap - dep
            tightest = sched
        checked += 1
    return {
        "schedules_checked": checked,
        "max_excess": max_excess,
        "min_slack": min_slack,
        "tightest_schedule": tightest.to_json() if tightest else None,
        "tol": tol,
    }


def verify_theorem1(
    model,
    root: SeqState,
    k: int,
    budgets: Sequence[int],
    *,
    step_size=None,
    seed: int = 0,
    c_explore: float = math.sqrt(2.0),
    random_baselines: int = 5,
    tol: float = 1e-9,
    cap: int = ENUMERATION_CAP,
) -> dict:
    """Convergence and dominance report for the schedule search.

    Runs one seeded search to the largest budget, snapshotting best J at
    each requested budget; asserts the snapshots are non-increasing and
    that the final J is <= greedy's and every random baseline's J + tol.
    The exhaustive oracle minimum is included for ratio checks.
    """
    budgets = sorted(set(int(b) for b in budgets))
    if not budgets or budgets[0] < 1:
        raise ConfigError("budgets must be positive")
    best, snaps = search_schedules(
        model,
        root,
        k,
        budgets[-1],
        step_size=step_size,
        seed=seed,
        c_explore=c_explore,
        snapshots=budgets,
    )
    j_by_budget = [snaps[b] for b in budgets]
    for earlier, later in zip(j_by_budget, j_by_budget[1:]):
        if later > earlier + tol:
            raise BoundViolated(
                f"best J regressed with budget: {j_by_budget} at budgets {budgets}"
            )
    oracle = oracle_min_schedule(model, root, k, step_size, cap=cap)
    greedy = greedy_schedule(model, root, k, step_size)
    rng = np.random.default_rng(seed + 1)
    randoms = [
        random_schedule(model, root, k, rng, step_size).j
        for _ in range(random_baselines)
    ]
    final_j = j_by_budget[-1]
    if final_j > greedy.j + tol:
        raise BoundViolated(f"search J {final_j} worse than greedy {greedy.j}")
    for rj in randoms:
        if final_j > rj + tol:
            raise BoundViolated(f"search J {final_j} worse than a random baseline {rj}")
    return {
        "budgets": budgets,
        "j_by_budget": j_by_budget,
        "j_final": final_j,
        "j_oracle": oracle.j,
        "j_greedy": greedy.j,
        "j_random": randoms,
        "best_schedule": best.schedule.to_json(),
        "oracle_schedule": oracle.schedule.to_json(),
    }
