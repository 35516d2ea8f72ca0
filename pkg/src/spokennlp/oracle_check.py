"""Exhaustive verification of the dynamic oracle against brute-force search.

For every projective gold tree up to a given length, every reachable
configuration and every legal action, checks that `dynamic_cost` equals the
brute-force minimum-loss difference, that some legal action always has cost
zero, and that following zero-cost actions from the initial configuration
rebuilds the gold tree exactly.

Configurations are enumerated as cost-equivalence classes: legality and all
costs depend only on the stack, which stack tokens have heads, the buffer
start and whether the front is tagged; assigned head values, tag values,
labels and history cancel inside minloss differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .transition import (
    Action,
    ActionInventory,
    BruteForceMinloss,
    GoldAnnotation,
    ParserConfig,
    apply_action,
    dynamic_cost,
    enumerate_projective_trees,
    finalize,
    initial_config,
    left_arc,
    legal_actions,
    reachable_states,
    right_arc,
    state_to_config,
    static_oracle,
    tag_action,
    REDUCE,
    SHIFT,
)
from .corpus_io import Utterance

__all__ = ["OracleCheckResult", "verify_oracle", "zero_cost_walk"]

DEFAULT_LABELS = ("l0", "l1")
DEFAULT_POS = ("p0", "p1")


@dataclass
class OracleCheckResult:
    max_len: int
    trees_checked: int = 0
    configs_checked: int = 0
    actions_checked: int = 0
    cost_mismatches: list[str] = field(default_factory=list)
    zero_cost_failures: list[str] = field(default_factory=list)
    reconstruction_failures: list[str] = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return not (self.cost_mismatches or self.zero_cost_failures
                    or self.reconstruction_failures)

    def to_dict(self) -> dict:
        return {
            "max_len": self.max_len,
            "trees_checked": self.trees_checked,
            "configs_checked": self.configs_checked,
            "actions_checked": self.actions_checked,
            "cost_mismatches": self.cost_mismatches[:20],
            "zero_cost_failures": self.zero_cost_failures[:20],
            "reconstruction_failures": self.reconstruction_failures[:20],
            "all_pass": self.all_pass,
        }


def _cyclic_gold(heads: tuple[int, ...], labels, pos) -> GoldAnnotation:
    n = len(heads) - 1
    return GoldAnnotation(
        heads=heads,
        labels=("",) + tuple(labels[i % len(labels)] for i in range(n)),
        pos=("",) + tuple(pos[i % len(pos)] for i in range(n)),
    )


def zero_cost_walk(gold: GoldAnnotation, inventory: ActionInventory) -> ParserConfig:
    """Follow zero-cost actions (gold-labelled arc candidates preferred)
    from the initial configuration to the terminal one."""
    c = initial_config(gold.n)
    while True:
        legal = legal_actions(c, inventory)
        if not legal:
            return c
        if c.front_untagged():
            candidates = [tag_action(gold.pos[c.front])]
        else:
            candidates = []
            if c.top != 0:
                candidates.append(left_arc(gold.labels[c.top]))
            if c.front is not None:
                candidates.append(right_arc(gold.labels[c.front]))
            candidates += [REDUCE, SHIFT]
        legal_set = set(legal)
        chosen = next(
            (a for a in candidates if a in legal_set and dynamic_cost(c, a, gold) == 0),
            None,
        )
        if chosen is None:
            raise AssertionError(f"no zero-cost action from {c.stack}/{list(c.buffer)}")
        c = apply_action(c, chosen)


def verify_oracle(
    max_len: int = 5,
    labels: tuple[str, ...] = DEFAULT_LABELS,
    pos_tags: tuple[str, ...] = DEFAULT_POS,
    min_len: int = 2,
) -> OracleCheckResult:
    """Run the full dynamic-oracle verification up to `max_len` tokens."""
    result = OracleCheckResult(max_len=max_len)
    inventory = ActionInventory(pos_tags, labels)
    for n in range(min_len, max_len + 1):
        states = reachable_states(n)
        for heads in enumerate_projective_trees(n):
            gold = _cyclic_gold(heads, labels, pos_tags)
            searcher = BruteForceMinloss(gold)
            result.trees_checked += 1
            for state in states:
                c = state_to_config(state, gold)
                legal = legal_actions(c, inventory)
                if not legal:
                    continue
                result.configs_checked += 1
                found_zero = False
                for a in legal:
                    cost = dynamic_cost(c, a, gold)
                    delta = searcher.action_delta(state, a)
                    result.actions_checked += 1
                    if cost != delta:
                        result.cost_mismatches.append(
                            f"n={n} heads={heads[1:]} state={state} action={a}: "
                            f"cost {cost} != minloss delta {delta}"
                        )
                    if cost == 0:
                        found_zero = True
                if not found_zero:
                    result.zero_cost_failures.append(
                        f"n={n} heads={heads[1:]} state={state}: no zero-cost action"
                    )
            terminal = zero_cost_walk(gold, inventory)
            utt = Utterance.from_words([f"w{i}" for i in range(1, n + 1)])
            tree = finalize(terminal, utt)
            rebuilt = tuple(tree.heads[i] for i in range(1, n + 1))
            rebuilt_labels = tuple(tree.labels[i] for i in range(1, n + 1))
            rebuilt_pos = tuple(tree.pos[i] for i in range(1, n + 1))
            if (rebuilt != heads[1:] or rebuilt_labels != gold.labels[1:]
                    or rebuilt_pos != gold.pos[1:]):
                result.reconstruction_failures.append(
                    f"n={n} heads={heads[1:]}: zero-cost walk built {rebuilt}"
                )
    return result
