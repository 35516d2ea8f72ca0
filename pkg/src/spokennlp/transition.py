"""Arc-eager transition system extended with POS-tagging actions.

The buffer front must be tagged (TAG action) before any structural action can
touch it, which keeps a single action sequence and lets transition features
see predicted tags.  Alongside the machine itself this module provides the
static oracle, the dynamic-oracle cost function, and an exhaustive
brute-force minimum-loss search used to verify the costs.

Cost bookkeeping treats the artificial root specially: `finalize` attaches
any leftover headless token to root 0, so a token whose gold head is the
root stays rescuable for as long as it has no head.  SHIFT therefore does
not pay for burying a gold root child, while LEFT_ARC on one does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

from .corpus_io import DepTree, Utterance

__all__ = [
    "Action",
    "SHIFT",
    "REDUCE",
    "tag_action",
    "left_arc",
    "right_arc",
    "parse_action",
    "ActionInventory",
    "ParserConfig",
    "initial_config",
    "legal_actions",
    "apply_action",
    "finalize",
    "GoldAnnotation",
    "is_projective",
    "projectivize",
    "static_oracle",
    "dynamic_cost",
    "brute_force_minloss",
    "BruteForceMinloss",
    "reachable_states",
    "state_to_config",
    "enumerate_projective_trees",
    "ROOT_LABEL",
]

ROOT_LABEL = "root"


class Action(NamedTuple):
    kind: str  # TAG, SHIFT, LA, RA, REDUCE
    arg: Optional[str] = None

    def __str__(self) -> str:
        return self.kind if self.arg is None else f"{self.kind}:{self.arg}"


SHIFT = Action("SHIFT")
REDUCE = Action("REDUCE")


def tag_action(pos: str) -> Action:
    return Action("TAG", pos)


def left_arc(label: str) -> Action:
    return Action("LA", label)


def right_arc(label: str) -> Action:
    return Action("RA", label)


def parse_action(text: str) -> Action:
    kind, sep, arg = text.partition(":")
    if kind in ("SHIFT", "REDUCE"):
        if sep:
            raise ValueError(f"{kind} takes no argument: {text!r}")
        return Action(kind)
    if kind in ("TAG", "LA", "RA"):
        if not arg:
            raise ValueError(f"{kind} needs an argument: {text!r}")
        return Action(kind, arg)
    raise ValueError(f"unknown action {text!r}")


class ActionInventory:
    """Indexed action sets derived from the POS and label inventories.

    The transition head scores `transition_actions` (everything but TAG),
    the tag head scores `tag_actions`; `all_actions` additionally feeds the
    action-history embeddings.  Serializes one action per line so training
    and decoding agree bit-exactly.
    """

    def __init__(self, pos_tags: Sequence[str], labels: Sequence[str]):
        self.pos_tags = tuple(sorted(set(pos_tags)))
        self.labels = tuple(sorted(set(labels)))
        if ROOT_LABEL not in self.labels:
            self.labels = tuple(sorted(self.labels + (ROOT_LABEL,)))
        self.tag_actions = tuple(tag_action(p) for p in self.pos_tags)
        self.transition_actions = (
            (SHIFT, REDUCE)
            + tuple(left_arc(l) for l in self.labels)
            + tuple(right_arc(l) for l in self.labels)
        )
        self.all_actions = self.tag_actions + self.transition_actions
        self.tag_index = {a: i for i, a in enumerate(self.tag_actions)}
        self.transition_index = {a: i for i, a in enumerate(self.transition_actions)}
        self.action_index = {a: i for i, a in enumerate(self.all_actions)}

    def to_lines(self) -> list[str]:
        return [str(a) for a in self.all_actions]

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "ActionInventory":
        actions = [parse_action(line) for line in lines if line]
        pos = [a.arg for a in actions if a.kind == "TAG"]
        labels = [a.arg for a in actions if a.kind == "LA"]
        inv = cls(pos, labels)
        if inv.to_lines() != [str(a) for a in actions]:
            raise ValueError("action inventory lines are not in canonical order")
        return inv


@dataclass(frozen=True)
class ParserConfig:
    """Arc-eager machine state with value semantics.

    The buffer is always a contiguous suffix [buffer_start, n] of the
    sentence, so it is stored as its start index.  `heads`, `labels` and
    `tags` are (n+1)-tuples indexed by token; entry 0 (the root) stays None.
    """

    n: int
    stack: tuple[int, ...]
    buffer_start: int
    heads: tuple[Optional[int], ...]
    labels: tuple[Optional[str], ...]
    tags: tuple[Optional[str], ...]
    history: tuple[Action, ...] = ()

    @property
    def buffer(self) -> range:
        return range(self.buffer_start, self.n + 1)

    @property
    def front(self) -> Optional[int]:
        return self.buffer_start if self.buffer_start <= self.n else None

    @property
    def top(self) -> int:
        return self.stack[-1]

    @property
    def arcs(self) -> frozenset[tuple[int, str, int]]:
        return frozenset(
            (self.heads[d], self.labels[d], d)
            for d in range(1, self.n + 1)
            if self.heads[d] is not None
        )

    def front_untagged(self) -> bool:
        return self.front is not None and self.tags[self.front] is None


def initial_config(n: int) -> ParserConfig:
    none = (None,) * (n + 1)
    return ParserConfig(n=n, stack=(0,), buffer_start=1, heads=none, labels=none, tags=none)


def _structurally_legal(c: ParserConfig, a: Action) -> bool:
    if c.front_untagged():
        return a.kind == "TAG"
    if a.kind == "TAG":
        return False
    buffer_nonempty = c.front is not None
    if a.kind == "SHIFT":
        return buffer_nonempty
    if a.kind == "LA":
        return buffer_nonempty and c.top != 0 and c.heads[c.top] is None
    if a.kind == "RA":
        return buffer_nonempty
    if a.kind == "REDUCE":
        return c.top != 0 and c.heads[c.top] is not None
    raise ValueError(f"unknown action kind {a.kind!r}")


def legal_actions(c: ParserConfig, inventory: ActionInventory) -> list[Action]:
    """All actions applicable in `c`, in inventory order.

    An untagged buffer front gates everything behind TAG; once the buffer is
    empty only REDUCE remains (popping attached residue) until the terminal
    configuration, whose legal set is empty.
    """
    if c.front_untagged():
        return list(inventory.tag_actions)
    return [a for a in inventory.transition_actions if _structurally_legal(c, a)]


def _replaced(tup: tuple, idx: int, value) -> tuple:
    return tup[:idx] + (value,) + tup[idx + 1:]


def apply_action(c: ParserConfig, a: Action) -> ParserConfig:
    """Apply one action, returning a new configuration (inputs untouched)."""
    if not _structurally_legal(c, a):
        raise ValueError(f"illegal action {a} in configuration {c.stack}/{list(c.buffer)}")
    history = c.history + (a,)
    if a.kind == "TAG":
        return ParserConfig(c.n, c.stack, c.buffer_start, c.heads, c.labels,
                            _replaced(c.tags, c.front, a.arg), history)
    if a.kind == "SHIFT":
        return ParserConfig(c.n, c.stack + (c.front,), c.buffer_start + 1,
                            c.heads, c.labels, c.tags, history)
    if a.kind == "LA":
        top = c.top
        return ParserConfig(c.n, c.stack[:-1], c.buffer_start,
                            _replaced(c.heads, top, c.front),
                            _replaced(c.labels, top, a.arg), c.tags, history)
    if a.kind == "RA":
        front = c.front
        return ParserConfig(c.n, c.stack + (front,), c.buffer_start + 1,
                            _replaced(c.heads, front, c.top),
                            _replaced(c.labels, front, a.arg), c.tags, history)
    # REDUCE
    return ParserConfig(c.n, c.stack[:-1], c.buffer_start, c.heads, c.labels,
                        c.tags, history)


def finalize(c: ParserConfig, utterance: Utterance) -> DepTree:
    """Close a buffer-empty configuration into a DepTree.

    Headless stack residue attaches to the artificial root with the reserved
    root label; everything else keeps its predicted head, label and tag.
    """
    if c.front is not None:
        raise ValueError("finalize requires an empty buffer")
    heads, labels, pos = {}, {}, {}
    for d in range(1, c.n + 1):
        if c.tags[d] is None:
            raise AssertionError(f"token {d} untagged at terminal configuration")
        if c.heads[d] is None:
            heads[d], labels[d] = 0, ROOT_LABEL
        else:
            heads[d], labels[d] = c.heads[d], c.labels[d]
        pos[d] = c.tags[d]
    return DepTree(utterance, heads, labels, pos)


# ---------------------------------------------------------------------------
# Gold annotations, projectivity


@dataclass(frozen=True)
class GoldAnnotation:
    """Gold heads/labels/POS for one utterance, as (n+1)-tuples (entry 0 unused)."""

    heads: tuple[int, ...]
    labels: tuple[str, ...]
    pos: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.heads) - 1

    @classmethod
    def from_tree(cls, tree: DepTree) -> "GoldAnnotation":
        n = len(tree)
        return cls(
            heads=(0,) + tuple(tree.heads[i] for i in range(1, n + 1)),
            labels=("",) + tuple(tree.labels[i] for i in range(1, n + 1)),
            pos=("",) + tuple(tree.pos[i] for i in range(1, n + 1)),
        )


def _descends_from(heads: Sequence[int], node: int, ancestor: int) -> bool:
    while node != 0:
        node = heads[node]
        if node == ancestor:
            return True
    return ancestor == 0


def _first_nonprojective_arc(heads: Sequence[int]) -> Optional[int]:
    # Returns the smallest dependent whose arc span contains a non-descendant
    # of the arc's head, or None if the tree is projective.
    for d in range(1, len(heads)):
        h = heads[d]
        lo, hi = min(h, d), max(h, d)
        for k in range(lo + 1, hi):
            if not _descends_from(heads, k, h):
                return d
    return None


def is_projective(heads: Sequence[int]) -> bool:
    """True iff every arc's span contains only descendants of the arc's head."""
    return _first_nonprojective_arc(heads) is None


def projectivize(g: GoldAnnotation) -> GoldAnnotation:
    """Lift non-projective arcs (dependent reattaches to its head's head)
    until the tree is projective.  Terminates because each lift strictly
    decreases the total depth of the tree."""
    heads = list(g.heads)
    while True:
        d = _first_nonprojective_arc(heads)
        if d is None:
            break
        heads[d] = heads[heads[d]]
    return GoldAnnotation(tuple(heads), g.labels, g.pos)


# ---------------------------------------------------------------------------
# Oracles


def static_oracle(c: ParserConfig, g: GoldAnnotation) -> Action:
    """Next action on the gold path (requires projective gold, on-path config)."""
    front = c.front
    if front is None:
        raise ValueError("static oracle needs a non-empty buffer")
    if c.tags[front] is None:
        return tag_action(g.pos[front])
    top = c.top
    if top != 0 and g.heads[top] == front and c.heads[top] is None:
        return left_arc(g.labels[top])
    if g.heads[front] == top:
        return right_arc(g.labels[front])
    if c.heads[top] is not None and all(g.heads[k] != top for k in c.buffer):
        return REDUCE
    return SHIFT


def dynamic_cost(c: ParserConfig, a: Action, g: GoldAnnotation) -> int:
    """Loss the action adds to the best tree still reachable from `c`.

    Unlabeled attachment plus tagging cost: wrong TAG costs 1, label
    arguments are always free.  The structural costs are the arc-eager
    reachability losses, adjusted for root finalization: a headless token
    whose gold head is the root can always be rescued by finalize, so
    burying it on the stack is free while giving it a wrong head is not.
    """
    if not _structurally_legal(c, a):
        raise ValueError(f"illegal action {a}")
    gh = g.heads
    if a.kind == "TAG":
        return 0 if a.arg == g.pos[c.front] else 1

    b = c.front
    s = c.top
    stack_set = set(c.stack)
    if a.kind == "SHIFT":
        lost_head = gh[b] != 0 and gh[b] in stack_set
        lost_deps = sum(1 for k in c.stack if k != 0 and gh[k] == b and c.heads[k] is None)
        return int(lost_head) + lost_deps
    if a.kind == "REDUCE":
        return sum(1 for k in c.buffer if gh[k] == s)
    if a.kind == "LA":
        lost_deps = sum(1 for k in c.buffer if gh[k] == s)
        lost_head = (gh[s] in c.buffer and gh[s] != b) or gh[s] == 0
        return lost_deps + int(lost_head)
    if a.kind == "RA":
        lost_head = (gh[b] in stack_set and gh[b] != s) or gh[b] in c.buffer
        lost_deps = sum(1 for k in c.stack if k != 0 and gh[k] == b and c.heads[k] is None)
        return int(lost_head) + lost_deps
    raise ValueError(f"unknown action kind {a.kind!r}")


# ---------------------------------------------------------------------------
# Brute-force minimum loss
#
# The verification oracle: exhaustive search over all completions, sharing
# nothing with dynamic_cost.  Search states collapse everything the future
# loss can depend on: stack contents, which stack tokens already have heads,
# the buffer start, and whether the front is tagged.  Head values, assigned
# tags, labels and history only affect the already-committed loss, which is
# added separately.


class SearchState(NamedTuple):
    stack: tuple[int, ...]
    headed: tuple[bool, ...]
    buffer_start: int
    front_tagged: bool


class BruteForceMinloss:
    """Exhaustive minimum-loss search for one gold annotation."""

    SEARCH_BOUND = 7

    def __init__(self, gold: GoldAnnotation):
        self.gold = gold
        self.n = gold.n
        self._memo: dict[SearchState, int] = {}

    def collapse(self, c: ParserConfig) -> SearchState:
        return SearchState(
            stack=c.stack,
            headed=tuple(c.heads[t] is not None for t in c.stack),
            buffer_start=c.buffer_start,
            front_tagged=not c.front_untagged(),
        )

    def committed_loss(self, c: ParserConfig) -> int:
        loss = 0
        for d in range(1, self.n + 1):
            if c.heads[d] is not None and c.heads[d] != self.gold.heads[d]:
                loss += 1
            if c.tags[d] is not None and c.tags[d] != self.gold.pos[d]:
                loss += 1
        return loss

    def minloss(self, c: ParserConfig) -> int:
        remaining = (self.n - c.buffer_start + 1) + (len(c.stack) - 1)
        if remaining > self.SEARCH_BOUND:
            raise ValueError(
                f"{remaining} unresolved tokens exceed the search bound "
                f"({self.SEARCH_BOUND})"
            )
        return self.committed_loss(c) + self.future_loss(self.collapse(c))

    def future_loss(self, state: SearchState) -> int:
        memo = self._memo.get(state)
        if memo is not None:
            return memo
        gh = self.gold.heads
        b = state.buffer_start
        if b > self.n:
            # Finalization: headless residue attaches to root; terminal
            # REDUCEs only pop headed tokens and cannot change the loss.
            loss = sum(
                1
                for tok, headed in zip(state.stack, state.headed)
                if tok != 0 and not headed and gh[tok] != 0
            )
            self._memo[state] = loss
            return loss
        if not state.front_tagged:
            # Tagging gold costs 0 and a wrong tag costs 1 with an identical
            # future, so the minimum always tags gold.
            loss = self.future_loss(state._replace(front_tagged=True))
            self._memo[state] = loss
            return loss

        top, top_headed = state.stack[-1], state.headed[-1]
        next_tagged = b + 1 > self.n  # vacuous when the buffer empties
        best = self.future_loss(
            SearchState(state.stack + (b,), state.headed + (False,), b + 1, next_tagged)
        )
        ra = int(gh[b] != top) + self.future_loss(
            SearchState(state.stack + (b,), state.headed + (True,), b + 1, next_tagged)
        )
        best = min(best, ra)
        if top != 0 and not top_headed:
            la = int(gh[top] != b) + self.future_loss(
                SearchState(state.stack[:-1], state.headed[:-1], b, True)
            )
            best = min(best, la)
        if top != 0 and top_headed:
            red = self.future_loss(
                SearchState(state.stack[:-1], state.headed[:-1], b, True)
            )
            best = min(best, red)
        self._memo[state] = best
        return best

    def action_delta(self, state: SearchState, a: Action) -> int:
        """minloss(after) − minloss(before) in collapsed space; the committed
        losses of the shared past cancel, leaving the action's own error plus
        the change in future loss."""
        gh = self.gold.heads
        before = self.future_loss(state)
        b = state.buffer_start
        if a.kind == "TAG":
            err = 0 if a.arg == self.gold.pos[b] else 1
            return err + self.future_loss(state._replace(front_tagged=True)) - before
        next_tagged = b + 1 > self.n
        if a.kind == "SHIFT":
            after = SearchState(state.stack + (b,), state.headed + (False,), b + 1, next_tagged)
            return self.future_loss(after) - before
        if a.kind == "RA":
            after = SearchState(state.stack + (b,), state.headed + (True,), b + 1, next_tagged)
            return int(gh[b] != state.stack[-1]) + self.future_loss(after) - before
        if a.kind == "LA":
            after = SearchState(state.stack[:-1], state.headed[:-1], b, True)
            return int(gh[state.stack[-1]] != b) + self.future_loss(after) - before
        if a.kind == "REDUCE":
            after = SearchState(state.stack[:-1], state.headed[:-1], state.buffer_start,
                                state.front_tagged)
            return self.future_loss(after) - before
        raise ValueError(f"unknown action kind {a.kind!r}")


def brute_force_minloss(c: ParserConfig, g: GoldAnnotation) -> int:
    """Minimum achievable (unlabeled attachment + tag) loss over all legal
    completions of `c`, by exhaustive search.  Bounded to 7 unresolved tokens."""
    return BruteForceMinloss(g).minloss(c)


# ---------------------------------------------------------------------------
# Enumeration helpers (verification machinery, gold-independent)


def reachable_states(n: int) -> list[SearchState]:
    """Every reachable cost-equivalence class of configurations for an
    n-token sentence, by BFS over collapsed states."""
    start = SearchState((0,), (False,), 1, n < 1)
    seen = {start}
    queue = [start]
    while queue:
        state = queue.pop()
        succs = []
        b = state.buffer_start
        if b <= n and not state.front_tagged:
            succs.append(state._replace(front_tagged=True))
        elif b <= n:
            next_tagged = b + 1 > n
            succs.append(SearchState(state.stack + (b,), state.headed + (False,),
                                     b + 1, next_tagged))
            succs.append(SearchState(state.stack + (b,), state.headed + (True,),
                                     b + 1, next_tagged))
            if state.stack[-1] != 0 and not state.headed[-1]:
                succs.append(SearchState(state.stack[:-1], state.headed[:-1], b, True))
            if state.stack[-1] != 0 and state.headed[-1]:
                succs.append(SearchState(state.stack[:-1], state.headed[:-1], b, True))
        else:
            if state.stack[-1] != 0 and state.headed[-1]:
                succs.append(state._replace(stack=state.stack[:-1],
                                            headed=state.headed[:-1]))
        for succ in succs:
            if succ not in seen:
                seen.add(succ)
                queue.append(succ)
    return sorted(seen)


def state_to_config(state: SearchState, g: GoldAnnotation) -> ParserConfig:
    """A representative concrete configuration for a collapsed state.

    Headed stack tokens get the gold head (any value would do: neither
    legality nor dynamic_cost depends on it), popped tokens likewise, and
    tagged tokens get the gold tag.
    """
    n = g.n
    heads: list[Optional[int]] = [None] * (n + 1)
    labels: list[Optional[str]] = [None] * (n + 1)
    tags: list[Optional[str]] = [None] * (n + 1)
    on_stack = set(state.stack)
    for tok, headed in zip(state.stack, state.headed):
        if tok != 0 and headed:
            heads[tok] = g.heads[tok]
            labels[tok] = g.labels[tok]
    for tok in range(1, state.buffer_start):
        if tok not in on_stack:  # popped tokens always have heads
            heads[tok] = g.heads[tok]
            labels[tok] = g.labels[tok]
        tags[tok] = g.pos[tok]
    if state.buffer_start <= n and state.front_tagged:
        tags[state.buffer_start] = g.pos[state.buffer_start]
    return ParserConfig(n, state.stack, state.buffer_start,
                        tuple(heads), tuple(labels), tuple(tags))


def enumerate_projective_trees(n: int) -> Iterator[tuple[int, ...]]:
    """All projective dependency trees over n tokens, as head tuples indexed
    1..n (position 0 carries the fixed root self-loop 0)."""

    def fill(heads: list[int], d: int) -> Iterator[tuple[int, ...]]:
        if d > n:
            full = tuple(heads)
            if _is_tree(full) and is_projective(full):
                yield full
            return
        for h in range(0, n + 1):
            if h != d:
                heads[d] = h
                yield from fill(heads, d + 1)

    def _is_tree(heads: tuple[int, ...]) -> bool:
        for start in range(1, n + 1):
            node, hops = start, 0
            while node != 0:
                node = heads[node]
                hops += 1
                if hops > n:
                    return False
        return True

    yield from fill([0] * (n + 1), 1)
