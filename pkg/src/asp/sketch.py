"""Proof sketches: declarative outlines for safety, reachability, and
adversarial-liveness proofs, keyed by skeleton state.

Surface forms:

    safety <name> [contract <C>] {
      always <assertion>
      @State <assertion>
      reject = <assertion>          // optional; enables Sufficiency checks
    }

    reachability <name>(<rank-len>) [contract <C>] {
      goal = { @State <assertion> ... }        // default false
      invariant = { @State <assertion> ... }   // default true
      rank = { @State | (<e>, ...) [if <cond>] ... }  // first match wins
      witness = { @State <predicate over input binders> ... }
    }

    adversarial <name>(<rank-len>) [contract <C>] {
      player = <x>
      goal / invariant / rank / witness as above
    }
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .ast_nodes import ADDRESS, Expr
from .diagnostics import Pos, SketchError
from .lexer import tokenize
from .parser import TokenStream, parse_expr
from .typecheck import ExprChecker, TypedContract, TypedProgram

TRUE_DEFAULT = "true"
FALSE_DEFAULT = "false"


@dataclass(frozen=True)
class RankCase:
    exprs: tuple[Expr, ...]
    cond: Expr | None  # None: unconditional
    pos: Pos = field(default=Pos(), compare=False)


@dataclass
class SafetySketch:
    name: str
    contract: str
    always: tuple[Expr, ...]
    at: dict[str, tuple[Expr, ...]]
    reject: Expr | None = None

    kind = "safety"

    def theta(self, state: str) -> tuple[Expr, ...]:
        """Per-state assertion family: always clauses plus @state clauses."""
        return self.always + self.at.get(state, ())


@dataclass
class ReachabilitySketch:
    name: str
    contract: str
    rank_len: int
    goal: dict[str, tuple[Expr, ...]]
    invariant: dict[str, tuple[Expr, ...]]
    rank: dict[str, tuple[RankCase, ...]]
    witness: dict[str, Expr]

    kind = "reachability"

    def theta(self, state: str) -> tuple[Expr, ...]:
        return self.invariant.get(state, ())

    def goal_at(self, state: str) -> tuple[Expr, ...] | None:
        """Conjuncts of the goal at a state; None means goal is false there."""
        return self.goal.get(state)


@dataclass
class AdversarialSketch:
    name: str
    contract: str
    rank_len: int
    player: str
    goal: dict[str, tuple[Expr, ...]]
    invariant: dict[str, tuple[Expr, ...]]
    rank: dict[str, tuple[RankCase, ...]]
    witness: dict[str, Expr]

    kind = "adversarial"

    def theta(self, state: str) -> tuple[Expr, ...]:
        return self.invariant.get(state, ())

    def goal_at(self, state: str) -> tuple[Expr, ...] | None:
        return self.goal.get(state)


ProofSketch = SafetySketch | ReachabilitySketch | AdversarialSketch


def _witness_scope(tc: TypedContract, state: str) -> dict:
    """Scope for a witness predicate: state scope plus the input binders of
    every input transition from the state (the canonical sender name for
    equality-matched senders)."""
    scope = tc.state_scope()
    for t in tc.transitions_from(state):
        if t.input is None:
            continue
        scope.setdefault(t.sender_var, ADDRESS)
        for pname, ptyp in zip(t.input.params, t.param_types):
            scope.setdefault(pname, ptyp)
    return scope


def _parse_state_entries(ts: TokenStream, tc: TypedContract, scope_extra: dict,
                         what: str):
    """Parse `@State expr` entries until '}'. Returns {state: (exprs...)}."""
    out: dict[str, list[Expr]] = {}
    ts.expect("{")
    while not ts.at("}"):
        ts.expect("@")
        state = ts.ident()
        if state not in tc.source_states:
            raise SketchError(f"{what}: unknown state label {state!r}", ts.peek().pos)
        e = parse_expr(ts)
        scope = dict(tc.state_scope())
        scope.update(scope_extra)
        t, e2 = ExprChecker(scope, allow_quant=True).check(e)
        if t.kind != "bool":
            raise SketchError(f"{what}: assertion at @{state} is not bool", ts.peek().pos)
        out.setdefault(state, []).append(e2)
    ts.expect("}")
    return {k: tuple(v) for k, v in out.items()}


def _parse_witness_entries(ts: TokenStream, tc: TypedContract, scope_extra: dict):
    out: dict[str, Expr] = {}
    ts.expect("{")
    while not ts.at("}"):
        ts.expect("@")
        state = ts.ident()
        if state not in tc.source_states:
            raise SketchError(f"witness: unknown state label {state!r}", ts.peek().pos)
        e = parse_expr(ts)
        scope = _witness_scope(tc, state)
        scope.update(scope_extra)
        t, e2 = ExprChecker(scope, allow_quant=True).check(e)
        if t.kind != "bool":
            raise SketchError(f"witness at @{state} is not bool", ts.peek().pos)
        if state in out:
            raise SketchError(f"duplicate witness for @{state}", ts.peek().pos)
        out[state] = e2
    ts.expect("}")
    return out


def _parse_rank_entries(ts: TokenStream, tc: TypedContract, rank_len: int,
                        scope_extra: dict):
    """rank = { @State | (e, ...) [if cond] ... }; declaration order is
    significant: the first matching case defines the rank."""
    out: dict[str, list[RankCase]] = {}
    ts.expect("{")
    state = None
    while not ts.at("}"):
        if ts.at("@"):
            ts.next()
            state = ts.ident()
            if state not in tc.source_states:
                raise SketchError(f"rank: unknown state label {state!r}", ts.peek().pos)
            out.setdefault(state, [])
            continue
        pos = ts.expect("|").pos
        if state is None:
            raise SketchError("rank case before any @State label", pos)
        ts.expect("(")
        exprs = [parse_expr(ts)]
        while ts.accept(","):
            exprs.append(parse_expr(ts))
        ts.expect(")")
        if len(exprs) != rank_len:
            raise SketchError(
                f"rank case at @{state} has {len(exprs)} component(s), "
                f"declared length is {rank_len}", pos)
        cond = None
        if ts.at_kw("if"):
            ts.next()
            cond = parse_expr(ts)
        scope = dict(tc.state_scope())
        scope.update(scope_extra)
        checker = ExprChecker(scope, allow_quant=True)
        checked = []
        for e in exprs:
            t, e2 = checker.check(e)
            if t.kind not in ("int", "nat"):
                raise SketchError(f"rank component at @{state} is not numeric", pos)
            checked.append(e2)
        if cond is not None:
            ct, cond = checker.check(cond)
            if ct.kind != "bool":
                raise SketchError(f"rank case condition at @{state} is not bool", pos)
        out[state].append(RankCase(tuple(checked), cond, pos))
    ts.expect("}")
    return {k: tuple(v) for k, v in out.items()}


def _pick_contract(ts: TokenStream, program: TypedProgram) -> TypedContract:
    if ts.at_kw("contract"):
        ts.next()
        name = ts.ident()
        if name not in program.contracts:
            raise SketchError(f"unknown contract {name!r}", ts.peek().pos)
        return program.contract(name)
    if len(program.contracts) != 1:
        raise SketchError(
            "sketch must name its contract (program has several): "
            "use `contract <Name>` after the sketch header")
    return next(iter(program.contracts.values()))


def parse_proof_sketch(text: str, program: TypedProgram) -> ProofSketch:
    """Parse and resolve one proof sketch against the typed program."""
    ts = TokenStream(tokenize(text))
    head = ts.peek()
    if head.kind != "ident" or head.text not in ("safety", "reachability", "adversarial"):
        raise SketchError("expected safety, reachability, or adversarial sketch",
                          head.pos)
    ts.next()
    name = ts.ident()
    rank_len = 0
    if head.text in ("reachability", "adversarial"):
        ts.expect("(")
        rank_len = int(ts.expect("number").text)
        ts.expect(")")
        if rank_len < 1:
            raise SketchError("rank length must be at least 1", head.pos)
    tc = _pick_contract(ts, program)

    if head.text == "safety":
        sketch = _parse_safety(ts, name, tc)
    else:
        sketch = _parse_ranked(ts, head.text, name, rank_len, tc)
    ts.expect("eof")
    _validate(sketch, tc)
    return sketch


def _parse_safety(ts: TokenStream, name: str, tc: TypedContract) -> SafetySketch:
    always: list[Expr] = []
    at: dict[str, list[Expr]] = {}
    reject = None
    scope = tc.state_scope()
    checker = ExprChecker(scope, allow_quant=True)
    ts.expect("{")
    while not ts.at("}"):
        if ts.at_kw("always"):
            pos = ts.next().pos
            t, e = checker.check(parse_expr(ts))
            if t.kind != "bool":
                raise SketchError("always assertion is not bool", pos)
            always.append(e)
        elif ts.at("@"):
            ts.next()
            state = ts.ident()
            if state not in tc.source_states:
                raise SketchError(f"unknown state label {state!r}", ts.peek().pos)
            t, e = checker.check(parse_expr(ts))
            if t.kind != "bool":
                raise SketchError(f"assertion at @{state} is not bool", ts.peek().pos)
            at.setdefault(state, []).append(e)
        elif ts.at_kw("reject"):
            pos = ts.next().pos
            ts.expect("=")
            t, reject = checker.check(parse_expr(ts))
            if t.kind != "bool":
                raise SketchError("reject predicate is not bool", pos)
        else:
            raise SketchError(
                f"expected always, @State, or reject, found {ts.peek().text!r}",
                ts.peek().pos)
    ts.expect("}")
    if not always and not at:
        raise SketchError(f"safety sketch {name!r} has no assertions")
    return SafetySketch(name, tc.name, tuple(always),
                        {k: tuple(v) for k, v in at.items()}, reject)


def _parse_ranked(ts: TokenStream, kind: str, name: str, rank_len: int,
                  tc: TypedContract):
    player = None
    goal = invariant = rank = witness = None
    scope_extra: dict = {}
    ts.expect("{")
    # player must come first so later sections can reference it
    while not ts.at("}"):
        section = ts.ident()
        ts.expect("=")
        if section == "player":
            player = ts.ident()
            if player in tc.state_scope() or player in ("none", "log"):
                raise SketchError(f"player name {player!r} shadows an existing name")
            scope_extra = {player: ADDRESS}
        elif section == "goal":
            goal = _parse_state_entries(ts, tc, scope_extra, "goal")
        elif section == "invariant":
            invariant = _parse_state_entries(ts, tc, scope_extra, "invariant")
        elif section == "rank":
            rank = _parse_rank_entries(ts, tc, rank_len, scope_extra)
        elif section == "witness":
            witness = _parse_witness_entries(ts, tc, scope_extra)
        else:
            raise SketchError(f"unknown sketch section {section!r}")
    ts.expect("}")
    if goal is None:
        raise SketchError(f"{kind} sketch {name!r} has no goal")
    if rank is None:
        raise SketchError(f"{kind} sketch {name!r} has no rank")
    invariant = invariant or {}
    witness = witness or {}
    if kind == "reachability":
        return ReachabilitySketch(name, tc.name, rank_len, goal, invariant,
                                  rank, witness)
    if player is None:
        raise SketchError(f"adversarial sketch {name!r} names no player")
    return AdversarialSketch(name, tc.name, rank_len, player, goal, invariant,
                             rank, witness)


def _validate(sketch: ProofSketch, tc: TypedContract):
    if isinstance(sketch, SafetySketch):
        return
    for state, cases in sketch.rank.items():
        for case in cases:
            if len(case.exprs) != sketch.rank_len:
                raise SketchError(
                    f"rank case at @{state} has wrong length", case.pos)
