"""Verification-condition generation for the three proof rules.

Proofs work over SOURCE transitions: each transition's action is one atomic
relation (the checker builds one obligation per contract transition, so
compiler-introduced intermediate states never appear in proofs). The proof
model additionally composes every transition with an implicit >=1-unit
timer tick, and adds a self-loop `time` transition enabled whenever some
timer is active: timers measure block progress, which advances whenever any
transaction runs and on its own between transactions.

Rule-to-VC map:
  safety         Initiality, Inductiveness (per transition + time),
                 Sufficiency (only with a `reject =` clause)
  reachability   Initiality, RankDefined, Enabledness (per state),
                 RankDecrease (per transition + time)
  adversarial    Initiality, Inductiveness (invariance), RankDefined,
                 and per state the PlayerMove / OpponentTotal alternatives
                 (a state's progress obligation holds if either does, or if
                 the goal covers it).
"""
from __future__ import annotations

from dataclasses import dataclass

from .ast_nodes import Binop, Builtin, Expr, If, Lit, OpStmt, Quant, Send, Stmt, Unop, Var
from .diagnostics import SketchError
from .sketch import AdversarialSketch, ProofSketch, RankCase, ReachabilitySketch, SafetySketch
from .typecheck import TypedContract, TypedProgram, TypedTransition, free_vars

TIME = "time"  # relation tag for the implicit time transition


@dataclass
class VC:
    """One proof obligation: hypothesis over the pre-state, a relation
    (one source transition, the time transition, or none), and a
    kind-specific conclusion."""

    name: str
    kind: str  # Initiality | Inductiveness | Sufficiency | RankDefined |
    #            Enabledness | RankDecrease | PlayerMove | OpponentTotal
    tc: TypedContract
    sketch: ProofSketch
    state: str | None  # pre-state skeleton (None: initial-state obligation)
    transition: TypedTransition | None = None
    is_time: bool = False
    hypothesis: tuple[Expr, ...] = ()  # conjuncts over the pre-state
    conclusion: tuple[Expr, ...] = ()  # post-state conjuncts (kind-dependent)
    action: tuple[Stmt, ...] = ()  # sliced action actually executed

    def label(self) -> str:
        return self.name


def _neg(e: Expr) -> Expr:
    return Unop("!", e)


def _conj(exprs) -> Expr:
    exprs = list(exprs)
    if not exprs:
        return Lit(True)
    out = exprs[0]
    for e in exprs[1:]:
        out = Binop("&&", out, e)
    return out


def _not_goal(goal_conjs) -> tuple[Expr, ...]:
    """Conjuncts expressing that the goal does NOT hold at a state; the
    goal defaults to false, where the negation is vacuous."""
    if goal_conjs is None:
        return ()
    return (_neg(_conj(goal_conjs)),)


def guard_conjuncts(t: TypedTransition) -> tuple[Expr, ...]:
    """Enabledness of a transition as hypothesis conjuncts over pre-state
    plus binders (the sender binder is t.sender_var)."""
    out: list[Expr] = []
    if t.input is not None and not t.sender_fresh:
        out.append(Binop("==", Var(t.sender_var), Var(t.input.sender)))
    if t.when is not None:
        out.append(t.when)
    if t.access is not None:
        kind, e = t.access
        op = "==" if kind == "by" else "!="
        out.append(Binop(op, Var(t.sender_var), e))
    return tuple(out)


def transition_binders(t: TypedTransition) -> dict[str, object]:
    """Context variable names for a transition's existentials: the sender
    (canonical name) and the message parameter binders, with their types."""
    from .ast_nodes import ADDRESS
    if t.input is None:
        return {}
    binders = {t.sender_var: ADDRESS}
    for name, typ in zip(t.input.params, t.param_types):
        binders[name] = typ
    return binders


def time_guard(tc: TypedContract) -> Expr:
    """Some timer is active (the time transition's enabling condition)."""
    timers = [v.name for v in tc.vars.values() if v.typ.kind == "timer"]
    if not timers:
        return Lit(False)
    parts = [Builtin("Timer", "is_active", (Var(n),)) for n in timers]
    out = parts[0]
    for p in parts[1:]:
        out = Binop("||", out, p)
    return out


# ---------------------------------------------------------------------------
# Action slicing (drop total statements that cannot influence the
# conclusion; keeps relation execution and enumeration contexts small)
# ---------------------------------------------------------------------------


def _expr_total(e: Expr, tc: TypedContract) -> bool:
    if isinstance(e, (Lit, Var)):
        return True
    if isinstance(e, Unop):
        return _expr_total(e.operand, tc)
    if isinstance(e, Binop):
        if e.op in ("/", "%", "-nat"):
            return False
        return _expr_total(e.left, tc) and _expr_total(e.right, tc)
    if isinstance(e, Quant):
        return _expr_total(e.body, tc)
    if isinstance(e, Builtin):
        key = (e.ns, e.op)
        if key in (("Timer", "value"), ("Seq", "get"), ("Seq", "ref"),
                   ("Map", "ref"), ("Tuple", "ref")):
            return False
        if key == ("Map", "get"):
            base = e.args[0]
            if not (isinstance(base, Var) and base.name in tc.vars
                    and tc.vars[base.name].default is not None):
                return False
        return all(_expr_total(a, tc) for a in e.args)
    return False


def _stmt_reads(s: Stmt) -> set[str]:
    from .ast_nodes import Assign
    if isinstance(s, Assign):
        return free_vars(s.value)
    if isinstance(s, OpStmt):
        out: set[str] = set()
        for a in s.args:
            out |= free_vars(a)
        return out
    if isinstance(s, Send):
        out = set() if s.dest is None else free_vars(s.dest)
        for a in s.args:
            out |= free_vars(a)
        return out
    if isinstance(s, If):
        out = free_vars(s.cond)
        for b in s.then + s.els:
            out |= _stmt_reads(b)
        return out
    raise TypeError(s)


def _stmt_total(s: Stmt, tc: TypedContract) -> bool:
    from .ast_nodes import Assign
    if isinstance(s, Assign):
        return _expr_total(s.value, tc)
    if isinstance(s, OpStmt) and (s.ns, s.op) == ("Map", "set"):
        return all(_expr_total(a, tc) for a in s.args)
    return False


def slice_action(t: TypedTransition, needed: set[str], tc: TypedContract):
    """Backward slice: drop total statements whose writes cannot reach the
    conclusion. Dropping a partial statement would weaken the relation's
    definedness constraint, so those are always kept."""
    from .ast_nodes import Assign
    from .typecheck import stmt_written_roots

    kept: list[Stmt] = []
    need = set(needed)
    for s in reversed(t.action):
        if isinstance(s, (If, Send)):
            kept.append(s)
            need |= _stmt_reads(s)
            continue
        writes = stmt_written_roots(s)
        if writes & need or not _stmt_total(s, tc):
            if isinstance(s, Assign):
                need.discard(s.target)
            kept.append(s)
            need |= _stmt_reads(s)
        # else: dead and total: dropped
    kept.reverse()
    return tuple(kept), need


def _post_reads(conclusion_exprs, rank_cases=None) -> set[str]:
    out: set[str] = set()
    for e in conclusion_exprs or ():
        out |= free_vars(e)
    for case in rank_cases or ():
        for e in case.exprs:
            out |= free_vars(e)
        if case.cond is not None:
            out |= free_vars(case.cond)
    return out


def _rank_cases(sketch, state: str) -> tuple[RankCase, ...]:
    return sketch.rank.get(state, ())


# ---------------------------------------------------------------------------
# Safety
# ---------------------------------------------------------------------------


def gen_safety_vcs(program: TypedProgram, sketch: SafetySketch) -> list[VC]:
    tc = program.contract(sketch.contract)
    vcs = [VC(
        name=f"initiality[{tc.name}.{tc.initial}]",
        kind="Initiality", tc=tc, sketch=sketch, state=None,
        conclusion=sketch.theta(tc.initial),
    )]
    for t in tc.transitions:
        theta_post = sketch.theta(t.target)
        action, _ = slice_action(t, _post_reads(theta_post), tc)
        vcs.append(VC(
            name=f"inductive[{tc.name}.{t.label()}]",
            kind="Inductiveness", tc=tc, sketch=sketch, state=t.source,
            transition=t,
            hypothesis=sketch.theta(t.source) + guard_conjuncts(t),
            conclusion=theta_post,
            action=action,
        ))
    if tc.has_timers():
        for state in tc.source_states:
            vcs.append(VC(
                name=f"inductive[{tc.name}.time@{state}]",
                kind="Inductiveness", tc=tc, sketch=sketch, state=state,
                is_time=True,
                hypothesis=sketch.theta(state) + (time_guard(tc),),
                conclusion=sketch.theta(state),
            ))
    if sketch.reject is not None:
        for state in tc.source_states:
            vcs.append(VC(
                name=f"sufficiency[{tc.name}.{state}]",
                kind="Sufficiency", tc=tc, sketch=sketch, state=state,
                hypothesis=sketch.theta(state),
                conclusion=(_neg(sketch.reject),),
            ))
    return vcs


# ---------------------------------------------------------------------------
# Reachability
# ---------------------------------------------------------------------------


def gen_reachability_vcs(program: TypedProgram,
                         sketch: ReachabilitySketch) -> list[VC]:
    tc = program.contract(sketch.contract)
    vcs = [VC(
        name=f"initiality[{tc.name}.{tc.initial}]",
        kind="Initiality", tc=tc, sketch=sketch, state=None,
        conclusion=sketch.theta(tc.initial),
    )]
    for state in tc.source_states:
        pending = sketch.theta(state) + _not_goal(sketch.goal_at(state))
        vcs.append(VC(
            name=f"rank_defined[{tc.name}.{state}]",
            kind="RankDefined", tc=tc, sketch=sketch, state=state,
            hypothesis=pending,
        ))
        has_tau = any(t.input is None for t in tc.transitions_from(state))
        if state not in sketch.witness and not has_tau and not tc.has_timers() \
                and any(t.input is not None for t in tc.transitions_from(state)) \
                and sketch.goal_at(state) is None:
            raise SketchError(
                f"no witness at @{state}: the enabledness existential over "
                f"input transitions cannot be discharged")
        vcs.append(VC(
            name=f"enabled[{tc.name}.{state}]",
            kind="Enabledness", tc=tc, sketch=sketch, state=state,
            hypothesis=pending,
        ))
        for t in tc.transitions_from(state):
            theta_post = sketch.theta(t.target)
            goal_post = sketch.goal_at(t.target)
            needed = _post_reads(theta_post) | _post_reads(goal_post or ())
            needed |= _post_reads((), _rank_cases(sketch, t.target))
            action, _ = slice_action(t, needed, tc)
            vcs.append(VC(
                name=f"rank_decrease[{tc.name}.{t.label()}]",
                kind="RankDecrease", tc=tc, sketch=sketch, state=state,
                transition=t,
                hypothesis=pending + guard_conjuncts(t),
                action=action,
            ))
        if tc.has_timers():
            vcs.append(VC(
                name=f"rank_decrease[{tc.name}.time@{state}]",
                kind="RankDecrease", tc=tc, sketch=sketch, state=state,
                is_time=True,
                hypothesis=pending + (time_guard(tc),),
            ))
    return vcs


# ---------------------------------------------------------------------------
# Adversarial liveness
# ---------------------------------------------------------------------------


def gen_adversarial_vcs(program: TypedProgram,
                        sketch: AdversarialSketch) -> list[VC]:
    tc = program.contract(sketch.contract)
    vcs = [VC(
        name=f"initiality[{tc.name}.{tc.initial}]",
        kind="Initiality", tc=tc, sketch=sketch, state=None,
        conclusion=sketch.theta(tc.initial),
    )]
    # theta is an invariant of the whole contract
    for t in tc.transitions:
        theta_post = sketch.theta(t.target)
        action, _ = slice_action(t, _post_reads(theta_post), tc)
        vcs.append(VC(
            name=f"inductive[{tc.name}.{t.label()}]",
            kind="Inductiveness", tc=tc, sketch=sketch, state=t.source,
            transition=t,
            hypothesis=sketch.theta(t.source) + guard_conjuncts(t),
            conclusion=theta_post,
            action=action,
        ))
    if tc.has_timers():
        for state in tc.source_states:
            vcs.append(VC(
                name=f"inductive[{tc.name}.time@{state}]",
                kind="Inductiveness", tc=tc, sketch=sketch, state=state,
                is_time=True,
                hypothesis=sketch.theta(state) + (time_guard(tc),),
                conclusion=sketch.theta(state),
            ))
    for state in tc.source_states:
        vcs.append(VC(
            name=f"rank_defined[{tc.name}.{state}]",
            kind="RankDefined", tc=tc, sketch=sketch, state=state,
            hypothesis=sketch.theta(state),
        ))
        # progress: Q holds, or the Player moves, or all Opponent moves
        # converge; Q is folded into both alternatives' hypotheses.
        pending = sketch.theta(state) + _not_goal(sketch.goal_at(state))
        vcs.append(VC(
            name=f"player_move[{tc.name}.{state}]",
            kind="PlayerMove", tc=tc, sketch=sketch, state=state,
            hypothesis=pending,
        ))
        vcs.append(VC(
            name=f"opponent_total[{tc.name}.{state}]",
            kind="OpponentTotal", tc=tc, sketch=sketch, state=state,
            hypothesis=pending,
        ))
    return vcs


def generate_vcs(program: TypedProgram, sketch: ProofSketch) -> list[VC]:
    if isinstance(sketch, SafetySketch):
        return gen_safety_vcs(program, sketch)
    if isinstance(sketch, ReachabilitySketch):
        return gen_reachability_vcs(program, sketch)
    return gen_adversarial_vcs(program, sketch)
