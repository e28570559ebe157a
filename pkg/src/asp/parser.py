"""Recursive-descent parser for Asp contracts and shared expression syntax.

The grammar is documented in README.md (it is reconstructed to cover every
construct in the sample contracts shipped under corpus/).
"""
from __future__ import annotations

from .ast_nodes import (
    ContractDecl, Expr, If, InputGuard, Lit, MsgSig, OpStmt, Program,
    Quant, Send, SemType, StateDecl, Stmt, Transition, Unop, Var, VarDecl,
    Assign, Binop, Builtin, PRIM_TYPES,
)
from .diagnostics import ParseError
from .lexer import Token, tokenize

CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")


class TokenStream:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    def peek(self, ahead: int = 0) -> Token:
        j = min(self.i + ahead, len(self.toks) - 1)
        return self.toks[j]

    def next(self) -> Token:
        t = self.peek()
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def at_kw(self, word: str) -> bool:
        return self.at("ident", word)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        if self.at(kind, text):
            return self.next()
        got = self.peek()
        want = text or kind
        raise ParseError(
            f"expected {want!r}, found {got.text or got.kind!r}",
            got.pos, expected=(want,),
        )

    def expect_kw(self, word: str) -> Token:
        return self.expect("ident", word)

    def ident(self) -> str:
        return self.expect("ident").text


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


def parse_expr(ts: TokenStream) -> Expr:
    return _implication(ts)


def _implication(ts) -> Expr:
    left = _or(ts)
    if ts.at("==>"):
        pos = ts.next().pos
        right = _implication(ts)  # right-associative
        return Binop("==>", left, right, pos)
    return left


def _or(ts) -> Expr:
    left = _and(ts)
    while ts.at("||"):
        pos = ts.next().pos
        left = Binop("||", left, _and(ts), pos)
    return left


def _and(ts) -> Expr:
    left = _cmp(ts)
    while ts.at("&&"):
        pos = ts.next().pos
        left = Binop("&&", left, _cmp(ts), pos)
    return left


def _cmp(ts) -> Expr:
    left = _add(ts)
    for op in CMP_OPS:
        if ts.at(op):
            pos = ts.next().pos
            return Binop(op, left, _add(ts), pos)
    return left


def _add(ts) -> Expr:
    left = _mul(ts)
    while ts.at("+") or ts.at("-"):
        tok = ts.next()
        left = Binop(tok.kind, left, _mul(ts), tok.pos)
    return left


def _mul(ts) -> Expr:
    left = _unary(ts)
    while ts.at("*") or ts.at("/") or ts.at("%"):
        tok = ts.next()
        left = Binop(tok.kind, left, _unary(ts), tok.pos)
    return left


def _unary(ts) -> Expr:
    if ts.at("!") or ts.at("-"):
        tok = ts.next()
        return Unop(tok.kind, _unary(ts), tok.pos)
    return _primary(ts)


def _primary(ts) -> Expr:
    tok = ts.peek()
    if tok.kind == "number":
        ts.next()
        return Lit(int(tok.text), tok.pos)
    if tok.kind == "(":
        ts.next()
        e = parse_expr(ts)
        ts.expect(")")
        return e
    if tok.kind == "ident":
        if tok.text in ("true", "false"):
            ts.next()
            return Lit(tok.text == "true", tok.pos)
        if tok.text in ("forall", "exists"):
            ts.next()
            var = ts.ident()
            ts.expect(":")
            typ = parse_type(ts)
            ts.expect(":")
            body = parse_expr(ts)
            return Quant(tok.text, var, typ, body, tok.pos)
        ts.next()
        if ts.at("."):
            ts.next()
            op = ts.ident()
            args: tuple[Expr, ...] = ()
            if ts.at("("):
                ts.next()
                args = tuple(_expr_list(ts, ")"))
                ts.expect(")")
            return Builtin(tok.text, op, args, tok.pos)
        return Var(tok.text, tok.pos)
    raise ParseError(
        f"expected expression, found {tok.text or tok.kind!r}", tok.pos,
        expected=("expression",),
    )


def _expr_list(ts, closer: str) -> list[Expr]:
    if ts.at(closer):
        return []
    out = [parse_expr(ts)]
    while ts.accept(","):
        out.append(parse_expr(ts))
    return out


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


def parse_type(ts: TokenStream) -> SemType:
    tok = ts.expect("ident")
    name = tok.text
    if name in PRIM_TYPES:
        return SemType(name)
    if name == "map":
        ts.expect("[")
        k = parse_type(ts)
        ts.expect(",")
        v = parse_type(ts)
        ts.expect("]")
        return SemType("map", (k, v))
    if name == "seq":
        ts.expect("[")
        e = parse_type(ts)
        ts.expect("]")
        return SemType("seq", (e,))
    if name == "tuple":
        ts.expect("[")
        items = [parse_type(ts)]
        while ts.accept(","):
            items.append(parse_type(ts))
        ts.expect("]")
        return SemType("tuple", tuple(items))
    raise ParseError(f"unknown type {name!r}", tok.pos, expected=PRIM_TYPES)


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


def parse_stmt(ts: TokenStream) -> Stmt:
    tok = ts.peek()
    if ts.at_kw("if"):
        ts.next()
        cond = parse_expr(ts)
        ts.expect_kw("then")
        then = _stmt_or_block(ts)
        els: tuple[Stmt, ...] = ()
        if ts.at_kw("else"):
            ts.next()
            els = _stmt_or_block(ts)
        return If(cond, then, els, tok.pos)
    # Everything else starts as an expression, then dispatches on what
    # follows: "=" assignment, "!!" send, or a bare namespaced operation.
    e = parse_expr(ts)
    if ts.at("="):
        ts.next()
        if not isinstance(e, Var):
            raise ParseError("assignment target must be a variable", tok.pos)
        return Assign(e.name, parse_expr(ts), tok.pos)
    if ts.at("!!"):
        ts.next()
        msg = ts.ident()
        args: tuple[Expr, ...] = ()
        if ts.at("("):
            ts.next()
            args = tuple(_expr_list(ts, ")"))
            ts.expect(")")
        dest = None if isinstance(e, Var) and e.name == "log" else e
        return Send(dest, msg, args, tok.pos)
    if isinstance(e, Builtin):
        return OpStmt(e.ns, e.op, e.args, tok.pos)
    raise ParseError(
        f"expression is not a statement", tok.pos, expected=("=", "!!"),
    )


def _stmt_or_block(ts) -> tuple[Stmt, ...]:
    if ts.at("{"):
        return parse_block(ts)
    return (parse_stmt(ts),)


def parse_block(ts: TokenStream) -> tuple[Stmt, ...]:
    ts.expect("{")
    stmts: list[Stmt] = []
    while not ts.at("}"):
        stmts.append(parse_stmt(ts))
        if not ts.accept(";"):
            break
    ts.expect("}")
    return tuple(stmts)


# ---------------------------------------------------------------------------
# Contract declarations
# ---------------------------------------------------------------------------


def parse_contract(ts: TokenStream) -> ContractDecl:
    pos = ts.expect_kw("contract").pos
    name = ts.ident()
    ts.expect("(")
    params: list[tuple[str, SemType]] = []
    if not ts.at(")"):
        while True:
            pname = ts.ident()
            ts.expect(":")
            params.append((pname, parse_type(ts)))
            if not ts.accept(","):
                break
    ts.expect(")")

    issues = False
    issue_limit: Expr | None = None
    where: Expr | None = None
    while True:
        if ts.at_kw("issues"):
            ts.next()
            ts.expect_kw("Token")
            ts.expect("(")
            if not ts.at(")"):
                issue_limit = parse_expr(ts)
            ts.expect(")")
            issues = True
        elif ts.at_kw("where"):
            ts.next()
            where = parse_expr(ts)
        else:
            break

    ts.expect("{")
    messages: list[MsgSig] = []
    vars_: list[VarDecl] = []
    initial: str | None = None
    states: list[StateDecl] = []
    while not ts.at("}"):
        if ts.at_kw("msg"):
            ts.next()
            while True:
                mpos = ts.peek().pos
                mname = ts.ident()
                mparams: tuple[SemType, ...] = ()
                if ts.at("("):
                    ts.next()
                    ps = [parse_type(ts)]
                    while ts.accept(","):
                        ps.append(parse_type(ts))
                    ts.expect(")")
                    mparams = tuple(ps)
                messages.append(MsgSig(mname, mparams, mpos))
                if not ts.accept(","):
                    break
            ts.expect(";")
        elif ts.at_kw("var") or (ts.at_kw("ghost") and ts.peek(1).text == "var"):
            ghost = False
            if ts.at_kw("ghost"):
                ts.next()
                ghost = True
            ts.expect_kw("var")
            while True:
                # one group: name (, name)* : type [default lit] [:= expr]
                group = [(ts.peek().pos, ts.ident())]
                while ts.at(",") and ts.peek(1).kind == "ident" and \
                        ts.peek(2).kind == ",":
                    ts.next()
                    group.append((ts.peek().pos, ts.ident()))
                if ts.at(",") and ts.peek(1).kind == "ident" and \
                        ts.peek(2).kind == ":":
                    ts.next()
                    group.append((ts.peek().pos, ts.ident()))
                ts.expect(":")
                vtyp = parse_type(ts)
                default = None
                init = None
                if ts.at_kw("default"):
                    ts.next()
                    default = _unary(ts)
                if ts.at(":="):
                    ts.next()
                    init = parse_expr(ts)
                for vpos, vname in group:
                    vars_.append(VarDecl(vname, vtyp, ghost, default, init, vpos))
                if not ts.accept(","):
                    break
            ts.expect(";")
        elif ts.at_kw("initial"):
            ts.next()
            initial = ts.ident()
            ts.expect(";")
        elif ts.at_kw("state"):
            states.append(_parse_state(ts))
        else:
            got = ts.peek()
            raise ParseError(
                f"expected contract item, found {got.text or got.kind!r}",
                got.pos, expected=("msg", "var", "ghost", "initial", "state"),
            )
    ts.expect("}")
    if initial is None:
        raise ParseError(f"contract {name} declares no initial state", pos)
    return ContractDecl(
        name, tuple(params), where, issues, issue_limit,
        tuple(messages), tuple(vars_), initial, tuple(states), pos,
    )


def _parse_state(ts: TokenStream) -> StateDecl:
    pos = ts.expect_kw("state").pos
    name = ts.ident()
    ts.expect(":")
    transitions: list[Transition] = []
    while ts.at("|"):
        transitions.append(_parse_transition(ts, name))
    return StateDecl(name, tuple(transitions), pos)


def _parse_transition(ts: TokenStream, source: str) -> Transition:
    pos = ts.expect("|").pos
    input_guard: InputGuard | None = None
    # Input guard: IDENT ?? IDENT [(binders)]
    if ts.at("ident") and ts.peek(1).kind == "??":
        sender = ts.ident()
        ts.expect("??")
        msg = ts.ident()
        binders: tuple[str, ...] = ()
        if ts.at("("):
            ts.next()
            bs = [ts.ident()]
            while ts.accept(","):
                bs.append(ts.ident())
            ts.expect(")")
            binders = tuple(bs)
        input_guard = InputGuard(sender, msg, binders, pos)
    when = None
    access = None
    while True:
        if ts.at_kw("when"):
            ts.next()
            when = parse_expr(ts)
        elif ts.at_kw("by"):
            ts.next()
            access = ("by", parse_expr(ts))
        elif ts.at_kw("notby"):
            ts.next()
            access = ("notby", parse_expr(ts))
        else:
            break
    ts.expect("->")
    target = ts.ident()
    action: tuple[Stmt, ...] = ()
    if ts.at("{"):
        action = parse_block(ts)
    return Transition(source, input_guard, when, access, target, action, pos)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def parse_program(source: str) -> Program:
    ts = TokenStream(tokenize(source))
    contracts = []
    while not ts.at("eof"):
        contracts.append(parse_contract(ts))
    return Program(tuple(contracts))


def parse_expression(source: str) -> Expr:
    """Parse a standalone expression (scripts, sketches, tests)."""
    ts = TokenStream(tokenize(source))
    e = parse_expr(ts)
    ts.expect("eof")
    return e
