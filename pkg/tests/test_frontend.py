"""Lexing, parsing, printing, and the contract corpus."""
import pytest

from asp.diagnostics import LexError, ParseError
from asp.lexer import tokenize
from asp.parser import parse_expression, parse_program
from asp.pretty import fmt_program
from conftest import CORPUS, load


def kinds(src):
    return [t.kind for t in tokenize(src)]


def test_input_guard_lexing():
    toks = tokenize("a??bid(c)")
    assert [(t.kind, t.text) for t in toks[:-1]] == [
        ("ident", "a"), ("??", "??"), ("ident", "bid"),
        ("(", "("), ("ident", "c"), (")", ")"),
    ]


def test_send_token_longest_match():
    assert kinds("!!") == ["!!", "eof"]
    assert kinds("! !") == ["!", "!", "eof"]
    assert kinds("==> == =") == ["==>", "==", "=", "eof"]


def test_comments_stripped():
    toks = tokenize("a // comment\n/* block\nspanning */ b")
    assert [t.text for t in toks[:-1]] == ["a", "b"]


def test_positions():
    toks = tokenize("ab\n  cd")
    assert (toks[0].pos.line, toks[0].pos.col) == (1, 1)
    assert (toks[1].pos.line, toks[1].pos.col) == (2, 3)


def test_illegal_character():
    with pytest.raises(LexError) as exc:
        tokenize("a $ b")
    assert exc.value.pos.col == 3


def test_full_auction_source_lexes():
    toks = tokenize(load("auction.asp"))
    assert toks[-1].kind == "eof"
    assert len(toks) > 100


def test_parse_auction_shape():
    prog = parse_program(load("auction.asp"))
    (c,) = prog.contracts
    assert c.name == "SimpleAuction"
    assert c.initial == "StartAuction"
    assert c.state_names() == ("StartAuction", "AuctionOpen", "AuctionClosed")
    assert [m.name for m in c.messages] == ["start", "bid"]
    assert len(c.transitions()) == 3


def test_parse_vending_machine_states():
    prog = parse_program(load("vending_machine.asp"))
    (c,) = prog.contracts
    assert c.name == "VendingMachine"
    assert c.state_names() == ("Wait", "Choose", "Deliver", "Halt")


def test_minimal_contract():
    prog = parse_program("contract C() { initial A; state A: }")
    (c,) = prog.contracts
    assert c.state_names() == ("A",)
    assert c.transitions() == ()


def test_two_contracts_per_file():
    prog = parse_program(load("etherstore_attack.asp"))
    assert [c.name for c in prog.contracts] == ["Etherstore", "Attacker"]


def test_grouped_var_declaration():
    prog = parse_program(
        "contract C() { var paid, total: coin, who: address; initial A; state A: }")
    names = [(v.name, v.typ.kind) for v in prog.contracts[0].vars]
    assert names == [("paid", "coin"), ("total", "coin"), ("who", "address")]


def test_syntax_error_reports_expectation():
    with pytest.raises(ParseError) as exc:
        parse_program("contract C( { }")
    assert exc.value.expected


@pytest.mark.parametrize("name", sorted(p.name for p in CORPUS.glob("*.asp")))
def test_parse_print_parse_fixpoint(name):
    prog = parse_program(load(name))
    assert parse_program(fmt_program(prog)) == prog


def test_expression_precedence():
    e = parse_expression("1 + 2 * 3 == 7 && !false ==> 1 < 2")
    from asp.pretty import fmt_expr
    assert fmt_expr(e) == "1 + 2 * 3 == 7 && !false ==> 1 < 2"


def test_quantifier_parses():
    e = parse_expression("forall b: address : b != Address.none")
    from asp.ast_nodes import Quant
    assert isinstance(e, Quant) and e.var == "b"
