"""Type checking: error taxonomy, ghost discipline, normalization."""
import pytest

from asp.diagnostics import TypecheckError
from asp.parser import parse_program
from asp.typecheck import erase_ghosts, typecheck
from conftest import load


def check(src: str):
    return typecheck(parse_program(src))


def expect_error(src: str, code: str):
    with pytest.raises(TypecheckError) as exc:
        check(src)
    assert exc.value.code == code, exc.value.message
    return exc.value


def test_corpus_is_well_typed(auction, etherstore, vending_fixed, basic_coin):
    assert auction.contract("SimpleAuction").has_timers()
    assert not vending_fixed.contract("VendingMachine").has_timers()


def test_winner_signature_matches_across_contracts():
    src = load("auction.asp") + """
contract Beneficiary(auction: address) {
  msg winner(coin, address);
  var takings: coin;
  initial AcceptBid;
  state AcceptBid:
  | a??winner(amt, addr) by auction -> FinalState {
      log!!final_winner(Coin.value(amt));
      Coin.moveall(amt, takings);
    }
  state FinalState:
}
"""
    prog = check(src)
    assert prog.msg_universe["winner"][0].kind == "coin"
    assert prog.msg_universe["winner"][1].kind == "address"


def test_signature_mismatch_across_contracts():
    expect_error("""
contract A() { msg ping(nat); initial S; state S: | x??ping(n) -> S { } }
contract B() { msg ping(address); initial S; state S: | x??ping(a) -> S { } }
""", "SignatureMismatch")


def test_ghost_in_when_guard_rejected():
    expect_error("""
contract C() {
  msg poke;
  ghost var seen: int;
  initial A;
  state A:
  | x??poke when seen > 0 -> A { }
}
""", "GhostLeak")


def test_ghost_flow_into_state_rejected():
    expect_error("""
contract C() {
  msg poke;
  var count: int;
  ghost var seen: int;
  initial A;
  state A:
  | x??poke -> A { count = seen + 1; }
}
""", "GhostLeak")


def test_ghost_in_message_rejected():
    expect_error("""
contract C() {
  msg poke;
  ghost var seen: int;
  initial A;
  state A:
  | x??poke -> A { x!!echo(seen); }
}
""", "GhostLeak")


def test_ghost_update_may_read_real_state():
    prog = check("""
contract C() {
  msg poke(nat);
  var count: int;
  ghost var seen: int;
  initial A;
  state A:
  | x??poke(n) -> A { count = count + 1; seen = count + n; }
}
""")
    assert prog.contract("C").ghost_names() == {"seen"}


def test_coin_dropped_on_empty_action():
    err = expect_error("""
contract C() {
  msg pay(coin);
  initial S;
  state S:
  | a??pay(c) -> S { }
}
""", "CoinDropped")
    assert "c" in err.message


def test_coin_dropped_on_one_branch():
    expect_error("""
contract C() {
  msg pay(coin);
  var bank: coin;
  initial S;
  state S:
  | a??pay(c) -> S { if Coin.value(c) > 0 then Coin.moveall(c, bank); }
}
""", "CoinDropped")


def test_coin_consumed_on_all_branches_accepted():
    check("""
contract C() {
  msg pay(coin);
  var bank, reserve: coin;
  initial S;
  state S:
  | a??pay(c) -> S {
      if Coin.value(c) > 2 then Coin.moveall(c, bank)
      else Coin.moveall(c, reserve);
    }
}
""")


def test_ref_required_for_map_entries():
    expect_error("""
contract C() {
  msg pay(coin);
  var bank: map[address, coin];
  initial S;
  state S:
  | a??pay(c) -> S { Coin.moveall(c, Map.get(bank, a)); }
}
""", "RefRequired")


def test_unknown_target_state():
    expect_error(
        "contract C() { msg m; initial A; state A: | x??m -> Nowhere { } }",
        "UnknownState")


def test_timer_nesting_rejected():
    expect_error(
        "contract C() { var ts: map[address, timer]; initial A; state A: }",
        "TypeError")


def test_issue_requires_issuer():
    expect_error("""
contract C() {
  msg m;
  var pot: token;
  initial A;
  state A:
  | x??m -> A { Token.issue(1, pot); }
}
""", "TypeError")


def test_access_guard_needs_input():
    expect_error("""
contract C() {
  var boss: address;
  initial A;
  state A:
  | when true by boss -> A { }
}
""", "TypeError")


# -- normalization ----------------------------------------------------------


def test_bid_transition_splits_once(auction):
    tc = auction.contract("SimpleAuction")
    assert len(tc.transitions) == 3
    assert len(tc.norm_transitions) == 4
    fresh = set(tc.norm_states) - set(tc.source_states)
    assert len(fresh) == 1
    # the input arm is send-free; the tau arm carries the refund send
    arms = {t.label(): t for t in tc.norm_transitions}
    from asp.ast_nodes import Send
    for t in tc.norm_transitions:
        sends = [s for s in t.action if isinstance(s, Send) and not s.is_log]
        if t.input is not None:
            assert not sends
        else:
            assert len(sends) <= 1


def test_stash_variables_carry_binders(auction):
    tc = auction.contract("SimpleAuction")
    stashes = [v for v in tc.vars.values() if v.synthetic]
    assert {v.typ.kind for v in stashes} == {"address", "coin"}


def test_already_normal_contracts_untouched(etherstore):
    for name in ("Etherstore", "Attacker"):
        tc = etherstore.contract(name)
        assert tc.norm_states == tc.source_states
        assert len(tc.norm_transitions) == len(tc.transitions)


def test_multi_send_tau_splits():
    prog = check("""
contract C() {
  msg go;
  var x, y: address;
  initial A;
  state A:
  | when true -> B { x!!ping; y!!pong; }
  state B:
}
""")
    tc = prog.contract("C")
    assert len(tc.norm_transitions) == 2
    assert len(tc.norm_states) == 3


# -- ghost erasure -----------------------------------------------------------


def test_ghost_erasure_well_typed(auction):
    src = parse_program(load("auction.asp"))
    erased = erase_ghosts(src)
    prog = typecheck(erased)
    tc = prog.contract("SimpleAuction")
    assert tc.ghost_names() == frozenset()
    # the bid action lost its two ghost map updates
    bid = [t for t in tc.transitions if t.msg == "bid"][0]
    orig_bid = [t for t in auction.contract("SimpleAuction").transitions
                if t.msg == "bid"][0]
    assert len(bid.action) == len(orig_bid.action) - 2
