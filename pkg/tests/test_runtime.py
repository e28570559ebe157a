"""Abstract runtime: values, evaluation, and single-instance stepping."""
import pytest
from hypothesis import given, settings, strategies as st

from asp.machine import (
    InputLetter, UNDEFINED, advance_instance, enabled_transitions, eval_expr,
    init_instance, step_instance,
)
from asp.parser import parse_expression, parse_program
from asp.typecheck import typecheck
from asp.values import Coin, Timer, Tok, Undef, timer_advance, timer_reset, timer_set
from conftest import load


def auction_instance(prog, bene="bene", bt=10):
    tc = prog.contract("SimpleAuction")
    return tc, init_instance(tc, "auction", {"beneficiary": bene, "bidding_time": bt}, "alice")


def ev(prog, inst, src, **binds):
    return eval_expr(parse_expression(src), inst, binds)


# -- expression evaluation ----------------------------------------------------


def test_division_by_zero_undefined(auction):
    tc, inst = auction_instance(auction)
    assert ev(auction, inst, "7 / 0") is UNDEFINED
    assert ev(auction, inst, "7 / 2") == 3
    assert ev(auction, inst, "7 % 0") is UNDEFINED


def test_coin_value_accessor(auction):
    _, inst = auction_instance(auction)
    assert ev(auction, inst, "Coin.value(c)", c=Coin(5)) == 5


def test_sequence_out_of_bounds_undefined(auction):
    from asp.values import SeqVal
    _, inst = auction_instance(auction)
    s = SeqVal([1, 2])
    assert ev(auction, inst, "Seq.get(s, 3)", s=s) is UNDEFINED
    assert ev(auction, inst, "Seq.get(s, 1)", s=s) == 2
    assert ev(auction, inst, "Seq.len(s)", s=s) == 2


def test_strict_connectives(auction):
    _, inst = auction_instance(auction)
    assert ev(auction, inst, "false && 1 / 0 == 0") is UNDEFINED
    assert ev(auction, inst, "true || 1 / 0 == 0") is UNDEFINED


# -- coin and token primitives ------------------------------------------------


def run_action(src_contract, msg, args, sender="alice", state=None):
    prog = typecheck(parse_program(src_contract))
    tc = next(iter(prog.contracts.values()))
    inst = init_instance(tc, "it", {}, "alice")
    if state:
        inst.skeleton = state
    letter = InputLetter(msg, sender, tuple(args))
    enabled = enabled_transitions(tc, inst, letter)
    assert enabled, "no enabled transition"
    t, binds = enabled[0]
    return inst, step_instance(tc, inst, t, binds, sender)


MOVER = """
contract Mover() {
  msg fill(coin), move(nat);
  var src, dst: coin;
  initial S;
  state S:
  | a??fill(c) -> S { Coin.moveall(c, src); }
  | a??move(k) -> S { Coin.move(src, k, dst); }
}
"""


def test_coin_move_examples():
    # src=10, move 4: src=6, dst=4
    inst, res = run_action(MOVER, "fill", [Coin(10)])
    inst2, _, _ = res
    assert inst2.env["src"] == Coin(10)
    prog = typecheck(parse_program(MOVER))
    tc = prog.contract("Mover")
    t, binds = enabled_transitions(tc, inst2, InputLetter("move", "a", (4,)))[0]
    inst3, _, _ = step_instance(tc, inst2, t, binds, "a")
    assert (inst3.env["src"], inst3.env["dst"]) == (Coin(6), Coin(4))
    # src=6, move 7: undefined, instance unchanged
    t, binds = enabled_transitions(tc, inst3, InputLetter("move", "a", (7,)))[0]
    assert step_instance(tc, inst3, t, binds, "a") is UNDEFINED
    assert inst3.env["src"] == Coin(6)
    # move 0: no change
    t, binds = enabled_transitions(tc, inst3, InputLetter("move", "a", (0,)))[0]
    inst4, _, _ = step_instance(tc, inst3, t, binds, "a")
    assert (inst4.env["src"], inst4.env["dst"]) == (Coin(6), Coin(4))


def test_moveall_zero_and_accumulate():
    inst, res = run_action(MOVER, "fill", [Coin(0)])
    inst2, _, _ = res
    assert inst2.env["src"] == Coin(0)
    inst2.env["src"] = Coin(9)
    inst2.env["dst"] = Coin(1)
    prog = typecheck(parse_program(MOVER))
    tc = prog.contract("Mover")
    t, binds = enabled_transitions(tc, inst2, InputLetter("move", "a", (9,)))[0]
    inst3, _, _ = step_instance(tc, inst2, t, binds, "a")
    assert inst3.env["dst"] == Coin(10)


def test_token_issue_within_limit(basic_coin):
    tc = basic_coin.contract("BasicCoin")
    inst = init_instance(tc, "bank", {}, "owner1")
    assert inst.token_remaining == 1000
    t, binds = enabled_transitions(tc, inst, InputLetter("register", "alice", ()))[0]
    inst2, _, _ = step_instance(tc, inst, t, binds, "alice")
    assert inst2.token_remaining == 990
    assert inst2.env["accounts"].get("alice") == Tok("bank", 10)


def test_token_issue_beyond_limit_undefined():
    src = """
contract T() issues Token(10) {
  msg grab(nat);
  var pot: token;
  initial S;
  state S:
  | a??grab(n) -> S { Token.issue(n, pot); }
}
"""
    inst, res = run_action(src, "grab", [20])
    assert res is UNDEFINED
    inst2, res2 = run_action(src, "grab", [10])
    post, _, _ = res2
    assert post.env["pot"] == Tok("it", 10)
    assert post.token_remaining == 0


def test_token_map_transfer_conserves(basic_coin):
    tc = basic_coin.contract("BasicCoin")
    inst = init_instance(tc, "bank", {}, "owner1")
    for who in ("alice", "bob"):
        t, binds = enabled_transitions(tc, inst, InputLetter("register", who, ()))[0]
        inst, _, _ = step_instance(tc, inst, t, binds, who)
    before = inst.token_total()
    t, binds = enabled_transitions(
        tc, inst, InputLetter("transfer", "alice", (4, "bob")))[0]
    inst2, _, _ = step_instance(tc, inst, t, binds, "alice")
    assert inst2.env["accounts"].get("alice") == Tok("bank", 6)
    assert inst2.env["accounts"].get("bob") == Tok("bank", 14)
    assert inst2.token_total() == before


# -- timers -------------------------------------------------------------------


def test_timer_state_machine():
    t = timer_set(Timer("off"), 5)
    assert t == Timer("active", 5)
    with pytest.raises(Undef):
        timer_set(t, 3)  # set requires Off
    with pytest.raises(Undef):
        timer_set(Timer("off"), 0)  # positive duration
    fired = timer_advance(t, 5)
    assert fired == Timer("fired")
    # Fired -> reset -> set(b)
    assert timer_set(timer_reset(fired), 7) == Timer("active", 7)


def test_has_fired_predicate(auction):
    _, inst = auction_instance(auction)
    assert ev(auction, inst, "Timer.has_fired(tmr)") is False
    assert ev(auction, inst, "Timer.is_off(tmr)") is True
    assert ev(auction, inst, "Timer.value(tmr)") is UNDEFINED


@pytest.mark.parametrize("delta", range(1, 7))
def test_advance_boundary_oracle(delta):
    """Fired iff delta >= k, independently enumerated."""
    t = Timer("active", 5)
    out = timer_advance(t, delta)
    if delta >= 5:
        assert out == Timer("fired")
    else:
        assert out == Timer("active", 5 - delta)


def test_all_timers_advance_together():
    prog = typecheck(parse_program("""
contract TwoTimers() {
  msg go;
  var t1, t2: timer;
  initial S;
  state S:
  | a??go -> S { Timer.set(t1, 3); Timer.set(t2, 7); }
}
"""))
    tc = prog.contract("TwoTimers")
    inst = init_instance(tc, "x", {}, "a")
    t, binds = enabled_transitions(tc, inst, InputLetter("go", "a", ()))[0]
    inst, _, _ = step_instance(tc, inst, t, binds, "a")
    inst = advance_instance(inst, 4)
    assert inst.env["t1"] == Timer("fired")
    assert inst.env["t2"] == Timer("active", 3)


def test_timer_monotone_never_reactivates():
    for start in (Timer("off"), Timer("fired")):
        assert timer_advance(start, 3) == start


# -- guards and enabledness ---------------------------------------------------


def test_owner_guard(auction):
    tc, inst = auction_instance(auction)
    assert enabled_transitions(tc, inst, InputLetter("start", "alice", ()))
    assert not enabled_transitions(tc, inst, InputLetter("start", "eve", ()))


def test_notby_beneficiary(auction):
    tc, inst = auction_instance(auction)
    t, binds = enabled_transitions(tc, inst, InputLetter("start", "alice", ()))[0]
    inst, _, _ = step_instance(tc, inst, t, binds, "alice")
    assert enabled_transitions(tc, inst, InputLetter("bid", "bob", (Coin(3),)))
    assert not enabled_transitions(tc, inst, InputLetter("bid", "bene", (Coin(3),)))
    assert not enabled_transitions(tc, inst, InputLetter("bid", "bob", (Coin(0),)))


def test_bid_step_moves_coins_and_emits(auction):
    tc, inst = auction_instance(auction)
    t, binds = enabled_transitions(tc, inst, InputLetter("start", "alice", ()))[0]
    inst, _, _ = step_instance(tc, inst, t, binds, "alice")
    # source-level transition: executes atomically with the refund send
    bid = [t for t in tc.transitions if t.msg == "bid"][0]
    binds = {"a": "bob", "c": Coin(4)}
    inst2, outputs, logs = step_instance(tc, inst, bid, binds, "bob")
    assert inst2.env["maxBid"] == Coin(4)
    assert inst2.env["maxBidder"] == "bob"
    assert len(outputs) == 1 and outputs[0].msg == "bid_lost"
    assert outputs[0].args[0] == Coin(0)  # dethroned nobody


def test_winner_send_zeroes_the_coin(auction):
    tc, inst = auction_instance(auction, bt=2)
    t, binds = enabled_transitions(tc, inst, InputLetter("start", "alice", ()))[0]
    inst, _, _ = step_instance(tc, inst, t, binds, "alice")
    bid = [t for t in tc.transitions if t.msg == "bid"][0]
    inst, _, _ = step_instance(tc, inst, bid, {"a": "bob", "c": Coin(4)}, "bob")
    inst = advance_instance(inst, 2)
    timeout = [t for t in tc.transitions if t.input is None][0]
    inst2, outputs, _ = step_instance(tc, inst, timeout, {}, None)
    assert outputs[0].msg == "winner"
    assert outputs[0].args[0] == Coin(4)
    assert inst2.env["maxBid"] == Coin(0)


def test_empty_action_changes_only_skeleton(etherstore):
    tc = etherstore.contract("Etherstore")
    inst = init_instance(tc, "e", {}, "d")
    inst.skeleton = "GaveWithdrawal"
    t = [t for t in tc.transitions if t.source == "GaveWithdrawal"][0]
    inst2, outputs, logs = step_instance(tc, inst, t, {}, None)
    assert inst2.skeleton == "AcceptDeposit"
    assert not outputs and not logs
    assert inst2.env == inst.env


# -- conservation properties over random actions ------------------------------


COIN_VARS = ["bank", "reserve", "pot"]


@st.composite
def random_action(draw):
    """A small well-typed action over three coin vars plus one coin binder."""
    stmts = []
    for _ in range(draw(st.integers(0, 5))):
        kind = draw(st.sampled_from(["move", "moveall", "if"]))
        src = draw(st.sampled_from(COIN_VARS + ["c"]))
        dst = draw(st.sampled_from(COIN_VARS))
        if kind == "move":
            stmts.append(f"Coin.move({src}, {draw(st.integers(0, 6))}, {dst})")
        elif kind == "moveall":
            stmts.append(f"Coin.moveall({src}, {dst})")
        else:
            inner = f"Coin.moveall({src}, {dst})"
            stmts.append(f"if Coin.value({src}) > {draw(st.integers(0, 3))} then {inner}")
    stmts.append("Coin.moveall(c, bank)")  # keep the binder consumed
    return "; ".join(stmts)


@settings(max_examples=120, deadline=None)
@given(action=random_action(), amount=st.integers(0, 9))
def test_coin_conservation_per_step(action, amount):
    src = f"""
contract R() {{
  msg pay(coin);
  var bank, reserve, pot: coin;
  initial S;
  state S:
  | a??pay(c) -> S {{ {action}; }}
}}
"""
    prog = typecheck(parse_program(src))
    tc = prog.contract("R")
    inst = init_instance(tc, "r", {}, "a")
    inst.env["reserve"] = Coin(3)
    before = inst.coin_total()
    letter = InputLetter("pay", "x", (Coin(amount),))
    enabled = enabled_transitions(tc, inst, letter)
    t, binds = enabled[0]
    res = step_instance(tc, inst, t, binds, "x")
    if res is UNDEFINED:
        assert inst.coin_total() == before  # untouched on undefined steps
        return
    inst2, outputs, _ = res
    emitted = sum(a.value for o in outputs for a in o.args if isinstance(a, Coin))
    assert inst2.coin_total() + emitted == before + amount


# -- container updates and ownership -------------------------------------------


def test_seq_and_tuple_updates():
    prog = typecheck(parse_program("""
contract Seqs() {
  msg push(nat), put(nat, nat);
  var xs: seq[nat];
  var pair: tuple[nat, address];
  initial S;
  state S:
  | a??push(n) -> S { Seq.append(xs, n); Tuple.set(pair, 0, n); }
  | a??put(i, n) -> S { Seq.set(xs, i, n); }
}
"""))
    tc = prog.contract("Seqs")
    inst = init_instance(tc, "s", {}, "al")
    t, b = enabled_transitions(tc, inst, InputLetter("push", "al", (7,)))[0]
    inst, _, _ = step_instance(tc, inst, t, b, "al")
    assert inst.env["xs"].items == [7]
    assert inst.env["pair"].items[0] == 7
    t, b = enabled_transitions(tc, inst, InputLetter("put", "al", (0, 9)))[0]
    inst2, _, _ = step_instance(tc, inst, t, b, "al")
    assert inst2.env["xs"].items == [9]
    # out-of-bounds update is undefined and leaves the instance unchanged
    t, b = enabled_transitions(tc, inst2, InputLetter("put", "al", (5, 1)))[0]
    assert step_instance(tc, inst2, t, b, "al") is UNDEFINED
    assert inst2.env["xs"].items == [9]


def test_change_owner_semantics():
    prog = typecheck(parse_program("""
contract Owned() {
  msg handover(address);
  initial S;
  state S:
  | a??handover(next) -> S { Address.change_owner(next); }
}
"""))
    tc = prog.contract("Owned")
    inst = init_instance(tc, "o", {}, "alice")
    assert inst.owner == "alice"
    t, b = enabled_transitions(tc, inst, InputLetter("handover", "alice", ("bob",)))[0]
    inst2, _, _ = step_instance(tc, inst, t, b, "alice")
    assert inst2.owner == "bob" and inst2.creator == "alice"
    # only the current owner may hand over; never to none
    t, b = enabled_transitions(tc, inst2, InputLetter("handover", "alice", ("eve",)))[0]
    assert step_instance(tc, inst2, t, b, "alice") is UNDEFINED
    t, b = enabled_transitions(tc, inst2, InputLetter("handover", "bob", ("none",)))[0]
    from asp.values import ADDR_NONE
    b["next"] = ADDR_NONE
    assert step_instance(tc, inst2, t, b, "bob") is UNDEFINED
