"""Proof pipeline: sketches, VC generation, bounded discharge, searches."""
import itertools

import pytest

from asp.diagnostics import SketchError
from asp.discharge import (
    Counterexample, DomainBounds, Valid, discharge_bounded, discharge_naive,
    replay_counterexample,
)
from asp.parser import parse_program
from asp.prove import check_proof, game_solve, reach_search
from asp.sketch import parse_proof_sketch
from asp.typecheck import typecheck
from asp.vcgen import generate_vcs
from conftest import load

BOUNDS = DomainBounds(addresses=3, nat_max=4, timer_max=4)
SMALL = DomainBounds(addresses=2, nat_max=2, timer_max=2)


@pytest.fixture(scope="module")
def refund_sketch(auction):
    return parse_proof_sketch(load("auction_refunds.aspproof"), auction)


@pytest.fixture(scope="module")
def closed_sketch(auction):
    return parse_proof_sketch(load("auction_closed.aspproof"), auction)


# -- sketch parsing -----------------------------------------------------------


def test_refund_sketch_shape(refund_sketch):
    assert refund_sketch.kind == "safety"
    assert len(refund_sketch.always) == 4
    assert set(refund_sketch.at) == {"StartAuction", "AuctionOpen"}
    assert refund_sketch.reject is None


def test_closed_sketch_shape(closed_sketch):
    sk = closed_sketch
    assert sk.kind == "reachability"
    assert sk.rank_len == 2
    assert set(sk.goal) == {"AuctionClosed"}
    assert [len(sk.rank[s]) for s in ("StartAuction", "AuctionOpen", "AuctionClosed")] \
        == [1, 2, 1]
    # declaration order is significant: fired case first
    first, second = sk.rank["AuctionOpen"]
    assert "has_fired" in str(first.cond)
    assert "is_active" in str(second.cond)


def test_empty_sketch_rejected(auction):
    with pytest.raises(SketchError):
        parse_proof_sketch("safety nothing { }", auction)


def test_unknown_state_label(auction):
    with pytest.raises(SketchError):
        parse_proof_sketch("safety s { @Nowhere true }", auction)


def test_rank_length_mismatch(auction):
    bad = """
reachability r(2) {
  goal = { @AuctionClosed true }
  rank = { @StartAuction | (1) }
}
"""
    with pytest.raises(SketchError):
        parse_proof_sketch(bad, auction)


def test_undeclared_variable(auction):
    with pytest.raises(Exception):
        parse_proof_sketch("safety s { always missing == 0 }", auction)


# -- VC generation ------------------------------------------------------------


def test_safety_vc_count(auction, refund_sketch):
    vcs = generate_vcs(auction, refund_sketch)
    kinds = [vc.kind for vc in vcs]
    # one per source transition plus one time obligation per state of this
    # timer-bearing contract, plus initiality
    assert kinds.count("Initiality") == 1
    assert kinds.count("Inductiveness") == len(
        auction.contract("SimpleAuction").transitions) + 3
    assert kinds.count("Sufficiency") == 0  # no reject clause


def test_reachability_vc_kinds(auction, closed_sketch):
    vcs = generate_vcs(auction, closed_sketch)
    kinds = {vc.kind for vc in vcs}
    assert kinds == {"Initiality", "RankDefined", "Enabledness", "RankDecrease"}


def test_sufficiency_generated_with_reject(auction):
    sk = parse_proof_sketch("""
safety no_bene_refund_early {
  always Map.get(refunded, beneficiary) >= 0
  reject = Map.get(refunded, beneficiary) < 0
}
""", auction)
    vcs = generate_vcs(auction, sk)
    assert sum(1 for vc in vcs if vc.kind == "Sufficiency") == 3
    rep = check_proof(auction, sk, SMALL)
    assert rep.valid


# -- proof verdicts -----------------------------------------------------------


def test_refund_proof_valid(auction, refund_sketch):
    rep = check_proof(auction, refund_sketch, BOUNDS)
    assert rep.valid, rep.to_json()


def test_refund_mutant_counterexample_replays():
    prog = typecheck(parse_program(load("auction_norefund.asp")))
    sk = parse_proof_sketch(load("auction_refunds.aspproof"), prog)
    rep = check_proof(prog, sk, BOUNDS)
    assert not rep.valid
    cexs = [r for r in rep.results if isinstance(r.result, Counterexample)]
    assert any("bid@" in r.vc.name for r in cexs)
    for r in cexs:
        assert replay_counterexample(r.vc, BOUNDS, r.result)


def test_reachability_proof_valid(auction, closed_sketch):
    rep = check_proof(auction, closed_sketch, BOUNDS)
    assert rep.valid, rep.to_json()


def test_rank_case_order_matters(auction):
    """Swapping the AuctionOpen cases makes the active case shadow the
    fired one, so the timeout transition has no defined decrease."""
    swapped = load("auction_closed.aspproof").replace(
        """| (1, 0) if Timer.has_fired(tmr)
      | (1, Timer.value(tmr)) if Timer.is_active(tmr)""",
        """| (1, Timer.value(tmr)) if Timer.is_active(tmr)
      | (1, 0) if Timer.has_fired(tmr)""")
    sk = parse_proof_sketch(swapped, auction)
    rep = check_proof(auction, sk, BOUNDS)
    assert rep.valid  # same cases, disjoint conditions: still fine
    # a genuinely shadowing order: unconditional first
    shadowing = load("auction_closed.aspproof").replace(
        """| (1, 0) if Timer.has_fired(tmr)
      | (1, Timer.value(tmr)) if Timer.is_active(tmr)""",
        """| (1, 1)
      | (1, Timer.value(tmr)) if Timer.is_active(tmr)""")
    sk2 = parse_proof_sketch(shadowing, auction)
    rep2 = check_proof(auction, sk2, BOUNDS)
    assert not rep2.valid


def test_goal_everywhere_trivially_valid(auction):
    sk = parse_proof_sketch("""
reachability anywhere(1) {
  goal = {
    @StartAuction true
    @AuctionOpen true
    @AuctionClosed true
  }
  rank = {
    @StartAuction | (0)
    @AuctionOpen | (0)
    @AuctionClosed | (0)
  }
}
""", auction)
    rep = check_proof(auction, sk, SMALL)
    assert rep.valid


def test_lockout_fixed_valid(vending_fixed):
    sk = parse_proof_sketch(load("vending_lockout.aspproof"), vending_fixed)
    rep = check_proof(vending_fixed, sk, BOUNDS)
    assert rep.valid
    assert rep.failed_states == []


def test_lockout_original_fails_at_choose(vending_original):
    sk = parse_proof_sketch(load("vending_lockout_original.aspproof"),
                            vending_original)
    rep = check_proof(vending_original, sk, BOUNDS)
    assert not rep.valid
    assert "Choose" in rep.failed_states


def test_missing_witness_rejected(auction):
    """StartAuction has no tau transition and no witness: the enabledness
    existential cannot be discharged."""
    no_witness = load("auction_closed.aspproof").replace(
        "@StartAuction a == owner && a != Address.none", "")
    sk = parse_proof_sketch(no_witness, auction)
    prog_no_timer = typecheck(parse_program("""
contract OneShot(boss: address) where boss != Address.none {
  msg go;
  initial A;
  state A:
  | b??go by boss -> B { }
  state B:
}
"""))
    sk2 = parse_proof_sketch("""
reachability done(1) {
  goal = { @B true }
  invariant = { }
  rank = { @A | (1)  @B | (0) }
  witness = { }
}
""", prog_no_timer)
    with pytest.raises(SketchError):
        generate_vcs(prog_no_timer, sk2)


# -- engine agreement (pruning DFS vs raw-product interpreted oracle) ---------


def _agree(prog, sketch, bounds):
    for vc in generate_vcs(prog, sketch):
        fast = discharge_bounded(vc, bounds)
        slow = discharge_naive(vc, bounds)
        assert fast.status == slow.status, (
            f"{vc.name}: engine={fast.status} oracle={slow.status}")


def test_engine_agrees_with_naive_oracle_refunds(auction):
    sk = parse_proof_sketch(load("auction_refunds.aspproof"), auction)
    _agree(auction, sk, SMALL)


def test_engine_agrees_with_naive_oracle_mutant():
    prog = typecheck(parse_program(load("auction_norefund.asp")))
    sk = parse_proof_sketch(load("auction_refunds.aspproof"), prog)
    _agree(prog, sk, SMALL)


def test_engine_agrees_on_reachability(auction):
    sk = parse_proof_sketch(load("auction_closed.aspproof"), auction)
    _agree(auction, sk, SMALL)


def test_engine_agrees_on_lockout(vending_fixed):
    sk = parse_proof_sketch(load("vending_lockout.aspproof"), vending_fixed)
    _agree(vending_fixed, sk, SMALL)


# -- rank well-foundedness ----------------------------------------------------


def test_lexicographic_descent_terminates():
    """No infinite strictly decreasing chain from any tuple <= (5, 5):
    exhaustive descent over the finite domain."""
    space = [(a, b) for a in range(6) for b in range(6)]
    longest = {}

    def depth(t):
        if t in longest:
            return longest[t]
        best = 0
        for u in space:
            if u < t:
                best = max(best, 1 + depth(u))
        longest[t] = best
        return best

    assert depth((5, 5)) == len(space) - 1  # finite, hence well-founded


# -- independent searches -----------------------------------------------------


def test_reach_search_confirms_closing(auction):
    sk = parse_proof_sketch(load("auction_closed.aspproof"), auction)
    rep = reach_search(auction, sk, SMALL,
                       {"beneficiary": "P0", "bidding_time": 2}, creator="P1")
    assert rep.ok, rep.reason


def test_reach_search_detects_nonclosing():
    prog = typecheck(parse_program("""
contract Loop() {
  msg go;
  initial A;
  state A:
  | x??go -> A { }
  state B:
}
"""))
    sk = parse_proof_sketch("""
reachability stuck(1) {
  goal = { @B true }
  rank = { @A | (1)  @B | (0) }
  witness = { @A x != Address.none }
}
""", prog)
    rep = reach_search(prog, sk, SMALL, {})
    assert not rep.ok


def test_game_search_confirms_both_verdicts(vending_fixed, vending_original):
    skf = parse_proof_sketch(load("vending_lockout.aspproof"), vending_fixed)
    g = game_solve(vending_fixed, skf, SMALL, {})
    assert g.ok
    sko = parse_proof_sketch(load("vending_lockout_original.aspproof"),
                             vending_original)
    g2 = game_solve(vending_original, sko, SMALL, {})
    assert not g2.ok
    assert g2.losing_state == "Choose"
