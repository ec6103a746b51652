import random
from collections import Counter

import pytest

from smd2cpn import expr as ex
from smd2cpn.net import (
    UNIT_TOKEN, ColouredNet, EnumCS, IntCS, NetError, NotEnabledError,
    OutInt, OutLit, OutTuple, OutVar, PatLit, PatTuple, PatVar, PlaceDef,
    ProductCS, TransDef, UnitCS, PTOT, TTOP,
    enabled_bindings, explore, fire, marking_key, normalise_marking,
)
from smd2cpn.oracle import enabled_transitions, initial_configuration, inject


def unit_net():
    net = ColouredNet(name="n")
    net.colours["UNIT"] = UnitCS()
    return net


def test_vacuous_transition_has_empty_binding():
    net = unit_net()
    net.add_transition(TransDef("t", "t"))
    assert enabled_bindings(net, {}, "t") == [{}]


def test_guard_failure_blocks_binding():
    net = ColouredNet(name="n")
    net.colours["INT"] = IntCS()
    net.add_place(PlaceDef("p", "p", "INT", (3,)))
    net.add_transition(TransDef("t", "t",
                                guard=ex.Cmp(">", ex.VarRead("x"), ex.IntLit(5))))
    net.add_arc("p", "t", PTOT, PatVar("x"))
    assert enabled_bindings(net, net.initial_marking(), "t") == []


def test_binding_join_across_arcs():
    net = ColouredNet(name="n")
    net.colours["INT"] = IntCS()
    net.add_place(PlaceDef("p1", "p1", "INT", (1, 2)))
    net.add_place(PlaceDef("p2", "p2", "INT", (2, 3)))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("p1", "t", PTOT, PatVar("x"))
    net.add_arc("p2", "t", PTOT, PatVar("x"))
    assert enabled_bindings(net, net.initial_marking(), "t") == [{"x": 2}]


def test_multiset_demand_needs_enough_copies():
    net = ColouredNet(name="n")
    net.colours["INT"] = IntCS()
    net.add_place(PlaceDef("p", "p", "INT", (7,)))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("p", "t", PTOT, PatVar("x"))
    net.add_arc("p", "t", PTOT, PatVar("y"))
    assert enabled_bindings(net, net.initial_marking(), "t") == []
    two = {"p": Counter({7: 2})}
    assert enabled_bindings(net, two, "t") == [{"x": 7, "y": 7}]


def test_fire_moves_token_and_checks_enabledness():
    net = unit_net()
    net.add_place(PlaceDef("a", "a", "UNIT", (UNIT_TOKEN,)))
    net.add_place(PlaceDef("b", "b", "UNIT", ()))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("a", "t", PTOT, PatLit(UNIT_TOKEN))
    net.add_arc("b", "t", TTOP, OutLit(UNIT_TOKEN))
    after = fire(net, net.initial_marking(), "t", {})
    assert after == {"b": Counter({UNIT_TOKEN: 1})}
    with pytest.raises(NotEnabledError):
        fire(net, after, "t", {})


def test_fire_is_local():
    net = unit_net()
    for pid in ("a", "b", "far"):
        net.add_place(PlaceDef(pid, pid, "UNIT", (UNIT_TOKEN,)))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("a", "t", PTOT, PatLit(UNIT_TOKEN))
    net.add_arc("b", "t", TTOP, OutLit(UNIT_TOKEN))
    after = fire(net, net.initial_marking(), "t", {})
    assert after["far"] == Counter({UNIT_TOKEN: 1})


def test_output_outside_colour_raises():
    net = ColouredNet(name="n")
    net.colours["E"] = EnumCS(("a", "b"))
    net.colours["INT"] = IntCS()
    net.add_place(PlaceDef("p", "p", "INT", (1,)))
    net.add_place(PlaceDef("q", "q", "E", ()))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("p", "t", PTOT, PatVar("x"))
    net.add_arc("q", "t", TTOP, OutVar("x"))  # int token into an enum place
    with pytest.raises(NetError):
        fire(net, net.initial_marking(), "t", {"x": 1})


def test_product_patterns_and_computed_outputs():
    net = ColouredNet(name="n")
    net.colours["INT"] = IntCS()
    net.colours["V"] = ProductCS((IntCS(), IntCS()))
    net.add_place(PlaceDef("v", "v", "V", ((2, 5),)))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("v", "t", PTOT, PatTuple((PatVar("a"), PatVar("b"))))
    net.add_arc("v", "t", TTOP, OutTuple((
        OutInt(ex.BinOp("+", ex.VarRead("a"), ex.VarRead("b"))), OutVar("a"))))
    (binding,) = enabled_bindings(net, net.initial_marking(), "t")
    after = fire(net, net.initial_marking(), "t", binding)
    assert after == {"v": Counter({(7, 2): 1})}


def test_token_balance_on_random_unit_nets():
    # transitions with equal in/out arc counts preserve the token total
    rng = random.Random(5)
    for _ in range(25):
        net = unit_net()
        places = [f"p{i}" for i in range(rng.randint(2, 6))]
        for pid in places:
            net.add_place(PlaceDef(pid, pid, "UNIT",
                                   (UNIT_TOKEN,) * rng.randint(0, 3)))
        for t in range(rng.randint(1, 5)):
            tid = f"t{t}"
            net.add_transition(TransDef(tid, tid))
            degree = rng.randint(1, 3)
            for _ in range(degree):
                net.add_arc(rng.choice(places), tid, PTOT, PatLit(UNIT_TOKEN))
                net.add_arc(rng.choice(places), tid, TTOP, OutLit(UNIT_TOKEN))
        marking = net.initial_marking()
        total = sum(sum(c.values()) for c in marking.values())
        for _ in range(30):
            moves = [(tid, b) for tid in sorted(net.transitions)
                     for b in enabled_bindings(net, marking, tid)]
            if not moves:
                break
            tid, binding = rng.choice(moves)
            marking = fire(net, marking, tid, binding)
            assert sum(sum(c.values()) for c in marking.values()) == total


def test_enabledness_monotone_in_tokens_without_guards():
    net = ColouredNet(name="n")
    net.colours["E"] = EnumCS(("a", "b"))
    net.add_place(PlaceDef("p", "p", "E", ("a",)))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("p", "t", PTOT, PatVar("x"))
    small = enabled_bindings(net, {"p": Counter({"a": 1})}, "t")
    large = enabled_bindings(net, {"p": Counter({"a": 1, "b": 1})}, "t")
    assert {tuple(b.items()) for b in small} <= {tuple(b.items()) for b in large}


def test_explore_no_enabled_transitions():
    net = unit_net()
    net.add_place(PlaceDef("p", "p", "UNIT", (UNIT_TOKEN,)))
    graph = explore(net)
    assert graph.state_count == 1 and graph.edges == [] and not graph.truncated


def test_explore_self_loop_single_state_single_edge():
    net = unit_net()
    net.add_place(PlaceDef("p", "p", "UNIT", (UNIT_TOKEN,)))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("p", "t", PTOT, PatLit(UNIT_TOKEN))
    net.add_arc("p", "t", TTOP, OutLit(UNIT_TOKEN))
    graph = explore(net)
    assert graph.state_count == 1
    assert graph.edges == [(0, "t", (), 0)]


def test_explore_is_deterministic(cd_net):
    net, _ = cd_net
    one = explore(net, bound=2000)
    two = explore(net, bound=2000)
    assert [marking_key(m) for m in one.states] == [marking_key(m) for m in two.states]
    assert one.edges == two.edges
    assert one.truncated and two.truncated  # 2000 < full reachable set


def test_explore_truncation_flag():
    net = ColouredNet(name="n")
    net.colours["INT"] = IntCS()
    net.add_place(PlaceDef("p", "p", "INT", (0,)))
    net.add_transition(TransDef("t", "t"))
    net.add_arc("p", "t", PTOT, PatVar("x"))
    net.add_arc("p", "t", TTOP, OutInt(ex.BinOp("+", ex.VarRead("x"), ex.IntLit(1))))
    graph = explore(net, bound=10)
    assert graph.truncated and graph.state_count == 10


def test_reachable_markings_respect_colours(corpus_nets):
    net, _ = corpus_nets["guarded"]
    graph = explore(net)
    for marking in graph.states:
        for pid, tokens in marking.items():
            colour = net.colour_of(pid)
            for value in tokens:
                assert colour.contains(value)


# ---------------------------------------------------------------------------
# cross-checks against the interpreter on the CD net


def test_cd_initially_enabled_dispatches_match_oracle(cd_model, cd_net):
    net, tmap = cd_net
    marking = normalise_marking(net.initial_marking())
    enabled_net = sorted(tmap.dispatch[tid]
                         for tid in tmap.dispatch
                         if enabled_bindings(net, marking, tid))
    config = initial_configuration(cd_model)
    enabled_smd = sorted(tid for tid, _ in enabled_transitions(cd_model, config))
    assert enabled_net == enabled_smd == []

    # after injecting `play` exactly t1 becomes fireable on both sides
    with_play = fire(net, marking, "T_env_play", {})
    enabled_net = sorted({tmap.dispatch[tid]
                          for tid in tmap.dispatch
                          if enabled_bindings(net, with_play, tid)})
    config = inject(cd_model, config, "play", 1)
    enabled_smd = sorted({tid for tid, _ in enabled_transitions(cd_model, config)})
    assert enabled_net == enabled_smd == ["t1"]


def test_cd_fts_consumes_inflight_and_marks_playing(cd_net):
    net, tmap = cd_net
    marking = normalise_marking(net.initial_marking())
    marking = fire(net, marking, "T_env_play", {})
    marking = fire(net, marking, "T_t1__from_CLOSED", {})
    assert marking["P_t1_0"] == Counter({UNIT_TOKEN: 1})  # token in flight
    (binding,) = enabled_bindings(net, marking, "T_t1_beh_0")
    assert net.transitions["T_t1_beh_0"].observable_label == "FTS"
    marking = fire(net, marking, "T_t1_beh_0", binding)
    assert "P_t1_0" not in marking
    assert marking["P_PLAYING"] == Counter({UNIT_TOKEN: 1})


def test_cd_reachable_count_matches_frozen_hand_values(corpus_nets, expectations):
    net, _ = corpus_nets["flat"]
    graph = explore(net)
    assert graph.state_count == expectations["flat"]["reachable_states"]
    assert len(graph.edges) == expectations["flat"]["reachable_edges"]
    net3, _ = corpus_nets["nested3"]
    assert explore(net3).state_count == expectations["nested3"]["reachable_states"]
