import random

import pytest

from modelgen import (
    balanced_machine, bf_entry_chain, bf_exit_chain, bf_lca, bf_substates,
    random_machine,
)
from smd2cpn.statemachine import (
    COMPOSITE, FINAL, SIMPLE,
    Behaviour, NotAnAncestorError, StateMachine, StateNode, Transition,
    UnknownStateError, Variable, validate,
)
from smd2cpn import expr as ex


def node(id, kind=SIMPLE, parent=None, **kw):
    return StateNode(id=id, name=id, kind=kind, parent=parent, **kw)


@pytest.fixture
def three_level():
    # root > A > {B, C > {D}}
    return StateMachine(name="M", states=(
        node("A", COMPOSITE, is_initial=True),
        node("B", parent="A", is_initial=True),
        node("C", COMPOSITE, parent="A"),
        node("D", parent="C", is_initial=True),
    ))


# ---------------------------------------------------------------------------
# validate


def test_corpus_cd_player_is_clean(cd_model):
    assert validate(cd_model).ok


def test_duplicate_state_name_reported():
    machine = StateMachine(name="M", states=(
        node("A", is_initial=True), StateNode(id="A2", name="A", kind=SIMPLE)))
    report = validate(machine)
    codes = {v.code for v in report.violations}
    assert "duplicate-name" in codes
    assert any("A" in v.message for v in report.violations)


def test_composite_without_initial_child_reported():
    machine = StateMachine(name="M", states=(
        node("A", COMPOSITE, is_initial=True),
        node("B", parent="A"),  # no initial mark
    ))
    report = validate(machine)
    assert any(v.code == "initial-count" and v.element == "A"
               for v in report.violations)


@pytest.mark.parametrize("states,transitions,code", [
    # two initials at root
    ((node("A", is_initial=True), node("B", is_initial=True)), (), "initial-count"),
    # parent missing
    ((node("A", is_initial=True), node("B", parent="ghost")), (), "unknown-parent"),
    # simple with children
    ((node("A", is_initial=True), node("B"), node("C", parent="B")),
     (), "simple-with-children"),
    # final as source
    ((node("A", is_initial=True),
      StateNode(id=".final", name=".final", kind=FINAL)),
     (Transition(id="t", source=".final", target="A"),), "final-with-outgoing"),
    # history on a simple state
    ((node("A", is_initial=True, has_history=True),), (), "history-on-simple"),
    # history target without history
    ((node("A", COMPOSITE, is_initial=True), node("B", parent="A", is_initial=True),
      node("C")),
     (Transition(id="t", source="C", target="A", to_history=True),),
     "bad-history-target"),
    # reserved NONE child name inside a history composite
    ((node("A", COMPOSITE, is_initial=True, has_history=True),
      StateNode(id="NONE", name="NONE", kind=SIMPLE, parent="A", is_initial=True)),
     (), "reserved-name"),
    # undeclared variable in a guard
    ((node("A", is_initial=True), node("B")),
     (Transition(id="t", source="A", target="B",
                 guard=ex.Cmp("<", ex.VarRead("ghost"), ex.IntLit(1))),),
     "undeclared-variable"),
])
def test_single_violations_are_caught(states, transitions, code):
    report = validate(StateMachine(name="M", states=states, transitions=transitions))
    assert any(v.code == code for v in report.violations), report


def test_parent_cycle_detected():
    machine = StateMachine(name="M", states=(
        StateNode(id="A", name="A", kind=COMPOSITE, parent="B", is_initial=True),
        StateNode(id="B", name="B", kind=COMPOSITE, parent="A"),
    ))
    assert any(v.code == "parent-cycle" for v in validate(machine).violations)


def test_final_with_behaviour_and_multiple_finals():
    machine = StateMachine(name="M", states=(
        node("A", COMPOSITE, is_initial=True),
        node("B", parent="A", is_initial=True),
        StateNode(id="A.final", name="A.final", kind=FINAL, parent="A",
                  entry=Behaviour("x", "boom")),
        StateNode(id="A.final2", name="A.final2", kind=FINAL, parent="A"),
    ))
    codes = {v.code for v in validate(machine).violations}
    assert "final-with-behaviour" in codes
    assert "multiple-finals" in codes


def test_validate_accepts_iff_no_injected_violation():
    clean = StateMachine(name="M", states=(
        node("A", COMPOSITE, is_initial=True),
        node("B", parent="A", is_initial=True)))
    assert validate(clean).ok


# ---------------------------------------------------------------------------
# structural queries


def test_substates_simple_is_itself(cd_model):
    assert cd_model.substates("PLAYING") == ("PLAYING",)


def test_substates_of_busy_excludes_final(cd_model):
    assert cd_model.substates("Busy") == ("PLAYING", "PAUSED")


def test_substates_three_level(three_level):
    # brute-force recursive enumeration gives {B, D}
    assert three_level.substates("A") == ("B", "D")
    assert three_level.substates("A") == bf_substates(three_level, "A")


def test_substates_unknown_reference(cd_model):
    with pytest.raises(UnknownStateError):
        cd_model.substates("GHOST")


@pytest.fixture
def exit_machine():
    # D(exit e1) < C(exit e2) < A(no exit)
    return StateMachine(name="M", states=(
        node("A", COMPOSITE, is_initial=True),
        node("C", COMPOSITE, parent="A", is_initial=True,
             exit=Behaviour("C.exit", "e2")),
        node("D", parent="C", is_initial=True, exit=Behaviour("D.exit", "e1")),
    ))


def test_exit_chain_collects_innermost_first(exit_machine):
    assert [b.label for b in exit_machine.exit_chain("D", "A")] == ["e1", "e2"]


def test_exit_chain_boundary_inclusive(exit_machine):
    assert [b.label for b in exit_machine.exit_chain("D", "C")] == ["e1", "e2"]


def test_exit_chain_empty_when_no_behaviours(cd_model):
    assert cd_model.exit_chain("PLAYING", "PLAYING") == ()


def test_exit_chain_rejects_non_ancestor(exit_machine):
    with pytest.raises(NotAnAncestorError):
        exit_machine.exit_chain("A", "D")


def test_entry_chain_examples(cd_model):
    assert [b.label for b in cd_model.entry_chain("Busy", "Busy")] == ["FTS"]
    assert cd_model.entry_chain("PLAYING", "PLAYING") == ()


def test_entry_chain_outermost_first():
    machine = StateMachine(name="M", states=(
        node("A", COMPOSITE, is_initial=True, entry=Behaviour("A.entry", "a")),
        node("C", COMPOSITE, parent="A", is_initial=True,
             entry=Behaviour("C.entry", "c")),
        node("D", parent="C", is_initial=True),
    ))
    assert [b.label for b in machine.entry_chain("A", "D")] == ["a", "c"]


def test_lca_examples(cd_model):
    assert cd_model.lca("PLAYING", "PAUSED") == "Busy"
    assert cd_model.lca("PLAYING", "PLAYING") == "PLAYING"
    assert cd_model.lca("PLAYING", "OPEN") is None  # root region


def test_default_configuration(cd_model, three_level):
    assert cd_model.default_configuration("Busy") == "PLAYING"
    assert cd_model.default_configuration("NONPLAYING") == "CLOSED"
    assert three_level.default_configuration("A") == "B"
    assert three_level.default_configuration(None) == "B"


def test_default_configuration_three_level_chain():
    machine = StateMachine(name="M", states=(
        node("A", COMPOSITE, is_initial=True),
        node("C", COMPOSITE, parent="A", is_initial=True),
        node("D", parent="C", is_initial=True),
    ))
    assert machine.default_configuration("A") == "D"


# ---------------------------------------------------------------------------
# properties on random hierarchies


def test_queries_agree_with_brute_force():
    rng = random.Random(42)
    for _ in range(60):
        machine = random_machine(rng, max_states=40)
        states = [s.id for s in machine.states]
        for sid in states:
            if machine.state(sid).kind != FINAL:
                assert machine.substates(sid) == bf_substates(machine, sid)
        sample = rng.sample(states, min(6, len(states)))
        for a in sample:
            for b in sample:
                assert machine.lca(a, b) == bf_lca(machine, a, b)
                assert machine.lca(a, b) == machine.lca(b, a)
            assert machine.lca(a, a) == a
        for sid in sample:
            for boundary in machine.ancestors_or_self(sid):
                assert (machine.exit_chain(sid, boundary)
                        == bf_exit_chain(machine, sid, boundary))
                assert (machine.entry_chain(boundary, sid)
                        == bf_entry_chain(machine, boundary, sid))


def test_substates_disjoint_union_invariant():
    rng = random.Random(7)
    for _ in range(40):
        machine = random_machine(rng, max_states=40)
        for s in machine.states:
            if s.kind != COMPOSITE:
                continue
            union = []
            for child in machine.children[s.id]:
                if child.kind != FINAL:
                    union.extend(machine.substates(child.id))
            assert sorted(union) == sorted(machine.substates(s.id))
            assert len(union) == len(set(union))  # disjoint


def test_chain_path_symmetry():
    # exit-chain owners reversed == entry-chain owners, when every state
    # carries both behaviours (labels encode the owning state)
    rng = random.Random(99)
    for _ in range(30):
        machine = random_machine(rng, max_states=30, all_chained=True)
        states = [s.id for s in machine.states if s.kind != FINAL]
        for sid in rng.sample(states, min(5, len(states))):
            for boundary in machine.ancestors_or_self(sid):
                exits = [b.label[3:] for b in machine.exit_chain(sid, boundary)]
                entries = [b.label[3:] for b in machine.entry_chain(boundary, sid)]
                assert list(reversed(exits)) == entries


class CountingDict(dict):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.reads = 0

    def get(self, *a, **kw):
        self.reads += 1
        return super().get(*a, **kw)


def test_substates_cost_linear_in_subtree():
    machine = balanced_machine(depth=9, branching=2, with_behaviours=False,
                               with_transitions=False)  # 1023 states
    assert len(machine.states) == 1023
    machine.children  # build the caches before instrumenting
    machine.document_position
    counter = CountingDict(machine.children)
    object.__setattr__(machine, "children", counter)
    machine.__dict__["children"] = counter

    full = machine.substates("N")
    full_reads = counter.reads
    assert len(full) == 512
    # one children lookup per composite visited
    assert full_reads <= 1023 + 5

    counter.reads = 0
    sub = machine.substates("N_0_0")  # subtree with 128 leaves, 255 nodes
    assert len(sub) == 128
    assert counter.reads <= 255 + 5, "cost must follow the subtree, not the machine"
