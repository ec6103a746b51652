import pytest

import mutations
from smd2cpn.net import normalise_marking
from smd2cpn.oracle import (
    NetRunner, NotEnabledStepError, StabilisationError,
    check_control_safety, check_trace_equivalence, enabled_transitions,
    format_counterexample, initial_configuration, inject, step,
)
from smd2cpn.smdl import parse
from smd2cpn.statemachine import NO_HISTORY, StateMachine
from smd2cpn.translator import translate


def drive(model, config, *script):
    """Alternate inject/step instructions: ('in', event) or ('do', tid)."""
    labels = []
    for kind, arg in script:
        if kind == "in":
            config = inject(model, config, arg, 1)
            assert config is not None, f"injection {arg} at capacity"
        else:
            config, label = step(model, config, arg)
            labels.append(label)
    return config, labels


def test_initial_configuration(cd_model):
    config = initial_configuration(cd_model)
    assert config.active == "CLOSED"
    assert config.valuation_dict() == {"track": 1}
    assert config.history_dict() == {"Busy": NO_HISTORY}
    assert config.pending == ()


def test_initial_configuration_trivial_cases():
    single = parse("machine M { state S initial ; }")
    assert initial_configuration(single).active == "S"
    with_var = parse("machine M { var x : int = 5 ; state S initial ; }")
    assert initial_configuration(with_var).valuation_dict() == {"x": 5}


def test_step_into_busy_runs_fts_first(cd_model):
    config = initial_configuration(cd_model)
    config, labels = drive(cd_model, config, ("in", "play"), ("do", "t1"))
    assert labels[0].behaviours[0] == "FTS"
    assert labels[0].event == "play"
    assert config.active == "PLAYING"


def test_sibling_step_has_no_behaviours(cd_model):
    config, labels = drive(cd_model, initial_configuration(cd_model),
                           ("in", "play"), ("do", "t1"),
                           ("in", "pause"), ("do", "t2"))
    assert labels[-1].behaviours == ()
    assert config.active == "PAUSED"


def test_history_reentry_restores_paused(cd_model):
    config, labels = drive(
        cd_model, initial_configuration(cd_model),
        ("in", "play"), ("do", "t1"),      # CLOSED -> PLAYING (FTS)
        ("in", "pause"), ("do", "t2"),     # -> PAUSED
        ("in", "stop"), ("do", "t4"),      # -> CLOSED, memory = PAUSED, Reset
        ("in", "open"), ("do", "t5"),      # -> OPEN
        ("in", "play"), ("do", "t7"))      # resume via history
    assert config.active == "PAUSED"
    assert labels[-1].behaviours == ("FTS",)
    assert config.history_dict()["Busy"] == "PAUSED"


def test_completion_resets_history_memory(cd_model):
    config, labels = drive(
        cd_model, initial_configuration(cd_model),
        ("in", "play"), ("do", "t1"),
        ("in", "last"), ("do", "t10"),     # enter Busy's final state
        ("do", "t11"))                      # completion, spontaneous
    assert config.active == "CLOSED"
    assert config.history_dict()["Busy"] == NO_HISTORY
    assert labels[-2].active == "Busy.final"


def test_effect_and_guard(cd_model):
    config, labels = drive(
        cd_model, initial_configuration(cd_model),
        ("in", "play"), ("do", "t1"),
        ("in", "next"), ("do", "t9"))
    assert labels[-1].behaviours == ("NextTrack",)
    assert config.valuation_dict() == {"track": 2}
    # at track = 3 the guard shuts t9 off
    config, _ = drive(cd_model, config,
                      ("in", "next"), ("do", "t9"))
    assert config.valuation_dict() == {"track": 3}
    config = inject(cd_model, config, "next", 1)
    enabled = {tid for tid, _ in enabled_transitions(cd_model, config)}
    assert "t9" not in enabled


def test_enabled_transitions_respect_triggers(corpus_models):
    model = corpus_models["guarded"]
    config = initial_configuration(model)
    assert enabled_transitions(model, config) == []  # nothing pending
    config = inject(model, config, "flip", 1)
    assert enabled_transitions(model, config) == []  # guard n >= 2 fails
    config = inject(model, config, "tick", 1)
    assert enabled_transitions(model, config) == [("inc", "tick")]


def test_group_transition_only_from_inside(corpus_models):
    model = corpus_models["completion"]
    config = initial_configuration(model)
    config = inject(model, config, "abort", 1)
    assert enabled_transitions(model, config) == []  # not inside Running
    config, _ = drive(model, config, ("in", "start"), ("do", "j1"))
    assert ("j5", "abort") in enabled_transitions(model, config)
    # at the final state only the completion transition remains
    config, _ = drive(model, config,
                      ("in", "work"), ("do", "j2"),
                      ("in", "work"), ("do", "j3"))
    enabled = enabled_transitions(model, config)
    assert ("j4", None) in enabled
    assert all(tid != "j5" for tid, _ in enabled)


def test_step_rejects_disabled_transition(cd_model):
    with pytest.raises(NotEnabledStepError):
        step(cd_model, initial_configuration(cd_model), "t2")


def test_step_is_pure(cd_model):
    config = inject(cd_model, initial_configuration(cd_model), "play", 1)
    one = step(cd_model, config, "t1")
    two = step(cd_model, config, "t1")
    assert one == two


def test_valuation_domain_never_changes(cd_model):
    config, labels = drive(
        cd_model, initial_configuration(cd_model),
        ("in", "play"), ("do", "t1"), ("in", "next"), ("do", "t9"),
        ("in", "stop"), ("do", "t4"))
    assert set(config.valuation_dict()) == {"track"}


def test_chain_length_conservation(corpus_models, corpus_nets):
    # the net fires exactly |exit| + |effect| + |entry| observables per step
    model = corpus_models["nested3"]
    net, tmap = corpus_nets["nested3"]
    runner = NetRunner(net, tmap, model)
    config = inject(model, initial_configuration(model), "go", 1)
    marking = normalise_marking(net.initial_marking())
    marking = dict(runner.injections(marking))["go"]
    (net_label, _), = runner.step_moves(marking)
    _, smd_label = step(model, config, "t_go")
    assert smd_label.behaviours == ("Shutdown", "Boot", "MidUp", "LeafUp")
    assert net_label.behaviours == smd_label.behaviours
    assert net_label.active == smd_label.active


def test_do_loops_present_iff_declared(corpus_models, corpus_nets):
    for name, model in corpus_models.items():
        net, tmap = corpus_nets[name]
        declared = {(s.id, x) for s in model.states if s.do is not None
                    for x in model.substates(s.id)}
        assert set(tmap.do_loop.values()) == declared, name
        for tid, (sid, x) in tmap.do_loop.items():
            place = tmap.state_place[x]
            assert [a.place for a in net.input_arcs(tid)].count(place) == 1
            assert [a.place for a in net.output_arcs(tid)].count(place) == 1
            assert (net.transitions[tid].observable_label
                    == model.by_id[sid].do.label)


# ---------------------------------------------------------------------------
# trace equivalence


def test_single_state_machine_trivially_equivalent():
    model = parse("machine M { state S initial ; }")
    net, tmap = translate(model)
    assert check_trace_equivalence(model, net, tmap, depth=4).equivalent


def test_corpus_models_equivalent(corpus_models, corpus_nets):
    for name in ("flat", "guarded", "history"):
        model = corpus_models[name]
        net, tmap = corpus_nets[name]
        result = check_trace_equivalence(model, net, tmap, depth=5)
        assert result.equivalent, (name, result.counterexample)


def test_deleted_arc_detected_with_counterexample(cd_model, cd_net):
    net, tmap = cd_net
    broken = mutations.delete_arc(net, "P_EVENTS", "T_t2__from_PLAYING", "PtoT")
    result = check_trace_equivalence(cd_model, broken, tmap, depth=8)
    assert not result.equivalent
    assert result.counterexample
    text = format_counterexample(cd_model, result)
    assert "divergence" in text
    # the spurious step fires without consuming an event
    assert result.counterexample[-1][0] == "step"


def test_verdict_independent_of_declaration_order(corpus_models):
    model = corpus_models["guarded"]
    shuffled = StateMachine(name=model.name,
                            states=tuple(reversed(model.states)),
                            transitions=tuple(reversed(model.transitions)),
                            variables=model.variables)
    # reversing sibling/transition declarations must not change the verdict
    for m in (model, shuffled):
        net, tmap = translate(m)
        assert check_trace_equivalence(m, net, tmap, depth=5).equivalent


def test_stuck_chain_raises_stabilisation_error(cd_model, cd_net):
    net, tmap = cd_net
    broken = mutations.delete_arc(net, "P_PAUSED", "T_t2__from_PLAYING", "TtoP")
    with pytest.raises(StabilisationError):
        check_trace_equivalence(cd_model, broken, tmap, depth=6)


def test_control_safety_on_corpus(corpus_nets):
    for name, (net, tmap) in corpus_nets.items():
        if name == "cdplayer":
            continue  # covered by the acceptance suite (larger state space)
        result = check_control_safety(net, tmap)
        assert result.ok and not result.truncated, (name, result.violations)


def test_control_safety_catches_duplicated_control_token(corpus_nets):
    import copy
    from collections import Counter
    from smd2cpn.net import UNIT_TOKEN, PlaceDef
    net, tmap = corpus_nets["flat"]
    broken = copy.deepcopy(net)
    place = broken.places["P_ON"]
    broken.places["P_ON"] = PlaceDef(place.id, place.name, place.colour,
                                     (UNIT_TOKEN,))  # second control token
    result = check_control_safety(broken, tmap)
    assert not result.ok and result.violations
