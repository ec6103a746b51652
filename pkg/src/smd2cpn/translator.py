"""State machine to coloured net translation.

Three passes: states (places, do self-loops, event plumbing, behaviour
occurrence transitions), transitions (dispatches, in-flight places, all
wiring), and history pseudostates (restore fans).  A TranslationMap records
what every model element became, so later tooling (equivalence checking,
safety analysis) never reverse-engineers generated ids.

Generated id scheme:
  P_<stateName>                 activity place of a simple state
  P_<name>__F / P_<name>__H     final / history place of a composite
  P_VARS, P_EVENTS, P_cap_<e>   variable vector, event pool, pool capacity
  T_<t>__from_<x>               dispatch for source substate x
  T_<t>__completion             dispatch consuming the source's final place
  P_<t>_k, T_<t>_beh_k          shared in-flight places / behaviour occurrences
  P_<t>__from_<x>_k, T_<t>__from_<x>_beh_k   per-substate exit prefixes
  P_<t>_hist, T_<t>_restore_<k>[, _beh_j]    history restore fan
  T_env_<e>, T_do_<state>[__at_<x>]          event producer, do self-loop
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from . import expr as ex
from .net import (
    UNIT_TOKEN, ColouredNet, EnumCS, IntCS, OutLit, OutTuple, OutVar,
    PatLit, PatTuple, PatVar, PlaceDef, ProductCS, TransDef, UnitCS,
    PTOT, TTOP, normalise_out,
)
from .statemachine import (
    COMPOSITE, FINAL, NO_HISTORY, SIMPLE,
    Behaviour, StateMachine, Transition, validate,
)


class ModelInvalidError(ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__(str(report))


@dataclass(frozen=True)
class TranslationConfig:
    #: environment-injectable tokens per event (closed-world analysis)
    event_capacity: int = 1
    #: generate one producer transition per event
    include_environment: bool = True

    def __post_init__(self):
        if self.event_capacity < 1:
            raise ValueError("event capacity must be at least 1")


@dataclass
class TranslationMap:
    """Where every model element went in the generated net."""

    state_place: dict[str, str] = field(default_factory=dict)    # simple state -> place
    final_place: dict[Optional[str], str] = field(default_factory=dict)  # region owner -> ^F
    history_place: dict[str, str] = field(default_factory=dict)  # composite -> ^H
    behaviour_trans: dict[tuple, str] = field(default_factory=dict)  # occurrence -> transition
    transition_subnet: dict[str, list[str]] = field(default_factory=dict)  # SMD trans -> nodes
    dispatch: dict[str, str] = field(default_factory=dict)       # net transition -> SMD trans
    producer: dict[str, str] = field(default_factory=dict)       # net transition -> event
    do_loop: dict[str, tuple[str, str]] = field(default_factory=dict)  # net trans -> (state, at)
    capacity_place: dict[str, str] = field(default_factory=dict)  # event -> place
    inflight: set[str] = field(default_factory=set)
    vars_place: Optional[str] = None
    events_place: Optional[str] = None

    def control_places(self) -> set[str]:
        """Places whose total token count is the single locus of control."""
        return (set(self.state_place.values())
                | set(self.final_place.values())
                | set(self.inflight))


# ---------------------------------------------------------------------------
# Route computation: what one SMD transition does, statically


@dataclass
class _Route:
    transition: Transition
    completion: bool
    sources: list[str]                     # dispatch origins (substates / final child)
    prefix: dict[str, tuple[Behaviour, ...]]   # per-source exit behaviours
    shared: tuple[Behaviour, ...]          # effect + entry behaviours, firing order
    history_writes: dict[str, list[tuple[str, str]]]  # per-source (^H composite, value)
    end: tuple                             # ("state", leaf) | ("final", owner) | ("history", c)


def _is_completion(model: StateMachine, t: Transition) -> bool:
    source = model.state(t.source)
    return (t.trigger is None and source.kind == COMPOSITE
            and model.final_child_of(t.source) is not None)


def _boundaries(model: StateMachine, t: Transition):
    """Exit / entry boundary states of the transition (both inclusive).

    Incomparable source and target: the children of their least common
    ancestor.  Ancestor-related (including self-transitions): the outer
    state itself is exited and re-entered.
    """
    scope = model.lca(t.source, t.target)
    if scope == t.source or scope == t.target:
        return scope, scope
    return (model.child_of_containing(scope, t.source),
            model.child_of_containing(scope, t.target))


def _entry_side(model: StateMachine, t: Transition, nb: str):
    """Entry behaviours and chain end for the transition's target side."""
    if t.to_history:
        return model.entry_chain(nb, t.target), ("history", t.target)
    target = model.state(t.target)
    if target.kind == FINAL:
        return model.entry_chain(nb, t.target), ("final", target.parent)
    leaf = t.target if target.kind == SIMPLE else model.default_configuration(t.target)
    return model.entry_chain(nb, leaf), ("state", leaf)


def _history_writes(model: StateMachine, x: str, eb: str) -> list[tuple[str, str]]:
    """^H rewrites for a dispatch leaving leaf x through boundary eb: every
    history composite exited records its active direct child (NONE when the
    region had completed)."""
    writes = []
    path = model.ancestors_or_self(x)
    path = path[: path.index(eb) + 1]
    for sid in path:
        node = model.state(sid)
        if node.has_history:
            child = model.child_of_containing(sid, x) if sid != x else None
            if child is None:
                continue
            child_node = model.state(child)
            value = NO_HISTORY if child_node.kind == FINAL else child_node.name
            writes.append((sid, value))
    return writes


def _route(model: StateMachine, t: Transition) -> _Route:
    eb, nb = _boundaries(model, t)
    entries, end = _entry_side(model, t, nb)
    effect = (t.effect,) if t.effect is not None else ()
    if _is_completion(model, t):
        final_child = model.final_child_of(t.source)
        exits = model.exit_chain(final_child, eb)
        return _Route(
            transition=t, completion=True, sources=[final_child],
            prefix={}, shared=exits + effect + entries,
            history_writes={final_child: _history_writes(model, final_child, eb)},
            end=end)
    sources = list(model.substates(t.source))
    if len(sources) == 1:
        x = sources[0]
        return _Route(
            transition=t, completion=False, sources=sources,
            prefix={}, shared=model.exit_chain(x, eb) + effect + entries,
            history_writes={x: _history_writes(model, x, eb)}, end=end)
    return _Route(
        transition=t, completion=False, sources=sources,
        prefix={x: model.exit_chain(x, eb) for x in sources},
        shared=effect + entries,
        history_writes={x: _history_writes(model, x, eb) for x in sources},
        end=end)


def _restore_branches(model: StateMachine, composite: str):
    """(history value, branch entry behaviours, landing leaf) per restore arm."""
    branches = []
    for child in model.children[composite]:
        if child.kind == FINAL:
            continue
        leaf = child.id if child.kind == SIMPLE else model.default_configuration(child.id)
        branches.append((child.name, model.entry_chain(child.id, leaf), leaf))
    default_leaf = model.default_configuration(composite)
    start = model.child_of_containing(composite, default_leaf)
    branches.append((NO_HISTORY, model.entry_chain(start, default_leaf), default_leaf))
    return branches


# ---------------------------------------------------------------------------
# Pass 1: states


def translate_states(model: StateMachine, config: TranslationConfig,
                     tmap: TranslationMap) -> ColouredNet:
    """Build places, event plumbing, do self-loops, and the (not yet wired)
    behaviour occurrence transitions."""
    net = ColouredNet(name=model.name)
    net.colours["UNIT"] = UnitCS()

    initial_leaf = model.default_configuration(None)
    for s in model.states:
        if s.kind == SIMPLE:
            pid = f"P_{s.name}"
            marking = (UNIT_TOKEN,) if s.id == initial_leaf else ()
            net.add_place(PlaceDef(pid, s.name, "UNIT", marking))
            tmap.state_place[s.id] = pid

    regions = [None] + [s.id for s in model.states if s.kind == COMPOSITE]
    for owner in regions:
        if model.final_child_of(owner) is None:
            continue
        name = model.by_id[owner].name if owner is not None else ""
        pid = f"P_{name}__F"
        net.add_place(PlaceDef(pid, f"{name}^F", "UNIT", ()))
        tmap.final_place[owner] = pid

    for s in model.states:
        if s.has_history:
            colour_name = f"HIST_{s.name}"
            values = tuple(c.name for c in model.children[s.id] if c.kind != FINAL)
            net.colours[colour_name] = EnumCS(values + (NO_HISTORY,))
            pid = f"P_{s.name}__H"
            net.add_place(PlaceDef(pid, f"{s.name}^H", colour_name, (NO_HISTORY,)))
            tmap.history_place[s.id] = pid

    if model.variables:
        net.colours["INT"] = IntCS()
        net.colours["VARS"] = ProductCS(tuple(IntCS() for _ in model.variables))
        token = tuple(v.initial for v in model.variables)
        net.add_place(PlaceDef("P_VARS", "VARS", "VARS", (token,)))
        tmap.vars_place = "P_VARS"

    if model.events:
        net.colours["EVENT"] = EnumCS(model.events)
        net.add_place(PlaceDef("P_EVENTS", "EVENTS", "EVENT", ()))
        tmap.events_place = "P_EVENTS"
        if config.include_environment:
            for event in model.events:
                cap = f"P_cap_{event}"
                net.add_place(PlaceDef(cap, f"cap {event}", "UNIT",
                                       (UNIT_TOKEN,) * config.event_capacity))
                tmap.capacity_place[event] = cap
                producer = f"T_env_{event}"
                net.add_transition(TransDef(producer, f"emit {event}"))
                net.add_arc(cap, producer, PTOT, PatLit(UNIT_TOKEN))
                net.add_arc("P_EVENTS", producer, TTOP, OutLit(event))
                tmap.producer[producer] = event

    var_order = [v.name for v in model.variables]
    for s in model.states:
        if s.do is None:
            continue
        for x in model.substates(s.id):
            tid = f"T_do_{s.name}" if x == s.id else f"T_do_{s.name}__at_{x}"
            net.add_transition(TransDef(tid, s.do.label, observable_label=s.do.label))
            place = tmap.state_place[x]
            net.add_arc(place, tid, PTOT, PatLit(UNIT_TOKEN))
            net.add_arc(place, tid, TTOP, OutLit(UNIT_TOKEN))
            _wire_assignments(net, tid, s.do, var_order, tmap)
            tmap.do_loop[tid] = (s.id, x)

    # behaviour occurrences: one transition per chain slot, wired in pass 2
    for t in model.transitions:
        route = _route(model, t)
        nodes = tmap.transition_subnet.setdefault(t.id, [])
        for x, behaviours in sorted(route.prefix.items()):
            for k, b in enumerate(behaviours):
                tid = f"T_{t.id}__from_{x}_beh_{k}"
                net.add_transition(TransDef(tid, b.label, observable_label=b.label))
                tmap.behaviour_trans[(t.id, "from", x, k)] = tid
                nodes.append(tid)
        for k, b in enumerate(route.shared):
            tid = f"T_{t.id}_beh_{k}"
            net.add_transition(TransDef(tid, b.label, observable_label=b.label))
            tmap.behaviour_trans[(t.id, "chain", k)] = tid
            nodes.append(tid)
    return net


def _wire_assignments(net: ColouredNet, tid: str, behaviour: Behaviour,
                      var_order: list[str], tmap: TranslationMap):
    """VARS read/write arcs realising the behaviour's sequential assignments
    as one simultaneous rewrite (composed by substitution)."""
    if not behaviour.assignments:
        return
    acc: dict[str, ex.IntExpr] = {v: ex.VarRead(f"v_{v}") for v in var_order}
    for var, rhs in behaviour.assignments:
        acc[var] = ex.substitute(rhs, dict(acc))
    net.add_arc(tmap.vars_place, tid, PTOT,
                PatTuple(tuple(PatVar(f"v_{v}") for v in var_order)))
    net.add_arc(tmap.vars_place, tid, TTOP,
                OutTuple(tuple(normalise_out(acc[v]) for v in var_order)))


# ---------------------------------------------------------------------------
# Pass 2: transitions


def translate_transitions(model: StateMachine, config: TranslationConfig,
                          net: ColouredNet, tmap: TranslationMap) -> ColouredNet:
    """Dispatch transitions, in-flight places, and all arcs."""
    var_order = [v.name for v in model.variables]
    for t in model.transitions:
        route = _route(model, t)
        nodes = tmap.transition_subnet.setdefault(t.id, [])

        # shared tail: in-flight place before each shared behaviour transition
        shared_entry = None  # where dispatches/prefixes deliver the token
        previous = None      # (transition id, behaviour) awaiting its output
        for k, b in enumerate(route.shared):
            pid = f"P_{t.id}_{k}"
            net.add_place(PlaceDef(pid, f"{t.id}#{k}", "UNIT", ()))
            tmap.inflight.add(pid)
            nodes.append(pid)
            if shared_entry is None:
                shared_entry = pid
            tid = tmap.behaviour_trans[(t.id, "chain", k)]
            net.add_arc(pid, tid, PTOT, PatLit(UNIT_TOKEN))
            _wire_assignments(net, tid, b, var_order, tmap)
            if previous is not None:
                net.add_arc(pid, previous, TTOP, OutLit(UNIT_TOKEN))
            previous = tid

        end_place = _end_place(net, tmap, t, route.end, nodes)
        if previous is not None:
            net.add_arc(end_place, previous, TTOP, OutLit(UNIT_TOKEN))
        tail_target = shared_entry if shared_entry is not None else end_place

        for x in route.sources:
            dispatch = _add_dispatch(model, config, net, tmap, t, route, x, var_order)
            nodes.append(dispatch)
            feed = tail_target
            prefix = route.prefix.get(x, ())
            if prefix:
                # dispatch -> exit behaviours of x -> shared tail
                first_pid = None
                prev = None
                for k, b in enumerate(prefix):
                    pid = f"P_{t.id}__from_{x}_{k}"
                    net.add_place(PlaceDef(pid, f"{t.id}:{x}#{k}", "UNIT", ()))
                    tmap.inflight.add(pid)
                    nodes.append(pid)
                    if first_pid is None:
                        first_pid = pid
                    tid = tmap.behaviour_trans[(t.id, "from", x, k)]
                    net.add_arc(pid, tid, PTOT, PatLit(UNIT_TOKEN))
                    _wire_assignments(net, tid, b, var_order, tmap)
                    if prev is not None:
                        net.add_arc(pid, prev, TTOP, OutLit(UNIT_TOKEN))
                    prev = tid
                net.add_arc(tail_target, prev, TTOP, OutLit(UNIT_TOKEN))
                feed = first_pid
            net.add_arc(feed, dispatch, TTOP, OutLit(UNIT_TOKEN))
    return net


def _end_place(net: ColouredNet, tmap: TranslationMap, t: Transition,
               end: tuple, nodes: list[str]) -> str:
    kind, ref = end
    if kind == "state":
        return tmap.state_place[ref]
    if kind == "final":
        return tmap.final_place[ref]
    pid = f"P_{t.id}_hist"
    net.add_place(PlaceDef(pid, f"{t.id}#hist", "UNIT", ()))
    tmap.inflight.add(pid)
    nodes.append(pid)
    return pid


def _add_dispatch(model: StateMachine, config: TranslationConfig, net: ColouredNet,
                  tmap: TranslationMap, t: Transition, route: _Route, x: str,
                  var_order: list[str]) -> str:
    if route.completion:
        tid = f"T_{t.id}__completion"
        name = f"{t.id} completion"
        control = tmap.final_place[t.source]
    else:
        tid = f"T_{t.id}__from_{x}"
        name = t.id if len(route.sources) == 1 else f"{t.id} from {x}"
        control = tmap.state_place[x]
    guard = None
    if t.guard is not None:
        guard = ex.rename_variables(t.guard, {v: f"v_{v}" for v in var_order})
    net.add_transition(TransDef(tid, name, guard=guard))
    tmap.dispatch[tid] = t.id
    net.add_arc(control, tid, PTOT, PatLit(UNIT_TOKEN))
    if t.trigger is not None:
        net.add_arc(tmap.events_place, tid, PTOT, PatLit(t.trigger))
        if config.include_environment:
            net.add_arc(tmap.capacity_place[t.trigger], tid, TTOP, OutLit(UNIT_TOKEN))
    if t.guard is not None:
        net.add_arc(tmap.vars_place, tid, PTOT,
                    PatTuple(tuple(PatVar(f"v_{v}") for v in var_order)))
        net.add_arc(tmap.vars_place, tid, TTOP,
                    OutTuple(tuple(OutVar(f"v_{v}") for v in var_order)))
    for composite, value in route.history_writes.get(x, ()):
        hp = tmap.history_place[composite]
        net.add_arc(hp, tid, PTOT, PatVar(f"h_{composite}"))
        net.add_arc(hp, tid, TTOP, OutLit(value))
    return tid


# ---------------------------------------------------------------------------
# Pass 3: history pseudostates


def translate_history(model: StateMachine, config: TranslationConfig,
                      net: ColouredNet, tmap: TranslationMap) -> ColouredNet:
    """Restore fans: transitions targeting <c>.H pick the re-entered child
    from the ^H token (NONE falls back to the default configuration)."""
    var_order = [v.name for v in model.variables]
    for t in model.transitions:
        if not t.to_history:
            continue
        composite = t.target
        hist_place = tmap.history_place[composite]
        pre = f"P_{t.id}_hist"
        nodes = tmap.transition_subnet.setdefault(t.id, [])
        for value, behaviours, leaf in _restore_branches(model, composite):
            rid = f"T_{t.id}_restore_{value}"
            label = "default" if value == NO_HISTORY else value
            net.add_transition(TransDef(rid, f"{t.id} resume {label}"))
            nodes.append(rid)
            net.add_arc(pre, rid, PTOT, PatLit(UNIT_TOKEN))
            net.add_arc(hist_place, rid, PTOT, PatLit(value))
            net.add_arc(hist_place, rid, TTOP, OutLit(value))
            previous = rid
            for j, b in enumerate(behaviours):
                pid = f"P_{t.id}_restore_{value}_{j}"
                net.add_place(PlaceDef(pid, f"{t.id}:{label}#{j}", "UNIT", ()))
                tmap.inflight.add(pid)
                nodes.append(pid)
                net.add_arc(pid, previous, TTOP, OutLit(UNIT_TOKEN))
                bid = f"T_{t.id}_restore_{value}_beh_{j}"
                net.add_transition(TransDef(bid, b.label, observable_label=b.label))
                tmap.behaviour_trans[(t.id, "restore", value, j)] = bid
                nodes.append(bid)
                net.add_arc(pid, bid, PTOT, PatLit(UNIT_TOKEN))
                _wire_assignments(net, bid, b, var_order, tmap)
                previous = bid
            net.add_arc(tmap.state_place[leaf], previous, TTOP, OutLit(UNIT_TOKEN))
    return net


# ---------------------------------------------------------------------------


def translate(model: StateMachine,
              config: Optional[TranslationConfig] = None
              ) -> tuple[ColouredNet, TranslationMap]:
    """Full pipeline.  Deterministic: equal models yield identical nets,
    ids included.  Polynomial in the model size."""
    report = validate(model)
    if not report.ok:
        raise ModelInvalidError(report)
    config = config or TranslationConfig()
    tmap = TranslationMap()
    net = translate_states(model, config, tmap)
    net = translate_transitions(model, config, net, tmap)
    net = translate_history(model, config, net, tmap)
    net.check()
    return net, tmap
