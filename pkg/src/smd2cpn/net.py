"""Coloured Petri net types, token-game semantics, and bounded exploration.

Tokens are plain Python values: ``()`` for the unit colour, strings for
enumeration values, ints, and tuples for products.  Markings map place ids
to multisets (collections.Counter).  Input arcs carry patterns that bind
variables against present tokens; output arcs carry expressions evaluated
under the binding.  No symbolic solving: bindings are enumerated from the
finite multiset contents.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from . import expr as ex

UNIT_TOKEN = ()

PTOT = "PtoT"
TTOP = "TtoP"


class NetError(ValueError):
    pass


class NotEnabledError(NetError):
    pass


# ---------------------------------------------------------------------------
# Colour sets


@dataclass(frozen=True)
class UnitCS:
    def contains(self, value) -> bool:
        return value == UNIT_TOKEN


@dataclass(frozen=True)
class IntCS:
    def contains(self, value) -> bool:
        return isinstance(value, int) and not isinstance(value, bool)


@dataclass(frozen=True)
class EnumCS:
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("enumeration colour needs at least one value")

    def contains(self, value) -> bool:
        return value in self.values


@dataclass(frozen=True)
class ProductCS:
    components: tuple["ColourSet", ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("product colour needs at least one component")

    def contains(self, value) -> bool:
        return (isinstance(value, tuple) and len(value) == len(self.components)
                and all(c.contains(v) for c, v in zip(self.components, value)))


ColourSet = Union[UnitCS, IntCS, EnumCS, ProductCS]


# ---------------------------------------------------------------------------
# Arc inscriptions: patterns (input) and expressions (output)


@dataclass(frozen=True)
class PatLit:
    value: object


@dataclass(frozen=True)
class PatVar:
    name: str


@dataclass(frozen=True)
class PatTuple:
    items: tuple["Pattern", ...]


Pattern = Union[PatLit, PatVar, PatTuple]


@dataclass(frozen=True)
class OutLit:
    value: object


@dataclass(frozen=True)
class OutVar:
    name: str


@dataclass(frozen=True)
class OutTuple:
    items: tuple["OutExpr", ...]


@dataclass(frozen=True)
class OutInt:
    """An integer computation over bound variables."""
    body: ex.IntExpr


OutExpr = Union[OutLit, OutVar, OutTuple, OutInt]


def match(pattern: Pattern, value, binding: dict) -> Optional[dict]:
    """Extend `binding` so the pattern matches `value`; None if impossible."""
    if isinstance(pattern, PatLit):
        return binding if pattern.value == value else None
    if isinstance(pattern, PatVar):
        if pattern.name in binding:
            return binding if binding[pattern.name] == value else None
        new = dict(binding)
        new[pattern.name] = value
        return new
    if isinstance(pattern, PatTuple):
        if not isinstance(value, tuple) or len(value) != len(pattern.items):
            return None
        for item, component in zip(pattern.items, value):
            binding = match(item, component, binding)
            if binding is None:
                return None
        return binding
    raise TypeError(f"not a pattern: {pattern!r}")


def pattern_variables(pattern: Pattern) -> set[str]:
    if isinstance(pattern, PatVar):
        return {pattern.name}
    if isinstance(pattern, PatTuple):
        out = set()
        for item in pattern.items:
            out |= pattern_variables(item)
        return out
    return set()


def normalise_out(body: ex.IntExpr) -> OutExpr:
    """Canonical output form for an integer computation: bare reads become
    OutVar, literals OutLit, anything else OutInt.  Keeps structural
    equality stable across emit/parse round trips."""
    if isinstance(body, ex.VarRead):
        return OutVar(body.name)
    if isinstance(body, ex.IntLit):
        return OutLit(body.value)
    return OutInt(body)


def evaluate(out: OutExpr, binding: dict):
    if isinstance(out, OutLit):
        return out.value
    if isinstance(out, OutVar):
        return binding[out.name]
    if isinstance(out, OutTuple):
        return tuple(evaluate(item, binding) for item in out.items)
    if isinstance(out, OutInt):
        return ex.eval_int(out.body, binding)
    raise TypeError(f"not an output expression: {out!r}")


# ---------------------------------------------------------------------------
# Net structure


@dataclass(frozen=True)
class PlaceDef:
    id: str
    name: str
    colour: str  # name of a declared colour set
    initial: tuple = ()  # multiset as a value tuple (canonically sorted)


@dataclass(frozen=True)
class TransDef:
    id: str
    name: str
    guard: Optional[ex.BoolExpr] = None
    # trace metadata (the behaviour label a firing makes observable); not
    # serialised and not part of structural equality
    observable_label: Optional[str] = field(default=None, compare=False)


@dataclass(frozen=True)
class ArcDef:
    id: str
    place: str
    trans: str
    orientation: str  # PTOT or TTOP
    inscription: Union[Pattern, OutExpr]


def token_sort_key(value):
    """Total order over heterogeneous token values."""
    if isinstance(value, bool):
        return (3, value)
    if isinstance(value, int):
        return (0, value)
    if isinstance(value, str):
        return (1, value)
    if isinstance(value, tuple):
        return (2, tuple(token_sort_key(v) for v in value))
    return (4, repr(value))


def sort_tokens(values: Iterable) -> tuple:
    return tuple(sorted(values, key=token_sort_key))


@dataclass
class ColouredNet:
    name: str
    colours: dict[str, ColourSet] = field(default_factory=dict)
    places: dict[str, PlaceDef] = field(default_factory=dict)
    transitions: dict[str, TransDef] = field(default_factory=dict)
    arcs: list[ArcDef] = field(default_factory=list)

    def colour_of(self, place_id: str) -> ColourSet:
        return self.colours[self.places[place_id].colour]

    def add_place(self, place: PlaceDef):
        if place.id in self.places or place.id in self.transitions:
            raise NetError(f"duplicate node id {place.id!r}")
        self.places[place.id] = place

    def add_transition(self, trans: TransDef):
        if trans.id in self.places or trans.id in self.transitions:
            raise NetError(f"duplicate node id {trans.id!r}")
        self.transitions[trans.id] = trans

    def add_arc(self, place: str, trans: str, orientation: str, inscription):
        arc = ArcDef(f"A_{len(self.arcs) + 1}", place, trans, orientation, inscription)
        self.arcs.append(arc)
        return arc

    def _arc_index(self):
        # rebuilt lazily when the arcs list changes (length or identity);
        # code that rewires arcs in place must reassign the list
        stamp = (len(self.arcs), id(self.arcs))
        cache = getattr(self, "_arc_cache", None)
        if cache is None or cache[0] != stamp:
            inputs: dict[str, list[ArcDef]] = {tid: [] for tid in self.transitions}
            outputs: dict[str, list[ArcDef]] = {tid: [] for tid in self.transitions}
            for arc in self.arcs:
                side = inputs if arc.orientation == PTOT else outputs
                side.setdefault(arc.trans, []).append(arc)
            cache = (stamp, inputs, outputs)
            self._arc_cache = cache
        return cache

    def input_arcs(self, trans_id: str) -> list[ArcDef]:
        return self._arc_index()[1].get(trans_id, [])

    def output_arcs(self, trans_id: str) -> list[ArcDef]:
        return self._arc_index()[2].get(trans_id, [])

    def check(self):
        """Raise NetError on any violated structural invariant."""
        ids = Counter()
        for pid in self.places:
            ids[pid] += 1
        for tid in self.transitions:
            ids[tid] += 1
        for arc in self.arcs:
            ids[arc.id] += 1
        dupes = [i for i, n in ids.items() if n > 1]
        if dupes:
            raise NetError(f"duplicate ids: {sorted(dupes)}")
        for place in self.places.values():
            if place.colour not in self.colours:
                raise NetError(f"place {place.id}: unknown colour {place.colour!r}")
            colour = self.colours[place.colour]
            for token in place.initial:
                if not colour.contains(token):
                    raise NetError(f"place {place.id}: initial token {token!r} "
                                   f"outside colour {place.colour}")
        bound: dict[str, set[str]] = {tid: set() for tid in self.transitions}
        for arc in self.arcs:
            if arc.place not in self.places:
                raise NetError(f"arc {arc.id}: unknown place {arc.place!r}")
            if arc.trans not in self.transitions:
                raise NetError(f"arc {arc.id}: unknown transition {arc.trans!r}")
            colour = self.colour_of(arc.place)
            if arc.orientation == PTOT:
                if not _pattern_fits(arc.inscription, colour):
                    raise NetError(f"arc {arc.id}: pattern does not fit colour "
                                   f"{self.places[arc.place].colour}")
                bound[arc.trans] |= pattern_variables(arc.inscription)
            elif arc.orientation == TTOP:
                if not _out_fits(arc.inscription, colour):
                    raise NetError(f"arc {arc.id}: expression does not fit colour "
                                   f"{self.places[arc.place].colour}")
            else:
                raise NetError(f"arc {arc.id}: bad orientation {arc.orientation!r}")
        for tid, trans in self.transitions.items():
            if trans.guard is not None:
                free = ex.variables_of(trans.guard)
                if not free <= bound[tid]:
                    raise NetError(f"transition {tid}: guard reads unbound "
                                   f"variables {sorted(free - bound[tid])}")

    def initial_marking(self) -> "Marking":
        return {pid: Counter(p.initial) for pid, p in self.places.items() if p.initial}


def _pattern_fits(pattern, colour) -> bool:
    if isinstance(pattern, PatVar):
        return True
    if isinstance(pattern, PatLit):
        return colour.contains(pattern.value)
    if isinstance(pattern, PatTuple):
        return (isinstance(colour, ProductCS)
                and len(colour.components) == len(pattern.items)
                and all(_pattern_fits(i, c)
                        for i, c in zip(pattern.items, colour.components)))
    return False


def _out_fits(out, colour) -> bool:
    if isinstance(out, OutVar):
        return True  # variable colours are checked dynamically when fired
    if isinstance(out, OutLit):
        return colour.contains(out.value)
    if isinstance(out, OutInt):
        return isinstance(colour, IntCS)
    if isinstance(out, OutTuple):
        return (isinstance(colour, ProductCS)
                and len(colour.components) == len(out.items)
                and all(_out_fits(i, c)
                        for i, c in zip(out.items, colour.components)))
    return False


# ---------------------------------------------------------------------------
# Token game

Marking = dict  # place id -> Counter of token values


def normalise_marking(marking: Marking) -> Marking:
    return {pid: Counter({v: n for v, n in tokens.items() if n > 0})
            for pid, tokens in marking.items()
            if any(n > 0 for n in tokens.values())}


def marking_key(marking: Marking):
    """Canonical hashable form of a marking."""
    items = []
    for pid in sorted(marking):
        tokens = marking[pid]
        entries = tuple(sorted(((v, n) for v, n in tokens.items() if n > 0),
                               key=lambda e: token_sort_key(e[0])))
        if entries:
            items.append((pid, entries))
    return tuple(items)


def binding_key(binding: dict) -> tuple:
    return tuple(sorted(binding.items(), key=lambda kv: (kv[0], token_sort_key(kv[1]))))


def enabled_bindings(net: ColouredNet, marking: Marking, trans_id: str) -> list[dict]:
    """All variable bindings under which the transition may fire, in a
    canonical deterministic order."""
    trans = net.transitions[trans_id]
    inputs = net.input_arcs(trans_id)
    for arc in inputs:  # cheap rejection before any matching work
        tokens = marking.get(arc.place)
        if not tokens or not any(n > 0 for n in tokens.values()):
            return []
    bindings = [{}]
    for arc in inputs:
        tokens = marking.get(arc.place)
        values = sort_tokens(v for v, n in tokens.items() if n > 0)
        extended = []
        for binding in bindings:
            for value in values:
                new = match(arc.inscription, value, binding)
                if new is not None:
                    extended.append(new)
        bindings = extended
        if not bindings:
            return []
    feasible = []
    seen = set()
    for binding in bindings:
        key = binding_key(binding)
        if key in seen:
            continue
        seen.add(key)
        demand: dict[str, Counter] = {}
        ok = True
        for arc in inputs:
            value = evaluate(_pattern_as_out(arc.inscription), binding)
            demand.setdefault(arc.place, Counter())[value] += 1
        for pid, need in demand.items():
            have = marking.get(pid, Counter())
            if any(have.get(v, 0) < n for v, n in need.items()):
                ok = False
                break
        if ok and trans.guard is not None:
            ok = ex.eval_bool(trans.guard, binding)
        if ok:
            feasible.append(binding)
    feasible.sort(key=binding_key)
    return feasible


def _pattern_as_out(pattern: Pattern) -> OutExpr:
    if isinstance(pattern, PatLit):
        return OutLit(pattern.value)
    if isinstance(pattern, PatVar):
        return OutVar(pattern.name)
    if isinstance(pattern, PatTuple):
        return OutTuple(tuple(_pattern_as_out(i) for i in pattern.items))
    raise TypeError(f"not a pattern: {pattern!r}")


def fire(net: ColouredNet, marking: Marking, trans_id: str, binding: dict) -> Marking:
    """Fire the transition under the binding; places not adjacent to it are
    untouched.  Raises NotEnabledError when the binding is not enabled."""
    trans = net.transitions[trans_id]
    if trans.guard is not None and not ex.eval_bool(trans.guard, binding):
        raise NotEnabledError(f"{trans_id}: guard is false under {binding}")
    new = {pid: Counter(tokens) for pid, tokens in marking.items()}
    for arc in net.input_arcs(trans_id):
        value = evaluate(_pattern_as_out(arc.inscription), binding)
        have = new.get(arc.place, Counter())
        if have.get(value, 0) < 1:
            raise NotEnabledError(f"{trans_id}: no token {value!r} in {arc.place}")
        have[value] -= 1
        new[arc.place] = have
    for arc in net.output_arcs(trans_id):
        value = evaluate(arc.inscription, binding)
        colour = net.colour_of(arc.place)
        if not colour.contains(value):
            raise NetError(f"{trans_id}: produced {value!r} outside the colour "
                           f"of {arc.place}")
        new.setdefault(arc.place, Counter())[value] += 1
    return normalise_marking(new)


@dataclass
class ReachabilityGraph:
    states: list[Marking]
    edges: list[tuple[int, str, tuple, int]]  # (source, transition, binding, target)
    truncated: bool

    @property
    def state_count(self) -> int:
        return len(self.states)


def explore(net: ColouredNet, marking: Optional[Marking] = None,
            bound: int = 100_000) -> ReachabilityGraph:
    """Breadth-first reachability up to `bound` distinct markings.

    Vertex numbering is the BFS discovery order with transitions expanded
    in id order and bindings in canonical order, so equal nets yield
    identical graphs.  Every listed state is fully expanded; `truncated`
    reports whether some discovered successor had to be dropped.
    """
    if bound < 1:
        raise ValueError("bound must be at least 1")
    start = normalise_marking(marking if marking is not None
                              else net.initial_marking())
    index = {marking_key(start): 0}
    states = [start]
    edges = []
    truncated = False
    queue = deque([0])
    order = sorted(net.transitions)
    while queue:
        current = queue.popleft()
        m = states[current]
        for tid in order:
            for binding in enabled_bindings(net, m, tid):
                succ = fire(net, m, tid, binding)
                key = marking_key(succ)
                target = index.get(key)
                if target is None:
                    if len(states) >= bound:
                        truncated = True
                        continue
                    target = len(states)
                    index[key] = target
                    states.append(succ)
                    queue.append(target)
                edges.append((current, tid, binding_key(binding), target))
    return ReachabilityGraph(states=states, edges=edges, truncated=truncated)
