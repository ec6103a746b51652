"""Structural surgery on generated nets for the inequivalence tests.

Every helper works on a deep copy and reassigns the arcs list, so the
net's lazy arc index never sees stale wiring.
"""

from __future__ import annotations

import copy
from dataclasses import replace

from smd2cpn import expr as ex
from smd2cpn.net import ArcDef, ColouredNet, TransDef, PTOT, TTOP


def _clone(net: ColouredNet) -> ColouredNet:
    return copy.deepcopy(net)


def delete_arc(net: ColouredNet, place: str, trans: str,
               orientation: str) -> ColouredNet:
    mutated = _clone(net)
    keep = [a for a in mutated.arcs
            if not (a.place == place and a.trans == trans
                    and a.orientation == orientation)]
    assert len(keep) < len(mutated.arcs), "arc to delete not found"
    mutated.arcs = keep
    return mutated


def flip_guard(net: ColouredNet, trans: str) -> ColouredNet:
    mutated = _clone(net)
    old = mutated.transitions[trans]
    assert old.guard is not None, "transition has no guard to flip"
    mutated.transitions[trans] = replace(old, guard=ex.Not(old.guard))
    return mutated


def swap_labels(net: ColouredNet, first: str, second: str) -> ColouredNet:
    """Swap what two transitions make observable (and their display names)."""
    mutated = _clone(net)
    a, b = mutated.transitions[first], mutated.transitions[second]
    mutated.transitions[first] = TransDef(a.id, b.name, a.guard, b.observable_label)
    mutated.transitions[second] = TransDef(b.id, a.name, b.guard, a.observable_label)
    return mutated


def rewire_output(net: ColouredNet, trans: str, old_place: str,
                  new_place: str) -> ColouredNet:
    mutated = _clone(net)
    arcs = []
    hit = False
    for a in mutated.arcs:
        if a.trans == trans and a.orientation == TTOP and a.place == old_place:
            arcs.append(ArcDef(a.id, new_place, a.trans, a.orientation, a.inscription))
            hit = True
        else:
            arcs.append(a)
    assert hit, "output arc to rewire not found"
    mutated.arcs = arcs
    return mutated


def drop_transition(net: ColouredNet, trans: str, bridge_from: str,
                    bridge_to: str) -> ColouredNet:
    """Remove a chain transition entirely, rerouting every producer of its
    input place straight to its output place (the bridged behaviour simply
    never happens)."""
    mutated = _clone(net)
    del mutated.transitions[trans]
    arcs = []
    for a in mutated.arcs:
        if a.trans == trans:
            continue
        if a.orientation == TTOP and a.place == bridge_from:
            arcs.append(ArcDef(a.id, bridge_to, a.trans, a.orientation, a.inscription))
        else:
            arcs.append(a)
    mutated.arcs = arcs
    if bridge_from in mutated.places:
        del mutated.places[bridge_from]
    return mutated
