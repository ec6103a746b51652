"""Serialisation of coloured nets: CPN Tools 4 XML and DOT.

The XML writer targets the CPN Tools 4 document layout (single page).
Graphical attribute defaults below are the template copied from a document
saved by CPN Tools itself.  The reader accepts exactly the subset this
writer produces, for round-trip checking; it is not a general .cpn loader.
Output is byte-deterministic: nodes are emitted in natural id order, so
insertion order never shows.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from collections import Counter, deque
from xml.sax.saxutils import escape, quoteattr

from . import expr as ex
from .net import (
    UNIT_TOKEN, ArcDef, ColouredNet, EnumCS, IntCS, OutInt, OutLit, OutTuple,
    OutVar, PatLit, PatTuple, PatVar, PlaceDef, ProductCS, TransDef, UnitCS,
    PTOT, TTOP, normalise_out, token_sort_key,
)

# graphical attribute template (CPN Tools defaults)
FILLATTR = '<fillattr colour="White" pattern="" filled="false"/>'
LINEATTR = '<lineattr colour="Black" thick="1" type="Solid"/>'
TEXTATTR = '<textattr colour="Black" bold="false"/>'
ARROWATTR = '<arrowattr headsize="1.200000" currentcyckle="2"/>'
PLACE_W, PLACE_H = 60.0, 40.0
TRANS_W, TRANS_H = 60.0, 32.0
LAYER_DX, ROW_DY = 160.0, 120.0


class CpnEmitError(ValueError):
    pass


class CpnParseError(ValueError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (line {position[0]}, column {position[1]})"
        super().__init__(message)


def _natural_key(text: str):
    return tuple(int(part) if part.isdigit() else part
                 for part in re.split(r"(\d+)", text))


# ---------------------------------------------------------------------------
# Layout


def layout(net: ColouredNet) -> dict[str, tuple[float, float]]:
    """Deterministic layered placement.

    Layers follow token flow (breadth-first from the initially marked
    places); layer k sits at x = 160k, nodes within a layer stack at
    y = 0, 120, 240, ...  Every node gets a distinct grid cell, so
    coordinates are pairwise distinct and at least 80 units apart.
    """
    succ: dict[str, list[str]] = {}
    for arc in net.arcs:
        a, b = ((arc.place, arc.trans) if arc.orientation == PTOT
                else (arc.trans, arc.place))
        succ.setdefault(a, []).append(b)

    roots = sorted((p.id for p in net.places.values() if p.initial),
                   key=_natural_key)
    layer: dict[str, int] = {}
    queue = deque()
    for r in roots:
        layer[r] = 0
        queue.append(r)
    while queue:
        node = queue.popleft()
        for nxt in sorted(succ.get(node, ()), key=_natural_key):
            if nxt not in layer:
                layer[nxt] = layer[node] + 1
                queue.append(nxt)

    rest = sorted((n for n in (list(net.places) + list(net.transitions))
                   if n not in layer), key=_natural_key)
    overflow = (max(layer.values()) + 1) if layer else 0
    for node in rest:
        layer[node] = overflow

    assignment: dict[str, tuple[float, float]] = {}
    per_layer: dict[int, int] = {}
    for node in sorted(layer, key=lambda n: (layer[n], _natural_key(n))):
        row = per_layer.get(layer[node], 0)
        per_layer[layer[node]] = row + 1
        assignment[node] = (LAYER_DX * layer[node], ROW_DY * row)
    return assignment


# ---------------------------------------------------------------------------
# Token / inscription text (SML-flavoured)


def token_text(value) -> str:
    if value == UNIT_TOKEN:
        return "()"
    if isinstance(value, int):
        return f"~{-value}" if value < 0 else str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        return "(" + ",".join(token_text(v) for v in value) + ")"
    raise CpnEmitError(f"cannot serialise token {value!r}")


def marking_text(tokens) -> str:
    counted = Counter(tokens)
    entries = sorted(counted.items(), key=lambda e: token_sort_key(e[0]))
    return " ++ ".join(f"{n}`{token_text(v)}" for v, n in entries)


def inscription_text(inscription) -> str:
    if isinstance(inscription, (PatLit, OutLit)):
        return token_text(inscription.value)
    if isinstance(inscription, (PatVar, OutVar)):
        return inscription.name
    if isinstance(inscription, (PatTuple, OutTuple)):
        return "(" + ",".join(inscription_text(i) for i in inscription.items) + ")"
    if isinstance(inscription, OutInt):
        return ex.to_text(inscription.body, "sml")
    raise CpnEmitError(f"cannot serialise inscription {inscription!r}")


# ---------------------------------------------------------------------------
# XML writer


def _colour_decl_xml(name: str, colour, net: ColouredNet, out: list[str]):
    cid = f"CS_{name}"
    out.append(f'        <color id={quoteattr(cid)}>')
    out.append(f"          <id>{escape(name)}</id>")
    if isinstance(colour, UnitCS):
        out.append("          <unit/>")
        layout_text = f"colset {name} = unit;"
    elif isinstance(colour, IntCS):
        out.append("          <int/>")
        layout_text = f"colset {name} = int;"
    elif isinstance(colour, EnumCS):
        out.append("          <enum>")
        for value in colour.values:
            out.append(f"            <id>{escape(value)}</id>")
        out.append("          </enum>")
        layout_text = f"colset {name} = with " + " | ".join(colour.values) + ";"
    elif isinstance(colour, ProductCS):
        names = [_declared_name(net, c) for c in colour.components]
        out.append("          <product>")
        for n in names:
            out.append(f"            <id>{escape(n)}</id>")
        out.append("          </product>")
        layout_text = f"colset {name} = product " + " * ".join(names) + ";"
    else:
        raise CpnEmitError(f"cannot declare colour {colour!r}")
    out.append(f"          <layout>{escape(layout_text)}</layout>")
    out.append("        </color>")


def _declared_name(net: ColouredNet, colour) -> str:
    for name, declared in net.colours.items():
        if declared == colour:
            return name
    raise CpnEmitError(f"product component {colour!r} is not a declared colour")


def _collect_variables(net: ColouredNet) -> dict[str, str]:
    """Arc-bound variable names with the colour they bind at."""
    out: dict[str, str] = {}

    def visit(pattern, colour_name):
        colour = net.colours[colour_name]
        if isinstance(pattern, (PatVar, OutVar)):
            out.setdefault(pattern.name, colour_name)
        elif isinstance(pattern, (PatTuple, OutTuple)):
            if not isinstance(colour, ProductCS):
                return
            comp_names = [_declared_name(net, c) for c in colour.components]
            for item, cname in zip(pattern.items, comp_names):
                visit(item, cname)
        elif isinstance(pattern, OutInt):
            for name in ex.variables_of(pattern.body):
                out.setdefault(name, "INT")

    for arc in net.arcs:
        visit(arc.inscription, net.places[arc.place].colour)
    for trans in net.transitions.values():
        if trans.guard is not None:
            for name in ex.variables_of(trans.guard):
                out.setdefault(name, "INT")
    return out


def _posattr(position, pad: str) -> str:
    x, y = position
    return f'{pad}<posattr x="{x:.6f}" y="{y:.6f}"/>'


def emit_cpn_xml(net: ColouredNet,
                 positions: dict[str, tuple[float, float]] | None = None) -> str:
    """Single-page CPN Tools 4 document for the net."""
    if positions is None:
        positions = layout(net)
    for node in list(net.places) + list(net.transitions):
        if node not in positions:
            raise CpnEmitError(f"layout is missing node {node!r}")

    out = ['<?xml version="1.0" encoding="utf-8"?>',
           '<!DOCTYPE workspaceElements PUBLIC "-//CPN//DTD CPNXML 1.0//EN"'
           ' "http://cpntools.org/DTD/6/cpn.dtd">',
           "<workspaceElements>",
           '  <generator tool="CPN Tools" version="4.0.1" format="6"/>',
           "  <cpnet>",
           "    <globbox>",
           '      <block id="IDdecls">',
           "        <id>Declarations</id>"]
    for name in sorted(net.colours, key=_natural_key):
        _colour_decl_xml(name, net.colours[name], net, out)
    for var, colour_name in sorted(_collect_variables(net).items()):
        out.append(f'        <var id={quoteattr("VAR_" + var)}>')
        out.append(f"          <type><id>{escape(colour_name)}</id></type>")
        out.append(f"          <id>{escape(var)}</id>")
        out.append(f"          <layout>{escape(f'var {var} : {colour_name};')}</layout>")
        out.append("        </var>")
    out.append("      </block>")
    out.append("    </globbox>")
    out.append('    <page id="IDpageMain">')
    out.append(f"      <pageattr name={quoteattr(net.name)}/>")

    for pid in sorted(net.places, key=_natural_key):
        place = net.places[pid]
        x, y = positions[pid]
        out.append(f"      <place id={quoteattr(pid)}>")
        out.append(_posattr((x, y), "        "))
        out.append("        " + FILLATTR)
        out.append("        " + LINEATTR)
        out.append("        " + TEXTATTR)
        out.append(f"        <text>{escape(place.name)}</text>")
        out.append(f'        <ellipse w="{PLACE_W:.6f}" h="{PLACE_H:.6f}"/>')
        out.append('        <token x="-10.000000" y="0.000000"/>')
        out.append('        <marking x="0.000000" y="0.000000" hidden="false"/>')
        out.append(f'        <type id={quoteattr(pid + "_type")}>')
        out.append(_posattr((x + PLACE_W / 2 + 10, y - PLACE_H / 2), "          "))
        out.append("          " + FILLATTR)
        out.append("          " + LINEATTR)
        out.append("          " + TEXTATTR)
        out.append(f"          <text>{escape(place.colour)}</text>")
        out.append("        </type>")
        if place.initial:
            out.append(f'        <initmark id={quoteattr(pid + "_init")}>')
            out.append(_posattr((x + PLACE_W / 2 + 10, y + PLACE_H / 2), "          "))
            out.append("          " + FILLATTR)
            out.append("          " + LINEATTR)
            out.append("          " + TEXTATTR)
            out.append(f"          <text>{escape(marking_text(place.initial))}</text>")
            out.append("        </initmark>")
        out.append("      </place>")

    for tid in sorted(net.transitions, key=_natural_key):
        trans = net.transitions[tid]
        x, y = positions[tid]
        out.append(f'      <trans id={quoteattr(tid)} explicit="false">')
        out.append(_posattr((x, y), "        "))
        out.append("        " + FILLATTR)
        out.append("        " + LINEATTR)
        out.append("        " + TEXTATTR)
        out.append(f"        <text>{escape(trans.name)}</text>")
        out.append(f'        <box w="{TRANS_W:.6f}" h="{TRANS_H:.6f}"/>')
        out.append('        <binding x="7.200000" y="-3.000000"/>')
        if trans.guard is not None:
            guard_text = "[" + ex.to_text(trans.guard, "sml") + "]"
            out.append(f'        <cond id={quoteattr(tid + "_cond")}>')
            out.append(_posattr((x - TRANS_W / 2 - 10, y - TRANS_H / 2 - 6), "          "))
            out.append("          " + FILLATTR)
            out.append("          " + LINEATTR)
            out.append("          " + TEXTATTR)
            out.append(f"          <text>{escape(guard_text)}</text>")
            out.append("        </cond>")
        out.append("      </trans>")

    for arc in sorted(net.arcs, key=lambda a: _natural_key(a.id)):
        px, py = positions[arc.place]
        tx, ty = positions[arc.trans]
        mid = ((px + tx) / 2, (py + ty) / 2)
        out.append(f"      <arc id={quoteattr(arc.id)}"
                   f' orientation="{arc.orientation}" order="1">')
        out.append(_posattr(mid, "        "))
        out.append("        " + FILLATTR)
        out.append("        " + LINEATTR)
        out.append("        " + TEXTATTR)
        out.append("        " + ARROWATTR)
        out.append(f"        <transend idref={quoteattr(arc.trans)}/>")
        out.append(f"        <placeend idref={quoteattr(arc.place)}/>")
        out.append(f'        <annot id={quoteattr(arc.id + "_annot")}>')
        out.append(_posattr(mid, "          "))
        out.append("          " + FILLATTR)
        out.append("          " + LINEATTR)
        out.append("          " + TEXTATTR)
        out.append(f"          <text>{escape(inscription_text(arc.inscription))}</text>")
        out.append("        </annot>")
        out.append("      </arc>")

    out.append("    </page>")
    out.append("    <instances>")
    out.append('      <instance id="IDinst1" page="IDpageMain"/>')
    out.append("    </instances>")
    out.append("  </cpnet>")
    out.append("</workspaceElements>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# XML reader (round-trip subset)


def _lex_inscription(text: str):
    """Tokens for the SML-flavoured inscription/guard syntax."""
    tokens = []
    i, n = 0, len(text)
    col = 1
    ops = ("<>", "<=", ">=", "(", ")", ",", "<", ">", "=", "+", "-", "*", "~")
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            col += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], (1, col)))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(("int", text[i:j], (1, col)))
            col += j - i
            i = j
            continue
        for op in ops:
            if text.startswith(op, i):
                tokens.append(("op", op, (1, col)))
                i += len(op)
                col += len(op)
                break
        else:
            raise CpnParseError(f"bad character {c!r} in inscription {text!r}")
    return tokens


class _TokenCursor:
    def __init__(self, tokens, source):
        self.tokens = tokens
        self.i = 0
        self.source = source

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", None)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, text):
        kind, t, _ = self.peek()
        if kind == "eof" or t != text:
            raise CpnParseError(f"expected {text!r} in {self.source!r}")
        return self.next()


def _parse_value(cur: _TokenCursor, colour, net: ColouredNet, as_pattern: bool):
    if isinstance(colour, UnitCS):
        cur.expect("(")
        cur.expect(")")
        return PatLit(UNIT_TOKEN) if as_pattern else OutLit(UNIT_TOKEN)
    if isinstance(colour, EnumCS):
        kind, text, _ = cur.next()
        if kind != "ident":
            raise CpnParseError(f"expected an enum value in {cur.source!r}")
        if text in colour.values:
            return PatLit(text) if as_pattern else OutLit(text)
        return PatVar(text) if as_pattern else OutVar(text)
    if isinstance(colour, ProductCS):
        cur.expect("(")
        items = []
        for k, component in enumerate(colour.components):
            if k:
                cur.expect(",")
            items.append(_parse_value(cur, component, net, as_pattern))
        cur.expect(")")
        return (PatTuple(tuple(items)) if as_pattern else OutTuple(tuple(items)))
    if isinstance(colour, IntCS):
        if as_pattern:
            kind, text, _ = cur.next()
            if kind == "int":
                return PatLit(int(text))
            if kind == "op" and text == "~":
                kind2, text2, _ = cur.next()
                if kind2 != "int":
                    raise CpnParseError(f"expected a digit after '~' in {cur.source!r}")
                return PatLit(-int(text2))
            if kind == "ident":
                return PatVar(text)
            raise CpnParseError(f"expected an int pattern in {cur.source!r}")
        # output side: a full integer expression, greedily to a stopper
        start = cur.i
        depth = 0
        while True:
            kind, text, _ = cur.peek()
            if kind == "eof" or (depth == 0 and text in (",", ")")):
                break
            if text == "(":
                depth += 1
            elif text == ")":
                depth -= 1
            cur.next()
        try:
            body = ex.parse_int(cur.tokens[start:cur.i], "sml")
        except ex.ExprSyntaxError as err:
            raise CpnParseError(f"bad integer expression in {cur.source!r}: {err}")
        return normalise_out(body)
    raise CpnParseError(f"unsupported colour {colour!r}")


def _parse_inscription(text: str, colour, net: ColouredNet, as_pattern: bool):
    cur = _TokenCursor(_lex_inscription(text), text)
    value = _parse_value(cur, colour, net, as_pattern)
    if cur.peek()[0] != "eof":
        raise CpnParseError(f"trailing tokens in inscription {text!r}")
    return value


def _parse_marking(text: str, colour, net: ColouredNet) -> tuple:
    tokens = []
    for chunk in text.split("++"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "`" not in chunk:
            raise CpnParseError(f"missing multiplicity in marking {text!r}")
        count_text, value_text = chunk.split("`", 1)
        try:
            count = int(count_text.strip())
        except ValueError:
            raise CpnParseError(f"bad multiplicity in marking {text!r}")
        parsed = _parse_inscription(value_text.strip(), colour, net, as_pattern=True)
        if not isinstance(parsed, (PatLit, PatTuple)):
            raise CpnParseError(f"marking value may not bind variables: {text!r}")
        value = _literal_value(parsed, text)
        tokens.extend([value] * count)
    return tuple(sorted(tokens, key=token_sort_key))


def _literal_value(pattern, source):
    if isinstance(pattern, PatLit):
        return pattern.value
    if isinstance(pattern, PatTuple):
        return tuple(_literal_value(i, source) for i in pattern.items)
    raise CpnParseError(f"marking value may not bind variables: {source!r}")


def _parse_colour_decl(element) -> tuple[str, object]:
    name = element.findtext("id")
    if name is None:
        raise CpnParseError("colour declaration without a name")
    if element.find("unit") is not None:
        return name, UnitCS()
    if element.find("int") is not None:
        return name, IntCS()
    enum = element.find("enum")
    if enum is not None:
        return name, EnumCS(tuple(v.text or "" for v in enum.findall("id")))
    product = element.find("product")
    if product is not None:
        return name, tuple(v.text or "" for v in product.findall("id"))  # resolved later
    raise CpnParseError(f"unsupported colour declaration {name!r}")


def parse_cpn_xml(text: str) -> ColouredNet:
    """Rebuild a net from a document this module emitted.  Layout and
    graphical attributes are discarded; observable labels are trace
    metadata and come back unset."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as err:
        raise CpnParseError(f"malformed document: {err.msg}", err.position) from None
    page = root.find("./cpnet/page")
    if page is None:
        raise CpnParseError("document has no page element")
    name_attr = page.find("pageattr")
    net = ColouredNet(name=name_attr.get("name") if name_attr is not None else "net")

    pending_products = {}
    for decl in root.findall("./cpnet/globbox/block/color"):
        cname, colour = _parse_colour_decl(decl)
        if isinstance(colour, tuple):
            pending_products[cname] = colour
        else:
            net.colours[cname] = colour
    for cname, component_names in pending_products.items():
        components = []
        for ref in component_names:
            if ref not in net.colours:
                raise CpnParseError(f"product {cname!r} references unknown colour {ref!r}")
            components.append(net.colours[ref])
        net.colours[cname] = ProductCS(tuple(components))

    for element in page.findall("place"):
        pid = element.get("id")
        colour_name = element.findtext("./type/text")
        if colour_name is None or colour_name not in net.colours:
            raise CpnParseError(f"place {pid!r} has no usable colour")
        init_text = element.findtext("./initmark/text")
        initial = (_parse_marking(init_text, net.colours[colour_name], net)
                   if init_text else ())
        net.add_place(PlaceDef(pid, element.findtext("text") or pid,
                               colour_name, initial))

    for element in page.findall("trans"):
        tid = element.get("id")
        guard = None
        cond = element.findtext("./cond/text")
        if cond:
            body = cond.strip()
            if not (body.startswith("[") and body.endswith("]")):
                raise CpnParseError(f"guard of {tid!r} is not bracketed: {cond!r}")
            try:
                guard = ex.parse_bool(_lex_inscription(body[1:-1]), "sml")
            except ex.ExprSyntaxError as err:
                raise CpnParseError(f"bad guard on {tid!r}: {err}")
        net.add_transition(TransDef(tid, element.findtext("text") or tid, guard=guard))

    for element in page.findall("arc"):
        aid = element.get("id")
        orientation = element.get("orientation")
        if orientation not in (PTOT, TTOP):
            raise CpnParseError(f"arc {aid!r} has bad orientation {orientation!r}")
        trans_ref = element.find("transend")
        place_ref = element.find("placeend")
        if trans_ref is None or place_ref is None:
            raise CpnParseError(f"arc {aid!r} is missing an endpoint")
        place_id = place_ref.get("idref")
        trans_id = trans_ref.get("idref")
        if place_id not in net.places:
            raise CpnParseError(f"arc {aid!r} references unknown place {place_id!r}")
        annot = element.findtext("./annot/text") or "()"
        inscription = _parse_inscription(
            annot, net.colour_of(place_id), net, as_pattern=(orientation == PTOT))
        net.arcs.append(ArcDef(aid, place_id, trans_id, orientation, inscription))
    return net


# ---------------------------------------------------------------------------
# DOT


def emit_dot(net: ColouredNet, marking=None) -> str:
    """Places as ellipses, transitions as boxes; optional marking shown in
    place labels."""
    out = [f"digraph {_dot_id(net.name)} {{", "  rankdir=LR;"]
    for pid in sorted(net.places, key=_natural_key):
        place = net.places[pid]
        label = place.name
        if marking is not None:
            tokens = marking.get(pid)
            if tokens and sum(tokens.values()) > 0:
                label += r"\n" + marking_text(sorted(tokens.elements(),
                                                     key=token_sort_key))
        out.append(f"  {_dot_id(pid)} [shape=ellipse, label={_dot_id(label)}];")
    for tid in sorted(net.transitions, key=_natural_key):
        trans = net.transitions[tid]
        label = trans.name
        if trans.guard is not None:
            label += r"\n[" + ex.to_text(trans.guard, "sml") + "]"
        out.append(f"  {_dot_id(tid)} [shape=box, label={_dot_id(label)}];")
    for arc in sorted(net.arcs, key=lambda a: _natural_key(a.id)):
        src, dst = ((arc.place, arc.trans) if arc.orientation == PTOT
                    else (arc.trans, arc.place))
        text = inscription_text(arc.inscription)
        out.append(f"  {_dot_id(src)} -> {_dot_id(dst)} [label={_dot_id(text)}];")
    out.append("}")
    return "\n".join(out) + "\n"


def _dot_id(text: str) -> str:
    # intentional \n escapes in labels must survive, so only quotes are escaped
    return '"' + text.replace('"', '\\"') + '"'
