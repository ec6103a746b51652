"""SMDL: the plain-text input syntax for state machines.

    machine M {
      var track : int = 1 ;
      state Busy initial history entry FTS {
        state PLAYING initial do Play ;
        state PAUSED ;
        final ;
      } ;
      trans t1 : PLAYING -> PAUSED on pause if ( track < 3 ) / Skip { track := track + 1 } ;
      trans t2 : PAUSED -> Busy.H on resume ;
    }

`X.H` targets the history pseudostate of composite X; `X.F` targets the
final state of region X (the machine name addresses the root region).
Comments run from `#` to end of line.  Printing is canonical: stable
ordering, two-space indentation, byte-identical for equal models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import expr
from .statemachine import (
    COMPOSITE, FINAL, KEYWORDS, SIMPLE,
    Behaviour, StateMachine, StateNode, Transition, Variable,
)


class SmdlSyntaxError(ValueError):
    """Parse failure with 1-based position and the tokens that were legal."""

    def __init__(self, message: str, line: int, column: int, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        suffix = ""
        if self.expected:
            suffix = " (expected " + " or ".join(repr(e) for e in self.expected) + ")"
        super().__init__(f"line {line}, column {column}: {message}{suffix}")


_PUNCT = (":=", "->", "<=", ">=", "!=", "{", "}", "(", ")", ":", ";", ",",
          ".", "/", "<", ">", "=", "+", "-", "*")


def tokenize(text: str):
    """Yield (kind, text, (line, col)) tuples; kind in ident/kw/int/op."""
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start = (line, col)
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            tokens.append(("kw" if word in KEYWORDS else "ident", word, start))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(("int", text[i:j], start))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(("op", p, start))
                col += len(p)
                i += len(p)
                break
        else:
            raise SmdlSyntaxError(f"unexpected character {c!r}", line, col)
    tokens.append(("eof", "", (line, col)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self, ahead: int = 0):
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def advance(self):
        tok = self.tokens[self.i]
        if tok[0] != "eof":
            self.i += 1
        return tok

    def fail(self, expected):
        kind, text, (line, col) = self.peek()
        found = "end of input" if kind == "eof" else repr(text)
        raise SmdlSyntaxError(f"found {found}", line, col, expected)

    def expect(self, text: str):
        if self.peek()[1] == text and self.peek()[0] != "eof":
            return self.advance()
        self.fail([text])

    def accept(self, text: str) -> bool:
        if self.peek()[1] == text and self.peek()[0] != "eof":
            self.advance()
            return True
        return False

    def ident(self, what: str) -> str:
        kind, text, _ = self.peek()
        if kind == "ident":
            self.advance()
            return text
        self.fail([what])

    # -- grammar -------------------------------------------------------------

    def machine(self) -> StateMachine:
        self.expect("machine")
        name = self.ident("machine name")
        self.expect("{")
        states: list[StateNode] = []
        transitions: list[_RawTransition] = []
        variables: list[Variable] = []
        self.region_items(None, "", states, transitions, variables, top=True)
        self.expect("}")
        if self.peek()[0] != "eof":
            self.fail(["end of file"])
        return _assemble(name, states, transitions, variables)

    def region_items(self, parent, owner_name, states, transitions, variables, top):
        while True:
            kind, text, _ = self.peek()
            if text == "state":
                self.state_decl(parent, states, transitions, variables)
            elif text == "final":
                self.advance()
                self.expect(";")
                fid = f"{owner_name}.final"
                states.append(StateNode(id=fid, name=fid, kind=FINAL, parent=parent))
            elif top and text == "var":
                self.var_decl(variables)
            elif top and text == "trans":
                self.trans_decl(transitions)
            else:
                return

    def var_decl(self, variables):
        self.expect("var")
        name = self.ident("variable name")
        self.expect(":")
        self.expect("int")
        self.expect("=")
        negative = self.accept("-")
        kind, text, _ = self.peek()
        if kind != "int":
            self.fail(["integer literal"])
        self.advance()
        self.expect(";")
        value = -int(text) if negative else int(text)
        variables.append(Variable(name, value))

    def behaviour(self, owner_id: str, role: str) -> Behaviour:
        label = self.ident("behaviour label")
        assignments = []
        # `{` opens an assignment block only when followed by `ident :=`;
        # otherwise it is the owner's child-state block
        if (self.peek()[1] == "{" and self.peek(1)[0] == "ident"
                and self.peek(2)[1] == ":="):
            self.expect("{")
            while True:
                var = self.ident("variable name")
                self.expect(":=")
                assignments.append((var, self.int_expr(("," , "}"))))
                if not self.accept(","):
                    break
            self.expect("}")
        return Behaviour(id=f"{owner_id}.{role}", label=label,
                         assignments=tuple(assignments))

    def state_decl(self, parent, states, transitions, variables):
        self.expect("state")
        name = self.ident("state name")
        is_initial = history = False
        entry = exit_ = do = None
        while True:
            if self.accept("initial"):
                is_initial = True
            elif self.accept("history"):
                history = True
            elif self.accept("entry"):
                entry = self.behaviour(name, "entry")
            elif self.accept("exit"):
                exit_ = self.behaviour(name, "exit")
            elif self.accept("do"):
                do = self.behaviour(name, "do")
            else:
                break
        placeholder = len(states)
        states.append(None)  # reserve the document-order slot
        child_states: list[StateNode] = []
        if self.accept("{"):
            self.region_items(name, name, child_states, transitions, variables, top=False)
            self.expect("}")
        self.expect(";")
        kind = COMPOSITE if child_states else SIMPLE
        states[placeholder] = StateNode(
            id=name, name=name, kind=kind, parent=parent, is_initial=is_initial,
            entry=entry, exit=exit_, do=do, has_history=history)
        states.extend(child_states)

    def trans_decl(self, transitions):
        self.expect("trans")
        tid = self.ident("transition id")
        self.expect(":")
        source = self.ident("source state")
        self.expect("->")
        target = self.ident("target state")
        suffix = None
        if self.accept("."):
            kind, text, _ = self.peek()
            if text in ("H", "F"):
                self.advance()
                suffix = text
            else:
                self.fail(["H", "F"])
        trigger = None
        if self.accept("on"):
            trigger = self.ident("event name")
        guard = None
        if self.accept("if"):
            self.expect("(")
            guard = self.bool_expr()
            self.expect(")")
        effect = None
        if self.accept("/"):
            effect = self.behaviour(tid, "effect")
        self.expect(";")
        transitions.append(_RawTransition(tid, source, target, suffix,
                                          trigger, guard, effect))

    # -- expression embedding --------------------------------------------------

    def _expr_tokens(self, stoppers):
        """Slice tokens up to an unnested stopper; parens may nest."""
        start = self.i
        depth = 0
        while True:
            kind, text, pos = self.peek()
            if kind == "eof":
                self.fail(list(stoppers))
            if depth == 0 and text in stoppers:
                break
            if text == "(":
                depth += 1
            elif text == ")":
                if depth == 0:
                    break
                depth -= 1
            self.advance()
        return self.tokens[start:self.i]

    def bool_expr(self):
        tokens = self._expr_tokens((")",))
        try:
            return expr.parse_bool(tokens, "smdl")
        except expr.ExprSyntaxError as err:
            line, col = err.pos if err.pos else self.peek()[2]
            raise SmdlSyntaxError(str(err), line, col) from None

    def int_expr(self, stoppers):
        tokens = self._expr_tokens(stoppers)
        try:
            return expr.parse_int(tokens, "smdl")
        except expr.ExprSyntaxError as err:
            line, col = err.pos if err.pos else self.peek()[2]
            raise SmdlSyntaxError(str(err), line, col) from None


@dataclass
class _RawTransition:
    id: str
    source: str
    target: str
    suffix: Optional[str]  # None, "H" or "F"
    trigger: Optional[str]
    guard: object
    effect: Optional[Behaviour]


def _assemble(name, states, raw_transitions, variables) -> StateMachine:
    known = {s.id for s in states}
    transitions = []
    for raw in raw_transitions:
        target = raw.target
        to_history = False
        if raw.suffix == "H":
            to_history = True
        elif raw.suffix == "F":
            if target in known:
                target = f"{target}.final"
            elif target == name:
                target = ".final"  # the root region's final state
            else:
                target = f"{target}.final"  # left dangling for validation
        transitions.append(Transition(
            id=raw.id, source=raw.source, target=target, to_history=to_history,
            trigger=raw.trigger, guard=raw.guard, effect=raw.effect))
    return StateMachine(name=name, states=tuple(states),
                        transitions=tuple(transitions), variables=tuple(variables))


def parse(text: str) -> StateMachine:
    """Parse SMDL source into a model.

    Only syntax is checked here; run statemachine.validate for the
    structural invariants.
    """
    return _Parser(text).machine()


# ---------------------------------------------------------------------------
# Printing


def _print_behaviour(b: Behaviour) -> str:
    if not b.assignments:
        return b.label
    parts = ", ".join(f"{var} := {expr.to_text(rhs, 'smdl')}" for var, rhs in b.assignments)
    return f"{b.label} {{ {parts} }}"


def _print_state(model: StateMachine, node: StateNode, indent: int, out: list):
    pad = "  " * indent
    bits = [f"state {node.name}"]
    if node.is_initial:
        bits.append("initial")
    if node.has_history:
        bits.append("history")
    if node.entry:
        bits.append(f"entry {_print_behaviour(node.entry)}")
    if node.exit:
        bits.append(f"exit {_print_behaviour(node.exit)}")
    if node.do:
        bits.append(f"do {_print_behaviour(node.do)}")
    children = model.children.get(node.id, ())
    if children:
        out.append(f"{pad}{' '.join(bits)} {{")
        _print_region(model, children, indent + 1, out)
        out.append(f"{pad}}} ;")
    else:
        out.append(f"{pad}{' '.join(bits)} ;")


def _print_region(model, children, indent, out):
    named = sorted((c for c in children if c.kind != FINAL), key=lambda c: c.name)
    for child in named:
        _print_state(model, child, indent, out)
    if any(c.kind == FINAL for c in children):
        out.append("  " * indent + "final ;")


def _target_text(model: StateMachine, t: Transition) -> str:
    node = model.by_id.get(t.target)
    if t.to_history:
        return f"{node.name if node else t.target}.H"
    if node is not None and node.kind == FINAL:
        owner = model.by_id.get(node.parent) if node.parent else None
        return f"{owner.name}.F" if owner else f"{model.name}.F"
    return node.name if node else t.target


def print_model(model: StateMachine) -> str:
    """Canonical SMDL text: regions sorted by state name, transitions by id,
    variables by name; identical models print byte-identically."""
    out = [f"machine {model.name} {{"]
    for v in sorted(model.variables, key=lambda v: v.name):
        out.append(f"  var {v.name} : int = {v.initial} ;")
    _print_region(model, model.children.get(None, ()), 1, out)
    src = {s.id: s for s in model.states}
    for t in sorted(model.transitions, key=lambda t: t.id):
        bits = [f"trans {t.id} : {src[t.source].name if t.source in src else t.source}"
                f" -> {_target_text(model, t)}"]
        if t.trigger:
            bits.append(f"on {t.trigger}")
        if t.guard is not None:
            bits.append(f"if ( {expr.to_text(t.guard, 'smdl')} )")
        if t.effect is not None:
            bits.append(f"/ {_print_behaviour(t.effect)}")
        out.append("  " + " ".join(bits) + " ;")
    out.append("}")
    return "\n".join(out) + "\n"
