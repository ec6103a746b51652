"""smd2cpn: hierarchical state machines translated to coloured Petri nets,
with a token-game simulator and a trace-equivalence oracle."""

from .statemachine import (
    Behaviour, StateMachine, StateNode, Transition, Variable,
    ValidationReport, validate,
    SIMPLE, COMPOSITE, FINAL, NO_HISTORY,
)
from .smdl import parse, print_model, SmdlSyntaxError
from .net import (
    ColouredNet, PlaceDef, TransDef, ArcDef, Marking,
    UnitCS, IntCS, EnumCS, ProductCS,
    enabled_bindings, fire, explore,
)
from .translator import TranslationConfig, TranslationMap, translate
from .emit import layout, emit_cpn_xml, parse_cpn_xml, emit_dot
from .oracle import (
    Configuration, StepLabel,
    initial_configuration, enabled_transitions, step,
    check_trace_equivalence, check_control_safety,
)

__version__ = "0.1.0"
