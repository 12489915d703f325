"""Top-down parsing, action replay and TOP recovery."""

from .actions import ActionError, Node, StackNotSingleton, Sym, Value, replay, to_exr
from .compiled import (
    GrammarError, LeftRecursionError, branch_probabilities, compile_grammar,
    probability_table,
)
from .derivation import Derivation, check_spans, count_branches, recompute_prob
from .parser import (
    DEFAULT_CAP, NoParse, ParseItem, ParseResult, Parser, derivation_to_top, parse,
)
from .top import TopError, value_to_top
