from .ast import *  # noqa: F401,F403
from .ast import AltId, Grammar, Definition
from .check import Diagnostic, left_recursive, nullable_set, validate
from .syntax import (
    GrammarSyntaxError, lex, load_grammar, parse_grammar, render,
    render_definition, render_expr, render_machine,
)
