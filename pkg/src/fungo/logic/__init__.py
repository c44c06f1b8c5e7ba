"""Rule language: syntax, fuzzy semantics, compilation, execution."""

from .compiler import (
    GIVEN,
    IMPLICATIONS,
    LEARNED,
    MATERIAL,
    RESIDUUM,
    CompileError,
    CompiledConstraint,
    PredicateBinding,
    compile_constraint,
)
from .engine import ENGINE_ENV_VAR, HAS_NUMBA, resolve_engine
from .formula import (
    And,
    Atom,
    EXISTS,
    EXISTS_N,
    FORALL,
    Formula,
    FormulaError,
    Iff,
    Implies,
    Node,
    Not,
    Or,
    Quantifier,
    iter_atoms,
    render,
)
from .parser import ParseError, parse_rule, parse_rules
from .tnorms import (
    CONNECTIVES,
    LUKASIEWICZ,
    MINIMUM,
    PRODUCT,
    TNORMS,
    aggregate_quantifier,
    eval_connective,
    material,
    negate,
    residuum,
    t_conorm,
    t_norm,
)

__all__ = [
    "And",
    "Atom",
    "CompileError",
    "CompiledConstraint",
    "CONNECTIVES",
    "ENGINE_ENV_VAR",
    "EXISTS",
    "EXISTS_N",
    "FORALL",
    "Formula",
    "FormulaError",
    "GIVEN",
    "HAS_NUMBA",
    "Iff",
    "IMPLICATIONS",
    "Implies",
    "LEARNED",
    "LUKASIEWICZ",
    "MATERIAL",
    "MINIMUM",
    "Node",
    "Not",
    "Or",
    "ParseError",
    "PredicateBinding",
    "PRODUCT",
    "Quantifier",
    "RESIDUUM",
    "TNORMS",
    "aggregate_quantifier",
    "compile_constraint",
    "eval_connective",
    "iter_atoms",
    "material",
    "negate",
    "parse_rule",
    "parse_rules",
    "render",
    "residuum",
    "resolve_engine",
    "t_conorm",
    "t_norm",
]
