"""Fuzzy connective and quantifier semantics.

Three t-norm families are supported; negation is the strong negation
``1 - x``, disjunction the dual co-norm, and implication the residuum of
the chosen t-norm.  The material implication ``1 - T(x1, 1 - x2)`` is
kept separately for experiments that want the weaker mapping.

Quantifiers aggregate per-grounding truth into a penalty: a universal
sums ``1 - t`` over the groundings, an existential takes the minimum,
and ``exists_n`` sums the n smallest values, so ``exists_1`` coincides
with ``exists`` and ``exists_|S|`` with ``forall``.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .formula import EXISTS, EXISTS_N, FORALL

MINIMUM = "minimum"
PRODUCT = "product"
LUKASIEWICZ = "lukasiewicz"

TNORMS = (MINIMUM, PRODUCT, LUKASIEWICZ)

CONNECTIVES = ("not", "and", "or", "implies", "iff")

# Below this value the antecedent of a product residuum counts as satisfied,
# keeping the quotient bounded.
PRODUCT_GUARD = 1e-12


def _check_tnorm(kind: str) -> None:
    if kind not in TNORMS:
        raise ValueError(f"unknown t-norm {kind!r}, expected one of {TNORMS}")


def _check_unit(value: float) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"operand {value!r} outside [0, 1]")
    return v


def t_norm(kind: str, a: float, b: float) -> float:
    """Conjunction under the chosen t-norm."""
    if kind == MINIMUM:
        return a if a <= b else b
    if kind == PRODUCT:
        return a * b
    if kind == LUKASIEWICZ:
        s = a + b - 1.0
        return s if s > 0.0 else 0.0
    _check_tnorm(kind)
    raise AssertionError


def t_conorm(kind: str, a: float, b: float) -> float:
    """Disjunction: the dual co-norm ``1 - T(1-a, 1-b)``."""
    return 1.0 - t_norm(kind, 1.0 - a, 1.0 - b)


def negate(a: float) -> float:
    return 1.0 - a


def residuum(kind: str, a: float, b: float) -> float:
    """Residual implication: 1 when ``a <= b``, else the kind-specific residue."""
    if a <= b:
        return 1.0
    if kind == MINIMUM:
        return b
    if kind == PRODUCT:
        if a < PRODUCT_GUARD:
            return 1.0
        return b / a
    if kind == LUKASIEWICZ:
        return 1.0 - a + b
    _check_tnorm(kind)
    raise AssertionError


def material(kind: str, a: float, b: float) -> float:
    """Material implication ``1 - T(a, 1-b)``; with the product t-norm this
    is ``1 + a*b - a``."""
    return 1.0 - t_norm(kind, a, 1.0 - b)


def eval_connective(tnorm: str, kind: str, operands: Sequence[float]) -> float:
    """Evaluate one connective on fuzzy operands in [0, 1].

    ``implies`` uses the residuum; ``iff`` is the t-norm conjunction of the
    two residua.
    """
    _check_tnorm(tnorm)
    ops = [_check_unit(v) for v in operands]
    if kind == "not":
        (a,) = ops
        return negate(a)
    if kind == "and":
        a, b = ops
        return t_norm(tnorm, a, b)
    if kind == "or":
        a, b = ops
        return t_conorm(tnorm, a, b)
    if kind == "implies":
        a, b = ops
        return residuum(tnorm, a, b)
    if kind == "iff":
        a, b = ops
        return t_norm(tnorm, residuum(tnorm, a, b), residuum(tnorm, b, a))
    raise ValueError(f"unknown connective {kind!r}, expected one of {CONNECTIVES}")


def aggregate_quantifier(
    kind: str, truth_values: Iterable[float], n: int | None = None
) -> float:
    """Turn per-grounding truth values into a penalty.

    The ``exists_n`` selection sums its picks in grounding order, which makes
    ``exists_1`` bit-identical to ``exists`` and ``exists_|S|`` to ``forall``.
    """
    t = np.asarray(list(truth_values), dtype=np.float64)
    if t.size == 0:
        raise ValueError("empty grounding set")
    if np.any((t < 0.0) | (t > 1.0)):
        raise ValueError("truth value outside [0, 1]")
    penalties = 1.0 - t
    if kind == FORALL:
        return float(penalties.sum())
    if kind == EXISTS:
        return float(penalties.min())
    if kind == EXISTS_N:
        if n is None or n < 1:
            raise ValueError("exists_n needs a positive n")
        if n > t.size:
            raise ValueError(f"exists_n count {n} exceeds {t.size} groundings")
        order = np.argsort(penalties, kind="stable")
        selected = np.sort(order[:n])
        return float(penalties[selected].sum())
    raise ValueError(f"unknown quantifier kind {kind!r}")
