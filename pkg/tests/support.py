"""Shared helpers for the test suite: random constraint instances and a
central finite-difference oracle for penalty gradients."""

from __future__ import annotations

import numpy as np

from fungo.logic import PredicateBinding, compile_constraint, parse_rule

# A representative mix of rule shapes: implications, disjunction heads,
# equivalences, negation, two-variable bodies, existentials.
FORMULA_POOL = [
    "forall x:P. A(x) => B(x)",
    "forall x:P. A(x) and B(x) => C(x)",
    "forall x:P. A(x) => B(x) or C(x) or D(x)",
    "forall x:P. not (A(x) and not B(x)) or C(x)",
    "forall x:P. (A(x) <=> B(x)) <=> C(x)",
    "exists x:P. A(x) and not B(x)",
    "exists[2] x:P. A(x) => B(x)",
    "forall x:P. forall y:P. BOUND(x,y) => (A(x) <=> A(y))",
    "forall x:P. forall y:P. BOUND(x,y) => (A(x) and A(y)) or (B(x) and B(y))",
    "forall x:P. exists y:P. BOUND(x,y) and A(y)",
]


def random_instance(rng, tnorm, implication="residuum", formula_text=None):
    """A compiled constraint over a small random domain plus matching outputs."""
    text = formula_text or FORMULA_POOL[rng.integers(len(FORMULA_POOL))]
    formula = parse_rule(text)
    n = int(rng.integers(3, 6))
    ids = [f"p{i}" for i in range(n)]
    positions = {p: i for i, p in enumerate(ids)}

    predicates = {}
    outputs = {}
    for name, arity in formula.predicates().items():
        if arity == 1:
            predicates[name] = PredicateBinding(name, 1, positions=dict(positions))
            outputs[name] = rng.uniform(0.05, 0.95, size=n)
        else:
            pairs = [
                (ids[i], ids[j])
                for i in range(n)
                for j in range(i + 1, n)
                if rng.random() < 0.7
            ]
            pair_positions = {pair: k for k, pair in enumerate(pairs)}
            predicates[name] = PredicateBinding(
                name, 2, pair_positions=pair_positions
            )
            outputs[name] = rng.uniform(0.05, 0.95, size=len(pairs))

    constraint = compile_constraint(
        formula, tnorm, {"P": ids}, predicates, implication=implication
    )
    return constraint, outputs


def smooth_instance(rng, tnorm, implication="residuum", margin=1e-3, tries=200):
    """Like random_instance, but resampled until the evaluation point sits at
    least ``margin`` away from every subgradient boundary."""
    for _ in range(tries):
        constraint, outputs = random_instance(rng, tnorm, implication)
        if constraint.nonsmooth_margin(outputs) > margin:
            return constraint, outputs
    raise AssertionError("could not sample a smooth evaluation point")


def fd_penalty_gradients(constraint, outputs, h=1e-6):
    """Central finite differences of the constraint penalty."""
    grads = {}
    for name, vec in outputs.items():
        if constraint.modes.get(name) != "learned":
            continue
        g = np.zeros_like(vec)
        for i in range(vec.size):
            left = dict(outputs)
            right = dict(outputs)
            lv = vec.copy()
            rv = vec.copy()
            lv[i] -= h
            rv[i] += h
            left[name] = lv
            right[name] = rv
            g[i] = (constraint.penalty(right) - constraint.penalty(left)) / (2.0 * h)
        grads[name] = g
    return grads


def gradient_close(analytic, numeric, rtol=1e-5):
    """Relative agreement with an absolute floor of 1 for tiny gradients."""
    for name, g in analytic.items():
        f = numeric[name]
        scale = np.maximum(1.0, np.maximum(np.abs(g), np.abs(f)))
        if not np.all(np.abs(g - f) <= rtol * scale):
            return False
    return True
