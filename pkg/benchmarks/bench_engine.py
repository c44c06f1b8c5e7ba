"""Compare the jitted and the vectorized rule-evaluation backends.

Compiles a handful of representative rules over synthetic truth vectors and
times ``penalty_and_gradients`` under both engines.  Run from the repository
root:

    python3 benchmarks/bench_engine.py --size 400 --repeats 30

The two backends compute identical IEEE operations, so the printed checksum
column must agree to the last bit; the table reports per-call milliseconds.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fungo.logic import (
    HAS_NUMBA,
    PredicateBinding,
    compile_constraint,
    parse_rule,
)

RULES = (
    ("implication", "forall x:Prot. Q(x) => P(x)"),
    ("disjunction", "forall x:Prot. R(x) => P(x) or Q(x) or S(x)"),
    ("pair equivalence", "forall x:Prot. forall y:Prot. BOUND(x,y) => (P(x) <=> P(y))"),
    ("existential", "forall x:Prot. exists y:Prot. BOUND(x,y) and P(y)"),
)


def build_problem(size: int, seed: int):
    rng = np.random.default_rng(seed)
    ids = tuple(f"p{i:04d}" for i in range(size))
    positions = {name: i for i, name in enumerate(ids)}
    bindings = {
        name: PredicateBinding(name, 1, positions=positions)
        for name in ("P", "Q", "R", "S")
    }
    table = {}
    for _ in range(size * 4):
        a = ids[int(rng.integers(size))]
        b = ids[int(rng.integers(size))]
        if a != b:
            table[(a, b)] = 1.0
    bindings["BOUND"] = PredicateBinding("BOUND", 2, mode="given", table=table)
    outputs = {
        name: rng.random(size) for name in ("P", "Q", "R", "S")
    }
    constraints = [
        (label, compile_constraint(parse_rule(text), "product", {"Prot": ids}, bindings))
        for label, text in RULES
    ]
    return constraints, outputs


def time_engine(constraint, outputs, engine: str, repeats: int) -> tuple[float, float]:
    constraint.penalty_and_gradients(outputs, engine)  # warm-up / jit compile
    best = float("inf")
    checksum = 0.0
    for _ in range(repeats):
        start = time.perf_counter()
        phi, grads = constraint.penalty_and_gradients(outputs, engine)
        best = min(best, time.perf_counter() - start)
        checksum = phi + sum(float(g.sum()) for g in grads.values())
    return best * 1e3, checksum


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=400, help="domain size")
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not HAS_NUMBA:
        print("numba is not importable; only the numpy engine can run")
        return 1
    constraints, outputs = build_problem(args.size, args.seed)
    print(f"domain size {args.size}, best of {args.repeats} repeats")
    print(f"{'rule':<18} {'groundings':>10} {'numba ms':>10} {'numpy ms':>10} "
          f"{'speedup':>8}  agree")
    for label, constraint in constraints:
        count = constraint.n_groundings
        jit_ms, jit_sum = time_engine(constraint, outputs, "numba", args.repeats)
        vec_ms, vec_sum = time_engine(constraint, outputs, "numpy", args.repeats)
        agree = "yes" if jit_sum == vec_sum else "NO"
        print(f"{label:<18} {count:>10} {jit_ms:>10.3f} {vec_ms:>10.3f} "
              f"{vec_ms / jit_ms:>7.2f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
