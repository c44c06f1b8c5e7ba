"""Execution backends for compiled rule bodies.

A rule body is lowered to a flat postorder instruction program.  Two
backends evaluate it over a batch of groundings: a numba-jitted
node-major loop nest and a vectorized pure-numpy path.  Both compute
the same IEEE operations in the same order, so they agree to the last
bit.

The backend is picked by the ``FUNGO_ENGINE`` environment variable
(``auto``, ``numba`` or ``numpy``; default ``auto`` = numba when
importable).  ``benchmarks/bench_engine.py`` compares the two.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


ENGINE_ENV_VAR = "FUNGO_ENGINE"

OP_LOAD = 0
OP_NOT = 1
OP_AND = 2
OP_OR = 3
OP_IMPL = 4
OP_IMPL_MAT = 5

TN_MINIMUM = 0
TN_PRODUCT = 1
TN_LUKASIEWICZ = 2

_GUARD = 1e-12


@dataclass(frozen=True)
class Program:
    """Postorder instruction list for one rule body.

    ``lhs`` holds the atom slot for OP_LOAD nodes and the left child index
    otherwise; ``rhs`` holds the right child index or -1.
    """

    opcodes: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tnorm_code: int
    n_slots: int

    @property
    def n_nodes(self) -> int:
        return int(self.opcodes.shape[0])


def resolve_engine(engine: str | None = None) -> str:
    """Resolve an engine request (or the env var) to 'numba' or 'numpy'."""
    name = engine or os.environ.get(ENGINE_ENV_VAR, "auto")
    if name == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba engine requested but numba is not importable")
        return name
    if name == "numpy":
        return name
    raise ValueError(f"unknown engine {name!r}, expected auto, numba or numpy")


def _native(arr: np.ndarray) -> np.ndarray:
    """Re-home a jit-allocated array into a numpy-owned buffer.

    Arrays allocated inside jitted code carry their own float64
    descriptor instance, and numpy's indexed-ufunc fast path dispatches
    on descriptor identity — downstream ``np.add.at`` scatters run an
    order of magnitude slower on them.  One memcpy restores the
    singleton dtype.
    """
    out = np.empty(arr.shape, dtype=np.float64)
    np.copyto(out, arr)
    return out


def evaluate(program: Program, values: np.ndarray, engine: str | None = None) -> np.ndarray:
    """Truth value of the body for each grounding row of ``values``."""
    if resolve_engine(engine) == "numba":
        return _native(_eval_nb(
            program.opcodes, program.lhs, program.rhs, program.tnorm_code, values
        ))
    return node_values(program, values)[-1].copy()


def evaluate_with_gradient(
    program: Program,
    values: np.ndarray,
    weights: np.ndarray,
    engine: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Truths plus d(sum_g weights[g] * t[g]) / d(values)."""
    if resolve_engine(engine) == "numba":
        truths, dvalues = _eval_grad_nb(
            program.opcodes, program.lhs, program.rhs, program.tnorm_code, values, weights
        )
        return _native(truths), _native(dvalues)
    return _eval_grad_np(program, values, weights)


# ---------------------------------------------------------------------------
# numpy backend

def node_values(program: Program, values: np.ndarray) -> np.ndarray:
    """Forward pass keeping every node's value; shape (n_nodes, n_groundings)."""
    opcodes, lhs, rhs = program.opcodes, program.lhs, program.rhs
    tn = program.tnorm_code
    n_g = values.shape[0]
    vals = np.empty((program.n_nodes, n_g), dtype=np.float64)
    for i in range(program.n_nodes):
        op = opcodes[i]
        if op == OP_LOAD:
            vals[i] = values[:, lhs[i]]
        elif op == OP_NOT:
            vals[i] = 1.0 - vals[lhs[i]]
        else:
            a = vals[lhs[i]]
            b = vals[rhs[i]]
            if op == OP_AND:
                vals[i] = _t_np(tn, a, b)
            elif op == OP_OR:
                vals[i] = 1.0 - _t_np(tn, 1.0 - a, 1.0 - b)
            elif op == OP_IMPL:
                vals[i] = _resid_np(tn, a, b)
            else:
                vals[i] = 1.0 - _t_np(tn, a, 1.0 - b)
    return vals


def _t_np(tn: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if tn == TN_MINIMUM:
        return np.minimum(a, b)
    if tn == TN_PRODUCT:
        return a * b
    return np.maximum(a + b - 1.0, 0.0)


def _resid_np(tn: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sat = a <= b
    if tn == TN_MINIMUM:
        res = b
    elif tn == TN_PRODUCT:
        small = a < _GUARD
        res = np.where(small, 1.0, b / np.where(small, 1.0, a))
    else:
        res = 1.0 - a + b
    return np.where(sat, 1.0, res)


def _eval_grad_np(
    program: Program, values: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    opcodes, lhs, rhs = program.opcodes, program.lhs, program.rhs
    tn = program.tnorm_code
    vals = node_values(program, values)
    n_nodes = program.n_nodes
    n_g = values.shape[0]
    adj = np.zeros((n_nodes, n_g), dtype=np.float64)
    adj[n_nodes - 1] = weights
    dvalues = np.zeros((n_g, program.n_slots), dtype=np.float64)
    for i in range(n_nodes - 1, -1, -1):
        op = opcodes[i]
        w = adj[i]
        if op == OP_LOAD:
            dvalues[:, lhs[i]] += w
            continue
        if op == OP_NOT:
            adj[lhs[i]] -= w
            continue
        a = vals[lhs[i]]
        b = vals[rhs[i]]
        if op == OP_AND:
            if tn == TN_MINIMUM:
                da = np.where(a <= b, 1.0, 0.0)
                db = 1.0 - da
            elif tn == TN_PRODUCT:
                da = b
                db = a
            else:
                da = db = np.where(a + b - 1.0 > 0.0, 1.0, 0.0)
        elif op == OP_OR:
            if tn == TN_MINIMUM:
                da = np.where(a >= b, 1.0, 0.0)
                db = 1.0 - da
            elif tn == TN_PRODUCT:
                da = 1.0 - b
                db = 1.0 - a
            else:
                da = db = np.where(a + b < 1.0, 1.0, 0.0)
        elif op == OP_IMPL:
            unsat = a > b
            if tn == TN_MINIMUM:
                da = np.zeros(n_g)
                db = np.where(unsat, 1.0, 0.0)
            elif tn == TN_PRODUCT:
                live = unsat & (a >= _GUARD)
                safe = np.where(live, a, 1.0)
                da = np.where(live, -b / (safe * safe), 0.0)
                db = np.where(live, 1.0 / safe, 0.0)
            else:
                da = np.where(unsat, -1.0, 0.0)
                db = np.where(unsat, 1.0, 0.0)
        else:  # OP_IMPL_MAT
            if tn == TN_MINIMUM:
                left = a + b <= 1.0
                da = np.where(left, -1.0, 0.0)
                db = np.where(left, 0.0, 1.0)
            elif tn == TN_PRODUCT:
                da = b - 1.0
                db = a
            else:
                act = a > b
                da = np.where(act, -1.0, 0.0)
                db = np.where(act, 1.0, 0.0)
        adj[lhs[i]] += w * da
        adj[rhs[i]] += w * db
    return vals[n_nodes - 1].copy(), dvalues


# ---------------------------------------------------------------------------
# numba backend

@njit(cache=True)
def _t_s(tn, a, b):
    if tn == TN_MINIMUM:
        return a if a <= b else b
    if tn == TN_PRODUCT:
        return a * b
    s = a + b - 1.0
    return s if s > 0.0 else 0.0


@njit(cache=True)
def _resid_s(tn, a, b):
    if a <= b:
        return 1.0
    if tn == TN_MINIMUM:
        return b
    if tn == TN_PRODUCT:
        if a < _GUARD:
            return 1.0
        return b / a
    return 1.0 - a + b


@njit(cache=True)
def _forward_nb(opcodes, lhs, rhs, tn, values):
    # Node-major loop nest: the opcode dispatch is hoisted out of the
    # grounding loop so the inner loops stay branch-light and vectorize.
    n_nodes = opcodes.shape[0]
    n_g = values.shape[0]
    vals = np.empty((n_nodes, n_g), dtype=np.float64)
    for i in range(n_nodes):
        op = opcodes[i]
        li = lhs[i]
        ri = rhs[i]
        if op == OP_LOAD:
            for g in range(n_g):
                vals[i, g] = values[g, li]
        elif op == OP_NOT:
            for g in range(n_g):
                vals[i, g] = 1.0 - vals[li, g]
        elif op == OP_AND:
            for g in range(n_g):
                vals[i, g] = _t_s(tn, vals[li, g], vals[ri, g])
        elif op == OP_OR:
            for g in range(n_g):
                vals[i, g] = 1.0 - _t_s(tn, 1.0 - vals[li, g], 1.0 - vals[ri, g])
        elif op == OP_IMPL:
            for g in range(n_g):
                vals[i, g] = _resid_s(tn, vals[li, g], vals[ri, g])
        else:
            for g in range(n_g):
                vals[i, g] = 1.0 - _t_s(tn, vals[li, g], 1.0 - vals[ri, g])
    return vals


@njit(cache=True)
def _eval_nb(opcodes, lhs, rhs, tn, values):
    vals = _forward_nb(opcodes, lhs, rhs, tn, values)
    return vals[opcodes.shape[0] - 1].copy()


@njit(cache=True)
def _eval_grad_nb(opcodes, lhs, rhs, tn, values, weights):
    n_g = values.shape[0]
    n_nodes = opcodes.shape[0]
    n_slots = values.shape[1]
    vals = _forward_nb(opcodes, lhs, rhs, tn, values)
    adj = np.zeros((n_nodes, n_g), dtype=np.float64)
    dvalues = np.zeros((n_g, n_slots), dtype=np.float64)
    for g in range(n_g):
        adj[n_nodes - 1, g] = weights[g]
    for i in range(n_nodes - 1, -1, -1):
        op = opcodes[i]
        li = lhs[i]
        ri = rhs[i]
        if op == OP_LOAD:
            for g in range(n_g):
                dvalues[g, li] += adj[i, g]
            continue
        if op == OP_NOT:
            for g in range(n_g):
                adj[li, g] -= adj[i, g]
            continue
        for g in range(n_g):
            w = adj[i, g]
            a = vals[li, g]
            b = vals[ri, g]
            da = 0.0
            db = 0.0
            if op == OP_AND:
                if tn == TN_MINIMUM:
                    if a <= b:
                        da = 1.0
                    else:
                        db = 1.0
                elif tn == TN_PRODUCT:
                    da = b
                    db = a
                else:
                    if a + b - 1.0 > 0.0:
                        da = 1.0
                        db = 1.0
            elif op == OP_OR:
                if tn == TN_MINIMUM:
                    if a >= b:
                        da = 1.0
                    else:
                        db = 1.0
                elif tn == TN_PRODUCT:
                    da = 1.0 - b
                    db = 1.0 - a
                else:
                    if a + b < 1.0:
                        da = 1.0
                        db = 1.0
            elif op == OP_IMPL:
                if a > b:
                    if tn == TN_MINIMUM:
                        db = 1.0
                    elif tn == TN_PRODUCT:
                        if a >= _GUARD:
                            da = -b / (a * a)
                            db = 1.0 / a
                    else:
                        da = -1.0
                        db = 1.0
            else:
                if tn == TN_MINIMUM:
                    if a + b <= 1.0:
                        da = -1.0
                    else:
                        db = 1.0
                elif tn == TN_PRODUCT:
                    da = b - 1.0
                    db = a
                else:
                    if a > b:
                        da = -1.0
                        db = 1.0
            adj[li, g] += w * da
            adj[ri, g] += w * db
    return vals[n_nodes - 1].copy(), dvalues
