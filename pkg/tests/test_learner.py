"""Learner: objective arithmetic, ridge oracle, gradients, stages, prediction."""

import numpy as np
import pytest

from fungo.kernels import GramMatrix
from fungo.learner import (
    DivergenceError,
    LearnerError,
    Model,
    TaskSpec,
    TrainConfig,
    decision_values,
    objective,
    objective_gradient,
    pair_key,
    predicate_bindings,
    predict,
    train,
)
from fungo.logic import compile_constraint, parse_rule


def gram(ids, matrix):
    return GramMatrix(tuple(ids), np.asarray(matrix, dtype=np.float64))


def identity_task(pred, n, labels=None):
    ids = tuple(f"p{i}" for i in range(n))
    return TaskSpec(pred, 1, ids, gram=gram(ids, np.eye(n)), labels=labels or {})


def random_pd_gram(rng, ids):
    # Random symmetric PD matrix with eigenvalues in [0.5, 2].
    n = len(ids)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = rng.uniform(0.5, 2.0, size=n)
    m = (q * eig) @ q.T
    return gram(ids, (m + m.T) / 2.0)


def test_objective_frozen_values():
    cfg = TrainConfig(lambda_r=1.0, lambda_c=0.0)
    task = identity_task("A", 1, labels={"p0": 1.0})
    model = Model({"A": np.array([0.5])})
    assert objective(model, [task], [], cfg) == pytest.approx(0.5)

    zero = Model({"A": np.array([0.0])})
    assert objective(zero, [task], [], cfg) == pytest.approx(1.0)

    unlabeled = identity_task("A", 1)
    assert objective(zero, [unlabeled], [], cfg) == 0.0


def test_decision_values_against_matvec():
    rng = np.random.default_rng(0)
    ids = tuple(f"p{i}" for i in range(6))
    task = TaskSpec("A", 1, ids, gram=random_pd_gram(rng, ids))
    alpha = rng.normal(size=6)
    scores, truths = decision_values(Model({"A": alpha}), task)
    brute = np.array([sum(task.gram.matrix[i, j] * alpha[j] for j in range(6)) for i in range(6)])
    assert np.allclose(scores, brute, atol=1e-12)
    assert truths.min() >= 0.0 and truths.max() <= 1.0

    zeros, ztruths = decision_values(Model({"A": np.zeros(6)}), task)
    assert not zeros.any() and not ztruths.any()

    half = Model({"B": np.full(4, 0.5)})
    _, f = decision_values(half, identity_task("B", 4))
    assert np.array_equal(f, np.full(4, 0.5))


def test_decision_values_size_mismatch():
    task = identity_task("A", 3)
    with pytest.raises(LearnerError, match="shape"):
        decision_values(Model({"A": np.zeros(2)}), task)


@pytest.mark.parametrize("seed", range(8))
def test_stage1_matches_ridge_closed_form(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 11))
    ids = tuple(f"p{i}" for i in range(n))
    g = random_pd_gram(rng, ids)
    y = rng.integers(0, 2, size=n).astype(float)
    task = TaskSpec("A", 1, ids, gram=g, labels={ids[i]: y[i] for i in range(n)})
    cfg = TrainConfig(lambda_r=1.0, lambda_c=0.0, tolerance=1e-14, max_iterations=3000)
    model = train([task], [], cfg)
    expected = np.linalg.solve(cfg.lambda_r * np.eye(n) + g.matrix, y)
    scale = max(1.0, float(np.linalg.norm(expected)))
    assert np.linalg.norm(model.alpha("A") - expected) / scale < 1e-4


def test_stage1_trace_is_non_increasing():
    rng = np.random.default_rng(3)
    ids = tuple(f"p{i}" for i in range(6))
    task = TaskSpec(
        "A", 1, ids, gram=random_pd_gram(rng, ids), labels={ids[0]: 1.0, ids[3]: 0.0}
    )
    model = train([task], [], TrainConfig(lambda_c=0.0))
    trace = model.trace.stage1
    assert len(trace) >= 2
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert model.trace.stage2 == ()


def _constrained_problem(lambda_c, *, scope_all=True, seed=7):
    rng = np.random.default_rng(seed)
    ids = tuple(f"p{i}" for i in range(6))
    coupling = gram(ids, 0.5 * np.eye(6) + 0.5 / 6.0)
    child = TaskSpec(
        "C", 1, ids, gram=coupling, labels={ids[0]: 1.0, ids[1]: 1.0, ids[2]: 1.0}
    )
    parent = TaskSpec("P", 1, ids, gram=coupling)
    tasks = [child, parent]
    domain = list(ids) if scope_all else list(ids[3:])
    rule = parse_rule("forall x:Prot. C(x) => P(x)")
    constraint = compile_constraint(
        rule, "minimum", {"Prot": domain}, predicate_bindings(tasks)
    )
    cfg = TrainConfig(lambda_r=1.0, lambda_c=lambda_c, max_iterations=800)
    return tasks, [constraint], cfg


def test_constraint_pushes_parent_above_child():
    tasks, constraints, cfg = _constrained_problem(50.0, scope_all=False)
    model = train(tasks, constraints, cfg)
    _, child_truth = decision_values(model, tasks[0])
    _, parent_truth = decision_values(model, tasks[1])
    # Unsupervised tail: the implication must hold there after training.
    assert (parent_truth[3:] >= child_truth[3:] - 5e-3).all()
    assert model.trace.stage2, "constraint stage should have run"

    # Without constraints the parent stays at zero.
    bare = train(tasks, [], cfg)
    _, bare_parent = decision_values(bare, tasks[1])
    assert not bare_parent.any()


def test_lambda_c_zero_is_bitwise_inert():
    tasks, constraints, _ = _constrained_problem(0.0)
    cfg = TrainConfig(lambda_r=1.0, lambda_c=0.0)
    with_rules = train(tasks, constraints, cfg)
    without = train(tasks, [], cfg)
    assert with_rules.trace == without.trace
    for pred in ("C", "P"):
        assert np.array_equal(with_rules.alpha(pred), without.alpha(pred))


def test_full_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 6:
        tasks, constraints, cfg = _constrained_problem(2.0, seed=int(rng.integers(1 << 30)))
        alphas = {
            t.predicate: rng.normal(scale=0.35, size=t.size) for t in tasks
        }
        model = Model(alphas)
        # Keep probes away from clamp and constraint kinks.
        margin_ok = True
        outputs = {}
        for t in tasks:
            s, f = decision_values(model, t)
            outputs[t.predicate] = f
            if np.min(np.abs(s)) < 1e-3 or np.min(np.abs(s - 1.0)) < 1e-3:
                margin_ok = False
        if not margin_ok or constraints[0].nonsmooth_margin(outputs) < 1e-3:
            continue
        checked += 1
        grads = objective_gradient(model, tasks, constraints, cfg)
        h = 1e-6
        for t in tasks:
            analytic = grads[t.predicate]
            for i in range(t.size):
                bump = dict(alphas)
                up = alphas[t.predicate].copy()
                up[i] += h
                bump[t.predicate] = up
                j_up = objective(Model(bump), tasks, constraints, cfg)
                down = alphas[t.predicate].copy()
                down[i] -= h
                bump[t.predicate] = down
                j_down = objective(Model(bump), tasks, constraints, cfg)
                numeric = (j_up - j_down) / (2 * h)
                scale = max(1.0, abs(numeric), abs(analytic[i]))
                assert abs(numeric - analytic[i]) / scale < 1e-5


def test_fixed_step_divergence_guard():
    task = identity_task("A", 2, labels={"p0": 1.0, "p1": 1.0})
    cfg = TrainConfig(lambda_c=0.0, learning_rate=5.0, line_search=False)
    with pytest.raises(DivergenceError, match="stage 1"):
        train([task], [], cfg)


def test_given_bound_flows_into_unary_predicate():
    ids = ("p0", "p1", "p2")
    task_a = TaskSpec("A", 1, ids, gram=gram(ids, np.eye(3)), labels={"p0": 1.0})
    pairs = (("p0", "p1"),)
    bound = TaskSpec("BOUND", 2, pairs, mode="given", values={("p0", "p1"): 1.0})
    tasks = [task_a, bound]
    rule = parse_rule("forall x:Prot. forall y:Prot. BOUND(x,y) => (A(x) <=> A(y))")
    constraint = compile_constraint(
        rule, "product", {"Prot": list(ids)}, predicate_bindings(tasks)
    )
    cfg = TrainConfig(lambda_r=0.1, lambda_c=30.0, max_iterations=600)
    model = train(tasks, [constraint], cfg)
    _, truths = decision_values(model, task_a)
    bare = train(tasks, [], cfg)
    _, bare_truths = decision_values(bare, task_a)
    # p1 interacts with the positively-labeled p0, so its truth is pulled up.
    assert truths[1] > bare_truths[1] + 0.1
    assert abs(truths[2] - bare_truths[2]) < 0.05
    # The pair table itself never trains.
    assert "BOUND" not in model.alphas


def test_predict_threshold_conventions():
    cfg = TrainConfig(threshold=0.5, undecided_band=0.05)
    ids = ("p0", "p1", "p2", "p3")
    truth_values = np.array([0.5, 0.525, 0.475, 0.9])
    task = TaskSpec("A", 1, ids, gram=gram(ids, np.eye(4)))
    model = Model({"A": truth_values})
    result = predict(model, [task], cfg)["A"]
    assert result.positive.tolist() == [True, True, False, True]
    assert result.undecided.tolist() == [True, True, True, False]


def test_predict_echoes_given_tables():
    cfg = TrainConfig()
    pairs = (("a", "b"), ("b", "c"))
    bound = TaskSpec("BOUND", 2, pairs, mode="given", values={p: 1.0 for p in pairs})
    result = predict(Model({}), [bound], cfg)["BOUND"]
    assert np.array_equal(result.truths, np.ones(2))
    assert result.positive.all()


def test_task_validation():
    ids = ("p0", "p1")
    with pytest.raises(LearnerError, match="Gram"):
        TaskSpec("A", 1, ids)
    with pytest.raises(LearnerError, match="label on unknown"):
        TaskSpec("A", 1, ids, gram=gram(ids, np.eye(2)), labels={"zz": 1.0})
    with pytest.raises(LearnerError, match="0 or 1"):
        TaskSpec("A", 1, ids, gram=gram(ids, np.eye(2)), labels={"p0": 0.5})
    with pytest.raises(LearnerError, match="value table"):
        TaskSpec("B", 2, (("a", "b"),), mode="given")
    with pytest.raises(LearnerError, match="no value"):
        TaskSpec("B", 2, (("a", "b"),), mode="given", values={})
    with pytest.raises(LearnerError, match="ids do not match"):
        TaskSpec("A", 1, ids, gram=gram(("x", "y"), np.eye(2)))


def test_train_validation():
    cfg = TrainConfig()
    bound = TaskSpec("BOUND", 2, (("a", "b"),), mode="given", values={("a", "b"): 1.0})
    with pytest.raises(LearnerError, match="at least one learned"):
        train([bound], [], cfg)
    bad = TaskSpec(
        "A", 1, ("p0", "p1"), gram=gram(("p0", "p1"), np.array([[0.0, 1.0], [1.0, 0.0]]))
    )
    with pytest.raises(LearnerError, match="positive semi-definite"):
        train([bad], [], cfg)
    with pytest.raises(LearnerError):
        TrainConfig(lambda_r=-1.0)
    with pytest.raises(LearnerError):
        TrainConfig(threshold=1.5)
    with pytest.raises(LearnerError):
        TrainConfig(constraint_scope="sometimes")


def test_pair_key():
    assert pair_key(("a", "b")) == "a|b"
