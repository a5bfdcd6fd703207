import math

import numpy as np
import pytest

from oracles import adadelta_ref, adam_ref
from snelsd.errors import ContractError
from snelsd.optim import (
    Adadelta,
    AdadeltaState,
    Adam,
    AdamState,
    adadelta_step,
    adam_step,
    cross_entropy,
    dropout,
)
from snelsd.tensor import Tape, Tensor, affine, softmax_rows, tensor_sum, weighted_sum


class TestCrossEntropy:
    def test_uniform_three_classes(self):
        loss = cross_entropy(Tensor([[1 / 3, 1 / 3, 1 / 3]]), np.array([0]))
        assert float(loss.data) == pytest.approx(math.log(3), abs=1e-15)

    def test_certain(self):
        assert float(cross_entropy(Tensor([[0.0, 1.0, 0.0]]), np.array([1])).data) == 0.0

    def test_zero_probability_clamped(self):
        loss = cross_entropy(Tensor([[1.0, 0.0]]), np.array([1]))
        assert float(loss.data) == pytest.approx(-math.log(1e-12))

    def test_rejects_unnormalized(self):
        with pytest.raises(ContractError):
            cross_entropy(Tensor([[0.5, 0.6]]), np.array([0]))

    @pytest.mark.parametrize("seed", range(3))
    def test_logit_gradient_is_p_minus_onehot(self, seed):
        rng = np.random.default_rng(seed)
        logits = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
        with Tape() as tape:
            p = softmax_rows(logits)
            loss = cross_entropy(p, np.array([2]))
        tape.backward(loss)
        onehot = np.eye(5)[2]
        np.testing.assert_allclose(logits.grad[0], p.data[0] - onehot, atol=1e-12)

    def test_batch_mean(self):
        p = Tensor([[0.5, 0.5], [0.25, 0.75]])
        loss = cross_entropy(p, np.array([0, 1]))
        assert float(loss.data) == pytest.approx(-(math.log(0.5) + math.log(0.75)) / 2)


def quadratic_grad(theta):
    # f = sum (k + 1) * (theta_k - 1)^2
    return [2 * (k + 1) * (t - 1.0) for k, t in enumerate(theta)]


class TestAdam:
    def test_first_step_is_lr_times_sign(self):
        p = np.array([0.5, -0.2, 3.0])
        g = np.array([2.0, -0.01, 1e3])
        adam_step([p], [g], AdamState())
        np.testing.assert_allclose(p, np.array([0.5, -0.2, 3.0]) - 0.0004 * np.sign(g), rtol=0, atol=1e-9)

    def test_trajectory_matches_scalar_reference(self):
        theta0 = [0.3, -1.2, 2.5]
        ref = adam_ref(theta0, quadratic_grad, steps=5)
        p = np.array(theta0)
        state = AdamState()
        for t in range(5):
            adam_step([p], [np.array(quadratic_grad(list(p)))], state)
            np.testing.assert_allclose(p, ref[t], rtol=0, atol=1e-12)

    def test_partition_invariance(self):
        rng = np.random.default_rng(0)
        full = rng.normal(size=6)
        parts = [full[:2].copy(), full[2:].copy()]
        sa, sb = AdamState(), AdamState()
        for _ in range(4):
            g = rng.normal(size=6)
            adam_step([full], [g], sa)
            adam_step(parts, [g[:2], g[2:]], sb)
        np.testing.assert_allclose(np.concatenate(parts), full, atol=1e-15)

    def test_monotone_on_quadratic(self):
        w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        opt = Adam([w], lr=0.05)
        losses = []
        for _ in range(30):
            opt.zero_grad()
            with Tape() as tape:
                loss = weighted_sum(w * w, np.ones(2))
            tape.backward(loss)
            opt.step()
            losses.append(float(loss.data))
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_rejects_nonfinite_and_mismatch(self):
        with pytest.raises(ContractError):
            adam_step([np.zeros(2)], [np.array([np.nan, 0.0])], AdamState())
        with pytest.raises(ContractError):
            adam_step([np.zeros(2)], [np.zeros(3)], AdamState())

    def test_state_round_trip(self):
        w = Tensor(np.ones(3), requires_grad=True)
        opt = Adam([w])
        w.grad = np.array([1.0, -2.0, 0.5])
        opt.step()
        clone = Adam([Tensor(w.data.copy(), requires_grad=True)])
        clone.load_state_arrays(opt.state_arrays())
        for o in (opt, clone):
            o.params[0].grad = np.array([0.1, 0.2, 0.3])
            o.step()
        np.testing.assert_array_equal(opt.params[0].data, clone.params[0].data)


class TestAdadelta:
    def test_first_step_closed_form(self):
        p = np.array([1.0, -1.0])
        g = np.array([0.5, -4.0])
        adadelta_step([p], [g], AdadeltaState())
        expected = np.array([1.0, -1.0]) - math.sqrt(1e-6) / np.sqrt(0.05 * g**2 + 1e-6) * g
        np.testing.assert_allclose(p, expected, atol=1e-15)

    def test_trajectory_matches_scalar_reference(self):
        theta0 = [0.3, -1.2, 2.5]
        ref = adadelta_ref(theta0, quadratic_grad, steps=5)
        p = np.array(theta0)
        state = AdadeltaState()
        for t in range(5):
            adadelta_step([p], [np.array(quadratic_grad(list(p)))], state)
            np.testing.assert_allclose(p, ref[t], rtol=0, atol=1e-12)

    def test_partition_invariance(self):
        rng = np.random.default_rng(1)
        full = rng.normal(size=5)
        parts = [full[:3].copy(), full[3:].copy()]
        sa, sb = AdadeltaState(), AdadeltaState()
        for _ in range(4):
            g = rng.normal(size=5)
            adadelta_step([full], [g], sa)
            adadelta_step(parts, [g[:3], g[3:]], sb)
        np.testing.assert_allclose(np.concatenate(parts), full, atol=1e-15)

    def test_monotone_on_quadratic(self):
        w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        opt = Adadelta([w])
        losses = []
        for _ in range(30):
            opt.zero_grad()
            with Tape() as tape:
                loss = weighted_sum(w * w, np.ones(2))
            tape.backward(loss)
            opt.step()
            losses.append(float(loss.data))
        assert all(b < a for a, b in zip(losses, losses[1:]))


class TestDropout:
    def test_eval_is_identity(self):
        x = Tensor(np.arange(5.0))
        assert dropout(x, 0.5, "eval", None) is x

    def test_rate_zero_is_identity(self):
        x = Tensor(np.arange(5.0))
        assert dropout(x, 0.0, "train", np.random.default_rng(0)) is x

    def test_expectation_preserved(self):
        rng = np.random.default_rng(0)
        x = Tensor(np.ones(200_000))
        y = dropout(x, 0.5, "train", rng).data
        assert abs(y.mean() - 1.0) < 0.01
        assert set(np.unique(y)) <= {0.0, 2.0}
        assert abs((y == 0).mean() - 0.5) < 0.01

    def test_deterministic_with_seed(self):
        x = Tensor(np.ones(50))
        a = dropout(x, 0.3, "train", np.random.default_rng(5)).data
        b = dropout(x, 0.3, "train", np.random.default_rng(5)).data
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("rate", [-0.1, 1.0])
    def test_rate_validation(self, rate):
        with pytest.raises(ContractError):
            dropout(Tensor(np.ones(2)), rate, "train", np.random.default_rng(0))

    def test_gradient_masked(self):
        x = Tensor(np.ones(20), requires_grad=True)
        with Tape() as tape:
            y = dropout(x, 0.5, "train", np.random.default_rng(1))
            loss = tensor_sum(y)
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, y.data)


def test_softmax_classifier_learns():
    """A linear softmax model fits a separable toy problem with Adam."""
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    y = (X[:, 0] > 0).astype(int)
    W = Tensor(np.zeros((2, 2)), requires_grad=True)
    b = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([W, b], lr=0.1)
    for _ in range(100):
        opt.zero_grad()
        with Tape() as tape:
            loss = cross_entropy(softmax_rows(affine(Tensor(X), W, b)), y)
        tape.backward(loss)
        opt.step()
    acc = (softmax_rows(affine(Tensor(X), W, b)).data.argmax(axis=1) == y).mean()
    assert acc >= 0.95
