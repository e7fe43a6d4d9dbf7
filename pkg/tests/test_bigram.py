import math

import numpy as np
import pytest

from coresift.bigram import (
    TokenSample,
    ToyBigramModel,
    load_model,
    load_token_samples,
    model_step,
    sample_grad,
    sample_loss,
    save_model,
    save_token_samples,
    train_plain,
)
from coresift.errors import ValidationError


def fit_model(sample: TokenSample, v: int, on: float = 30.0) -> ToyBigramModel:
    """Logits +on on the observed transitions, -on elsewhere."""
    logits = np.full((v, v), -on)
    for u, t in zip(sample.tokens[:-1], sample.tokens[1:]):
        logits[u, t] = on
    return ToyBigramModel(logits)


def random_sample(rng, v, length, sid="s"):
    return TokenSample(id=sid, tokens=tuple(int(t) for t in rng.integers(0, v, size=length)))


def test_uniform_model_loss_is_log_v():
    model = ToyBigramModel.uniform(4)
    sample = TokenSample(id="a", tokens=(0, 1, 2, 3, 1))
    assert sample_loss(model, sample) == pytest.approx(math.log(4), abs=1e-12)


def test_near_deterministic_model_loss_vanishes():
    sample = TokenSample(id="a", tokens=(0, 1, 2, 0))
    model = fit_model(sample, v=4)
    assert sample_loss(model, sample) < 1e-10


def test_hand_evaluated_two_token_loss():
    # softmax([0, ln 3]) = [1/4, 3/4]; predicting token 1 costs -ln(3/4)
    model = ToyBigramModel(np.array([[0.0, math.log(3)], [0.0, 0.0]]))
    sample = TokenSample(id="a", tokens=(0, 1))
    assert sample_loss(model, sample) == pytest.approx(-math.log(0.75), abs=1e-12)


def test_token_out_of_range_is_validation_error():
    model = ToyBigramModel.uniform(3)
    with pytest.raises(ValidationError):
        sample_loss(model, TokenSample(id="a", tokens=(0, 3)))
    with pytest.raises(ValidationError):
        sample_grad(model, TokenSample(id="a", tokens=(0, 3)))


def test_sample_needs_two_tokens():
    with pytest.raises(ValidationError):
        TokenSample(id="a", tokens=(1,))


def test_grad_vanishes_at_optimum():
    sample = TokenSample(id="a", tokens=(0, 1, 2, 0, 1))
    model = fit_model(sample, v=4, on=40.0)
    assert np.linalg.norm(sample_grad(model, sample)) < 1e-6


def test_grad_zero_for_unused_context_rows():
    rng = np.random.default_rng(1)
    model = ToyBigramModel(rng.normal(size=(5, 5)))
    sample = TokenSample(id="a", tokens=(0, 1, 0, 1))
    grad = sample_grad(model, sample)
    assert np.all(grad[2] == 0) and np.all(grad[3] == 0) and np.all(grad[4] == 0)


def test_grad_rows_sum_to_zero():
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = int(rng.integers(2, 7))
        model = ToyBigramModel(rng.normal(size=(v, v)) * 3)
        sample = random_sample(rng, v, int(rng.integers(2, 12)))
        grad = sample_grad(model, sample)
        assert np.all(np.abs(grad.sum(axis=1)) < 1e-12)


def fd_grad(model: ToyBigramModel, sample: TokenSample, h: float = 1e-5) -> np.ndarray:
    """Central finite differences over every logit, the independent oracle."""
    v = model.vocab_size
    grad = np.zeros((v, v))
    base = model.logits.copy()
    for u in range(v):
        for t in range(v):
            plus, minus = base.copy(), base.copy()
            plus[u, t] += h
            minus[u, t] -= h
            grad[u, t] = (
                sample_loss(ToyBigramModel(plus), sample)
                - sample_loss(ToyBigramModel(minus), sample)
            ) / (2 * h)
    return grad


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = int(rng.integers(2, 6))
        model = ToyBigramModel(rng.normal(size=(v, v)) * 2)
        sample = random_sample(rng, v, int(rng.integers(2, 10)))
        analytic = sample_grad(model, sample)
        numeric = fd_grad(model, sample)
        scale = max(np.abs(numeric).max(), 1e-12)
        assert np.abs(analytic - numeric).max() / scale < 1e-6


def test_model_step_zero_gradient_is_identity():
    model = ToyBigramModel.uniform(3)
    stepped = model_step(model, np.zeros((3, 3)), lr=0.5)
    assert np.array_equal(stepped.logits, model.logits)


def test_model_step_full_cancellation():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(3, 3))
    model = ToyBigramModel(logits)
    stepped = model_step(model, logits, lr=1.0)
    assert np.all(stepped.logits == 0)


def test_model_step_is_linear_in_updates():
    rng = np.random.default_rng(5)
    model = ToyBigramModel(rng.normal(size=(3, 3)))
    grad = rng.normal(size=(3, 3))
    twice = model_step(model_step(model, grad, 0.1), grad, 0.1)
    once = model_step(model, grad, 0.2)
    assert np.allclose(twice.logits, once.logits, atol=1e-15)


def test_model_step_shape_mismatch():
    model = ToyBigramModel.uniform(3)
    with pytest.raises(ValidationError):
        model_step(model, np.zeros((2, 2)), lr=0.1)


def test_train_plain_fits_generated_chain():
    rng = np.random.default_rng(6)
    v = 6
    # near-deterministic ring chain: i -> i+1 mod v
    probs = np.full((v, v), 0.02 / (v - 1))
    for i in range(v):
        probs[i, (i + 1) % v] = 0.98
    def draw(length, sid):
        toks = [int(rng.integers(v))]
        for _ in range(length - 1):
            toks.append(int(rng.choice(v, p=probs[toks[-1]])))
        return TokenSample(id=sid, tokens=tuple(toks))
    train = [draw(12, f"t{i}") for i in range(200)]
    heldout = [draw(12, f"h{i}") for i in range(50)]
    model = ToyBigramModel.uniform(v)
    trained, evaluate = train_plain(model, train, epochs=3, batch_size=16, lr=0.5, seed=0)
    assert evaluate(heldout) < math.log(v)


def test_train_plain_zero_epochs_is_identity():
    model = ToyBigramModel.uniform(4)
    samples = [TokenSample(id="a", tokens=(0, 1, 2))]
    trained, _ = train_plain(model, samples, epochs=0, batch_size=4, lr=0.5, seed=0)
    assert np.array_equal(trained.logits, model.logits)


def test_train_plain_same_seed_is_bitwise_identical():
    rng = np.random.default_rng(7)
    samples = [random_sample(rng, 5, 8, f"s{i}") for i in range(30)]
    model = ToyBigramModel.uniform(5)
    a, _ = train_plain(model, samples, epochs=2, batch_size=7, lr=0.3, seed=11)
    b, _ = train_plain(model, samples, epochs=2, batch_size=7, lr=0.3, seed=11)
    assert a.logits.tobytes() == b.logits.tobytes()


def test_train_plain_empty_dataset_rejected():
    with pytest.raises(ValidationError):
        train_plain(ToyBigramModel.uniform(3), [], epochs=1, batch_size=4, lr=0.1, seed=0)


def test_model_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    model = ToyBigramModel(rng.normal(size=(4, 4)).astype(np.float32).astype(np.float64))
    path = tmp_path / "model.sffm"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.vocab_size == 4
    assert np.array_equal(loaded.logits, model.logits)


def test_token_samples_round_trip(tmp_path):
    samples = [TokenSample(id="a", tokens=(0, 1)), TokenSample(id="b", tokens=(2, 0, 1))]
    path = tmp_path / "tokens.jsonl"
    save_token_samples(samples, path)
    assert load_token_samples(path) == samples
