import numpy as np
import pytest

from coresift.bigram import TokenSample, ToyBigramModel, epoch_batches, train_plain
from coresift.errors import NumericError, ValidationError
from coresift.features import FeatureMatrix
from coresift.stage1 import TrainConfig, load_train_config, train_stage1
from coresift.synth import RegimeSpec, SynthSpec, generate


def toy_dataset(seed=0, n=40, v=5, d=3):
    rng = np.random.default_rng(seed)
    samples = [
        TokenSample(id=f"s{i}", tokens=tuple(int(t) for t in rng.integers(0, v, size=8)))
        for i in range(n)
    ]
    features = FeatureMatrix(rng.normal(size=(n, d)))
    return samples, features


def test_epoch_batches_cover_every_sample_once():
    rng = np.random.default_rng(0)
    batches = list(epoch_batches(rng, 23, 7))
    assert [len(b) for b in batches] == [7, 7, 7, 2]
    assert sorted(np.concatenate(batches).tolist()) == list(range(23))


def test_frozen_scorenet_matches_plain_training_bitwise():
    samples, features = toy_dataset()
    config = TrainConfig(batch_size=8, epochs=2, lr_model=0.4, lr_scorenet=0.0, seed=3)
    model_s1, params, _ = train_stage1(samples, features, config)
    model_plain, _ = train_plain(
        ToyBigramModel.uniform(5), samples, epochs=2, batch_size=8, lr=0.4, seed=3
    )
    assert np.all(params.w_vec == 0) and params.bias == 0
    assert model_s1.logits.tobytes() == model_plain.logits.tobytes()


def test_identical_samples_get_equal_weights():
    n, v, d = 24, 4, 3
    samples = [TokenSample(id=f"s{i}", tokens=(0, 1, 2, 3)) for i in range(n)]
    features = FeatureMatrix(np.tile(np.array([0.5, -1.0, 2.0]), (n, 1)))
    config = TrainConfig(batch_size=8, epochs=2, lr_model=0.3, lr_scorenet=1.0, seed=0)
    _, _, log = train_stage1(samples, features, config)
    spread = log.final_weights.max() - log.final_weights.min()
    assert spread < 1e-9


def test_planted_regimes_rank_by_weight():
    spec = SynthSpec(
        n=300,
        vocab_size=8,
        seq_len=(6, 10),
        regimes=(RegimeSpec(0.5, 0.1), RegimeSpec(0.5, 10.0)),
        clusters_per_regime=1,
        feature_dim=6,
        feature_noise=0.1,
        seed=1,
    )
    data = generate(spec)
    config = TrainConfig(batch_size=16, epochs=2, seed=1)
    _, _, log = train_stage1(data.samples, data.features, config)
    regimes = np.array([t.regime for t in data.truth])
    hot_mean = log.final_weights[regimes == 1].mean()
    cold_mean = log.final_weights[regimes == 0].mean()
    assert hot_mean < cold_mean


def test_same_seed_is_bitwise_identical():
    samples, features = toy_dataset(seed=5)
    config = TrainConfig(batch_size=8, epochs=2, seed=12)
    m1, p1, l1 = train_stage1(samples, features, config)
    m2, p2, l2 = train_stage1(samples, features, config)
    assert m1.logits.tobytes() == m2.logits.tobytes()
    assert p1.w_vec.tobytes() == p2.w_vec.tobytes() and p1.bias == p2.bias
    assert l1.final_weights.tobytes() == l2.final_weights.tobytes()


def test_weighted_loss_within_batch_loss_bounds():
    samples, features = toy_dataset(seed=6)
    config = TrainConfig(batch_size=8, epochs=2, seed=2)
    _, _, log = train_stage1(samples, features, config)
    for rec in log.steps:
        # the weighted loss is a convex combination of the batch losses, so it
        # can never exceed the per-step mean by more than the batch spread
        assert np.isfinite(rec.weighted_loss)
        assert rec.min_w <= rec.max_w


def test_pairing_mismatch_rejected():
    samples, features = toy_dataset()
    with pytest.raises(ValidationError):
        train_stage1(samples[:-1], features, TrainConfig())


def test_non_finite_loss_names_the_sample():
    # finite logits whose difference overflows: -log softmax underflows to inf
    logits = np.array([[9e307, -9e307], [0.0, 0.0]])
    model = ToyBigramModel(logits)
    samples = [TokenSample(id=f"bad{i}", tokens=(0, 1)) for i in range(4)]
    features = FeatureMatrix(np.random.default_rng(0).normal(size=(4, 2)))
    config = TrainConfig(batch_size=4, epochs=1, seed=0)
    with np.errstate(over="ignore"), pytest.raises(NumericError, match="bad"):
        train_stage1(samples, features, config, model=model)


def test_grad_accumulation_averages_local_batch_gradients():
    from coresift.bigram import batch_gradient

    samples, features = toy_dataset(seed=7, n=8)
    config = TrainConfig(
        batch_size=4, epochs=1, lr_model=0.4, lr_scorenet=0.0, seed=9, grad_accum_steps=2
    )
    model_accum, _, _ = train_stage1(samples, features, config)

    # replay by hand: one update from the average of the two local batch means
    rng = np.random.default_rng(9)
    model = ToyBigramModel.uniform(5)
    batches = list(epoch_batches(rng, 8, 4))
    grads = [
        batch_gradient(model, [samples[i] for i in idx], np.ones(len(idx)) / len(idx))
        for idx in batches
    ]
    expected = model.logits - 0.4 * (grads[0] + grads[1]) / 2
    np.testing.assert_allclose(model_accum.logits, expected, atol=1e-15)


def test_log_covers_every_step():
    samples, features = toy_dataset(n=20)
    config = TrainConfig(batch_size=8, epochs=3, seed=0)
    _, _, log = train_stage1(samples, features, config)
    assert len(log.steps) == 3 * 3  # ceil(20/8) = 3 steps per epoch
    assert len(log.final_weights) == 20


def test_trainlog_csv_round_trip(tmp_path):
    samples, features = toy_dataset(n=16)
    _, _, log = train_stage1(samples, features, TrainConfig(batch_size=8, epochs=1, seed=0))
    path = tmp_path / "log.csv"
    log.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,step,weighted_loss,mean_loss,min_w,max_w"
    assert len(lines) == 1 + len(log.steps)


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValidationError):
        TrainConfig(epochs=0)
    with pytest.raises(ValidationError):
        TrainConfig(lr_model=0.0)
    with pytest.raises(ValidationError):
        TrainConfig(lr_scorenet=-0.1)
    with pytest.raises(ValidationError):
        TrainConfig(grad_accum_steps=0)


def test_config_from_toml(tmp_path):
    path = tmp_path / "train.toml"
    path.write_text(
        "batch_size = 8\nepochs = 4\nlr_model = 0.25\nlr_scorenet = 1.5\n"
        "seed = 77\nl2_scorenet = 0.01\ngrad_accum_steps = 2\n"
    )
    config = load_train_config(path)
    assert config == TrainConfig(
        batch_size=8, epochs=4, lr_model=0.25, lr_scorenet=1.5, seed=77,
        l2_scorenet=0.01, grad_accum_steps=2,
    )
    override = load_train_config(path, seed=5)
    assert override.seed == 5 and override.batch_size == 8


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "train.toml"
    path.write_text("batch_size = 8\nbogus = 1\n")
    with pytest.raises(ValidationError):
        load_train_config(path)
