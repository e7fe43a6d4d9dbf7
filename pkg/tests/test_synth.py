import numpy as np
import pytest

from coresift.bigram import ToyBigramModel, sample_loss
from coresift.errors import ValidationError
from coresift.synth import (
    RegimeSpec,
    SynthSpec,
    chain_entropy,
    generate,
    load_truth,
    save_truth,
)


def two_regime_spec(**kwargs):
    defaults = dict(
        n=100,
        vocab_size=8,
        seq_len=(6, 10),
        regimes=(RegimeSpec(0.5, 0.1), RegimeSpec(0.5, 10.0)),
        clusters_per_regime=1,
        feature_dim=6,
        feature_noise=0.1,
        seed=0,
    )
    defaults.update(kwargs)
    return SynthSpec(**defaults)


def test_noiseless_single_cluster_features_are_identical():
    data = generate(two_regime_spec(feature_noise=0.0))
    regimes = np.array([t.regime for t in data.truth])
    for r in (0, 1):
        rows = data.features.data[regimes == r]
        assert np.all(rows == rows[0])


def test_single_regime_truth_is_constant():
    data = generate(two_regime_spec(regimes=(RegimeSpec(1.0, 1.0),)))
    assert {t.difficulty_rank for t in data.truth} == {0}


def test_hot_regime_has_higher_empirical_loss():
    data = generate(two_regime_spec(n=400))
    # evaluate each sample under its own true chain: the hot regime should be
    # harder by construction
    means = {}
    for r in (0, 1):
        model = ToyBigramModel(data.chain_logits[r])
        losses = [
            sample_loss(model, s)
            for s, t in zip(data.samples, data.truth)
            if t.regime == r
        ]
        means[r] = np.mean(losses)
    assert means[1] > means[0]


def test_chain_entropy_monotone_in_temperature():
    rng = np.random.default_rng(1)
    base = rng.normal(size=(8, 8))
    temps = [0.1, 0.5, 1.0, 2.0, 10.0]
    entropies = [chain_entropy(base / t) for t in temps]
    assert all(a < b for a, b in zip(entropies, entropies[1:]))
    assert entropies[-1] < np.log(8) + 1e-9


def test_difficulty_rank_orders_by_expected_loss():
    spec = two_regime_spec(
        regimes=(RegimeSpec(0.3, 10.0), RegimeSpec(0.4, 0.1), RegimeSpec(0.3, 1.0))
    )
    data = generate(spec)
    by_regime = {t.regime: t.difficulty_rank for t in data.truth}
    # regime 1 (coldest) easiest, regime 2 middle, regime 0 (hottest) hardest
    assert by_regime == {1: 0, 2: 1, 0: 2}


def test_same_seed_byte_identical():
    a = generate(two_regime_spec())
    b = generate(two_regime_spec())
    assert a.features.data.tobytes() == b.features.data.tobytes()
    assert [s.tokens for s in a.samples] == [s.tokens for s in b.samples]
    assert a.meta == b.meta and a.truth == b.truth


def test_regime_counts_honor_fractions():
    data = generate(two_regime_spec(n=101, regimes=(RegimeSpec(0.5, 0.1), RegimeSpec(0.5, 10.0))))
    counts = np.bincount([t.regime for t in data.truth])
    assert counts.sum() == 101 and abs(counts[0] - counts[1]) <= 1


def test_meta_tags_carry_regime_and_cluster():
    data = generate(two_regime_spec(clusters_per_regime=2))
    clusters = set()
    for rec, t in zip(data.meta, data.truth):
        assert f"regime:{t.regime}" in rec.tags
        assert f"cluster:{t.cluster}" in rec.tags
        clusters.add(t.cluster)
    assert clusters <= {0, 1, 2, 3}


def test_per_regime_seq_len_override():
    spec = two_regime_spec(
        regimes=(RegimeSpec(0.5, 0.1, seq_len=(4, 6)), RegimeSpec(0.5, 10.0, seq_len=(20, 24)))
    )
    data = generate(spec)
    for s, t in zip(data.samples, data.truth):
        lo, hi = (4, 6) if t.regime == 0 else (20, 24)
        assert lo <= len(s.tokens) <= hi


def test_text_len_matches_token_count():
    data = generate(two_regime_spec())
    for s, rec in zip(data.samples, data.meta):
        assert rec.text_len == len(s.tokens)


def test_cluster_centers_are_units_with_bounded_cosine():
    spec = two_regime_spec(clusters_per_regime=3, feature_noise=0.0)
    data = generate(spec)
    centers = np.unique(data.features.data, axis=0)
    assert centers.shape[0] == 6
    norms = np.linalg.norm(centers, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-6)
    gram = centers @ centers.T
    off = gram[~np.eye(6, dtype=bool)]
    assert np.all(off <= 0.5 + 1e-9)


def test_invalid_specs_rejected():
    with pytest.raises(ValidationError):
        two_regime_spec(regimes=(RegimeSpec(0.5, 0.1), RegimeSpec(0.4, 10.0)))
    with pytest.raises(ValidationError):
        RegimeSpec(0.5, 0.0)
    with pytest.raises(ValidationError):
        two_regime_spec(seq_len=(1, 5))
    with pytest.raises(ValidationError):
        two_regime_spec(n=0)
    with pytest.raises(ValidationError):
        two_regime_spec(feature_noise=-0.5)


def test_truth_round_trip(tmp_path):
    data = generate(two_regime_spec(n=20))
    path = tmp_path / "truth.jsonl"
    save_truth(data.truth, path)
    assert load_truth(path) == data.truth
