import math
from collections import Counter

import numpy as np
import pytest

from feddb import data
from feddb.errors import ConfigError, PartitionError
from feddb.metrics import js_divergence


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# ---------------------------------------------------------------- generation

def test_generator_is_deterministic():
    a_train, a_test = data.generate_synthetic(3, 4, 50, 2.0, 1.0, seed=5)
    b_train, b_test = data.generate_synthetic(3, 4, 50, 2.0, 1.0, seed=5)
    assert np.array_equal(a_train.x, b_train.x)
    assert np.array_equal(a_train.y, b_train.y)
    assert np.array_equal(a_test.x, b_test.x)


def test_two_class_means_sit_on_the_first_axis():
    means = data.class_means(2, 5, 3.0, arrangement="circle")
    assert np.allclose(means[0], [3.0, 0, 0, 0, 0], atol=1e-12)
    assert np.allclose(means[1], [-3.0, 0, 0, 0, 0], atol=1e-12)


def test_vanishing_noise_is_linearly_separable():
    train, _ = data.generate_synthetic(4, 6, 40, 2.0, 1e-9, seed=1)
    means = data.class_means(4, 6, 2.0)
    dists = np.linalg.norm(train.x[:, None, :] - means[None, :, :], axis=2)
    assert np.array_equal(np.argmin(dists, axis=1), train.y)


def test_two_class_overlap_matches_gaussian_cdf():
    # Means at (+-c, 0, ...); the optimal rule thresholds x_0 at zero and its
    # accuracy is Phi(c / noise_scale).
    c, sigma, n_per_class = 1.0, 1.25, 30000
    train, _ = data.generate_synthetic(2, 3, n_per_class, c, sigma, seed=3, arrangement="circle")
    predicted = np.where(train.x[:, 0] > 0, 0, 1)
    empirical = float(np.mean(predicted == train.y))
    expected = normal_cdf(c / sigma)
    margin = 3.0 * math.sqrt(expected * (1 - expected) / (2 * n_per_class))
    assert abs(empirical - expected) < margin + 1e-3


def test_test_set_is_balanced():
    _, test = data.generate_synthetic(5, 8, 10, 2.0, 1.0, seed=0, test_per_class=17)
    assert np.all(np.bincount(test.y) == 17)


@pytest.mark.parametrize("bad", [{"noise_scale": 0.0}, {"noise_scale": -1.0},
                                 {"n_classes": 1}, {"dim": 1}])
def test_generator_rejects_degenerate_parameters(bad):
    kwargs = dict(n_classes=3, dim=4, per_class=10, class_separation=1.0,
                  noise_scale=1.0, seed=0)
    kwargs.update(bad)
    with pytest.raises(ConfigError):
        data.generate_synthetic(kwargs["n_classes"], kwargs["dim"], kwargs["per_class"],
                                kwargs["class_separation"], kwargs["noise_scale"], kwargs["seed"])


# ---------------------------------------------------------------- partitioning

def corpus_for_partition(n_classes=4, per_class=300, dim=4, seed=11):
    train, _ = data.generate_synthetic(n_classes, dim, per_class, 2.0, 1.0, seed=seed)
    return train


def sample_multiset(x, y):
    return Counter((row.tobytes(), int(label)) for row, label in zip(x, y))


def test_partition_conserves_the_corpus():
    corpus = corpus_for_partition()
    spec = data.PartitionSpec(
        n_clients=5, n_classes=4, n_labeled_total=40, delta=0.5, seed=2,
        include_labeled_in_unlabeled=False,
    )
    clients = data.partition(corpus, spec)
    union = Counter()
    for c in clients:
        union += sample_multiset(c.labeled.x, c.labeled.y)
        union += sample_multiset(c.unlabeled.x, c.unlabeled.hidden_y)
    assert union == sample_multiset(corpus.x, corpus.y)


def test_partition_appends_own_labeled_samples_to_unlabeled_pool():
    corpus = corpus_for_partition()
    spec = data.PartitionSpec(n_clients=5, n_classes=4, n_labeled_total=40, delta=0.5, seed=2)
    clients = data.partition(corpus, spec)
    union = Counter()
    labeled_union = Counter()
    for c in clients:
        union += sample_multiset(c.labeled.x, c.labeled.y)
        union += sample_multiset(c.unlabeled.x, c.unlabeled.hidden_y)
        labeled_union += sample_multiset(c.labeled.x, c.labeled.y)
        # the appended copies are this client's own labeled samples
        n_lab = len(c.labeled)
        tail = sample_multiset(c.unlabeled.x[-n_lab:], c.unlabeled.hidden_y[-n_lab:])
        assert tail == sample_multiset(c.labeled.x, c.labeled.y)
    assert union == sample_multiset(corpus.x, corpus.y) + labeled_union


def test_partition_balanced_labeled_subset_and_min_one_per_client():
    corpus = corpus_for_partition()
    spec = data.PartitionSpec(n_clients=8, n_classes=4, n_labeled_total=40, delta=0.3, seed=7)
    clients = data.partition(corpus, spec)
    all_labeled_y = np.concatenate([c.labeled.y for c in clients])
    assert np.all(np.bincount(all_labeled_y, minlength=4) == 10)
    assert all(len(c.labeled) >= 1 for c in clients)


def test_iid_partition_matches_global_proportions():
    corpus = corpus_for_partition(per_class=2000)
    spec = data.PartitionSpec(n_clients=4, n_classes=4, n_labeled_total=400, iid=True, seed=3)
    clients = data.partition(corpus, spec)
    global_hist = np.full(4, 0.25)
    for c in clients:
        hist = np.bincount(c.unlabeled.hidden_y, minlength=4).astype(float)
        hist /= hist.sum()
        assert js_divergence(hist, global_hist) < 0.005


def test_large_delta_approaches_global_proportions():
    corpus = corpus_for_partition(per_class=2000)
    spec = data.PartitionSpec(n_clients=4, n_classes=4, n_labeled_total=400, delta=1e6, seed=3)
    clients = data.partition(corpus, spec)
    global_hist = np.full(4, 0.25)
    for c in clients:
        hist = np.bincount(c.unlabeled.hidden_y, minlength=4).astype(float)
        hist /= hist.sum()
        assert js_divergence(hist, global_hist) < 0.01


def test_small_delta_is_more_heterogeneous_than_large_delta():
    corpus = corpus_for_partition(per_class=2000)
    def mean_js(delta):
        spec = data.PartitionSpec(n_clients=4, n_classes=4, n_labeled_total=400,
                                  delta=delta, seed=3)
        clients = data.partition(corpus, spec)
        out = []
        for c in clients:
            hist = np.bincount(c.unlabeled.hidden_y, minlength=4).astype(float)
            out.append(js_divergence(hist / hist.sum(), np.full(4, 0.25)))
        return np.mean(out)

    assert mean_js(0.1) > mean_js(100.0)


def test_partition_is_deterministic():
    corpus = corpus_for_partition()
    spec = data.PartitionSpec(n_clients=5, n_classes=4, n_labeled_total=40, delta=0.4, seed=9)
    a = data.partition(corpus, spec)
    b = data.partition(corpus, spec)
    for ca, cb in zip(a, b):
        assert np.array_equal(ca.labeled.x, cb.labeled.x)
        assert np.array_equal(ca.unlabeled.x, cb.unlabeled.x)


def test_partition_retry_exhaustion_names_a_client():
    corpus = corpus_for_partition(n_classes=2, per_class=10)
    # two labeled samples can never cover three clients
    spec = data.PartitionSpec(n_clients=3, n_classes=2, n_labeled_total=2, delta=0.5, seed=0)
    with pytest.raises(PartitionError, match=r"client \d+"):
        data.partition(corpus, spec)


def test_partition_subsamples_unlabeled_pool_when_asked():
    corpus = corpus_for_partition(per_class=100)
    spec = data.PartitionSpec(
        n_clients=2, n_classes=4, n_labeled_total=40, delta=1.0, seed=4,
        n_unlabeled_total=100, include_labeled_in_unlabeled=False,
    )
    clients = data.partition(corpus, spec)
    assert sum(len(c.unlabeled) for c in clients) == 100


def test_shared_draw_couples_labeled_and_unlabeled_mixes():
    corpus = corpus_for_partition(per_class=3000)
    kwargs = dict(n_clients=3, n_classes=4, n_labeled_total=1200, delta=0.3, seed=21,
                  include_labeled_in_unlabeled=False)
    shared = data.partition(corpus, data.PartitionSpec(shared_draw=True, **kwargs))
    # Under a shared draw the labeled and unlabeled class mixes of a client
    # agree up to sampling noise.
    for c in shared:
        lab = np.bincount(c.labeled.y, minlength=4).astype(float)
        unl = np.bincount(c.unlabeled.hidden_y, minlength=4).astype(float)
        assert js_divergence(lab / lab.sum(), unl / unl.sum()) < 0.02


# ---------------------------------------------------------------- augmentation

def test_weak_augment_with_zero_sigma_is_identity():
    x = np.arange(12.0).reshape(3, 4)
    out = data.weak_augment(x, np.random.default_rng(0), sigma=0.0)
    assert np.array_equal(out, x)


def test_weak_augment_is_unbiased():
    x = np.array([1.0, -2.0, 0.5])
    sigma = 0.3
    rng = np.random.default_rng(42)
    draws = np.stack([data.weak_augment(x, rng, sigma) for _ in range(10_000)])
    assert np.max(np.abs(draws.mean(axis=0) - x)) < 3.0 * sigma / 100.0


def test_weak_augment_distinct_stream_positions_differ():
    x = np.zeros(4)
    rng = np.random.default_rng(0)
    assert not np.array_equal(data.weak_augment(x, rng, 1.0), data.weak_augment(x, rng, 1.0))


def test_strong_augment_identity_when_disabled():
    x = np.arange(8.0).reshape(2, 4) + 1.0
    out = data.strong_augment(x, np.random.default_rng(0), sigma=0.0, mask_prob=0.0)
    assert np.array_equal(out, x)


def test_strong_augment_full_mask_zeroes_everything():
    x = np.ones((3, 5))
    out = data.strong_augment(x, np.random.default_rng(0), sigma=0.2, mask_prob=1.0)
    assert np.array_equal(out, np.zeros_like(x))


def test_strong_augment_empirical_mask_rate():
    x = np.ones((10_000, 4)) * 7.0  # noise never hits exactly zero
    out = data.strong_augment(x, np.random.default_rng(1), sigma=0.01, mask_prob=0.2)
    zero_rate = float(np.mean(out == 0.0))
    assert abs(zero_rate - 0.2) < 0.02


def test_augmentation_is_deterministic_under_seed():
    x = np.ones((5, 3))
    a = data.strong_augment(x, np.random.default_rng(9), 0.5, 0.3)
    b = data.strong_augment(x, np.random.default_rng(9), 0.5, 0.3)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------- csv round trip

def test_corpus_csv_round_trip(tmp_path):
    corpus, _ = data.generate_synthetic(3, 4, 20, 2.0, 1.0, seed=8)
    path = tmp_path / "corpus.csv"
    data.export_corpus_csv(corpus, path)
    back = data.import_corpus_csv(path)
    assert np.array_equal(back.x, corpus.x)
    assert np.array_equal(back.y, corpus.y)


def test_corpus_csv_hides_labels_when_asked(tmp_path):
    corpus, _ = data.generate_synthetic(3, 4, 5, 2.0, 1.0, seed=8)
    path = tmp_path / "hidden.csv"
    data.export_corpus_csv(corpus, path, hide_labels=True)
    back = data.import_corpus_csv(path)
    assert np.all(back.y == -1)
