import numpy as np
import pytest

from botcascade import nn, sgan
from botcascade.sgan import SganConfig, build_sgan, train_sgan


def toy(seed=0, n_lab=200, n_unl=800):
    rng = np.random.default_rng(seed)

    def make(n):
        y = rng.integers(0, 2, n)
        lo = np.where(y[:, None] == 1, 0.6, 0.0)
        return lo + rng.uniform(0, 0.4, (n, 2)), y
    xl, yl = make(n_lab)
    xu, _ = make(n_unl)
    return xl, yl, xu


@pytest.fixture(scope="module")
def trained():
    xl, yl, xu = toy()
    model = build_sgan(SganConfig(epochs=30, seed=4, batch_size=16), 2)
    train_sgan(model, xl, xu, y=yl)
    return model, xl, yl, xu


def test_default_hyperparameters():
    cfg = SganConfig()
    model = build_sgan(cfg, 5)
    opt = model.optimizers["classifier"]
    assert (opt.learning_rate, opt.beta1) == (0.0002, 0.5)
    assert model.params["g.W1"].shape == (100, 200)
    assert cfg.trunk_units == (100, 100, 100) and cfg.dropout == 0.4


def test_same_seed_same_init():
    a, b = build_sgan(SganConfig(), 7), build_sgan(SganConfig(), 7)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_toy_training_accuracy(trained):
    model, xl, yl, _ = trained
    # a hand-fit threshold rule separates the toy set perfectly
    assert np.all((xl.sum(axis=1) > 1.0) == (yl == 1))
    assert ((model.p_bot(xl) > 0.5) == (yl == 1)).mean() >= 0.95


def test_bot_centroid_confident(trained):
    model = trained[0]
    p_bot, p_human = sgan.classify_hit(model, np.array([0.8, 0.8]))
    assert p_bot > 0.9
    assert p_bot + p_human == pytest.approx(1.0)


def test_discriminator_prefers_real(trained):
    # Adversarial training oscillates, so any single snapshot can have the
    # generator ahead; the ordering must hold for most seeds.
    xl, yl, xu = toy()
    real = np.vstack([xl, xu])
    wins = 0
    for seed in range(5):
        model = trained[0] if seed == 4 else build_sgan(SganConfig(epochs=30, seed=seed, batch_size=16), 2)
        if seed != 4:
            train_sgan(model, xl, xu, y=yl)
        fake = model.generate(500, np.random.default_rng(1))
        wins += model.p_real(real).mean() > model.p_real(fake).mean()
    assert wins >= 4


def test_inference_is_pure(trained):
    model = trained[0]
    x = np.array([[0.3, 0.7]])
    assert sgan.discriminate(model, x) == sgan.discriminate(model, x)
    assert sgan.classify_hit(model, x) == sgan.classify_hit(model, x)


def test_zero_epochs_leaves_parameters():
    xl, yl, xu = toy(n_lab=20, n_unl=20)
    model = build_sgan(SganConfig(epochs=0), 2)
    before = {k: v.copy() for k, v in model.params.items()}
    train_sgan(model, xl, xu, y=yl)
    assert all(np.array_equal(before[k], model.params[k]) for k in before)


def test_training_deterministic():
    xl, yl, xu = toy(n_lab=40, n_unl=40)
    runs = []
    for _ in range(2):
        m = build_sgan(SganConfig(epochs=2, seed=3), 2)
        train_sgan(m, xl, xu, y=yl)
        runs.append(m.history)
    assert runs[0] == runs[1]


def test_single_class_rejected():
    xl, _, _ = toy(n_lab=10)
    with pytest.raises(ValueError, match="both classes"):
        train_sgan(build_sgan(SganConfig(epochs=1), 2), xl, y=np.zeros(10, int))


def test_width_mismatch():
    model = build_sgan(SganConfig(), 2)
    with pytest.raises(ValueError):
        model.p_bot(np.zeros((1, 3)))


def test_zero_trunk_gives_two_thirds():
    model = build_sgan(SganConfig(), 3)
    model.params["d.Wo"][:] = 0
    model.params["d.bo"][:] = 0
    assert sgan.discriminate(model, np.ones(3)) == pytest.approx(2 / 3, abs=1e-12)


def test_score_hit_requires_encoder():
    with pytest.raises(ValueError):
        build_sgan(SganConfig(), 3).score_hit(object())


def test_round_trip(tmp_path, trained):
    model = trained[0]
    path = tmp_path / "m.json"
    model.save(str(path))
    back = sgan.SganModel.load(str(path))
    x = np.random.default_rng(0).random((5, 2))
    np.testing.assert_array_equal(back.p_bot(x), model.p_bot(x))
    assert back.history == model.history


def _small_model(seed=0, width=6):
    cfg = SganConfig(trunk_units=(7, 5, 4), latent_dim=3, generator_hidden_units=5, seed=seed)
    return build_sgan(cfg, width)


@pytest.mark.parametrize("head", ["classifier", "discriminator", "generator"])
def test_gradients(head):
    model = _small_model()
    rng = np.random.default_rng(1)
    x = rng.random((8, 6))
    if head == "classifier":
        y = rng.integers(0, 2, 8)
        fn = lambda p: model.classifier_loss(x, y, p, np.random.default_rng(9))
        keys = model.discriminator_keys
    elif head == "discriminator":
        t = rng.integers(0, 2, 8)
        fn = lambda p: model.discriminator_loss(x, t, p, np.random.default_rng(9))
        keys = model.discriminator_keys
    else:
        noise = rng.standard_normal((8, 3))
        fn = lambda p: model.generator_loss(noise, p, np.random.default_rng(9))
        keys = model.generator_keys
    for key in keys:
        def block_fn(sub, key=key):
            full = dict(model.params)
            full[key] = sub[key]
            loss, grads = fn(full)
            return loss, {key: grads[key]}
        assert nn.grad_check(block_fn, {key: model.params[key].copy()}, probe_count=20, seed=3) < 1e-4, key
