import numpy as np
import pytest

from bjdd import tensor as T
from bjdd.networks import (Conv2d, DiscriminatorSpec, GeneratorSpec,
                           ParameterStore, build_discriminator,
                           build_generator, count_parameters)
from bjdd.tensor import Tensor


def rand_input(shape, seed=0):
    return Tensor(np.random.default_rng(seed).random(shape, dtype=np.float32))


def test_parameter_store_contract():
    store = ParameterStore()
    a = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    b = Tensor(np.ones(2, dtype=np.float32))
    store.register("w", a)
    store.register("stats", b)
    with pytest.raises(ValueError):
        store.register("w", a)
    assert "w" in store and len(store) == 2
    assert store.names() == ["w", "stats"]
    assert [n for n, _ in store.trainable()] == ["w"]
    store.zero_grad()
    assert np.array_equal(a.grad, np.zeros(3))
    assert b.grad is None


def test_single_conv_param_count():
    store = ParameterStore()
    Conv2d(store, "c", 4, 64, 3, padding=1, rng=np.random.default_rng(0))
    assert count_parameters(store) == 4 * 64 * 9 + 64 == 2368


def generator_param_oracle(spec):
    w, k = spec.trunk_width, spec.kernel
    conv = lambda cin, cout: cin * cout * k * k + cout
    total = conv(4, w)
    total += spec.res_blocks * 2 * conv(w, w)
    total += conv(w, w)                      # trunk tail
    total += conv(w, w * spec.upscale ** 2)  # pre-shuffle expansion
    total += conv(w, 3)
    return total


def discriminator_param_oracle(spec):
    total = 0
    cin = 3
    for i, cout in enumerate(spec.widths()):
        total += cin * cout * 9 + cout
        if i > 0 or spec.first_layer_bn:
            total += 2 * cout  # gamma + beta
        cin = cout
    total += cin * 1 * 9 + 1
    return total


def test_generator_param_count_matches_oracle():
    gen = build_generator(init_seed=0)
    oracle = generator_param_oracle(gen.spec)
    assert oracle == 1_370_435
    assert count_parameters(gen.params) == oracle


def test_discriminator_param_count_matches_oracle():
    disc = build_discriminator(init_seed=0)
    oracle = discriminator_param_oracle(disc.spec)
    assert count_parameters(disc.params) == oracle
    # running statistics live in the store but are not trainable
    stats = [n for n in disc.params.names() if "running" in n]
    assert stats
    total_elems = sum(t.data.size for _, t in disc.params.items())
    assert total_elems > oracle


def test_generator_shape_contract():
    gen = build_generator(GeneratorSpec(res_blocks=2, trunk_width=8), init_seed=1)
    out = gen(rand_input((2, 4, 8, 10)))
    assert out.shape == (2, 3, 16, 20)
    with pytest.raises(ValueError):
        gen(rand_input((2, 3, 8, 8)))
    with pytest.raises(ValueError):
        gen(rand_input((4, 8, 8)))


def test_generator_default_small_patch():
    gen = build_generator(init_seed=3)
    assert gen(rand_input((1, 4, 8, 8))).shape == (1, 3, 16, 16)


def test_generator_seed_determinism():
    g1 = build_generator(GeneratorSpec(res_blocks=2, trunk_width=8), init_seed=5)
    g2 = build_generator(GeneratorSpec(res_blocks=2, trunk_width=8), init_seed=5)
    g3 = build_generator(GeneratorSpec(res_blocks=2, trunk_width=8), init_seed=6)
    names = g1.params.names()
    assert names == g2.params.names()
    for n in names:
        assert np.array_equal(g1.params[n].data, g2.params[n].data)
    assert any(not np.array_equal(g1.params[n].data, g3.params[n].data) for n in names)


def test_generator_eval_is_pure():
    gen = build_generator(GeneratorSpec(res_blocks=1, trunk_width=8), init_seed=2)
    x = rand_input((1, 4, 6, 6), seed=9)
    a = gen(x).data
    b = gen(x).data
    assert np.array_equal(a, b)


def test_res_blocks_zero_still_valid():
    gen = build_generator(GeneratorSpec(res_blocks=0, trunk_width=8), init_seed=0)
    assert gen(rand_input((1, 4, 4, 4))).shape == (1, 3, 8, 8)


def _zero(t):
    t.data[...] = 0.0


def test_zeroed_resblock_is_identity():
    gen = build_generator(GeneratorSpec(res_blocks=3, trunk_width=8), init_seed=4)
    blk = gen.blocks[1]
    for conv in (blk.conv1, blk.conv2):
        _zero(conv.weight)
        _zero(conv.bias)
    x = rand_input((2, 8, 6, 6), seed=1)
    out = blk(x, "eval", None)
    assert np.array_equal(out.data, x.data)


def test_fresh_resblock_is_near_identity():
    # the closing conv of every block starts damped, so an untouched block
    # changes its input only slightly and a deep trunk starts well scaled
    gen = build_generator(GeneratorSpec(res_blocks=3, trunk_width=8), init_seed=4)
    x = rand_input((2, 8, 6, 6), seed=1)
    for blk in gen.blocks:
        full = np.sqrt(2.0 / blk.conv1.weight.data[0].size)
        got = blk.conv2.weight.data.std()
        assert got < 0.2 * full, f"closing conv not damped: std {got:.4f}"
        out = blk(x, "eval", None).data
        drift = np.abs(out - x.data).mean() / np.abs(x.data).mean()
        assert drift < 0.5, f"fresh block drifts too far: {drift:.3f}"


def test_fresh_generator_output_is_tame():
    gen = build_generator(init_seed=0)
    out = gen(Tensor(np.random.default_rng(6).random((1, 4, 12, 12)).astype(np.float32)))
    assert float(np.abs(out.data).max()) < 20.0


def test_global_skip_carries_head_features():
    gen = build_generator(GeneratorSpec(res_blocks=2, trunk_width=8), init_seed=7)
    for blk in gen.blocks:
        for conv in (blk.conv1, blk.conv2):
            _zero(conv.weight)
            _zero(conv.bias)
    _zero(gen.tail.weight)
    _zero(gen.tail.bias)
    x = rand_input((1, 4, 6, 6), seed=2)
    # with the trunk silenced the pre-shuffle path sees exactly the head features
    h0 = T.relu(gen.head(x))
    want = gen.project(T.pixel_shuffle(gen.expand(h0), 2)).data
    assert np.array_equal(gen(x).data, want)


def test_zeroed_projection_gives_zero_output():
    gen = build_generator(GeneratorSpec(res_blocks=1, trunk_width=8), init_seed=8)
    _zero(gen.project.weight)
    _zero(gen.project.bias)
    out = gen(rand_input((1, 4, 6, 6), seed=3))
    assert np.all(out.data == 0.0)


def test_generator_dropout_needs_rng_in_train():
    gen = build_generator(GeneratorSpec(res_blocks=1, trunk_width=8, dropout_keep=0.5),
                          init_seed=9)
    # wake the residual branch up so the dropout mask can reach the output
    conv2 = gen.blocks[0].conv2.weight
    conv2.data[...] = np.random.default_rng(5).normal(0.0, 0.1, conv2.data.shape)
    x = rand_input((1, 4, 6, 6), seed=4)
    with pytest.raises(ValueError):
        gen(x, mode="train")
    a = gen(x, mode="train", rng=np.random.default_rng(0)).data
    b = gen(x, mode="train", rng=np.random.default_rng(0)).data
    c = gen(x, mode="train", rng=np.random.default_rng(1)).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # eval ignores dropout entirely
    assert np.array_equal(gen(x).data, gen(x).data)


def test_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec(kernel=4)
    with pytest.raises(ValueError):
        GeneratorSpec(dropout_keep=0.0)
    with pytest.raises(ValueError):
        GeneratorSpec(res_blocks=-1)
    with pytest.raises(ValueError):
        DiscriminatorSpec(conv_layers=8, strides=(1, 2))


def test_discriminator_width_schedule():
    spec = DiscriminatorSpec()
    assert spec.widths() == [64, 64, 128, 128, 256, 256, 512, 512]
    assert spec.strides == (1, 2, 1, 2, 1, 2, 1, 2)


def test_discriminator_spatial_trace_from_100():
    disc = build_discriminator(init_seed=0)
    x = Tensor(np.zeros((1, 3, 100, 100), dtype=np.float32))
    sizes = [x.shape[2]]
    for conv, _ in disc.layers:
        x = conv(x)
        sizes.append(x.shape[2])
    assert sizes == [100, 100, 50, 50, 25, 25, 13, 13, 7]
    assert disc.score(x).shape == (1, 1, 7, 7)


def test_discriminator_scores_shape_and_range():
    disc = build_discriminator(init_seed=1)
    scores = disc(rand_input((2, 3, 16, 16), seed=5), mode="train")
    assert scores.shape == (2,)
    assert np.all(scores.data > 0.0) and np.all(scores.data < 1.0)


def test_discriminator_rejects_small_input():
    disc = build_discriminator(init_seed=1)
    with pytest.raises(ValueError):
        disc(rand_input((1, 3, 8, 8)))
    with pytest.raises(ValueError):
        disc(rand_input((1, 4, 16, 16)))


def test_discriminator_eval_identical_rows_same_score():
    disc = build_discriminator(init_seed=2)
    row = np.random.default_rng(6).random((3, 16, 16), dtype=np.float32)
    batch = Tensor(np.stack([row, row]))
    disc(batch, mode="train")  # one train pass to initialize running stats
    scores = disc(batch, mode="eval").data
    assert scores[0] == scores[1]
    again = disc(batch, mode="eval").data
    assert np.array_equal(scores, again)


def test_discriminator_gradient_reaches_input():
    # batch of 2: at 16x16 the last layer is 1x1, and batch norm over a single
    # value has an exactly-zero input gradient, so one sample would be degenerate
    disc = build_discriminator(init_seed=3)
    x = Tensor(np.random.default_rng(7).random((2, 3, 16, 16), dtype=np.float32),
               requires_grad=True)
    T.mean(disc(x, mode="train", update_running=False)).backward()
    assert x.grad is not None
    assert np.any(x.grad != 0.0)
