"""Generator/discriminator construction, shapes, init, and gradient flow."""

import numpy as np
import pytest

import dcdeblur.networks as networks
from dcdeblur.engine import Tape, Tensor, concat_channels, sum_all, zero_grads
from dcdeblur.errors import ConfigError, ShapeError
from dcdeblur.networks import (
    NetworkSpec,
    build_discriminator,
    build_generator,
    restore_image,
)
from dcdeblur.rng import derive_rng
from dcdeblur.verification import NETWORK_CHECKS, run_checks


def small_spec(**kw):
    defaults = dict(encoder_filters=(8, 16), kernel=5, image_size=32)
    defaults.update(kw)
    return NetworkSpec(**defaults)


class TestNetworkSpec:
    def test_decoder_mirrors_encoder_by_default(self):
        spec = NetworkSpec(encoder_filters=(64, 128, 256, 512))
        assert spec.decoder_filters == (512, 256, 128, 64)

    def test_dropout_defaults_to_first_half(self):
        assert NetworkSpec(encoder_filters=(8, 16, 32, 64)).dropout_blocks == (0, 1)
        assert NetworkSpec(encoder_filters=(8, 16, 32)).dropout_blocks == (0,)

    def test_violations_are_collected_not_first_only(self):
        spec = NetworkSpec(encoder_filters=(8, 16), decoder_filters=(8,), kernel=4,
                           leak=1.5, image_size=32)
        problems = spec.violations()
        assert len(problems) >= 3

    def test_overdeep_spec_rejected(self):
        spec = NetworkSpec(encoder_filters=(4, 4, 4, 4, 4, 4), image_size=16)
        with pytest.raises(ConfigError, match="collapses"):
            build_discriminator(spec, derive_rng(0, 0))


class TestGenerator:
    def test_mirror_shapes_default_ladder(self, rng):
        spec = NetworkSpec(image_size=64)  # (64,128,256,512)
        gen = build_generator(spec, derive_rng(0, 1))
        out = gen.forward(Tensor(rng.uniform(-1, 1, size=(1, 3, 64, 64))),
                          rng=derive_rng(0, 7))
        assert out.shape == (1, 3, 64, 64)

    def test_output_in_tanh_range(self, rng):
        gen = build_generator(small_spec(), derive_rng(1, 1))
        out = gen.forward(Tensor(rng.uniform(-1, 1, size=(2, 3, 32, 32))),
                          rng=derive_rng(1, 7))
        assert np.all(out.data >= -1.0) and np.all(out.data <= 1.0)

    def test_parameter_count_closed_form(self):
        """Independent per-block recount of the default ladder at kernel 5.

        Convs feeding a batch-norm carry no bias (the normalization would
        cancel it exactly); unnormalized and head convs do.
        """
        enc = (64, 128, 256, 512)
        dec = (512, 256, 128, 64)
        k = 5
        expected = 0
        prev = 3
        for i, f in enumerate(enc):
            expected += k * k * prev * f
            expected += f if i == 0 else 2 * f  # bias on block 0, else BN gamma+beta
            prev = f
        for j, g in enumerate(dec):
            expected += k * k * prev * g + 2 * g
            prev = g
            if j < len(enc) - 1:
                prev += enc[len(enc) - 2 - j]
        expected += k * k * prev * 3 + 3  # head conv + bias
        gen = build_generator(NetworkSpec(image_size=64), derive_rng(2, 1))
        assert gen.parameter_count() == expected

    def test_init_distribution(self):
        gen = build_generator(NetworkSpec(encoder_filters=(64, 128), image_size=64),
                              derive_rng(3, 1))
        w = gen.params["enc1.weight"].value.data
        assert abs(w.mean()) < 0.005
        assert abs(w.std() - 0.02) < 0.005
        assert np.all(gen.params["enc0.bias"].value.data == 0.0)
        assert np.all(gen.params["enc1.bn.gamma"].value.data == 1.0)

    def test_indivisible_input_names_block(self, rng):
        gen = build_generator(small_spec(), derive_rng(4, 1))
        with pytest.raises(ConfigError, match="encoder block"):
            gen.forward(Tensor(rng.uniform(size=(1, 3, 30, 30))))

    def test_infer_mode_deterministic(self, rng):
        gen = build_generator(small_spec(), derive_rng(5, 1))
        x = Tensor(rng.uniform(-1, 1, size=(1, 3, 32, 32)))
        gen.forward(x, rng=derive_rng(5, 7))  # populate running stats
        gen.set_mode("infer")
        np.testing.assert_array_equal(gen.forward(x).data, gen.forward(x).data)

    def test_train_dropout_seeds_differ(self, rng):
        gen = build_generator(small_spec(dropout_rate=0.5), derive_rng(6, 1))
        x = Tensor(rng.uniform(-1, 1, size=(1, 3, 32, 32)))
        a = gen.forward(x, rng=derive_rng(6, 7, 0)).data
        b = gen.forward(x, rng=derive_rng(6, 7, 1)).data
        assert not np.array_equal(a, b)

    def test_skip_connections_are_live(self, rng, monkeypatch):
        gen = build_generator(small_spec(dropout_rate=0.0), derive_rng(7, 1))
        x = Tensor(rng.uniform(-1, 1, size=(1, 3, 32, 32)))
        baseline = gen.forward(x).data

        original = concat_channels

        def zeroing_concat(a, b):
            return original(a, Tensor(np.zeros_like(b.data)))

        monkeypatch.setattr(networks, "concat_channels", zeroing_concat)
        zeroed = gen.forward(x).data
        assert not np.array_equal(baseline, zeroed)

    def test_all_parameters_receive_gradient(self, rng):
        gen = build_generator(small_spec(dropout_rate=0.5), derive_rng(8, 1))
        x = Tensor(rng.uniform(-1, 1, size=(2, 3, 32, 32)))
        with Tape() as tape:
            out = gen.forward(x, rng=derive_rng(8, 7))
            total = sum_all(out)
        zero_grads(p.value for p in gen.parameters())
        tape.backward(total)
        dead = [p.name for p in gen.parameters()
                if p.value.grad is None or not np.any(p.value.grad)]
        assert dead == []


class TestDiscriminator:
    def test_scalar_output_in_sigmoid_range(self, rng):
        disc = build_discriminator(small_spec(), derive_rng(9, 2))
        cand = Tensor(rng.uniform(-1, 1, size=(3, 3, 32, 32)))
        cond = Tensor(rng.uniform(-1, 1, size=(3, 3, 32, 32)))
        out = disc.forward(cand, cond)
        assert out.shape == (3, 1, 1, 1)
        assert np.all(out.data > 0.0) and np.all(out.data < 1.0)

    def test_deterministic(self, rng):
        disc = build_discriminator(small_spec(), derive_rng(10, 2))
        cand = Tensor(rng.uniform(-1, 1, size=(1, 3, 32, 32)))
        cond = Tensor(rng.uniform(-1, 1, size=(1, 3, 32, 32)))
        np.testing.assert_array_equal(disc.forward(cand, cond).data,
                                      disc.forward(cand, cond).data)

    def test_fresh_init_outputs_near_half(self):
        """Small init weights keep the pre-sigmoid scalar near zero."""
        for seed in range(20):
            disc = build_discriminator(small_spec(), derive_rng(seed, 2))
            gen = np.random.default_rng(seed)
            cand = Tensor(gen.uniform(-1, 1, size=(1, 3, 32, 32)))
            cond = Tensor(gen.uniform(-1, 1, size=(1, 3, 32, 32)))
            value = float(disc.forward(cand, cond).data.reshape(()))
            assert 0.2 < value < 0.8

    def test_wrong_input_size_names_head(self, rng):
        disc = build_discriminator(small_spec(), derive_rng(11, 2))
        x = Tensor(rng.uniform(size=(1, 3, 16, 16)))
        with pytest.raises(ShapeError, match="head"):
            disc.forward(x, x)

    def test_all_parameters_receive_gradient(self, rng):
        disc = build_discriminator(small_spec(), derive_rng(12, 2))
        cand = Tensor(rng.uniform(-1, 1, size=(2, 3, 32, 32)))
        cond = Tensor(rng.uniform(-1, 1, size=(2, 3, 32, 32)))
        with Tape() as tape:
            total = sum_all(disc.forward(cand, cond))
        zero_grads(p.value for p in disc.parameters())
        tape.backward(total)
        dead = [p.name for p in disc.parameters()
                if p.value.grad is None or not np.any(p.value.grad)]
        assert dead == []


class TestEndToEndGradients:
    def test_toy_network_gradchecks(self):
        results = run_checks(NETWORK_CHECKS, seeds=[0])
        for result in results:
            assert result.passed, f"{result.name}: {result.detail}"


class TestRestoreImage:
    def test_pad_and_crop_preserves_size(self, rng):
        gen = build_generator(small_spec(), derive_rng(13, 1))
        # populate running stats so infer mode works
        gen.forward(Tensor(rng.uniform(-1, 1, size=(1, 3, 32, 32))), rng=derive_rng(13, 7))
        out = restore_image(gen, Tensor(rng.uniform(size=(3, 70, 70))))
        assert out.shape == (3, 70, 70)
        assert np.all(out.data >= 0.0) and np.all(out.data <= 1.0)
