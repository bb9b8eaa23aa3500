import numpy as np
import pytest
import torch

from nminpaint.model import (AdamState, DiscriminatorNet, GeneratorNet,
                             UnitNormalize, adam_step, discriminator_forward,
                             generator_forward, init_parameters,
                             parameter_gradients, unit_normalize_backward,
                             unit_project)

EPS = 1e-8


def fd_unit_normalize_grad(v, upstream, h, eps=EPS):
    """Central-difference oracle for the unit-normalize input gradient."""
    v = np.asarray(v, dtype=np.float64)
    grad = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fp = (v + e) / (np.linalg.norm(v + e) + eps)
        fm = (v - e) / (np.linalg.norm(v - e) + eps)
        grad[j] = np.dot((fp - fm) / (2 * h), upstream)
    return grad


class TestUnitNormalizeBackward:
    def test_radial_upstream_nearly_vanishes(self):
        v = np.array([0.0, 0.0, 2.0])
        up = np.array([0.0, 0.0, 1.0])
        grad = unit_normalize_backward(v, up)
        expected = EPS / (2.0 + EPS) ** 2
        assert grad[0] == grad[1] == 0.0
        assert grad[2] == pytest.approx(expected, rel=1e-6)
        fd = fd_unit_normalize_grad(v, up, h=1e-3)
        assert abs(grad[2] - fd[2]) <= 1e-3 * abs(fd[2])

    def test_orthogonal_upstream_magnitude(self):
        v = np.array([0.0, 0.0, 2.0])
        up = np.array([1.0, 0.0, 0.0])
        grad = unit_normalize_backward(v, up)
        assert np.linalg.norm(grad) == pytest.approx(1.0 / (2.0 + EPS), rel=1e-6)
        fd = fd_unit_normalize_grad(v, up, h=1e-3)
        assert np.linalg.norm(grad - fd) <= 1e-3 * np.linalg.norm(fd)

    def test_zero_vector_jacobian_is_identity_over_epsilon(self):
        up = np.array([0.3, -0.2, 0.9])
        grad = unit_normalize_backward(np.zeros(3), up)
        assert np.allclose(grad, up / EPS)
        # finite differences need a step well below epsilon here
        fd = fd_unit_normalize_grad(np.zeros(3), up, h=1e-12)
        assert np.linalg.norm(grad - fd) <= 1e-3 * np.linalg.norm(fd)

    def test_random_vectors_match_finite_differences(self, rng):
        for _ in range(20):
            v = rng.normal(size=3) * rng.uniform(0.1, 3.0)
            up = rng.normal(size=3)
            grad = unit_normalize_backward(v, up)
            fd = fd_unit_normalize_grad(v, up, h=1e-5)
            assert np.linalg.norm(grad - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-9)

    def test_torch_projection_gradcheck(self):
        x = torch.randn(2, 3, 4, 4, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(0))
        x = (x + 0.2 * torch.sign(x)).requires_grad_(True)
        assert torch.autograd.gradcheck(unit_project, (x,), eps=1e-6, atol=1e-8)

    def test_torch_layer_gradcheck(self):
        layer = UnitNormalize()
        x = torch.randn(2, 3, 4, 4, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(0))
        x = (x + 0.2 * torch.sign(x)).requires_grad_(True)
        assert torch.autograd.gradcheck(layer, (x,), eps=1e-6, atol=1e-8)

    def test_torch_projection_matches_reference(self, rng):
        x = rng.normal(size=(2, 3, 5, 5)).astype(np.float64)
        up = rng.normal(size=(2, 3, 5, 5)).astype(np.float64)
        xt = torch.from_numpy(x).requires_grad_(True)
        y = unit_project(xt)
        y.backward(torch.from_numpy(up))
        ref = unit_normalize_backward(x.transpose(0, 2, 3, 1),
                                      up.transpose(0, 2, 3, 1))
        assert np.allclose(xt.grad.numpy(), ref.transpose(0, 3, 1, 2), atol=1e-12)

    def test_layer_pins_tiny_vectors_to_unit(self):
        x = torch.tensor([[[[1e-5]], [[0.0]], [[1e-6]]],
                          [[[0.0]], [[0.0]], [[0.0]]]], dtype=torch.float32)
        out = UnitNormalize()(x)
        assert abs(out[0].norm().item() - 1.0) < 1e-4
        assert out[1].norm().item() == 0.0  # the zero vector is preserved


class TestGenerator:
    def tiny(self, channels=4):
        net = GeneratorNet(input_channels=channels, base_width=8, depth=2)
        init_parameters(net, 0)
        return net

    def test_output_pixels_unit_norm(self):
        net = self.tiny()
        x = torch.randn(2, 4, 16, 16, generator=torch.Generator().manual_seed(1))
        out = generator_forward(net, x, "eval")
        norms = out.norm(dim=1)
        assert out.shape == (2, 3, 16, 16)
        assert torch.max((norms - 1.0).abs()).item() < 1e-4

    def test_default_depth_shapes(self):
        net = GeneratorNet()
        init_parameters(net, 0)
        x = torch.randn(1, 4, 64, 64, generator=torch.Generator().manual_seed(2))
        h = x
        for block in net.encoder:
            h = block(h)
        assert h.shape == (1, 512, 4, 4)  # stride-2 ladder bottoms out at 4x4
        out = generator_forward(net, x, "eval")
        assert out.shape == (1, 3, 64, 64)

    def test_eval_mode_deterministic(self):
        net = self.tiny()
        x = torch.randn(2, 4, 16, 16, generator=torch.Generator().manual_seed(3))
        a = generator_forward(net, x, "eval")
        b = generator_forward(net, x, "eval")
        assert torch.equal(a, b)

    def test_train_and_eval_modes_differ(self):
        net = self.tiny()
        x = torch.randn(4, 4, 16, 16, generator=torch.Generator().manual_seed(4))
        with torch.no_grad():
            train_out = generator_forward(net, x, "train")
            eval_out = generator_forward(net, x, "eval")
        assert not torch.equal(train_out, eval_out)

    def test_three_channel_variant(self):
        net = self.tiny(channels=3)
        x = torch.randn(1, 3, 16, 16)
        assert generator_forward(net, x, "eval").shape == (1, 3, 16, 16)

    def test_skip_connections_shape(self):
        net = GeneratorNet(base_width=8, depth=3, skip_connections=True)
        init_parameters(net, 0)
        x = torch.randn(1, 4, 32, 32)
        assert generator_forward(net, x, "eval").shape == (1, 3, 32, 32)

    def test_rejects_wrong_channels(self):
        net = self.tiny()
        with pytest.raises(ValueError):
            net(torch.randn(1, 3, 16, 16))

    def test_rejects_invalid_spatial_size(self):
        net = self.tiny()
        with pytest.raises(ValueError):
            net(torch.randn(1, 4, 18, 18))
        with pytest.raises(ValueError):
            net(torch.randn(1, 4, 4, 4))  # below the 2^depth * 2 minimum

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            GeneratorNet(input_channels=5)


class TestDiscriminator:
    def tiny(self):
        net = DiscriminatorNet(base_width=8, depth=2, image_size=16)
        init_parameters(net, 0)
        return net

    def test_output_in_unit_interval(self):
        net = self.tiny()
        x = torch.randn(8, 3, 16, 16, generator=torch.Generator().manual_seed(5))
        p = discriminator_forward(net, x, "eval")
        assert p.shape == (8,)
        assert torch.all(p > 0) and torch.all(p < 1)

    def test_fresh_net_concentrated_near_half(self):
        net = DiscriminatorNet(base_width=64, depth=4, image_size=64)
        init_parameters(net, 7)
        x = torch.randn(32, 3, 64, 64, generator=torch.Generator().manual_seed(6))
        p = discriminator_forward(net, x, "eval")
        assert 0.35 <= p.mean().item() <= 0.65

    def test_deterministic_eval(self):
        net = self.tiny()
        x = torch.randn(2, 3, 16, 16)
        assert torch.equal(discriminator_forward(net, x, "eval"),
                           discriminator_forward(net, x, "eval"))

    def test_rejects_wrong_size(self):
        net = self.tiny()
        with pytest.raises(ValueError):
            net(torch.randn(1, 3, 32, 32))


class TestParameterGradients:
    def test_zero_upstream_gives_zero_gradients(self):
        net = GeneratorNet(base_width=4, depth=2)
        init_parameters(net, 0)
        x = torch.randn(2, 4, 8, 8)
        loss = 0.0 * generator_forward(net, x, "train").sum()
        grads = parameter_gradients(loss, net)
        assert all(torch.all(g == 0) for g in grads.values())

    def test_requires_graph(self):
        net = GeneratorNet(base_width=4, depth=2)
        with pytest.raises(RuntimeError):
            parameter_gradients(torch.tensor(1.0), net)

    def test_batchnorm_mode_changes_gradients(self):
        net = GeneratorNet(base_width=4, depth=2)
        init_parameters(net, 3)
        x = torch.randn(4, 4, 8, 8, generator=torch.Generator().manual_seed(8))
        grads = {}
        for mode in ("train", "eval"):
            loss = generator_forward(net, x, mode).square().mean()
            grads[mode] = parameter_gradients(loss, net)
        name = "encoder.0.0.weight"
        assert not torch.allclose(grads["train"][name], grads["eval"][name])

    def test_float64_finite_difference_sample(self, rng):
        # Sampled central-difference check at f64 (step 1e-5, rel 1e-4).
        torch.manual_seed(0)
        net = GeneratorNet(base_width=4, depth=2).double()
        init_parameters(net, 1)
        with torch.no_grad():
            for p in net.parameters():
                p.add_(torch.from_numpy(rng.normal(0, 0.01, size=tuple(p.shape))))
        x = torch.from_numpy(rng.normal(size=(2, 4, 8, 8)))
        target = torch.from_numpy(rng.normal(size=(2, 3, 8, 8)))

        def loss_value():
            out = net(x)
            return ((out - target) ** 2).mean()

        net.train()
        loss = loss_value()
        grads = parameter_gradients(loss, net)
        params = dict(net.named_parameters())
        h = 1e-5
        checked = 0
        with torch.no_grad():
            for name in sorted(params):
                p = params[name]
                flat = p.view(-1)
                for idx in rng.choice(flat.numel(), size=min(3, flat.numel()),
                                      replace=False):
                    orig = flat[idx].item()
                    flat[idx] = orig + h
                    up = loss_value().item()
                    flat[idx] = orig - h
                    down = loss_value().item()
                    flat[idx] = orig
                    fd = (up - down) / (2 * h)
                    an = grads[name].view(-1)[idx].item()
                    assert abs(an - fd) <= 1e-4 * max(abs(fd), 1e-6), name
                    checked += 1
        assert checked >= 30


class TestAdam:
    def scalar_state(self):
        return AdamState(m={"w": torch.zeros(1, dtype=torch.float64)},
                         v={"w": torch.zeros(1, dtype=torch.float64)})

    def test_zero_gradients_fixed_point(self):
        state = self.scalar_state()
        w = torch.tensor([0.5], dtype=torch.float64)
        adam_step(state, {"w": w}, {"w": torch.zeros(1, dtype=torch.float64)})
        assert w.item() == 0.5
        assert state.m["w"].item() == 0.0 and state.v["w"].item() == 0.0
        assert state.step == 1

    def test_first_step_is_learning_rate(self):
        # g = 1: bias-corrected m_hat = v_hat = 1, so the step is -lr.
        state = self.scalar_state()
        w = torch.zeros(1, dtype=torch.float64)
        adam_step(state, {"w": w}, {"w": torch.ones(1, dtype=torch.float64)})
        assert w.item() == pytest.approx(-1e-4, rel=1e-6)

    def test_deterministic_trajectory(self):
        runs = []
        for _ in range(2):
            state = self.scalar_state()
            w = torch.zeros(1, dtype=torch.float64)
            for g in (1.0, -0.5, 0.25):
                adam_step(state, {"w": w},
                          {"w": torch.tensor([g], dtype=torch.float64)})
            runs.append(w.item())
        assert runs[0] == runs[1]

    def test_rejects_shape_mismatch(self):
        state = self.scalar_state()
        with pytest.raises(ValueError):
            adam_step(state, {"w": torch.zeros(1, dtype=torch.float64)},
                      {"w": torch.zeros(2, dtype=torch.float64)})


class TestInitParameters:
    def test_same_seed_identical(self):
        a = GeneratorNet(base_width=8, depth=2)
        b = GeneratorNet(base_width=8, depth=2)
        init_parameters(a, 5)
        init_parameters(b, 5)
        for (na, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert torch.equal(pa, pb), na

    def test_kernel_std_near_dcgan_value(self):
        net = GeneratorNet()
        init_parameters(net, 3)
        weights = [p.detach().numpy().ravel()
                   for name, p in net.named_parameters()
                   if p.ndim == 4]
        samples = np.concatenate(weights)
        assert samples.size >= 10_000
        assert abs(samples.std() - 0.02) <= 0.002

    def test_batchnorm_init(self):
        net = GeneratorNet(base_width=8, depth=3)
        init_parameters(net, 9)
        for name, p in net.named_parameters():
            if p.ndim == 1 and name.endswith("weight"):
                assert torch.all(p == 1.0), name
            if name.endswith("bias"):
                assert torch.all(p == 0.0), name
