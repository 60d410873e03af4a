import math

import numpy as np
import pytest
import torch

from attention_i2i.core import ContractError, DimensionError, GanLossForm, LossReport, TrainConfig
from attention_i2i.discriminators import Discriminator
from attention_i2i.losses import (
    adversarial_loss_d,
    adversarial_loss_g,
    attention_adversarial_losses,
    cycle_loss,
    full_objective,
    pixel_loss,
    term_contributions,
    tv_loss,
)

from oracles import analytic_grad, central_diff, curriculum_by_hand, l1_pairs, rel_err, tv_bruteforce

LS, NLL = GanLossForm.LEAST_SQUARES, GanLossForm.NEG_LOG_LIKELIHOOD
t = torch.tensor


class TestAdversarial:
    def test_ls_targets_met(self):
        assert adversarial_loss_d(t([1.0]), t([0.0]), LS).item() == 0.0

    def test_ls_targets_missed(self):
        assert adversarial_loss_d(t([0.0]), t([1.0]), LS).item() == 1.0

    def test_nll_at_zero(self):
        v = adversarial_loss_d(t([0.0], dtype=torch.float64), t([0.0], dtype=torch.float64), NLL).item()
        assert v == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_generator_ls(self):
        assert adversarial_loss_g(t([1.0]), LS).item() == 0.0
        assert adversarial_loss_g(t([0.0]), LS).item() == 0.5

    def test_generator_nll_decreasing(self):
        s = torch.linspace(-5, 5, 101, dtype=torch.float64)
        vals = torch.stack([adversarial_loss_g(v.view(1), NLL) for v in s])
        assert (vals[1:] < vals[:-1]).all()

    def test_empty_batch(self):
        with pytest.raises(ContractError):
            adversarial_loss_d(torch.zeros(0), torch.zeros(1))
        with pytest.raises(ContractError):
            adversarial_loss_g(torch.zeros(0))

    def test_string_form_accepted(self):
        assert adversarial_loss_g(t([0.0]), "lsgan").item() == 0.5


class TestAttentionAdversarial:
    @pytest.fixture
    def disc(self):
        torch.manual_seed(0)
        return Discriminator(4, channel_scale=0.125).eval()

    def test_identical_pairs_closed_form(self, disc):
        img, mask = torch.rand(1, 3, 32, 32), torch.rand(1, 1, 32, 32)
        d_loss, _ = attention_adversarial_losses(mask, img, img, disc, LS)
        s = disc(torch.cat([mask, img], 1)).item()
        assert d_loss.item() == pytest.approx(0.5 * (s - 1) ** 2 + 0.5 * s ** 2, abs=1e-6)

    def test_zero_discriminator(self, disc):
        with torch.no_grad():
            for p in disc.parameters():
                p.zero_()
        d_loss, g_loss = attention_adversarial_losses(
            torch.rand(2, 1, 32, 32), torch.rand(2, 3, 32, 32), torch.rand(2, 3, 32, 32), disc)
        assert d_loss.item() == 0.5 and g_loss.item() == 0.5

    def test_mask_changes_loss(self, disc):
        real, fake = torch.rand(1, 3, 32, 32), torch.rand(1, 3, 32, 32)
        a, _ = attention_adversarial_losses(torch.zeros(1, 1, 32, 32), real, fake, disc)
        b, _ = attention_adversarial_losses(torch.ones(1, 1, 32, 32), real, fake, disc)
        assert a.item() != b.item()

    def test_gradient_routing(self, disc):
        mask = torch.rand(1, 1, 32, 32, requires_grad=True)
        fake = torch.rand(1, 3, 32, 32, requires_grad=True)
        real = torch.rand(1, 3, 32, 32)
        d_loss, g_loss = attention_adversarial_losses(mask, real, fake, disc)
        assert d_loss.grad_fn is not None
        gm, gf = torch.autograd.grad(d_loss, [mask, fake], allow_unused=True)
        assert gm is None and gf is None
        gm, gf = torch.autograd.grad(g_loss, [mask, fake])
        assert gm.abs().sum() > 0 and gf.abs().sum() > 0


class TestReconstruction:
    def test_cycle_perfect(self):
        x, y = torch.rand(2, 3, 4, 4), torch.rand(2, 3, 4, 4)
        assert cycle_loss(x, x, y, y).item() == 0.0

    def test_cycle_hand_value(self):
        z = torch.zeros(1, 3, 4, 4)
        assert cycle_loss(z, torch.full_like(z, 0.5), z, z).item() == 0.5

    def test_cycle_symmetric(self):
        a, b, c, d = (torch.rand(1, 3, 4, 4) for _ in range(4))
        assert cycle_loss(a, b, c, d).item() == cycle_loss(b, a, c, d).item()

    def test_pixel(self):
        x, y = torch.rand(1, 3, 4, 4), torch.rand(1, 3, 4, 4)
        assert pixel_loss(x, x, y, y).item() == 0.0
        assert pixel_loss(x, x + 0.25, y, y).item() == pytest.approx(0.25, abs=1e-7)

    def test_pixel_spatial_permutation(self):
        g = torch.Generator().manual_seed(0)
        x, gx, y, gy = (torch.rand(1, 3, 4, 4, generator=g) for _ in range(4))
        perm = torch.randperm(16, generator=g)
        p = lambda a: a.flatten(2)[..., perm].view_as(a)  # noqa: E731
        assert pixel_loss(p(x), p(gx), p(y), p(gy)).item() == pytest.approx(pixel_loss(x, gx, y, gy).item())

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            cycle_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 8), torch.zeros(1), torch.zeros(1))
        with pytest.raises(DimensionError):
            pixel_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 8, 4), torch.zeros(1), torch.zeros(1))


class TestTV:
    def test_constant(self):
        assert tv_loss(torch.full((1, 1, 5, 5), 0.3)).item() == 0.0

    def test_pair(self):
        assert tv_loss(t([[0.0, 1.0]])).item() == 1.0

    def test_checkerboard(self):
        assert tv_loss(t([[0.0, 1.0], [1.0, 0.0]])).item() == 4.0

    def test_summed_over_batch(self):
        m = torch.rand(1, 1, 4, 4, dtype=torch.float64)
        assert tv_loss(m.repeat(3, 1, 1, 1)).item() == pytest.approx(3 * tv_loss(m).item(), abs=1e-12)

    def test_bruteforce_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            shape = (int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 6)), int(rng.integers(1, 6)))
            m = rng.random(shape)
            assert abs(tv_loss(torch.from_numpy(m)).item() - tv_bruteforce(m)) <= 1e-9


class TestObjective:
    cfg = TrainConfig()

    def test_hand_example(self):
        c = dict(cycle=2.0, pixel=1.0, gan_xy=0.5, gan_yx=0.5, agan_xy=0.5, agan_yx=0.5, tv_x=0.0, tv_y=0.0)
        assert abs(full_objective(c, self.cfg, 0.01) - 1.20) <= 1e-12

    def test_degenerate_r(self):
        c = dict(cycle=2.0, pixel=1.0, gan_xy=0.5, gan_yx=0.5, agan_xy=0.5, agan_yx=0.5, tv_x=5.0, tv_y=5.0)
        assert full_objective(c, self.cfg, 1.0) == 10 * 2 + 1
        assert full_objective(c, self.cfg, 0.0) == pytest.approx(0.5 * 2 + 1e-6 * 10)

    def test_r_out_of_range(self):
        with pytest.raises(ContractError):
            full_objective({}, self.cfg, 1.5)

    def test_unit_vectors(self):
        r = 0.3
        for key in LossReport.COMPONENTS:
            c = {k: float(k == key) for k in LossReport.COMPONENTS}
            lam = dict(cycle=10, pixel=1, gan=0.5, tv=1e-6)
            assert full_objective(c, self.cfg, r) == pytest.approx(curriculum_by_hand(c, lam, r), rel=1e-15)

    def test_lambda_scaling(self):
        rng = np.random.default_rng(1)
        c = {k: float(v) for k, v in zip(LossReport.COMPONENTS, rng.random(8))}
        scaled = self.cfg.replace(lambda_gan=1.5, lambda_cycle=30.0, lambda_pixel=3.0, lambda_tv=3e-6)
        assert full_objective(c, scaled, 0.4) == pytest.approx(3 * full_objective(c, self.cfg, 0.4), rel=1e-14)

    def test_contributions_sum_to_total(self):
        rep = LossReport(*np.random.default_rng(2).random(8).tolist())
        parts = term_contributions(rep, self.cfg, 0.5)
        assert sum(parts.values()) == pytest.approx(full_objective(rep, self.cfg, 0.5), rel=1e-12)


def _random_loss_inputs(seed):
    return l1_pairs(torch.Generator().manual_seed(seed), (1, 3, 3, 3))


@pytest.mark.parametrize("seed", range(5))
def test_reconstruction_gradients(seed):
    for fn in (cycle_loss, pixel_loss):
        inputs = _random_loss_inputs(seed)
        ana = analytic_grad(fn, inputs)
        num = central_diff(fn, [i.clone() for i in inputs])
        assert max(rel_err(a, n) for a, n in zip(ana, num)) < 1e-4
