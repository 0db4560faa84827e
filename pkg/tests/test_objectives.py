import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from src.mixing.mix import make_id_mix_pair, one_hot
from src.models.networks import TwoLayerNet
from src.objectives import ObjectiveConfig, create_objective
from src.objectives.base import HardMiningOEObjective
from src.objectives.losses import (
    cross_entropy_soft,
    energy,
    hard_outlier_indices,
    loss_energy_oe,
    loss_mix,
    loss_mix_plus_oe,
    loss_mixoe,
    loss_oe,
    loss_standard,
    oe_regularizer,
    select_hard_outliers,
)
from src.utils.errors import InvalidArgumentError

KIND_SETTINGS = {
    "standard": {},
    "oe": {"beta": 0.7},
    "oe_hard_mining": {"beta": 0.7},
    "energy_oe": {"beta": 0.3, "m_in": -2.0, "m_out": 0.0},
    "mix": {"beta": 0.7, "mode": "linear"},
    "mixoe": {"beta": 2.0, "mode": "cut"},
    "mix_plus_oe": {"beta": 2.0, "beta_oe": 0.5, "mode": "linear"},
}


def _log_prob_rows(msps, K=10):
    """Rows of logits whose softmax maximum equals each given value."""
    rows = []
    for p in msps:
        probs = [p] + [(1.0 - p) / (K - 1)] * (K - 1)
        rows.append(np.log(probs))
    return torch.tensor(np.array(rows), dtype=torch.float64)


class TestObjectiveConfig:
    def test_defaults(self):
        config = ObjectiveConfig.for_kind("energy_oe")
        assert (config.beta, config.m_in, config.m_out) == (0.1, -13.0, -7.0)
        assert ObjectiveConfig.for_kind("oe_hard_mining").mining_pool_factor == 4

    def test_label(self):
        assert ObjectiveConfig.for_kind("mixoe", mode="cut").label == "mixoe-cut"
        assert ObjectiveConfig.for_kind("oe").label == "oe"

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgumentError):
            ObjectiveConfig.for_kind("vos")

    def test_kind_specific_fields(self):
        with pytest.raises(InvalidArgumentError, match="does not take 'alpha'"):
            ObjectiveConfig(kind="oe", beta=1.0, alpha=1.0)
        with pytest.raises(InvalidArgumentError, match="requires 'mode'"):
            ObjectiveConfig(kind="mixoe", beta=1.0, alpha=1.0)

    def test_negative_beta(self):
        with pytest.raises(InvalidArgumentError):
            ObjectiveConfig.for_kind("oe", beta=-0.1)

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(InvalidArgumentError):
            ObjectiveConfig.from_dict({"kind": "oe", "gamma": 1})

    def test_dict_round_trip(self):
        config = ObjectiveConfig.for_kind("mix_plus_oe", beta=3.0, mode="cut")
        assert ObjectiveConfig.from_dict(config.to_dict()) == config

    def test_hard_mining_draws_a_larger_pool(self):
        objective = create_objective(ObjectiveConfig.for_kind("oe_hard_mining"))
        assert isinstance(objective, HardMiningOEObjective)
        assert objective.outlier_request_size(8) == 32
        assert create_objective(ObjectiveConfig.for_kind("mix")).outlier_request_size(8) == 0


class TestCrossEntropySoft:
    def test_uniform_on_uniform(self):
        loss = cross_entropy_soft(torch.zeros(1, 2), torch.full((1, 2), 0.5))
        assert float(loss) == pytest.approx(math.log(2), abs=1e-6)

    @pytest.mark.parametrize("K", [2, 5, 200])
    def test_uniform_logits_give_log_k(self, K):
        logits = torch.full((3, K), 1.7, dtype=torch.float64)
        loss = cross_entropy_soft(logits, torch.full_like(logits, 1.0 / K))
        assert float(loss) == pytest.approx(math.log(K), abs=1e-12)

    def test_rejects_non_distributions(self):
        with pytest.raises(InvalidArgumentError):
            cross_entropy_soft(torch.zeros(1, 2), torch.tensor([[0.7, 0.7]]))
        with pytest.raises(InvalidArgumentError):
            cross_entropy_soft(torch.zeros(1, 2), torch.tensor([[1.0, 0.0, 0.0]]))

    def test_hand_computed_soft_target(self):
        logits = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
        loss = float(cross_entropy_soft(logits, torch.tensor([[0.7, 0.3]], dtype=torch.float64)))
        expected = 0.7 * math.log(1.0 + math.exp(-1.0)) + 0.3 * math.log(1.0 + math.e)
        assert loss == pytest.approx(expected, abs=1e-12)
        assert loss == pytest.approx(0.6133, abs=1e-4)

    def test_saturated_one_hot(self):
        logits = torch.tensor([[20.0, 0.0]], dtype=torch.float64)
        assert float(cross_entropy_soft(logits, torch.tensor([[1.0, 0.0]], dtype=torch.float64))) < 1e-8

    def test_bounded_below_by_target_entropy(self, rng):
        for _ in range(50):
            K = int(rng.integers(2, 8))
            target = torch.tensor(rng.dirichlet(np.ones(K))[None, :])
            entropy = float(-(target * target.log()).sum())
            logits = torch.tensor(rng.normal(scale=3.0, size=(1, K)))
            assert float(cross_entropy_soft(logits, target)) >= entropy - 1e-12
            assert float(cross_entropy_soft(target.log(), target)) == pytest.approx(entropy, abs=1e-9)


class TestLosses:
    def test_oe_regularizer_of_uniform_model(self):
        model = nn.Linear(3, 4)
        nn.init.zeros_(model.weight)
        nn.init.zeros_(model.bias)
        assert float(oe_regularizer(model, torch.randn(5, 3))) == pytest.approx(math.log(4), abs=1e-6)

    def test_oe_with_zero_beta_equals_standard(self, tiny_net, tiny_batch):
        x_in, y, x_out = tiny_batch
        oe = loss_oe(tiny_net, (x_in, y), x_out, beta=0.0)
        standard = loss_standard(tiny_net, (x_in, y))
        torch.testing.assert_close(oe.total, standard.total)

    def test_empty_outliers(self, tiny_net, tiny_batch):
        x_in, y, x_out = tiny_batch
        with pytest.raises(InvalidArgumentError):
            loss_oe(tiny_net, (x_in, y), x_out[:0], beta=1.0)

    def test_standard_matches_soft_cross_entropy(self, tiny_net):
        gen = torch.Generator().manual_seed(11)
        for _ in range(10):
            x = torch.randn(5, 3, 2, 2, generator=gen, dtype=torch.float64)
            y = torch.randint(0, 3, (5,), generator=gen)
            soft = cross_entropy_soft(tiny_net(x), one_hot(y, 3, dtype=torch.float64))
            torch.testing.assert_close(loss_standard(tiny_net, (x, y)).total, soft)

    def test_standard_decreases_on_separable_data(self):
        gen = torch.Generator().manual_seed(0)
        y = torch.arange(2).repeat(20)
        x = (4.0 * y[:, None] - 2.0) + 0.5 * torch.randn(40, 4, generator=gen)
        torch.manual_seed(0)
        model = nn.Linear(4, 2)
        optimizer = torch.optim.SGD(model.parameters(), lr=0.05)
        losses = []
        for _ in range(50):
            loss = loss_standard(model, (x, y)).total
            losses.append(float(loss))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        assert losses[-1] < 0.5 * losses[0]

    def test_mixoe_matches_scalar_computation(self):
        model = nn.Linear(2, 2).double()
        weight = [[0.5, -1.0], [0.25, 0.75]]
        bias = [0.1, -0.2]
        with torch.no_grad():
            model.weight.copy_(torch.tensor(weight))
            model.bias.copy_(torch.tensor(bias))
        x_in = [[1.0, 2.0], [-0.5, 0.3]]
        labels = [0, 1]
        x_out = [[0.0, -1.0], [2.0, 1.5]]
        beta, lam = 1.5, 0.5

        def log_softmax(x):
            logits = [sum(w * v for w, v in zip(row, x)) + b for row, b in zip(weight, bias)]
            norm = math.log(sum(math.exp(z) for z in logits))
            return [z - norm for z in logits]

        id_term = -sum(log_softmax(x)[y] for x, y in zip(x_in, labels)) / 2
        reg_term = 0.0
        for x, y, o in zip(x_in, labels, x_out):
            mixed = [lam * a + (1 - lam) * b for a, b in zip(x, o)]
            target = [lam * (k == y) + (1 - lam) / 2 for k in range(2)]
            reg_term -= sum(t * p for t, p in zip(target, log_softmax(mixed))) / 2
        expected = id_term + beta * reg_term

        loss = loss_mixoe(
            model,
            (torch.tensor(x_in, dtype=torch.float64), torch.tensor(labels)),
            torch.tensor(x_out, dtype=torch.float64),
            1.0,
            beta,
            "linear",
            np.random.default_rng(0),
            lam=lam,
        )
        assert float(loss.total) == pytest.approx(expected, abs=1e-9)
        assert float(loss.reg_term) == pytest.approx(reg_term, abs=1e-9)

    def test_hard_mining_is_permutation_consistent(self, rng):
        for _ in range(20):
            pool = torch.tensor(rng.normal(size=(12, 4)))
            perm = torch.as_tensor(rng.permutation(12))
            chosen = hard_outlier_indices(nn.Identity(), pool, 5)
            permuted = perm[hard_outlier_indices(nn.Identity(), pool[perm], 5)]
            assert set(chosen.tolist()) == set(permuted.tolist())
            torch.testing.assert_close(
                select_hard_outliers(nn.Identity(), pool, 5), pool[permuted.sort().values]
            )

    def test_hard_mining_selects_most_confident(self):
        pool = _log_prob_rows([0.9, 0.2, 0.8, 0.5])
        assert hard_outlier_indices(nn.Identity(), pool, 2).tolist() == [0, 2]
        assert hard_outlier_indices(nn.Identity(), pool, 4).tolist() == [0, 1, 2, 3]

    def test_hard_mining_ties_by_input_order(self):
        pool = torch.zeros(6, 3)
        assert hard_outlier_indices(nn.Identity(), pool, 3).tolist() == [0, 1, 2]

    def test_hard_mining_k_too_large(self):
        with pytest.raises(InvalidArgumentError):
            hard_outlier_indices(nn.Identity(), torch.zeros(2, 3), 3)

    def test_energy_hinge_example(self):
        id_logits = torch.zeros(1, 2, dtype=torch.float64)
        outlier_logits = torch.full((1, 2), -10.0, dtype=torch.float64)
        loss = loss_energy_oe(
            nn.Identity(), (id_logits, torch.tensor([0])), outlier_logits, m_in=-1.0, m_out=-5.0, beta=0.1
        )
        assert float(energy(id_logits)) == pytest.approx(-math.log(2), abs=1e-12)
        assert float(loss.reg_term) == pytest.approx((1.0 - math.log(2)) ** 2, abs=1e-12)
        assert float(loss.reg_term) == pytest.approx(0.0942, abs=1e-4)
        assert float(loss.total) == pytest.approx(math.log(2) + 0.1 * float(loss.reg_term), abs=1e-12)

    def test_energy_inactive_hinges(self):
        id_logits = torch.tensor([[20.0, 0.0]], dtype=torch.float64)
        outlier_logits = torch.tensor([[1.0, 1.0]], dtype=torch.float64)
        loss = loss_energy_oe(
            nn.Identity(), (id_logits, torch.tensor([0])), outlier_logits, m_in=-13.0, m_out=-7.0, beta=0.1
        )
        assert float(loss.reg_term) == 0.0

    def test_energy_mean_reduction_halves(self):
        id_logits = torch.zeros(1, 2, dtype=torch.float64)
        outliers = torch.full((1, 2), -10.0, dtype=torch.float64)
        batch = (id_logits, torch.tensor([1]))
        summed = loss_energy_oe(nn.Identity(), batch, outliers, -1.0, 20.0, 0.1)
        averaged = loss_energy_oe(nn.Identity(), batch, outliers, -1.0, 20.0, 0.1, reduction="mean")
        assert float(averaged.reg_term) == pytest.approx(0.5 * float(summed.reg_term))

    def test_mixoe_at_lambda_one_is_id_cross_entropy(self, tiny_net, tiny_batch):
        x_in, y, x_out = tiny_batch
        for mode in ("linear", "cut"):
            loss = loss_mixoe(tiny_net, (x_in, y), x_out, 1.0, 5.0, mode, np.random.default_rng(0), lam=1.0)
            torch.testing.assert_close(loss.reg_term, loss.id_term)

    def test_mixoe_at_lambda_zero_is_oe(self, tiny_net, tiny_batch):
        x_in, y, x_out = tiny_batch
        loss = loss_mixoe(tiny_net, (x_in, y), x_out, 1.0, 5.0, "linear", np.random.default_rng(0), lam=0.0)
        torch.testing.assert_close(loss.reg_term, oe_regularizer(tiny_net, x_out))

    def test_mixoe_degenerates_to_oe(self):
        for seed in range(20):
            torch.manual_seed(seed)
            net = nn.Sequential(nn.Flatten(), nn.Linear(12, 5), nn.Tanh(), nn.Linear(5, 4)).double()
            x_in = torch.randn(6, 3, 2, 2, dtype=torch.float64)
            y = torch.randint(0, 4, (6,))
            x_out = torch.randn(6, 3, 2, 2, dtype=torch.float64)
            mixoe = loss_mixoe(net, (x_in, y), x_out, 1.0, 2.5, "linear", np.random.default_rng(seed), lam=0.0)
            oe = loss_oe(net, (x_in, y), x_out, beta=2.5)
            assert float(mixoe.total) == pytest.approx(float(oe.total), abs=1e-6)

    def test_mix_targets_never_drop_below_half(self):
        labels = one_hot(torch.tensor([0, 1, 2, 3]), 4)
        partners = one_hot(torch.tensor([1, 2, 3, 0]), 4)
        x = torch.randn(4, 1, 2, 2)
        confidences = []
        for lam in np.linspace(0.0, 1.0, 21):
            pair = make_id_mix_pair(x, labels, x.flip(0), partners, float(lam), "linear")
            confidences.append(float(pair.target.probs.max(dim=-1).values.min()))
        assert min(confidences) == pytest.approx(0.5, abs=1e-12)
        assert confidences[10] == pytest.approx(0.5, abs=1e-12)

    def test_mixoe_at_lambda_one_on_random_instances(self):
        for seed in range(20):
            torch.manual_seed(seed)
            net = nn.Sequential(nn.Flatten(), nn.Linear(12, 5), nn.Tanh(), nn.Linear(5, 4)).double()
            x_in = torch.randn(6, 3, 2, 2, dtype=torch.float64)
            y = torch.randint(0, 4, (6,))
            x_out = torch.randn(6, 3, 2, 2, dtype=torch.float64)
            loss = loss_mixoe(net, (x_in, y), x_out, 1.0, 2.5, "linear", np.random.default_rng(seed), lam=1.0)
            assert float(loss.reg_term) == pytest.approx(float(loss.id_term), abs=1e-6)

    def test_mixoe_records_lambda(self, tiny_net, tiny_batch):
        x_in, y, x_out = tiny_batch
        loss = loss_mixoe(tiny_net, (x_in, y), x_out, 1.0, 5.0, "cut", np.random.default_rng(3))
        assert 0.0 <= loss.records["lambda"] <= 1.0
        assert loss.records["mode"] == "cut"

    def test_mixoe_needs_paired_batches(self, tiny_net, tiny_batch):
        x_in, y, x_out = tiny_batch
        with pytest.raises(InvalidArgumentError):
            loss_mixoe(tiny_net, (x_in, y), x_out[:3], 1.0, 5.0, "linear", np.random.default_rng(0))

    def test_mix_needs_two_examples(self, tiny_net, tiny_batch):
        x_in, y, _ = tiny_batch
        with pytest.raises(InvalidArgumentError):
            loss_mix(tiny_net, (x_in[:1], y[:1]), 1.0, 1.0, "linear", np.random.default_rng(0))

    def test_mix_plus_oe_without_oe_is_mix(self, tiny_net, tiny_batch):
        x_in, y, x_out = tiny_batch
        combined = loss_mix_plus_oe(
            tiny_net, (x_in, y), x_out, 1.0, 2.0, 0.0, "linear", np.random.default_rng(5), lam=0.4
        )
        mix = loss_mix(tiny_net, (x_in, y), 1.0, 2.0, "linear", np.random.default_rng(5), lam=0.4)
        torch.testing.assert_close(combined.total, mix.total)
        assert combined.beta == 1.0

    def test_mix_plus_oe_without_mix_is_oe(self, tiny_net, tiny_batch):
        x_in, y, x_out = tiny_batch
        combined = loss_mix_plus_oe(
            tiny_net, (x_in, y), x_out, 1.0, 0.0, 0.5, "linear", np.random.default_rng(5), lam=0.4
        )
        oe = loss_oe(tiny_net, (x_in, y), x_out, beta=0.5)
        torch.testing.assert_close(combined.total, oe.total)


def _objective(kind):
    return create_objective(ObjectiveConfig.for_kind(kind, **KIND_SETTINGS[kind]))


def _pinned_total(objective, model, batch):
    x_in, y, x_out = batch
    outliers = x_out
    if objective.config.kind == "oe_hard_mining":
        outliers = torch.cat([x_out, 0.5 * x_out, -x_out, x_out + 0.3])
    return objective.compute(model, (x_in, y), outliers, np.random.default_rng(0), lam=0.3)


class TestEveryObjective:
    @pytest.mark.parametrize("kind", list(KIND_SETTINGS))
    def test_total_decomposes(self, kind, tiny_net, tiny_batch):
        loss = _pinned_total(_objective(kind), tiny_net, tiny_batch)
        torch.testing.assert_close(loss.total, loss.id_term + loss.beta * loss.reg_term)
        assert torch.isfinite(loss.total)

    @pytest.mark.parametrize("kind", list(KIND_SETTINGS))
    def test_losses_are_nonnegative(self, kind):
        objective = _objective(kind)
        for seed in range(5):
            torch.manual_seed(seed)
            net = TwoLayerNet(in_features=12, num_classes=3, hidden=4).double()
            gen = torch.Generator().manual_seed(seed)
            batch = (
                torch.randn(4, 3, 2, 2, generator=gen, dtype=torch.float64),
                torch.randint(0, 3, (4,), generator=gen),
                torch.randn(4, 3, 2, 2, generator=gen, dtype=torch.float64),
            )
            loss = _pinned_total(objective, net, batch)
            assert float(loss.id_term) >= 0.0
            assert float(loss.reg_term) >= 0.0
            assert float(loss.total) >= 0.0

    @pytest.mark.parametrize("instance", range(10))
    @pytest.mark.parametrize("kind", list(KIND_SETTINGS))
    def test_gradient_matches_finite_differences(self, kind, instance):
        objective = _objective(kind)
        torch.manual_seed(instance)
        tiny_net = TwoLayerNet(in_features=8, num_classes=3, hidden=3).double()
        assert sum(p.numel() for p in tiny_net.parameters()) <= 50
        gen = torch.Generator().manual_seed(100 + instance)
        tiny_batch = (
            torch.randn(4, 2, 2, 2, generator=gen, dtype=torch.float64),
            torch.randint(0, 3, (4,), generator=gen),
            torch.randn(4, 2, 2, 2, generator=gen, dtype=torch.float64),
        )
        tiny_net.zero_grad()
        _pinned_total(objective, tiny_net, tiny_batch).total.backward()
        eps = 1e-6
        for param in tiny_net.parameters():
            analytic = param.grad.detach().clone().flatten()
            numeric = torch.zeros_like(analytic)
            flat = param.data.view(-1)
            for i in range(flat.numel()):
                original = float(flat[i])
                with torch.no_grad():
                    flat[i] = original + eps
                    upper = float(_pinned_total(objective, tiny_net, tiny_batch).total)
                    flat[i] = original - eps
                    lower = float(_pinned_total(objective, tiny_net, tiny_batch).total)
                    flat[i] = original
                numeric[i] = (upper - lower) / (2 * eps)
            np.testing.assert_allclose(analytic.numpy(), numeric.numpy(), rtol=1e-4, atol=1e-6)
