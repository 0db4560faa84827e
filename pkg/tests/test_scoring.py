import math

import numpy as np
import pytest
import torch

from src.eval.metrics import auroc
from src.scoring import (
    EnergyScorer,
    ODINScorer,
    ScoreTable,
    create_scorer,
    score_energy,
    score_msp,
    score_odin,
)
from src.utils.errors import InvalidArgumentError, InvalidDataError, InvalidInputError


class TestScorers:
    def test_msp_uniform(self):
        assert float(score_msp(torch.zeros(10))) == pytest.approx(0.1)

    def test_msp_hand_softmax(self):
        expected = math.exp(5) / (math.exp(5) + 2)
        assert float(score_msp(torch.tensor([5.0, 0.0, 0.0], dtype=torch.float64))) == pytest.approx(expected)
        assert expected == pytest.approx(0.9867, abs=1e-4)

    def test_msp_range(self, rng):
        logits = torch.from_numpy(rng.normal(scale=3.0, size=(500, 7)))
        scores = score_msp(logits)
        assert torch.all(scores >= 1 / 7 - 1e-12)
        assert torch.all(scores <= 1.0)

    def test_odin_at_unit_temperature_is_msp(self, rng):
        logits = torch.from_numpy(rng.normal(scale=4.0, size=(10_000, 5)))
        torch.testing.assert_close(score_odin(logits, 1.0), score_msp(logits), rtol=0, atol=0)

    def test_odin_flattens_at_high_temperature(self):
        logits = torch.tensor([[5.0, 0.0, -2.0, 1.0]], dtype=torch.float64)
        assert float(score_odin(logits, 1e9)) == pytest.approx(0.25, abs=1e-8)

    def test_energy_of_zero_logits(self):
        assert float(score_energy(torch.zeros(2, dtype=torch.float64))) == pytest.approx(math.log(2), abs=1e-12)

    def test_shift_behaviour(self, rng):
        logits = torch.from_numpy(rng.normal(size=(50, 6)))
        shifted = logits + 3.5
        torch.testing.assert_close(score_msp(shifted), score_msp(logits))
        torch.testing.assert_close(score_odin(shifted, 100.0), score_odin(logits, 100.0))
        torch.testing.assert_close(score_energy(shifted), score_energy(logits) + 3.5)

    def test_energy_ranking_matches_logsumexp(self, rng):
        id_logits = torch.from_numpy(rng.normal(loc=1.0, size=(200, 4)))
        ood_logits = torch.from_numpy(rng.normal(size=(150, 4)))
        by_score = auroc(score_energy(id_logits).numpy(), score_energy(ood_logits).numpy())
        by_lse = auroc(
            torch.logsumexp(id_logits, dim=-1).numpy(), torch.logsumexp(ood_logits, dim=-1).numpy()
        )
        assert by_score == pytest.approx(by_lse, abs=1e-12)

    def test_large_logits_are_stable(self):
        logits = torch.tensor([[1e4, -1e4, 0.0], [-1e4, -1e4, -1e4]], dtype=torch.float64)
        for scores in (score_msp(logits), score_odin(logits, 1000.0), score_energy(logits, 10.0)):
            assert torch.all(torch.isfinite(scores))

    def test_non_finite_logits(self):
        with pytest.raises(InvalidInputError):
            score_msp(torch.tensor([0.0, float("nan")]))
        with pytest.raises(InvalidInputError):
            score_energy(torch.tensor([0.0, float("inf")]))

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_non_positive_temperature(self, tau):
        with pytest.raises(InvalidArgumentError):
            score_odin(torch.zeros(3), tau)
        with pytest.raises(InvalidArgumentError):
            EnergyScorer(tau)


class TestCreateScorer:
    def test_defaults(self):
        assert create_scorer("odin").temperature == 1000.0
        assert create_scorer("energy").temperature == 1.0
        assert create_scorer("msp").name == "msp"

    def test_temperature_override(self):
        scorer = create_scorer("odin", 10.0)
        assert isinstance(scorer, ODINScorer)
        assert scorer.temperature == 10.0

    def test_unknown(self):
        with pytest.raises(InvalidArgumentError):
            create_scorer("mahalanobis")


class TestScoreTable:
    def test_select_by_origin(self):
        table = ScoreTable.from_parts(
            {"id_test": [0.9, 0.8], "fine_ood": [0.4], "coarse_ood": [0.1, 0.2, 0.3]}, scorer="msp"
        )
        assert len(table) == 6
        np.testing.assert_array_equal(table.select("coarse_ood"), [0.1, 0.2, 0.3])
        assert table.example_ids[2] == "fine_ood/0"

    def test_missing_origin(self):
        table = ScoreTable.from_parts({"id_test": [0.9]}, scorer="msp")
        assert not table.has("fine_ood")
        assert table.select("fine_ood").size == 0

    def test_parallel_lengths(self):
        with pytest.raises(InvalidArgumentError):
            ScoreTable(scores=np.zeros(2), origin=["id_test"], scorer="msp")

    def test_unknown_origin(self):
        with pytest.raises(InvalidArgumentError):
            ScoreTable(scores=np.zeros(1), origin=["outlier"], scorer="msp")

    def test_file_preserves_scores_exactly(self, tmp_path, rng):
        table = ScoreTable.from_parts(
            {"id_test": rng.normal(size=5), "fine_ood": rng.normal(size=3)},
            scorer="energy",
            temperature=10.0,
        )
        loaded = ScoreTable.load(table.save(str(tmp_path / "t.scores.tsv")))
        np.testing.assert_array_equal(loaded.scores, table.scores)
        assert loaded.origin == table.origin
        assert (loaded.scorer, loaded.temperature) == ("energy", 10.0)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\tscore\n", encoding="utf-8")
        with pytest.raises(InvalidDataError):
            ScoreTable.load(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(InvalidDataError):
            ScoreTable.load(str(path))

    def test_empty_table_round_trip(self, tmp_path):
        table = ScoreTable.from_parts({}, scorer="odin", temperature=1000.0)
        loaded = ScoreTable.load(table.save(str(tmp_path / "none.scores.tsv")))
        assert len(loaded) == 0 and loaded.origin == []
