"""
Testes das métricas de estocasticidade (RSD, PI, VA, AGV)
"""

import math

import pytest
import torch

from app.core.autodiff import DTYPE
from app.core.errors import DimensionError
from app.services.stochasticity import majority_vote, prediction_inconsistency, relative_std, stochasticity_metrics


def _outputs(*rows) -> torch.Tensor:
    return torch.tensor(rows, dtype=DTYPE)


def test_deterministic_outputs():
    outputs = _outputs([0.7] * 10, [-1.3] * 10)
    report = stochasticity_metrics(outputs, torch.tensor([True, False]))
    assert report.rsd == [0.0, 0.0]
    assert report.pi == [0, 0]
    assert report.va == 1.0
    assert report.accuracy == 1.0
    assert report.agv == 1.0
    assert report.runs == 10


def test_prediction_inconsistency_counts_minority():
    outputs = torch.cat([torch.ones(60), -torch.ones(40)]).to(DTYPE)
    assert prediction_inconsistency(outputs) == 40
    assert prediction_inconsistency(-outputs) == 40


def test_zero_mean_gives_infinite_rsd():
    value, infinite = relative_std(_outputs(1.0, -1.0))
    assert math.isinf(value) and infinite
    report = stochasticity_metrics(_outputs([1.0, -1.0], [2.0, 2.0]), torch.tensor([True, True]))
    assert report.rsd_infinite == [True, False]


def test_relative_std_value():
    value, infinite = relative_std(_outputs(1.0, 3.0))
    assert not infinite
    assert value == pytest.approx(0.5)


def test_voting_by_hand():
    outputs = _outputs(
        [1.0, 1.0, -1.0],    # positivo por maioria, rótulo positivo
        [-1.0, -1.0, 1.0],   # negativo por maioria, rótulo positivo
        [-1.0, 2.0, -3.0],   # negativo por maioria, rótulo negativo
        [1.0, 1.0, 1.0],     # positivo, rótulo negativo
    )
    labels = torch.tensor([True, True, False, False])
    report = stochasticity_metrics(outputs, labels)
    assert report.va == pytest.approx(0.5)
    # acertos por execução: 2 + 1 + 2 + 0 em 12
    assert report.accuracy == pytest.approx(5 / 12)
    assert report.agv == pytest.approx(0.5 / (5 / 12))
    assert report.pi == [1, 1, 1, 0]


def test_vote_tie_broken_by_mean_sign():
    assert majority_vote(_outputs(3.0, -1.0)) is True
    assert majority_vote(_outputs(1.0, -3.0)) is False


def test_agv_when_never_correct():
    report = stochasticity_metrics(_outputs([-1.0, -2.0]), torch.tensor([True]))
    assert report.accuracy == 0.0
    assert report.va == 0.0
    assert report.agv == 1.0


def test_shape_validation():
    with pytest.raises(DimensionError):
        stochasticity_metrics(torch.zeros(3, dtype=DTYPE), torch.tensor([True, False, True]))
    with pytest.raises(DimensionError):
        stochasticity_metrics(torch.zeros(3, 4, dtype=DTYPE), torch.tensor([True]))


def test_outputs_kept_only_on_request():
    outputs = _outputs([0.5, 0.25])
    assert stochasticity_metrics(outputs, torch.tensor([True])).outputs == [[0.5, 0.25]]
    assert stochasticity_metrics(outputs, torch.tensor([True]), keep_outputs=False).outputs == []
