"""
Testes da tarefa sintética de esparsidade
"""

import pytest
import torch
from hypothesis import given, settings as hsettings, strategies as st

from app.core.errors import ConfigurationError, DimensionError
from app.schemas.config import SparsitySpec
from app.services.synthetic import SyntheticDataset, balanced_selection, generate_sparsity_dataset


def test_no_relevant_positions_gives_zero_labels():
    dataset = generate_sparsity_dataset(SparsitySpec(p=0.0, length=10, size=50), seed=1)
    assert len(dataset) == 50
    assert torch.all(dataset.labels == 0)
    assert torch.all(dataset.relevance == 0)


def test_label_is_relevant_sum():
    dataset = SyntheticDataset.from_arrays(torch.tensor([[1, -1, 1, 1]]), torch.tensor([[1, 0, 1, 0]]))
    assert int(dataset.labels[0]) == 2
    assert int(dataset.targets()[0]) == 6


def test_from_arrays_validation():
    with pytest.raises(ConfigurationError):
        SyntheticDataset.from_arrays(torch.ones(1, 6, dtype=torch.long), torch.ones(1, 6, dtype=torch.long))
    with pytest.raises(DimensionError):
        SyntheticDataset.from_arrays(torch.ones(2, 3), torch.ones(2, 4))


@hsettings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0), st.integers(min_value=1, max_value=30),
       st.integers(min_value=0, max_value=1000))
def test_prefixes_stay_bounded(p, length, seed):
    spec = SparsitySpec(p=p, length=length, size=40, balance=False)
    dataset = generate_sparsity_dataset(spec, seed)
    prefixes = torch.cumsum(dataset.values * dataset.relevance, dim=1)
    assert prefixes.abs().max() <= spec.bound
    assert torch.equal(prefixes[:, -1], dataset.labels)
    assert set(dataset.values.unique().tolist()) <= {-1, 1}


def test_relevance_frequency_matches_p():
    dataset = generate_sparsity_dataset(SparsitySpec(p=0.3, length=50, size=2000, balance=False), seed=0)
    assert abs(float(dataset.relevance.double().mean()) - 0.3) < 0.01


def test_split_is_disjoint_and_covering():
    values = torch.arange(100).unsqueeze(1)
    dataset = SyntheticDataset(values=values, relevance=torch.zeros_like(values), labels=torch.zeros(100))
    train, validation = dataset.split(0.8, seed=4)
    assert (len(train), len(validation)) == (80, 20)
    seen = torch.cat([train.values.flatten(), validation.values.flatten()])
    assert torch.equal(seen.sort().values, torch.arange(100))


def test_empty_dataset_rejected():
    with pytest.raises(ConfigurationError):
        generate_sparsity_dataset(SparsitySpec(size=0), seed=0)


def test_balancing_evens_out_labels():
    dataset = generate_sparsity_dataset(SparsitySpec(p=0.5, length=20, size=900), seed=2)
    labels, counts = torch.unique(dataset.labels, return_counts=True)
    assert len(dataset) == 900
    unbalanced = generate_sparsity_dataset(SparsitySpec(p=0.5, length=20, size=900, balance=False), seed=2)
    _, raw_counts = torch.unique(unbalanced.labels, return_counts=True)
    assert counts.max() - counts.min() <= raw_counts.max() - raw_counts.min()
    assert labels.abs().max() <= 4


def test_balanced_selection_quotas():
    labels = torch.tensor([0] * 10 + [1] * 3 + [2] * 10)
    generator = torch.Generator().manual_seed(0)
    chosen = labels[balanced_selection(labels, 15, generator)]
    assert torch.bincount(chosen).tolist() == [6, 3, 6]
    # o excedente sai da classe de maior |rótulo| no nível
    chosen = labels[balanced_selection(labels, 14, generator)]
    assert torch.bincount(chosen).tolist() == [6, 3, 5]


def test_many_hot_encoding():
    dataset = SyntheticDataset.from_arrays(torch.tensor([[1, -1]]), torch.tensor([[0, 1]]))
    expected = torch.tensor([[[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]], dtype=dataset.inputs().dtype)
    assert torch.equal(dataset.inputs(), expected)


def test_generation_is_deterministic():
    spec = SparsitySpec(p=0.4, length=12, size=100)
    a = generate_sparsity_dataset(spec, seed=9)
    b = generate_sparsity_dataset(spec, seed=9)
    assert torch.equal(a.values, b.values) and torch.equal(a.relevance, b.relevance)
    c = generate_sparsity_dataset(spec, seed=10)
    assert not torch.equal(a.values, c.values)
