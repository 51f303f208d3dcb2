"""
Synthetic Sparsity Task
=======================
Geração do conjunto sintético de esparsidade: sequências de escores
v ∈ {−1, +1} e relevâncias a ~ Bernoulli(p), rótulo Σ v_i·a_i com todo
prefixo limitado em valor absoluto
"""

from dataclasses import dataclass
from typing import Tuple

import torch

from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError
from app.core.logging import get_logger
from app.core.seeding import make_generator
from app.schemas.config import SparsitySpec

logger = get_logger(__name__)

OVERGENERATION = 3


@dataclass
class SyntheticDataset:
    """Exemplos (v, a, rótulo) em tensores"""
    values: torch.Tensor      # (N, L) em {−1, +1}
    relevance: torch.Tensor   # (N, L) em {0, 1}
    labels: torch.Tensor      # (N,) em [−bound, bound]

    @classmethod
    def from_arrays(cls, values: torch.Tensor, relevance: torch.Tensor, bound: int = 4) -> 'SyntheticDataset':
        """
        Monta um conjunto a partir de v e a, validando o limite dos prefixos

        Args:
            values: (N, L) em {−1, +1}
            relevance: (N, L) em {0, 1}
            bound: Limite de |prefixo|

        Returns:
            SyntheticDataset com rótulo = Σ v_i·a_i
        """
        values = torch.as_tensor(values, dtype=torch.long)
        relevance = torch.as_tensor(relevance, dtype=torch.long)
        if values.shape != relevance.shape or values.dim() != 2:
            raise DimensionError(f"v {tuple(values.shape)} e a {tuple(relevance.shape)} devem ser (N, L)")
        prefixes = torch.cumsum(values * relevance, dim=1)
        if (prefixes.abs() > bound).any():
            raise ConfigurationError(f"Algum prefixo excede o limite |Σ| ≤ {bound}")
        return cls(values=values, relevance=relevance, labels=prefixes[:, -1].clone())

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def subset(self, index: torch.Tensor) -> 'SyntheticDataset':
        return SyntheticDataset(self.values[index], self.relevance[index], self.labels[index])

    def inputs(self) -> torch.Tensor:
        """Entrada many-hot (N, L, 3): [v = +1, v = −1, a]"""
        return torch.stack(
            [(self.values == 1), (self.values == -1), (self.relevance == 1)], dim=-1
        ).to(DTYPE)

    def targets(self, bound: int = 4) -> torch.Tensor:
        """Índices de classe: rótulo + bound"""
        return self.labels + bound

    def split(self, fraction: float, seed: int) -> Tuple['SyntheticDataset', 'SyntheticDataset']:
        """
        Divide em treino/validação disjuntos que cobrem o conjunto

        Args:
            fraction: Fração de treino
            seed: Semente do embaralhamento

        Returns:
            (treino, validação)
        """
        order = torch.randperm(len(self), generator=make_generator(seed, 'split'))
        cut = int(round(len(self) * fraction))
        return self.subset(order[:cut]), self.subset(order[cut:])


def draw_examples(count: int, length: int, p: float, bound: int,
                  generator: torch.Generator) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Sorteia exemplos vetorizados ao longo de N

    v_i é uma moeda justa; numa posição relevante em que v_i levaria o
    prefixo além de ``bound``, o sinal é invertido.

    Returns:
        (v, a, rótulos)
    """
    relevance = (torch.rand(count, length, generator=generator, dtype=DTYPE) < p).long()
    fair = torch.where(torch.rand(count, length, generator=generator, dtype=DTYPE) < 0.5, -1, 1).long()

    values = torch.empty(count, length, dtype=torch.long)
    prefix = torch.zeros(count, dtype=torch.long)
    for i in range(length):
        candidate = fair[:, i]
        relevant = relevance[:, i] == 1
        breach = relevant & ((prefix + candidate).abs() > bound)
        chosen = torch.where(breach, -candidate, candidate)
        values[:, i] = chosen
        prefix = prefix + torch.where(relevant, chosen, torch.zeros_like(chosen))
    return values, relevance, prefix


def balanced_selection(labels: torch.Tensor, size: int, generator: torch.Generator) -> torch.Tensor:
    """
    Índices de ``size`` exemplos com o histograma de rótulos mais uniforme possível

    Cada classe recebe min(contagem, t), com t o menor nível que cobre
    ``size``; o excedente é retirado das classes no nível t.
    """
    classes, counts = torch.unique(labels, return_counts=True)
    counts = counts.tolist()

    level = 0
    while sum(min(c, level) for c in counts) < size:
        level += 1
    quota = [min(c, level) for c in counts]
    excess = sum(quota) - size
    for position in sorted(range(len(quota)), key=lambda j: -abs(int(classes[j]))):
        if excess == 0:
            break
        if quota[position] == level:
            quota[position] -= 1
            excess -= 1

    chosen = []
    for label, take in zip(classes.tolist(), quota):
        members = torch.nonzero(labels == label).flatten()
        members = members[torch.randperm(members.numel(), generator=generator)]
        chosen.append(members[:take])
    selection = torch.cat(chosen)
    return selection[torch.randperm(selection.numel(), generator=generator)]


def generate_sparsity_dataset(spec: SparsitySpec, seed: int) -> SyntheticDataset:
    """
    Gera N exemplos da tarefa de esparsidade

    Args:
        spec: p, L, N, balanceamento e limite dos prefixos
        seed: Semente raiz

    Returns:
        SyntheticDataset
    """
    if spec.size == 0:
        raise ConfigurationError("Conjunto sintético vazio (N = 0)")

    generator = make_generator(seed, 'sparsity', spec.p, spec.length, spec.size)
    pool = spec.size * OVERGENERATION if spec.balance else spec.size
    values, relevance, labels = draw_examples(pool, spec.length, spec.p, spec.bound, generator)

    if spec.balance:
        index = balanced_selection(labels, spec.size, generator)
        values, relevance, labels = values[index], relevance[index], labels[index]

    histogram = {int(c): int(n) for c, n in zip(*torch.unique(labels, return_counts=True))}
    logger.info(f"Conjunto sintético: N={spec.size}, L={spec.length}, p={spec.p}, rótulos={histogram}")
    return SyntheticDataset(values=values, relevance=relevance, labels=labels)
