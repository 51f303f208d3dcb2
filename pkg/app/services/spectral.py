"""
Spectral Sampler Base
=====================
Matriz de frequências Ω, classe base dos samplers espectrais e política de
reamostragem
"""

from dataclasses import dataclass
from typing import Callable, Optional

import torch
import torch.nn as nn

from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError, NumericalError
from app.core.logging import get_logger
from app.core.seeding import make_generator
from app.schemas.config import SamplerConfig

logger = get_logger(__name__)

Projector = Callable[[torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class FrequencyMatrix:
    """
    M frequências espectrais de dimensão d_q

    ``rows`` tem formato (M, d) ou (H, M, d) quando há uma matriz por cabeça.
    ``projector``, se presente, calcula x·Ωᵀ sem materializar Ω (FastFood).
    """
    rows: torch.Tensor
    sampler: str = 'custom'
    step: int = 0
    projector: Optional[Projector] = None

    def __post_init__(self):
        if self.rows.dim() not in (2, 3):
            raise DimensionError(f"Ω deve ter formato (M, d) ou (H, M, d), recebido {tuple(self.rows.shape)}")
        if self.rows.shape[-2] < 1:
            raise ConfigurationError("Ω precisa de ao menos uma frequência")
        if not torch.isfinite(self.rows).all():
            raise NumericalError(f"Ω do sampler '{self.sampler}' contém valores não finitos")

    @property
    def samples(self) -> int:
        return self.rows.shape[-2]

    @property
    def dim(self) -> int:
        return self.rows.shape[-1]

    def project(self, x: torch.Tensor) -> torch.Tensor:
        """
        Calcula x·Ωᵀ

        Args:
            x: (..., d) para Ω (M, d), ou (..., H, L, d) para Ω (H, M, d)

        Returns:
            (..., M) ou (..., H, L, M)
        """
        if x.shape[-1] != self.dim:
            raise DimensionError(f"Dimensão da entrada ({x.shape[-1]}) difere da de Ω ({self.dim})")
        if self.projector is not None:
            return self.projector(x)
        return x @ self.rows.transpose(-1, -2)

    def head(self, index: int) -> 'FrequencyMatrix':
        """Ω de uma única cabeça"""
        if self.rows.dim() == 2:
            return self
        return FrequencyMatrix(rows=self.rows[index], sampler=self.sampler, step=self.step)


class SpectralSampler(nn.Module):
    """
    Base dos samplers: parâmetros aprendíveis, ruído em buffer e um
    torch.Generator próprio (nenhum sampler lê aleatoriedade global)
    """

    kind: str = 'base'
    shares_heads: bool = False

    def __init__(self, dim: int, samples: int, heads: int = 1,
                 seed: int = 0, label: str = '', resample_interval: int = 100):
        super().__init__()
        if dim < 1 or heads < 1:
            raise ConfigurationError(f"Dimensões inválidas: dim={dim}, heads={heads}")
        if samples < 1:
            raise ConfigurationError(f"M deve ser ≥ 1, recebido {samples}")
        self.dim = dim
        self.samples = samples
        self.heads = heads
        self.resample_interval = resample_interval
        self.rng = make_generator(seed, label, self.kind)
        self.register_buffer('drawn_at', torch.zeros((), dtype=torch.long))

    def frequencies(self) -> torch.Tensor:
        """Ω (H, M, d) calculado a partir dos parâmetros e do ruído atual"""
        raise NotImplementedError

    def projector(self) -> Optional[Projector]:
        return None

    def redraw(self) -> None:
        """Sorteia novo ruído com o gerador do sampler"""
        raise NotImplementedError

    def forward(self) -> FrequencyMatrix:
        return FrequencyMatrix(
            rows=self.frequencies(),
            sampler=self.kind,
            step=int(self.drawn_at),
            projector=self.projector(),
        )

    def _normal(self, *shape: int) -> torch.Tensor:
        return torch.randn(*shape, generator=self.rng, dtype=DTYPE)


def maybe_resample(sampler: SpectralSampler, step: int) -> FrequencyMatrix:
    """
    Reamostra o ruído de Ω se ``step`` é múltiplo do intervalo

    Args:
        sampler: Sampler (estado: parâmetros, ruído, gerador, passo de origem)
        step: Passo de treino corrente

    Returns:
        Ω atual (novo se houve reamostragem)
    """
    if step % sampler.resample_interval == 0:
        with torch.no_grad():
            sampler.redraw()
            sampler.drawn_at.fill_(step)
        logger.debug(f"Ω reamostrado ({sampler.kind}) no passo {step}")
    return sampler()


def build_sampler(config: SamplerConfig, dim: int, samples: int, heads: int = 1,
                  seed: int = 0, label: str = '', resample_interval: int = 100) -> SpectralSampler:
    """
    Cria o sampler descrito pela configuração

    Args:
        config: Configuração do sampler
        dim: Dimensão d_q das frequências
        samples: Número M de frequências
        heads: Número de cabeças
        seed: Semente raiz
        label: Rótulo que identifica o consumidor (ex: 'layer0')
        resample_interval: Intervalo de reamostragem

    Returns:
        Sampler espectral
    """
    from app.services.fastfood_sampler import FastFoodSampler
    from app.services.generative_sampler import GenerativeSampler
    from app.services.gmm_sampler import GmmSampler

    common = dict(dim=dim, samples=samples, heads=heads, seed=seed, label=label,
                  resample_interval=resample_interval)
    if config.kind == 'gmm':
        return GmmSampler(config=config.gmm, **common)
    if config.kind == 'fastfood':
        return FastFoodSampler(config=config.fastfood, **common)
    if config.kind == 'generative':
        return GenerativeSampler(config=config.generator, **common)
    raise ConfigurationError(f"Sampler desconhecido: {config.kind}")
