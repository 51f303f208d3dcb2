"""
GMM Spectral Sampler
====================
Densidade espectral como mistura de Gaussianas: ω = S_c·n + μ_c
"""

from typing import List, Optional

import torch
import torch.nn as nn

from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError
from app.core.logging import get_logger
from app.core.seeding import make_generator
from app.schemas.config import GmmConfig
from app.services.spectral import FrequencyMatrix, SpectralSampler

logger = get_logger(__name__)


def component_counts(samples: int, components: int) -> List[int]:
    """
    Distribui M amostras entre C componentes

    Se C não divide M, as primeiras (M mod C) componentes recebem uma amostra
    a mais.

    Args:
        samples: Número M de frequências
        components: Número C de componentes

    Returns:
        Quantidade de linhas de cada componente
    """
    if components < 1:
        raise ConfigurationError(f"C deve ser ≥ 1, recebido {components}")
    if components > samples:
        raise ConfigurationError(f"Mais componentes que amostras (C={components} > M={samples})")
    base, extra = divmod(samples, components)
    return [base + (1 if c < extra else 0) for c in range(components)]


def gmm_frequencies(means: torch.Tensor, scales: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """
    Reparametrização ω = S_c·n + μ_c, linhas em ordem de componente

    Args:
        means: (..., C, d)
        scales: (..., C, d, d)
        noise: (..., M, d) normal padrão

    Returns:
        Ω (..., M, d)
    """
    components, dim = means.shape[-2], means.shape[-1]
    if scales.shape[-3:] != (components, dim, dim):
        raise DimensionError(f"Escalas {tuple(scales.shape)} incompatíveis com médias {tuple(means.shape)}")
    if noise.shape[-1] != dim:
        raise DimensionError(f"Ruído de dimensão {noise.shape[-1]}, esperado {dim}")

    counts = component_counts(noise.shape[-2], components)
    index = torch.repeat_interleave(torch.arange(components), torch.tensor(counts))
    row_scales = scales[..., index, :, :]
    row_means = means[..., index, :]
    return torch.einsum('...mij,...mj->...mi', row_scales, noise) + row_means


def gmm_sample(means: torch.Tensor, scales: torch.Tensor, samples: int, seed: int) -> FrequencyMatrix:
    """
    Amostra Ω de uma mistura com pesos 1/C

    Args:
        means: Médias (C, d)
        scales: Fatores de escala (C, d, d); covariância S·Sᵀ
        samples: Número M de frequências
        seed: Semente do ruído

    Returns:
        FrequencyMatrix (M, d), diferenciável em means e scales
    """
    if means.dim() != 2:
        raise DimensionError(f"Médias devem ter formato (C, d), recebido {tuple(means.shape)}")
    component_counts(samples, means.shape[0])
    generator = make_generator(seed, 'gmm_sample')
    noise = torch.randn(samples, means.shape[1], generator=generator, dtype=DTYPE)
    return FrequencyMatrix(rows=gmm_frequencies(means, scales, noise), sampler='gmm')


class GmmSampler(SpectralSampler):
    """Sampler GMM com médias e fatores de escala aprendíveis por cabeça"""

    kind = 'gmm'

    def __init__(self, dim: int, samples: int, heads: int = 1, config: Optional[GmmConfig] = None,
                 seed: int = 0, label: str = '', resample_interval: int = 100):
        super().__init__(dim, samples, heads, seed, label, resample_interval)
        config = config or GmmConfig()
        self.components = config.components
        self.symmetric = config.symmetric
        self.counts = component_counts(samples, self.components)

        # no modo simétrico só a primeira média e uma escala são livres
        free = 1 if self.symmetric else self.components
        init = make_generator(seed, label, 'gmm-init')
        means = torch.randn(heads, free, dim, generator=init, dtype=DTYPE) * config.init_mean_std
        scales = torch.eye(dim, dtype=DTYPE).repeat(heads, free, 1, 1) * config.init_scale
        self.means = nn.Parameter(means)
        self.scales = nn.Parameter(scales)

        self.register_buffer('noise', self._normal(heads, samples, dim))

    def component_means(self) -> torch.Tensor:
        """Médias (H, C, d)"""
        if self.symmetric:
            return torch.cat([self.means, -self.means], dim=1)
        return self.means

    def component_scales(self) -> torch.Tensor:
        """Fatores de escala (H, C, d, d)"""
        if self.symmetric:
            return self.scales.expand(-1, 2, -1, -1)
        return self.scales

    def frequencies(self) -> torch.Tensor:
        return gmm_frequencies(self.component_means(), self.component_scales(), self.noise)

    def redraw(self) -> None:
        self.noise.copy_(self._normal(self.heads, self.samples, self.dim))
