"""
Generative Spectral Sampler
===========================
Densidade espectral implícita: ω = g(n), n ~ N(0, I), com g uma MLP de
largura constante d_q compartilhada por todas as cabeças de uma camada
"""

import math
from typing import Optional

import torch
import torch.nn as nn

from app.core.autodiff import DTYPE, LEAKY_SLOPE
from app.core.errors import ConfigurationError
from app.core.logging import get_logger
from app.core.seeding import make_generator
from app.schemas.config import GeneratorConfig
from app.services.spectral import FrequencyMatrix, SpectralSampler

logger = get_logger(__name__)


class GenerativeSampler(SpectralSampler):
    """Sampler gerativo: camadas ocultas Linear → BatchNorm → LeakyReLU, saída tanh"""

    kind = 'generative'
    shares_heads = True

    def __init__(self, dim: int, samples: int, heads: int = 1, config: Optional[GeneratorConfig] = None,
                 seed: int = 0, label: str = '', resample_interval: int = 100):
        super().__init__(dim, samples, heads, seed, label, resample_interval)
        if samples < 2:
            raise ConfigurationError("O sampler gerativo exige M ≥ 2 (estatísticas de lote da normalização)")
        config = config or GeneratorConfig()

        layers = []
        for _ in range(config.hidden_layers):
            layers += [
                nn.Linear(dim, dim),
                # estatísticas do próprio lote de ruído, sem médias móveis
                nn.BatchNorm1d(dim, track_running_stats=False),
                nn.LeakyReLU(LEAKY_SLOPE),
            ]
        self.hidden = nn.Sequential(*layers).to(DTYPE)
        self.output = nn.Linear(dim, dim).to(DTYPE)

        if config.output_scale:
            self.log_scale = nn.Parameter(torch.tensor(math.log(config.init_scale), dtype=DTYPE))
        else:
            self.log_scale = None

        self.register_buffer('noise', self._normal(samples, dim))

    def network(self, noise: torch.Tensor) -> torch.Tensor:
        """g(n) para um lote de ruído (N, d)"""
        omega = torch.tanh(self.output(self.hidden(noise)))
        if self.log_scale is not None:
            omega = omega * torch.exp(self.log_scale)
        return omega

    def frequencies(self) -> torch.Tensor:
        omega = self.network(self.noise)
        return omega.unsqueeze(0).expand(self.heads, -1, -1)

    def redraw(self) -> None:
        self.noise.copy_(self._normal(self.samples, self.dim))


def generator_sample(sampler: GenerativeSampler, samples: int, seed: int) -> FrequencyMatrix:
    """
    Amostra M frequências novas da rede de um sampler gerativo

    Args:
        sampler: Sampler com os pesos da rede
        samples: Número M de frequências
        seed: Semente do ruído

    Returns:
        FrequencyMatrix (M, d), diferenciável em todos os pesos
    """
    if samples < 2:
        raise ConfigurationError("O sampler gerativo exige M ≥ 2 (estatísticas de lote da normalização)")
    generator = make_generator(seed, 'generator_sample')
    noise = torch.randn(samples, sampler.dim, generator=generator, dtype=DTYPE)
    return FrequencyMatrix(rows=sampler.network(noise), sampler='generative')
