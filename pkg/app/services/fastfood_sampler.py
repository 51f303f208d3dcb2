"""
FastFood Spectral Sampler
=========================
Ω estruturado V = (1/(σ√d))·S·H·G·Π·H·B aplicado com duas transformadas
rápidas de Walsh–Hadamard (O(d log d) por bloco)
"""

import math
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
from scipy.linalg import hadamard
from scipy.special import gammaincinv

from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError
from app.core.logging import get_logger
from app.schemas.config import FastFoodConfig
from app.services.spectral import Projector, SpectralSampler

logger = get_logger(__name__)


def next_power_of_two(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def fwht(x: torch.Tensor) -> torch.Tensor:
    """
    Transformada rápida de Walsh–Hadamard (não normalizada, ordem de Sylvester)
    ao longo da última dimensão

    Args:
        x: (..., d), d potência de dois

    Returns:
        H·x com formato (..., d)
    """
    d = x.shape[-1]
    if d < 1 or d & (d - 1):
        raise DimensionError(f"WHT exige dimensão potência de dois, recebido {d}")
    lead = x.shape[:-1]
    out = x
    h = 1
    while h < d:
        out = out.reshape(*lead, d // (2 * h), 2, h)
        a, b = out[..., 0, :], out[..., 1, :]
        out = torch.stack((a + b, a - b), dim=-2).reshape(*lead, d)
        h *= 2
    return out


def fastfood_matrix_apply(x: torch.Tensor, scale: torch.Tensor, gauss: torch.Tensor,
                          sign: torch.Tensor, perm: torch.Tensor, sigma: float = 1.0) -> torch.Tensor:
    """
    Calcula V·x bloco a bloco

    Os fatores têm formato (..., blocks, d) e fazem broadcast com
    ``x.shape[:-1]``; as saídas dos blocos são concatenadas.

    Args:
        x: (..., d) com d potência de dois
        scale: Diagonal S
        gauss: Diagonal G
        sign: Diagonal B
        perm: Permutação Π (índices long)
        sigma: Largura de banda

    Returns:
        (..., blocks · d)
    """
    d = x.shape[-1]
    if scale.shape[-1] != d:
        raise DimensionError(f"Fatores de dimensão {scale.shape[-1]}, entrada de dimensão {d}")

    y = x.unsqueeze(-2) * sign
    y = fwht(y)
    y = torch.take_along_dim(y, perm.expand(y.shape), dim=-1)
    y = y * gauss
    y = fwht(y)
    y = y * scale
    y = y / (sigma * math.sqrt(d))
    return y.flatten(-2)


def fastfood_dense(scale: torch.Tensor, gauss: torch.Tensor, sign: torch.Tensor,
                   perm: torch.Tensor, sigma: float = 1.0) -> torch.Tensor:
    """V denso (blocks·d, d) montado fator a fator"""
    d = scale.shape[-1]
    H = torch.as_tensor(hadamard(d), dtype=DTYPE)
    blocks = []
    for b in range(scale.shape[0]):
        P = torch.eye(d, dtype=DTYPE)[perm[b]]
        V = torch.diag(scale[b]) @ H @ torch.diag(gauss[b]) @ P @ H @ torch.diag(sign[b])
        blocks.append(V / (sigma * math.sqrt(d)))
    return torch.cat(blocks, dim=0)


class FastFoodSampler(SpectralSampler):
    """
    Sampler FastFood com subconjunto aprendível de {S, G, B}

    Reamostrar sorteia de novo apenas os fatores não aprendíveis (Π sempre).
    """

    kind = 'fastfood'

    def __init__(self, dim: int, samples: int, heads: int = 1, config: Optional[FastFoodConfig] = None,
                 seed: int = 0, label: str = '', resample_interval: int = 100):
        super().__init__(dim, samples, heads, seed, label, resample_interval)
        config = config or FastFoodConfig()
        self.padded = next_power_of_two(dim)
        if samples % self.padded:
            raise ConfigurationError(
                f"FastFood exige M múltiplo do bloco d={self.padded} (M={samples})"
            )
        self.blocks = samples // self.padded
        self.sigma = config.sigma
        self.learnable = set(config.learnable)

        gauss = self._normal(heads, self.blocks, self.padded)
        self._register('gauss', gauss, 'g')
        self._register('sign', self._signs(), 'b')
        self._register('scale', self._chi_scale(gauss), 's')
        self.register_buffer('perm', self._permutations())

        logger.debug(f"FastFood: d={self.padded}, blocos={self.blocks}, aprendíveis={config.learnable or '-'}")

    def _register(self, name: str, value: torch.Tensor, flag: str) -> None:
        if flag in self.learnable:
            setattr(self, name, nn.Parameter(value))
        else:
            self.register_buffer(name, value)

    def _signs(self) -> torch.Tensor:
        u = torch.rand(self.heads, self.blocks, self.padded, generator=self.rng, dtype=DTYPE)
        return torch.where(u < 0.5, -1.0, 1.0).to(DTYPE)

    def _permutations(self) -> torch.Tensor:
        perms = [
            torch.randperm(self.padded, generator=self.rng)
            for _ in range(self.heads * self.blocks)
        ]
        return torch.stack(perms).reshape(self.heads, self.blocks, self.padded)

    def _chi_scale(self, gauss: torch.Tensor) -> torch.Tensor:
        # comprimento de linha χ_d, corrigido pela norma de G de cada bloco
        u = torch.rand(self.heads, self.blocks, self.padded, generator=self.rng, dtype=DTYPE)
        chi = torch.as_tensor(np.sqrt(2.0 * gammaincinv(self.padded / 2.0, u.numpy())), dtype=DTYPE)
        return chi / torch.linalg.vector_norm(gauss.detach(), dim=-1, keepdim=True)

    def _pad(self, x: torch.Tensor) -> torch.Tensor:
        if self.padded == self.dim:
            return x
        return nn.functional.pad(x, (0, self.padded - self.dim))

    def transform(self, x: torch.Tensor) -> torch.Tensor:
        """
        V·x para x (..., H, N, d) por cabeça

        Returns:
            (..., H, N, M)
        """
        if x.shape[-1] != self.dim:
            raise DimensionError(f"Entrada de dimensão {x.shape[-1]}, esperado {self.dim}")
        factors = [t.unsqueeze(-3) for t in (self.scale, self.gauss, self.sign, self.perm)]
        return fastfood_matrix_apply(self._pad(x), *factors, sigma=self.sigma)

    def frequencies(self) -> torch.Tensor:
        basis = torch.eye(self.dim, dtype=DTYPE).expand(self.heads, self.dim, self.dim)
        return self.transform(basis).transpose(-1, -2)

    def projector(self) -> Projector:
        return self.transform

    def redraw(self) -> None:
        if 'g' not in self.learnable:
            self.gauss.copy_(self._normal(self.heads, self.blocks, self.padded))
        if 'b' not in self.learnable:
            self.sign.copy_(self._signs())
        if 's' not in self.learnable:
            self.scale.copy_(self._chi_scale(self.gauss))
        self.perm.copy_(self._permutations())
