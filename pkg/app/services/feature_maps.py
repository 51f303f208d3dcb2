"""
Feature Maps
============
Mapas de features aleatórias: RKS (cos/sin) e PRF (exponencial positiva)
"""

import math

import torch

from app.core.errors import DimensionError
from app.core.logging import get_logger
from app.schemas.config import FeatureMapSpec
from app.services.spectral import FrequencyMatrix

logger = get_logger(__name__)


def _check_dim(x: torch.Tensor, omega: FrequencyMatrix) -> None:
    if x.shape[-1] != omega.dim:
        raise DimensionError(f"Dimensão da entrada ({x.shape[-1]}) difere da de Ω ({omega.dim})")


def rks_map(x: torch.Tensor, omega: FrequencyMatrix) -> torch.Tensor:
    """
    φ(x) = (1/√M)·[cos(Ωx); sin(Ωx)]

    Args:
        x: (..., d)
        omega: Frequências (M, d) ou (H, M, d)

    Returns:
        Features (..., 2M)
    """
    _check_dim(x, omega)
    projected = omega.project(x)
    features = torch.cat([torch.cos(projected), torch.sin(projected)], dim=-1)
    return features / math.sqrt(omega.samples)


def prf_map(x: torch.Tensor, omega: FrequencyMatrix, clamp: float = 30.0,
            half_norm: bool = False) -> torch.Tensor:
    """
    φ(x) = (1/√M)·exp(Ωx − ‖x‖²), expoente limitado a [−clamp, clamp]

    Args:
        x: (..., d)
        omega: Frequências (M, d) ou (H, M, d)
        clamp: Limite do expoente
        half_norm: Usa ‖x‖²/2 (kernel softmax) em vez de ‖x‖²

    Returns:
        Features estritamente positivas (..., M)
    """
    _check_dim(x, omega)
    norm = (x * x).sum(dim=-1, keepdim=True)
    if half_norm:
        norm = norm / 2
    exponent = torch.clamp(omega.project(x) - norm, -clamp, clamp)
    return torch.exp(exponent) / math.sqrt(omega.samples)


def feature_map(x: torch.Tensor, spec: FeatureMapSpec, omega: FrequencyMatrix) -> torch.Tensor:
    """Aplica o mapa descrito por ``spec``"""
    if spec.kind == 'rks':
        return rks_map(x, omega)
    return prf_map(x, omega, clamp=spec.clamp, half_norm=spec.half_norm)


def feature_width(spec: FeatureMapSpec) -> int:
    """Dimensão do vetor de features (2M para RKS, M para PRF)"""
    return 2 * spec.samples if spec.kind == 'rks' else spec.samples


def kernel_estimate(q: torch.Tensor, k: torch.Tensor, spec: FeatureMapSpec,
                    omega: FrequencyMatrix) -> torch.Tensor:
    """
    κ(q, k) ≈ φ(q)ᵀφ(k) com o mesmo Ω para os dois argumentos

    Args:
        q: (..., d)
        k: (..., d)
        spec: Feature map
        omega: Frequências compartilhadas

    Returns:
        Estimativa (...)
    """
    return (feature_map(q, spec, omega) * feature_map(k, spec, omega)).sum(dim=-1)


def gaussian_kernel(q: torch.Tensor, k: torch.Tensor, sigma: float = 1.0) -> torch.Tensor:
    """Kernel Gaussiano exato e^{−‖q−k‖²/(2σ²)}"""
    diff = q - k
    return torch.exp(-(diff * diff).sum(dim=-1) / (2 * sigma ** 2))
