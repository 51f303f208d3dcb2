"""
Kernel Attention
================
Atenção kernelizada na forma quadrática (oráculo O(L²)), na forma linear
(O(L), sem matriz L×L), na forma causal por acumuladores e a referência
softmax, além da camada multi-cabeça que as combina
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import torch
import torch.nn as nn

from app.core import autodiff as ad
from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError, NumericalError
from app.core.logging import get_logger
from app.schemas.config import AttentionConfig, FeatureMapSpec
from app.services.feature_maps import feature_map
from app.services.spectral import FrequencyMatrix, build_sampler
from app.utils.alloc import record, release

logger = get_logger(__name__)

# Recebe Q (..., L, d) e K (..., S, d) e devolve a matriz de kernel (..., L, S)
Kernel = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]

DEFAULT_EPS = 1e-6
# posições por bloco de features nas formas linear e causal
FEATURE_CHUNK = 64


@dataclass
class AttentionDiagnostics:
    """Contagem de denominadores estabilizados por estarem perto de zero"""
    near_zero: int = 0
    evaluated: int = 0

    def reset(self) -> None:
        self.near_zero = 0
        self.evaluated = 0


def stabilize(denominator: torch.Tensor, eps: float,
              diagnostics: Optional[AttentionDiagnostics] = None) -> torch.Tensor:
    """
    denominador → denominador + ε·sign(denominador), com sign(0) = +1

    Com ε = 0 um denominador nulo é erro numérico.
    """
    if diagnostics is not None:
        diagnostics.near_zero += int((denominator.detach().abs() < max(eps, 1e-12)).sum())
        diagnostics.evaluated += denominator.numel()
    if eps == 0:
        if (denominator == 0).any():
            raise NumericalError("Denominador da atenção nulo com ε = 0")
        return denominator
    sign = torch.where(denominator >= 0, 1.0, -1.0).to(denominator.dtype)
    return denominator + eps * sign


def _check_shapes(Q: torch.Tensor, K: torch.Tensor, V: torch.Tensor) -> None:
    if Q.shape[-1] != K.shape[-1]:
        raise DimensionError(f"d_q ({Q.shape[-1]}) difere de d_k ({K.shape[-1]})")
    if K.shape[-2] != V.shape[-2]:
        raise DimensionError(f"Chaves ({K.shape[-2]}) e valores ({V.shape[-2]}) com comprimentos diferentes")
    if Q.shape[-2] < 1:
        raise DimensionError("Sequência vazia")


def _causal_mask(length: int) -> torch.Tensor:
    return torch.tril(torch.ones(length, length, dtype=torch.bool))


def feature_kernel(spec: FeatureMapSpec, omega: FrequencyMatrix) -> Kernel:
    """Kernel κ(q, k) = φ(q)ᵀφ(k) induzido por um feature map"""
    def kernel(Q: torch.Tensor, K: torch.Tensor) -> torch.Tensor:
        return ad.matmul(feature_map(Q, spec, omega), feature_map(K, spec, omega).transpose(-1, -2))
    return kernel


def quadratic_kernel_attention(Q: torch.Tensor, K: torch.Tensor, V: torch.Tensor, kernel: Kernel,
                               eps: float = DEFAULT_EPS, causal: bool = False,
                               diagnostics: Optional[AttentionDiagnostics] = None) -> torch.Tensor:
    """
    Atenção generalizada: linha i = Σ_j κ(q_i, k_j)·v_j / Σ_j' κ(q_i, k_j')

    Args:
        Q: Consultas (..., L, d_q)
        K: Chaves (..., L, d_q)
        V: Valores (..., L, d_v)
        kernel: Função que devolve a matriz (..., L, L) de κ
        eps: Estabilizador do denominador
        causal: Restringe a linha i às chaves j ≤ i

    Returns:
        (..., L, d_v)
    """
    _check_shapes(Q, K, V)
    scores = record(kernel(Q, K), 'scores')
    if causal:
        scores = scores * _causal_mask(Q.shape[-2]).to(scores.dtype)
    denominator = stabilize(scores.sum(dim=-1), eps, diagnostics)
    out = ad.matmul(scores, V) / denominator.unsqueeze(-1)
    release(scores)
    return out


def linear_kernel_attention(Q: torch.Tensor, K: torch.Tensor, V: torch.Tensor,
                            spec: FeatureMapSpec, omega: FrequencyMatrix,
                            diagnostics: Optional[AttentionDiagnostics] = None,
                            chunk: int = FEATURE_CHUNK) -> torch.Tensor:
    """
    Reescrita linear: φ(q_i)ᵀ(Σ_j φ(k_j)v_jᵀ) / φ(q_i)ᵀΣ_j φ(k_j)

    Chaves e consultas passam em blocos de ``chunk`` posições: os buffers de
    features têm no máximo chunk×F e os acumuladores F×d_v e F (F = 2M para
    RKS, M para PRF), independentes de L.

    Args:
        Q: Consultas (..., L, d_q)
        K: Chaves (..., L, d_q)
        V: Valores (..., L, d_v)
        spec: Feature map
        omega: Ω compartilhado ao longo da sequência
        chunk: Posições por bloco

    Returns:
        (..., L, d_v)
    """
    _check_shapes(Q, K, V)
    if chunk < 1:
        raise ConfigurationError(f"Bloco de features inválido: {chunk}")

    kv = z = None
    for start in range(0, K.shape[-2], chunk):
        phi_k = record(feature_map(K[..., start:start + chunk, :], spec, omega), 'phi_k')
        part_kv = ad.matmul(phi_k.transpose(-1, -2), V[..., start:start + chunk, :])
        part_z = phi_k.sum(dim=-2)
        if kv is None:
            kv, z = record(part_kv, 'kv'), record(part_z, 'z')
        else:
            kv, z = kv + part_kv, z + part_z
        release(phi_k)

    rows = []
    for start in range(0, Q.shape[-2], chunk):
        phi_q = record(feature_map(Q[..., start:start + chunk, :], spec, omega), 'phi_q')
        numerator = ad.matmul(phi_q, kv)
        denominator = stabilize((phi_q * z.unsqueeze(-2)).sum(dim=-1), spec.eps, diagnostics)
        rows.append(numerator / denominator.unsqueeze(-1))
        release(phi_q)

    release(kv, z)
    return torch.cat(rows, dim=-2)


def causal_linear_attention(Q: torch.Tensor, K: torch.Tensor, V: torch.Tensor,
                            spec: FeatureMapSpec, omega: FrequencyMatrix,
                            diagnostics: Optional[AttentionDiagnostics] = None,
                            chunk: int = FEATURE_CHUNK) -> torch.Tensor:
    """
    Variante causal: a linha i usa apenas j ≤ i, por acumuladores correntes

    Args:
        Q: Consultas (..., L, d_q)
        K: Chaves (..., L, d_q)
        V: Valores (..., L, d_v)
        spec: Feature map
        omega: Ω compartilhado
        chunk: Posições por bloco de features

    Returns:
        (..., L, d_v)
    """
    _check_shapes(Q, K, V)
    if chunk < 1:
        raise ConfigurationError(f"Bloco de features inválido: {chunk}")

    kv = z = None
    rows = []
    for start in range(0, Q.shape[-2], chunk):
        phi_q = record(feature_map(Q[..., start:start + chunk, :], spec, omega), 'phi_q')
        phi_k = record(feature_map(K[..., start:start + chunk, :], spec, omega), 'phi_k')
        if kv is None:
            lead, width = phi_k.shape[:-2], phi_k.shape[-1]
            kv = record(torch.zeros(*lead, width, V.shape[-1], dtype=V.dtype), 'kv')
            z = record(torch.zeros(*lead, width, dtype=V.dtype), 'z')

        for offset in range(phi_q.shape[-2]):
            k_i = phi_k[..., offset, :]
            kv = kv + k_i.unsqueeze(-1) * V[..., start + offset, :].unsqueeze(-2)
            z = z + k_i
            q_i = phi_q[..., offset, :]
            numerator = (q_i.unsqueeze(-1) * kv).sum(dim=-2)
            denominator = stabilize((q_i * z).sum(dim=-1), spec.eps, diagnostics)
            rows.append(numerator / denominator.unsqueeze(-1))
        release(phi_q, phi_k)

    release(kv, z)
    return torch.stack(rows, dim=-2)


def softmax_attention(Q: torch.Tensor, K: torch.Tensor, V: torch.Tensor,
                      causal: bool = False) -> torch.Tensor:
    """
    Atenção softmax com temperatura 1/√d_q

    Args:
        Q: Consultas (..., L, d_q)
        K: Chaves (..., L, d_q)
        V: Valores (..., L, d_v)
        causal: Máscara triangular

    Returns:
        (..., L, d_v)
    """
    _check_shapes(Q, K, V)
    scores = record(ad.matmul(Q, K.transpose(-1, -2)) / math.sqrt(Q.shape[-1]), 'scores')
    if causal:
        scores = scores.masked_fill(~_causal_mask(Q.shape[-2]), float('-inf'))
    weights = ad.softmax(scores, axis=-1)
    out = ad.matmul(weights, V)
    release(scores)
    return out


class MultiHeadAttention(nn.Module):
    """Atenção multi-cabeça com projeções W^Q, W^K, W^V e saída W^O"""

    def __init__(self, d_model: int, config: AttentionConfig, seed: int = 0, label: str = ''):
        super().__init__()
        self.config = config
        self.heads = config.heads
        self.d_query = config.d_query
        self.d_value = config.d_value

        self.query = nn.Linear(d_model, config.heads * config.d_query).to(DTYPE)
        self.key = nn.Linear(d_model, config.heads * config.d_query).to(DTYPE)
        self.value = nn.Linear(d_model, config.heads * config.d_value).to(DTYPE)
        self.output = nn.Linear(config.heads * config.d_value, d_model).to(DTYPE)

        self.diagnostics = AttentionDiagnostics()
        if config.kind == 'kernel':
            self.sampler = build_sampler(
                config.sampler,
                dim=config.d_query,
                samples=config.featmap.samples,
                heads=config.heads,
                seed=seed,
                label=label,
                resample_interval=config.featmap.resample_interval,
            )
        else:
            self.sampler = None

    def _split(self, x: torch.Tensor, width: int) -> torch.Tensor:
        batch, length, _ = x.shape
        return x.view(batch, length, self.heads, width).transpose(1, 2)

    def forward(self, x: torch.Tensor, omega: Optional[FrequencyMatrix] = None) -> torch.Tensor:
        """
        Args:
            x: (B, L, d_model)
            omega: Ω explícito (padrão: o Ω corrente do sampler)

        Returns:
            (B, L, d_model)
        """
        Q = self._split(self.query(x), self.d_query)
        K = self._split(self.key(x), self.d_query)
        V = self._split(self.value(x), self.d_value)

        config = self.config
        if self.sampler is None:
            out = softmax_attention(Q, K, V, causal=config.causal)
        else:
            omega = omega if omega is not None else self.sampler()
            if config.mode == 'quadratic':
                kernel = feature_kernel(config.featmap, omega)
                out = quadratic_kernel_attention(Q, K, V, kernel, config.featmap.eps,
                                                 config.causal, self.diagnostics)
            elif config.causal:
                out = causal_linear_attention(Q, K, V, config.featmap, omega, self.diagnostics)
            else:
                out = linear_kernel_attention(Q, K, V, config.featmap, omega, self.diagnostics)

        batch, _, length, _ = out.shape
        merged = out.transpose(1, 2).reshape(batch, length, self.heads * self.d_value)
        return self.output(merged)
