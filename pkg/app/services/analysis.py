"""
Variance Analysis
=================
Formas fechadas do MSE dos estimadores RKS e PRF sob densidade espectral
Gaussiana, oráculo de Monte Carlo e autovalores das covariâncias aprendidas
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import torch

from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError
from app.core.logging import get_logger
from app.core.seeding import make_generator
from app.services.gmm_sampler import GmmSampler

logger = get_logger(__name__)

MIN_TRIALS = 10_000


@dataclass(frozen=True)
class MseInputs:
    """Par (q, k), média μ, fator de escala S (covariância S·Sᵀ) e m amostras"""
    q: torch.Tensor
    k: torch.Tensor
    mean: torch.Tensor
    scale: torch.Tensor
    m: int

    def __post_init__(self):
        d = self.q.shape[-1]
        if self.k.shape != self.q.shape or self.mean.shape != self.q.shape:
            raise DimensionError("q, k e μ devem ter a mesma dimensão")
        if self.scale.shape != (d, d):
            raise DimensionError(f"S deve ser {d}×{d}, recebido {tuple(self.scale.shape)}")
        if self.m < 1:
            raise ConfigurationError(f"m deve ser ≥ 1, recebido {self.m}")

    @property
    def p(self) -> torch.Tensor:
        return self.k - self.q

    @property
    def o(self) -> torch.Tensor:
        return self.k + self.q


def mse_rks_closed_form(inp: MseInputs) -> float:
    """
    MSE do estimador RKS no par simétrico (μ₂ = −μ₁, mesma escala):
    (2/m)·cos²(μᵀp)·(1 − e^{−‖Sᵀp‖²})²
    """
    projected = inp.scale.T @ inp.p
    decay = 1.0 - torch.exp(-(projected @ projected))
    return float(2.0 / inp.m * torch.cos(inp.mean @ inp.p) ** 2 * decay ** 2)


def mse_prf_closed_form(inp: MseInputs, squared: bool = True) -> float:
    """
    MSE do estimador PRF com uma componente Gaussiana:
    (1/m)·e^{−2(‖q‖²+‖k‖²−μᵀo)}·(e^{2s} − e^{s}), s = ‖Sᵀo‖²

    Args:
        inp: Entradas
        squared: Usa a norma ao quadrado em s (False: norma simples)
    """
    projected = inp.scale.T @ inp.o
    s = projected @ projected if squared else torch.linalg.vector_norm(projected)
    prefactor = torch.exp(-2.0 * (inp.q @ inp.q + inp.k @ inp.k - inp.mean @ inp.o))
    return float(prefactor * (torch.exp(2.0 * s) - torch.exp(s)) / inp.m)


def kernel_reference(estimator: str, inp: MseInputs) -> float:
    """
    Valor esperado de cada estimador

    RKS (par simétrico): 2·e^{−½‖Sᵀp‖²}·cos(μᵀp).
    PRF: exp(μᵀo + ½‖Sᵀo‖² − ‖q‖² − ‖k‖²).
    """
    if estimator == 'rks':
        projected = inp.scale.T @ inp.p
        return float(2.0 * torch.exp(-0.5 * (projected @ projected)) * torch.cos(inp.mean @ inp.p))
    if estimator == 'prf':
        projected = inp.scale.T @ inp.o
        return float(torch.exp(inp.mean @ inp.o + 0.5 * (projected @ projected)
                               - inp.q @ inp.q - inp.k @ inp.k))
    raise ConfigurationError(f"Estimador desconhecido: {estimator}")


def _estimates(estimator: str, inp: MseInputs, noise: torch.Tensor) -> torch.Tensor:
    """Estimativas de m amostras para cada tentativa; noise (trials, m, d)"""
    if estimator == 'rks':
        # ω = Sη + μ e χ = Sη − μ compartilham η
        shared = noise @ inp.scale.T @ inp.p
        shift = inp.mean @ inp.p
        terms = torch.cos(shared + shift) + torch.cos(shared - shift)
    else:
        omega = noise @ inp.scale.T + inp.mean
        terms = torch.exp(omega @ inp.o - inp.q @ inp.q - inp.k @ inp.k)
    return terms.mean(dim=-1)


def mc_mse(estimator: str, inp: MseInputs, trials: int, seed: int = 0,
           chunk: int = 100_000) -> Tuple[float, float]:
    """
    MSE de Monte Carlo do estimador de m amostras em torno do kernel exato

    Args:
        estimator: 'rks' (par simétrico) ou 'prf'
        inp: Entradas
        trials: Número de tentativas (≥ 10⁴)
        seed: Semente raiz; cada bloco usa uma semente derivada
        chunk: Tentativas por bloco

    Returns:
        (MSE, erro padrão do MSE)
    """
    if trials < MIN_TRIALS:
        raise ConfigurationError(f"mc_mse exige ao menos {MIN_TRIALS} tentativas, recebido {trials}")
    reference = kernel_reference(estimator, inp)
    d = inp.q.shape[-1]

    total = 0.0
    total_sq = 0.0
    done = 0
    index = 0
    while done < trials:
        size = min(chunk, trials - done)
        generator = make_generator(seed, 'mc_mse', estimator, index)
        noise = torch.randn(size, inp.m, d, generator=generator, dtype=DTYPE)
        errors = (_estimates(estimator, inp, noise) - reference) ** 2
        total += float(errors.sum())
        total_sq += float((errors ** 2).sum())
        done += size
        index += 1

    mse = total / trials
    variance = max(total_sq / trials - mse ** 2, 0.0)
    stderr = math.sqrt(variance / trials)
    logger.debug(f"MC MSE ({estimator}, m={inp.m}, {trials} tentativas): {mse:.6g} ± {stderr:.2g}")
    return mse, stderr


def covariance_eigenvalues(scale: torch.Tensor) -> List[float]:
    """
    Autovalores de S·Sᵀ em ordem decrescente

    Args:
        scale: Matriz quadrada S

    Returns:
        Lista de autovalores (reais, não negativos a menos de arredondamento)
    """
    if scale.dim() != 2 or scale.shape[0] != scale.shape[1]:
        raise DimensionError(f"S deve ser quadrada, recebido {tuple(scale.shape)}")
    scale = scale.detach().to(DTYPE)
    values = torch.linalg.eigvalsh(scale @ scale.T)
    return sorted(values.tolist(), reverse=True)


def eigenvalue_report(model: torch.nn.Module) -> List[Dict[str, Any]]:
    """
    Autovalores das covariâncias aprendidas de todos os samplers GMM

    Args:
        model: Encoder treinado

    Returns:
        Uma entrada por (camada, cabeça, componente)
    """
    report = []
    for name, module in model.named_modules():
        if not isinstance(module, GmmSampler):
            continue
        # no modo simétrico as duas componentes compartilham a mesma escala
        scales = module.scales.detach()
        for head in range(scales.shape[0]):
            for component in range(scales.shape[1]):
                values = covariance_eigenvalues(scales[head, component])
                report.append({
                    'sampler': name,
                    'head': head,
                    'component': component,
                    'eigenvalues': values,
                    'max': max(values),
                    'mean': sum(values) / len(values),
                })

    if not report:
        logger.warning("Nenhum sampler GMM no modelo; relatório de autovalores vazio")
    return report
