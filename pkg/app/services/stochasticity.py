"""
Stochasticity Metrics
=====================
Métricas de variabilidade de saídas escalares repetidas (pré-sigmoide):
RSD, inconsistência de predição (PI), acurácia por votação (VA) e AGV
"""

import math
from typing import Tuple

import torch

from app.core.errors import DimensionError
from app.core.logging import get_logger
from app.schemas.records import VarianceReport

logger = get_logger(__name__)


def relative_std(outputs: torch.Tensor) -> Tuple[float, bool]:
    """
    Desvio padrão populacional dividido por |média|

    Args:
        outputs: Saídas de um exemplo em várias execuções (runs,)

    Returns:
        (RSD, flag) com RSD = +inf e flag True se a média é exatamente zero
    """
    mean = outputs.mean()
    if float(mean) == 0.0:
        return math.inf, True
    # desvio invariante a translação: repetições idênticas dão exatamente 0
    std = torch.std(outputs - outputs[0], correction=0)
    return float(std / mean.abs()), False


def prediction_inconsistency(outputs: torch.Tensor) -> int:
    """PI = min(x, runs − x), x = número de saídas positivas"""
    positives = int((outputs > 0).sum())
    return min(positives, outputs.numel() - positives)


def majority_vote(outputs: torch.Tensor) -> bool:
    """Predição positiva por maioria; empate decidido pelo sinal da média"""
    positives = int((outputs > 0).sum())
    negatives = outputs.numel() - positives
    if positives != negatives:
        return positives > negatives
    return float(outputs.mean()) >= 0


def stochasticity_metrics(outputs: torch.Tensor, labels: torch.Tensor,
                          keep_outputs: bool = True) -> VarianceReport:
    """
    Métricas sobre um conjunto de avaliação

    Args:
        outputs: Saídas escalares (exemplos, runs)
        labels: Rótulos binários (exemplos,), True = positivo
        keep_outputs: Inclui as saídas brutas no relatório

    Returns:
        VarianceReport
    """
    if outputs.dim() != 2 or labels.shape != outputs.shape[:1]:
        raise DimensionError(
            f"Esperado outputs (exemplos, runs) e labels (exemplos,), recebido "
            f"{tuple(outputs.shape)} e {tuple(labels.shape)}"
        )
    labels = labels.bool()
    runs = outputs.shape[1]

    rsd, flags, pi, votes = [], [], [], []
    for row in outputs:
        value, infinite = relative_std(row)
        rsd.append(value)
        flags.append(infinite)
        pi.append(prediction_inconsistency(row))
        votes.append(majority_vote(row))

    per_run_correct = (outputs > 0) == labels.unsqueeze(1)
    accuracy = float(per_run_correct.double().mean())
    va = float((torch.tensor(votes) == labels).double().mean())
    if accuracy > 0:
        agv = va / accuracy
    else:
        # sem acertos em nenhuma execução a votação também erra tudo
        agv = 1.0

    if any(flags):
        logger.warning(f"{sum(flags)} exemplo(s) com média exatamente zero (RSD = +inf)")

    return VarianceReport(
        runs=runs,
        rsd=rsd,
        rsd_infinite=flags,
        pi=pi,
        va=va,
        accuracy=accuracy,
        agv=agv,
        outputs=outputs.tolist() if keep_outputs else [],
    )
