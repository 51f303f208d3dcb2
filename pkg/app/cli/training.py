"""
Training Commands
=================
Subcomandos train-synthetic, grad-stats e stochasticity
"""

from pathlib import Path
from typing import Dict, List, Optional

from app.cli import RunContext
from app.core.config import settings
from app.core.errors import ConfigurationError
from app.core.logging import get_logger
from app.schemas.records import CheckResult
from app.services.encoder import SpectralEncoder
from app.services.synthetic import SyntheticDataset, generate_sparsity_dataset
from app.services.trainer import gradient_statistics, run_sparsity_experiment, stochasticity_report
from app.utils.checkpoint import load_checkpoint
from app.utils.file_utils import FileUtils
from app.utils.results import ResultsWriter

logger = get_logger(__name__)

GRADSTATS_TAG = 'acc40'


def load_trained_model(context: RunContext, variant: str, explicit: Optional[Path],
                       default_tag: str) -> SpectralEncoder:
    """
    Monta o encoder da variante e carrega o checkpoint

    Args:
        context: Invocação corrente
        variant: Variante
        explicit: Checkpoint dado por --checkpoint ou pela configuração
        default_tag: Rótulo usado quando não há caminho explícito

    Returns:
        Encoder com os parâmetros do checkpoint
    """
    if explicit is not None and len(context.variants) > 1:
        raise ConfigurationError("Um checkpoint explícito exige exatamente uma variante")
    path = Path(explicit) if explicit is not None else FileUtils.checkpoint_path(
        settings.CHECKPOINT_DIR, variant, default_tag
    )
    model = SpectralEncoder(context.lab.encoder_config(variant), seed=context.seed)
    step = load_checkpoint(path, model, restore_rng=False)
    logger.info(f"Checkpoint {path} carregado ({variant}, passo {step})")
    return model


def validation_examples(context: RunContext, count: int) -> SyntheticDataset:
    """Primeiros ``count`` exemplos da validação do conjunto da semente corrente"""
    dataset = generate_sparsity_dataset(context.lab.data, context.seed)
    _, validation = dataset.split(context.lab.data.split, context.seed)
    return validation.subset(slice(0, count))


def train_synthetic(context: RunContext, writer: ResultsWriter) -> List[CheckResult]:
    """Treina cada variante na tarefa de esparsidade"""
    lab = context.lab
    checks = []
    for variant in context.variants:
        result = run_sparsity_experiment(variant, lab, context.seed, settings.CHECKPOINT_DIR)
        length = lab.data.length

        for step, loss, accuracy in zip(result.steps, result.losses, result.accuracies):
            writer.write(variant, 'val_accuracy', accuracy, L=length, step=step, loss=loss, p=lab.data.p)
        for tag, accuracy in result.checkpoint_accuracies.items():
            writer.write(variant, 'checkpoint_accuracy', accuracy, L=length, tag=tag,
                         path=result.checkpoints.get(tag))
        writer.write(variant, 'final_accuracy', result.final_accuracy, L=length,
                     steps=result.steps[-1] if result.steps else 0, p=lab.data.p)

        checks.append(CheckResult(
            name=f"train.target_accuracy.{variant}",
            passed=result.reached_target,
            value=result.final_accuracy,
            tolerance=lab.train.target_accuracy,
        ))
    return checks


def grad_stats(context: RunContext, writer: ResultsWriter) -> None:
    """Estatísticas dos gradientes do classificador com Ω novo a cada repetição"""
    section = context.lab.gradstats
    explicit = context.checkpoint or section.checkpoint
    data = validation_examples(context, section.datapoints)
    stds: Dict[str, float] = {}

    for variant in context.variants:
        model = load_trained_model(context, variant, explicit, GRADSTATS_TAG)
        stats = gradient_statistics(model, data.inputs(), data.targets(), section.repetitions)
        extra = dict(neurons=stats.neurons, datapoints=stats.datapoints, repetitions=stats.repetitions)
        writer.write(variant, 'grad_abs_mean', stats.abs_mean, L=data.length, **extra)
        writer.write(variant, 'grad_std', stats.std, L=data.length, **extra)
        stds[variant] = stats.std

    if 'gmm-prf' in stds and 'gmm-rks' in stds and stds['gmm-rks'] > 0:
        ratio = stds['gmm-prf'] / stds['gmm-rks']
        writer.write('gmm-prf', 'grad_std_ratio_vs_gmm-rks', ratio, L=data.length)
        logger.info(f"Razão std GMM-PRF/GMM-RKS: {ratio:.3f} ({'>' if ratio > 1 else '≤'} 1)")


def stochasticity(context: RunContext, writer: ResultsWriter) -> None:
    """RSD, PI, VA e AGV da leitura binária de um encoder treinado"""
    section = context.lab.stochasticity
    explicit = context.checkpoint or section.checkpoint
    data = validation_examples(context, section.examples)

    for variant in context.variants:
        model = load_trained_model(context, variant, explicit, 'last')
        report = stochasticity_report(model, data, section.runs)
        finite = [value for value, infinite in zip(report.rsd, report.rsd_infinite) if not infinite]
        rsd_mean = sum(finite) / len(finite) if finite else float('inf')

        writer.write(variant, 'rsd_mean', rsd_mean, L=data.length, runs=report.runs,
                     rsd=report.rsd, infinite=sum(report.rsd_infinite))
        writer.write(variant, 'pi_mean', sum(report.pi) / len(report.pi), L=data.length, pi=report.pi)
        writer.write(variant, 'accuracy', report.accuracy, L=data.length)
        writer.write(variant, 'va', report.va, L=data.length)
        writer.write(variant, 'agv', report.agv, L=data.length)


def register(subparsers, common) -> None:
    """Registra os subcomandos deste módulo"""
    parser = subparsers.add_parser('train-synthetic', parents=[common], help="Treino na tarefa de esparsidade")
    parser.set_defaults(handler=train_synthetic)

    parser = subparsers.add_parser('grad-stats', parents=[common], help="Estatísticas de gradiente do classificador")
    parser.set_defaults(handler=grad_stats)

    parser = subparsers.add_parser('stochasticity', parents=[common], help="Métricas de estocasticidade")
    parser.set_defaults(handler=stochasticity)
