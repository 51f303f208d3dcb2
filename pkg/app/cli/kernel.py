"""
Kernel Commands
===============
Subcomandos kernel-check, verify-mse e eigvals
"""

from typing import List

from app.cli import RunContext
from app.cli.training import load_trained_model
from app.core.logging import get_logger
from app.schemas.config import parse_variant
from app.schemas.records import CheckResult
from app.services.analysis import eigenvalue_report
from app.services.verification import run_kernel_checks, verify_mse
from app.utils.results import ResultsWriter

logger = get_logger(__name__)


def kernel_check(context: RunContext, writer: ResultsWriter) -> List[CheckResult]:
    """Equivalência linear/quadrática, aproximação do kernel, auto-similaridade e FastFood"""
    checks = run_kernel_checks(context.lab, context.seed)
    writer.write_checks(checks)
    return checks


def verify_mse_command(context: RunContext, writer: ResultsWriter) -> List[CheckResult]:
    """Formas fechadas do MSE contra Monte Carlo"""
    section = context.lab.mse
    logger.info(f"🔍 MSE: {section.sets} conjuntos, m={section.m}, {section.trials} tentativas")
    checks = verify_mse(section, context.seed)
    writer.write_checks(checks)
    return checks


def eigvals(context: RunContext, writer: ResultsWriter) -> None:
    """Autovalores das covariâncias aprendidas (variantes GMM)"""
    variants = [v for v in context.variants if parse_variant(v)[0] == 'gmm']
    if not variants:
        logger.warning("Nenhuma variante GMM selecionada; nada a reportar")
    explicit = context.checkpoint or context.lab.eigvals.checkpoint

    for variant in variants:
        model = load_trained_model(context, variant, explicit, default_tag='last')
        for entry in eigenvalue_report(model):
            extra = {key: entry[key] for key in ('sampler', 'head', 'component', 'eigenvalues')}
            writer.write(variant, 'eigenvalue_max', entry['max'], **extra)
            writer.write(variant, 'eigenvalue_mean', entry['mean'], **extra)


def register(subparsers, common) -> None:
    """Registra os subcomandos deste módulo"""
    parser = subparsers.add_parser('kernel-check', parents=[common], help="Verificações de kernel e atenção")
    parser.set_defaults(handler=kernel_check)

    parser = subparsers.add_parser('verify-mse', parents=[common], help="MSE fechado contra Monte Carlo")
    parser.set_defaults(handler=verify_mse_command)

    parser = subparsers.add_parser('eigvals', parents=[common], help="Autovalores de S·Sᵀ de um checkpoint")
    parser.set_defaults(handler=eigvals)
