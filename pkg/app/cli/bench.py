"""
Bench Command
=============
Subcomando bench: tempo e memória auxiliar por (variante, L)
"""

from typing import List

from app.cli import RunContext
from app.core.logging import get_logger
from app.schemas.records import CheckResult
from app.services.benchmark import check_scaling, monotone_in_length, run_scaling_bench
from app.utils.results import ResultsWriter

logger = get_logger(__name__)


def bench(context: RunContext, writer: ResultsWriter) -> List[CheckResult]:
    """Uma linha de resultado por (variante, L); critérios de escala só no log"""
    section = context.lab.bench
    results = run_scaling_bench(context.variants, section.lengths, section.trials,
                                lab=context.lab, seed=context.seed)

    for row in results:
        writer.write(
            row.variant, 'seconds_per_step', row.seconds_per_step, L=row.length,
            aux_bytes=row.aux_bytes, steps=row.steps, failed=row.failed,
            error=row.error, os_peak_kb=row.os_peak_kb,
        )

    for variant, monotone in monotone_in_length(results).items():
        if not monotone:
            logger.warning(f"Tempo de {variant} não é monótono em L (ruído de medição?)")

    if not section.check:
        return []
    return check_scaling(results, section)


def register(subparsers, common) -> None:
    """Registra o subcomando"""
    parser = subparsers.add_parser('bench', parents=[common], help="Benchmark de escala em L")
    parser.set_defaults(handler=bench)
