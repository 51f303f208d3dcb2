"""
Command Line Module
===================
Agregador dos subcomandos do laboratório e mapeamento de erros para códigos
de saída
"""

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import torch

from app import __version__
from app.core.config import settings
from app.core.errors import (
    EXIT_ERROR,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    ConfigurationError,
    LabError,
    ValidationFailure,
)
from app.core.logging import get_logger
from app.schemas.config import LabConfig, parse_variant, resolve_seed
from app.schemas.records import CheckResult
from app.utils.results import ResultsWriter

logger = get_logger(__name__)


@dataclass
class RunContext:
    """Configuração resolvida de uma invocação"""
    command: str
    lab: LabConfig
    seed: int
    checkpoint: Optional[Path] = None

    @property
    def variants(self) -> List[str]:
        return self.lab.resolved_variants()


Handler = Callable[[RunContext, ResultsWriter], Optional[List[CheckResult]]]


class LabArgumentParser(argparse.ArgumentParser):
    """ArgumentParser que sai com 64 em erro de uso"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: erro: {message}\n")


def int_list(value: str) -> List[int]:
    """Lista de inteiros positivos separados por vírgula (ex: 256,512)"""
    try:
        items = [int(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"lista de inteiros inválida: {value!r}")
    if not items or any(item < 1 for item in items):
        raise argparse.ArgumentTypeError(f"comprimentos devem ser inteiros positivos: {value!r}")
    return items


def variant_list(value: str) -> List[str]:
    names = [item.strip().lower() for item in value.split(',') if item.strip()]
    try:
        for name in names:
            parse_variant(name)
    except LabError as e:
        raise argparse.ArgumentTypeError(str(e))
    return names


def build_parser() -> LabArgumentParser:
    """Monta o parser com todos os subcomandos"""
    from app.cli import bench, kernel, training

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, type=Path, help="Arquivo de configuração chave=valor")
    common.add_argument('--out', default='-', help="Arquivo de resultados (- = stdout)")
    common.add_argument('--seed', type=int, default=None, help="Semente (sobrepõe KLAB_SEED e o arquivo)")
    common.add_argument('--variants', type=variant_list, default=None, help="Variantes separadas por vírgula")
    common.add_argument('--lengths', type=int_list, default=None, help="Comprimentos do benchmark (ex: 256,512)")
    common.add_argument('--checkpoint', type=Path, default=None, help="Checkpoint a analisar")

    parser = LabArgumentParser(prog='klab', description=settings.LAB_TITLE)
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest='command', required=True, parser_class=LabArgumentParser)

    for module in (kernel, training, bench):
        module.register(subparsers, common)
    return parser


def resolve_context(args: argparse.Namespace) -> RunContext:
    """Lê a configuração e aplica as sobreposições da linha de comando"""
    lab = LabConfig.load(args.config)
    seed = resolve_seed(lab.seed, args.seed)
    update = {'seed': seed}
    if args.variants:
        update['variants'] = args.variants
    if args.lengths:
        update['bench'] = lab.bench.model_copy(update={'lengths': args.lengths})
    lab = lab.model_copy(update=update)
    return RunContext(command=args.command, lab=lab, seed=seed, checkpoint=args.checkpoint)


def cli_dispatch(argv: Sequence[str]) -> int:
    """
    Executa um subcomando

    Args:
        argv: Argumentos (sem o nome do programa)

    Returns:
        0 sucesso, 1 erro, 2 verificação de aceitação falhou, 64 uso incorreto
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    handler: Handler = args.handler
    try:
        problems = settings.validate()
        if problems:
            raise ConfigurationError("; ".join(problems))
        torch.set_num_threads(settings.TORCH_THREADS)
        context = resolve_context(args)
        logger.info(f"🚀 {args.command} (semente {context.seed}, variantes {', '.join(context.variants)})")

        with ResultsWriter(args.out, context.seed, context.lab.config_hash()) as writer:
            checks = handler(context, writer) or []

        failed = [check.name for check in checks if not check.passed]
        if failed:
            raise ValidationFailure(f"Verificações não atendidas: {', '.join(failed)}")

    except ValidationFailure as e:
        logger.error(f"❌ {e}")
        return EXIT_VALIDATION
    except (LabError, OSError) as e:
        logger.error(f"❌ {args.command} falhou: {e}")
        return EXIT_ERROR
    except Exception as e:
        logger.exception(f"❌ Erro inesperado em {args.command}: {e}")
        return EXIT_ERROR

    logger.info(f"✅ {args.command} concluído")
    return EXIT_OK


__all__ = ['cli_dispatch', 'build_parser', 'RunContext', 'EXIT_OK', 'EXIT_ERROR', 'EXIT_VALIDATION', 'EXIT_USAGE']
