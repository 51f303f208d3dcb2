"""
Results Writer
==============
Escrita dos registros de resultados, um JSON por linha (``-`` = stdout)
"""

import math
import sys
from pathlib import Path
from typing import IO, Any, Iterable, List, Optional

from app import __version__
from app.core.logging import get_logger
from app.schemas.config import VARIANTS
from app.schemas.records import CheckResult, ResultRecord
from app.utils.file_utils import FileUtils

logger = get_logger(__name__)


class ResultsWriter:
    """Grava registros com semente, hash da configuração e versão embutidos"""

    def __init__(self, out: str, seed: int, config_hash: str, version: str = __version__):
        self.out = out
        self.seed = seed
        self.config_hash = config_hash
        self.version = version
        self.records: List[ResultRecord] = []
        self._stream: Optional[IO[str]] = None

    def __enter__(self) -> 'ResultsWriter':
        if self.out == '-':
            self._stream = sys.stdout
        else:
            path = Path(self.out)
            FileUtils.ensure_directory(path.parent)
            self._stream = path.open('w', encoding='utf-8')
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._stream is not None and self._stream is not sys.stdout:
            self._stream.close()
            logger.info(f"Resultados gravados em {self.out} ({len(self.records)} registros)")
        elif self._stream is not None:
            self._stream.flush()
        self._stream = None

    def write(self, variant: str, metric: str, value: Optional[float],
              L: Optional[int] = None, **extra: Any) -> ResultRecord:
        """
        Grava um registro

        Args:
            variant: Variante (ex: 'gmm-rks')
            metric: Nome da métrica
            value: Valor (None para linhas de falha)
            L: Comprimento de sequência, se aplicável
            extra: Campos adicionais

        Returns:
            Registro gravado
        """
        if value is not None:
            value = float(value)
        record = ResultRecord(
            variant=variant,
            L=L,
            seed=self.seed,
            metric=metric,
            value=value,
            config_hash=self.config_hash,
            version=self.version,
            extra=extra,
        )
        if self._stream is None:
            raise RuntimeError("ResultsWriter usado fora do bloco with")
        self._stream.write(record.model_dump_json() + '\n')
        self.records.append(record)
        if value is not None and not math.isfinite(value):
            logger.warning(f"Métrica {metric} ({variant}) não finita: {value}")
        return record

    def write_checks(self, checks: Iterable[CheckResult], variant: str = 'all') -> None:
        """Grava verificações de aceitação; a variante vem do sufixo do nome quando houver"""
        for check in checks:
            suffix = check.name.rsplit('.', 1)[-1]
            self.write(
                variant=suffix if suffix in VARIANTS else variant,
                metric=check.name,
                value=check.value,
                passed=check.passed,
                tolerance=check.tolerance,
                **check.detail,
            )
