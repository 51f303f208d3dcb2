"""
Errors Module
=============
Hierarquia de exceções do laboratório e mapeamento para códigos de saída
"""

from pathlib import Path
from typing import Optional


EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_USAGE = 64


class LabError(Exception):
    """Erro base do laboratório"""

    exit_code: int = EXIT_ERROR


class DimensionError(LabError):
    """Formatos de arrays incompatíveis"""


class ContractError(LabError):
    """Uso incorreto de uma API (ex: backward duas vezes)"""


class ConfigurationError(LabError):
    """Configuração de sampler ou experimento inválida"""


class NumericalError(LabError):
    """Valores não finitos ou divisão por zero"""


class DivergenceError(NumericalError):
    """Treinamento divergiu (loss ou gradiente não finito)"""

    def __init__(self, message: str, last_checkpoint: Optional[Path] = None):
        if last_checkpoint is not None:
            message = f"{message} (último checkpoint: {last_checkpoint})"
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class CheckpointError(LabError):
    """Falha ao ler ou escrever checkpoint"""


class ChecksumError(CheckpointError):
    """Checkpoint truncado ou corrompido"""


class VersionError(CheckpointError):
    """Versão do checkpoint diferente da suportada"""

    def __init__(self, found: int, expected: int):
        super().__init__(f"Versão de checkpoint {found} não suportada (esperada: {expected})")
        self.found = found
        self.expected = expected


class ValidationFailure(LabError):
    """Uma verificação de aceitação não passou"""

    exit_code = EXIT_VALIDATION
