"""
Core Configuration Module
=========================
Gerencia as configurações do ambiente (.env) e a leitura dos arquivos de
configuração de experimentos
"""

import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv, dotenv_values

from app import __version__
from app.core.errors import ConfigurationError

# Carregar variáveis de ambiente
load_dotenv()


class Settings:
    """Configurações centralizadas do laboratório"""

    # Diretórios
    BASE_DIR: Path = Path(__file__).parent.parent.parent
    RESULTS_DIR: Path = BASE_DIR / os.getenv('RESULTS_DIR', 'results')
    CHECKPOINT_DIR: Path = BASE_DIR / os.getenv('CHECKPOINT_DIR', 'checkpoints')
    LOG_DIR: Path = BASE_DIR / os.getenv('LOG_DIR', 'logs')

    # Identificação
    LAB_TITLE: str = "Spectral Kernel Attention Lab"
    LAB_VERSION: str = __version__
    CHECKPOINT_VERSION: int = 1

    # Logging
    LOG_LEVEL: str = os.getenv('LOG_LEVEL', 'INFO')
    LOG_TO_FILE: bool = os.getenv('LOG_TO_FILE', 'false').lower() == 'true'

    # Execução
    TORCH_THREADS: int = int(os.getenv('TORCH_THREADS', '1'))
    DEFAULT_SEED: int = 0

    @classmethod
    def seed_override(cls) -> Optional[int]:
        """
        Retorna a semente definida em KLAB_SEED (lida no momento da chamada)

        Returns:
            Semente ou None se a variável não estiver definida
        """
        raw = os.getenv('KLAB_SEED')
        if raw is None or raw.strip() == '':
            return None
        try:
            return int(raw)
        except ValueError:
            raise ConfigurationError(f"KLAB_SEED inválida: {raw!r}")

    @classmethod
    def validate(cls) -> list:
        """
        Valida as configurações

        Returns:
            list: Lista de erros encontrados
        """
        errors = []

        if cls.LOG_LEVEL.upper() not in {'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'}:
            errors.append(f"LOG_LEVEL inválido: {cls.LOG_LEVEL}")

        if cls.TORCH_THREADS < 1:
            errors.append(f"TORCH_THREADS inválido: {cls.TORCH_THREADS}")

        try:
            cls.seed_override()
        except ConfigurationError as e:
            errors.append(str(e))

        return errors


def read_config_file(path: Path) -> Dict[str, Any]:
    """
    Lê um arquivo de configuração no formato chave=valor com chaves pontuadas

    As chaves são aninhadas pelos pontos: ``sampler.kind=gmm`` vira
    ``{'sampler': {'kind': 'gmm'}}``.

    Args:
        path: Caminho do arquivo

    Returns:
        Dicionário aninhado com os valores (strings)
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Arquivo de configuração não encontrado: {path}")

    nested: Dict[str, Any] = {}
    for key, value in dotenv_values(path).items():
        parts = key.split('.')
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"Chave '{key}' conflita com valor escalar '{part}'")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigurationError(f"Chave '{key}' conflita com uma seção")
        node[parts[-1]] = '' if value is None else value

    return nested


# Instância global de configurações
settings = Settings()
