"""
Fixtures compartilhadas
=======================
Configurações pequenas do laboratório e geradores semeados
"""

from pathlib import Path
from typing import Callable, Dict

import pytest
import torch

from app.core.autodiff import DTYPE
from app.schemas.config import LabConfig

TINY: Dict[str, Dict[str, object]] = {
    'model': {'layers': 1, 'd_model': 16, 'd_ff': 16, 'hidden': 8, 'dropout': 0.0},
    'attention': {'heads': 2, 'd_query': 4, 'd_value': 8},
    'featmap': {'samples': 8},
    'generator': {'hidden_layers': 2},
    'data': {'length': 8, 'size': 200, 'p': 0.5},
    'train': {'lr': 0.02, 'batch_size': 32, 'max_steps': 20, 'eval_every': 10, 'weight_decay': 0.0},
}


def tiny_mapping(**sections: Dict[str, object]) -> Dict[str, Dict[str, object]]:
    """Configuração pequena com seções sobrepostas"""
    merged = {name: dict(values) for name, values in TINY.items()}
    for name, values in sections.items():
        merged.setdefault(name, {}).update(values)
    return merged


@pytest.fixture
def tiny_lab() -> LabConfig:
    return LabConfig.from_mapping(tiny_mapping())


@pytest.fixture
def make_lab() -> Callable[..., LabConfig]:
    def build(**sections: Dict[str, object]) -> LabConfig:
        return LabConfig.from_mapping(tiny_mapping(**sections))
    return build


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[..., Path]:
    """Grava a configuração pequena, com seções sobrepostas, em chave=valor"""
    def write(name: str = 'lab.conf', seed: int = 7, **sections: Dict[str, object]) -> Path:
        lines = ['# configuração de teste', f'seed={seed}']
        for section, values in tiny_mapping(**sections).items():
            for key, value in values.items():
                if isinstance(value, (list, tuple)):
                    value = ','.join(str(item) for item in value)
                lines.append(f'{section}.{key}={value}')
        path = tmp_path / name
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        return path
    return write


@pytest.fixture
def generator() -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(1234)
    return g


@pytest.fixture
def randn(generator: torch.Generator) -> Callable[..., torch.Tensor]:
    def draw(*shape: int, scale: float = 1.0) -> torch.Tensor:
        return torch.randn(*shape, generator=generator, dtype=DTYPE) * scale
    return draw
