"""
Checkpoint Format
=================
Formato binário versionado de checkpoints

Layout (little-endian)::

    MAGIC (8 bytes) | versão u32 | quantidade u32
    para cada array: len(nome) u32 | nome utf-8 | ndim u32 | dims u64... | dados float64
    SHA-256 (32 bytes) de tudo que vem antes

O checksum é verificado antes da versão: arquivo truncado ou corrompido é
sempre ``ChecksumError``.
"""

import hashlib
import struct
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch
import torch.nn as nn

from app.core.config import settings
from app.core.errors import CheckpointError, ChecksumError, VersionError
from app.core.logging import get_logger
from app.utils.file_utils import FileUtils

logger = get_logger(__name__)

MAGIC = b'KLABCKPT'
DIGEST_SIZE = 32

_MODEL = 'model/'
_OPTIM = 'optim/'
_RNG = 'rng/'
_STEP = 'meta/step'


class CheckpointCodec:
    """Codificação de um dicionário nome → array float64"""

    @staticmethod
    def encode(arrays: Dict[str, np.ndarray], version: int) -> bytes:
        """
        Serializa arrays nomeados

        Args:
            arrays: Nome → array (convertido para float64)
            version: Versão gravada no cabeçalho

        Returns:
            Bytes do arquivo, com checksum final
        """
        parts = [MAGIC, struct.pack('<II', version, len(arrays))]
        for name, array in arrays.items():
            data = np.asarray(array, dtype='<f8')
            encoded = name.encode('utf-8')
            parts.append(struct.pack('<I', len(encoded)))
            parts.append(encoded)
            parts.append(struct.pack('<I', data.ndim))
            parts.append(struct.pack(f'<{data.ndim}Q', *data.shape))
            parts.append(data.tobytes(order='C'))
        payload = b''.join(parts)
        return payload + hashlib.sha256(payload).digest()

    @staticmethod
    def decode(blob: bytes, expected_version: int) -> Dict[str, np.ndarray]:
        """
        Lê arrays nomeados, verificando checksum, magic e versão

        Args:
            blob: Conteúdo do arquivo
            expected_version: Versão suportada

        Returns:
            Nome → array float64
        """
        header = len(MAGIC) + 8
        if len(blob) < header + DIGEST_SIZE:
            raise ChecksumError(f"Checkpoint truncado ({len(blob)} bytes)")
        payload, digest = blob[:-DIGEST_SIZE], blob[-DIGEST_SIZE:]
        if hashlib.sha256(payload).digest() != digest:
            raise ChecksumError("Checksum do checkpoint não confere (arquivo truncado ou corrompido)")
        if payload[:len(MAGIC)] != MAGIC:
            raise CheckpointError("Arquivo não é um checkpoint do laboratório")

        version, count = struct.unpack_from('<II', payload, len(MAGIC))
        if version != expected_version:
            raise VersionError(version, expected_version)

        arrays: Dict[str, np.ndarray] = {}
        offset = header
        try:
            for _ in range(count):
                (name_len,) = struct.unpack_from('<I', payload, offset)
                offset += 4
                name = payload[offset:offset + name_len].decode('utf-8')
                offset += name_len
                (ndim,) = struct.unpack_from('<I', payload, offset)
                offset += 4
                shape = struct.unpack_from(f'<{ndim}Q', payload, offset)
                offset += 8 * ndim
                size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
                data = np.frombuffer(payload, dtype='<f8', count=size, offset=offset)
                offset += 8 * size
                arrays[name] = data.reshape(shape).astype(np.float64)
        except (struct.error, ValueError, UnicodeDecodeError) as e:
            raise ChecksumError(f"Checkpoint malformado: {e}") from e

        if offset != len(payload):
            raise ChecksumError(f"Checkpoint com {len(payload) - offset} bytes excedentes")
        return arrays


def _to_array(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().to(torch.float64).numpy()


def _rng_to_array(state: torch.Tensor) -> np.ndarray:
    return state.numpy().astype(np.float64)


def _array_to_rng(array: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(array.astype(np.uint8))


def save_checkpoint(path: Path, model: nn.Module, optimizer: Optional[torch.optim.Optimizer] = None,
                    step: int = 0, generators: Optional[Dict[str, torch.Generator]] = None) -> Path:
    """
    Grava parâmetros, buffers, momentos do otimizador, estados de RNG e o passo

    Args:
        path: Destino
        model: Modelo (parâmetros e buffers via state_dict)
        optimizer: AdamW (momentos e contagem de passos)
        step: Passo de treino
        generators: Geradores adicionais (ex: ordem dos lotes)

    Returns:
        Caminho gravado
    """
    path = Path(path)
    arrays: Dict[str, np.ndarray] = {}

    for name, tensor in model.state_dict().items():
        arrays[_MODEL + name] = _to_array(tensor)

    if optimizer is not None:
        names = {id(param): name for name, param in model.named_parameters()}
        for group in optimizer.param_groups:
            for param in group['params']:
                state = optimizer.state.get(param)
                if not state:
                    continue
                name = names[id(param)]
                for key in ('exp_avg', 'exp_avg_sq', 'step'):
                    arrays[f"{_OPTIM}{name}/{key}"] = _to_array(torch.as_tensor(state[key]))

    arrays[_RNG + 'torch'] = _rng_to_array(torch.get_rng_state())
    for name, module in model.named_modules():
        rng = getattr(module, 'rng', None)
        if isinstance(rng, torch.Generator):
            arrays[f"{_RNG}module/{name}"] = _rng_to_array(rng.get_state())
    for name, generator in (generators or {}).items():
        arrays[f"{_RNG}extra/{name}"] = _rng_to_array(generator.get_state())

    arrays[_STEP] = np.array(float(step))

    FileUtils.ensure_directory(path.parent)
    tmp = path.with_suffix(path.suffix + '.tmp')
    tmp.write_bytes(CheckpointCodec.encode(arrays, settings.CHECKPOINT_VERSION))
    tmp.replace(path)
    logger.info(f"💾 Checkpoint salvo: {path} (passo {step}, {len(arrays)} arrays, "
                f"{FileUtils.get_file_size_mb(path):.2f} MB)")
    return path


def read_checkpoint(path: Path) -> Dict[str, np.ndarray]:
    """Lê e valida os arrays de um checkpoint"""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint não encontrado: {path}")
    return CheckpointCodec.decode(path.read_bytes(), settings.CHECKPOINT_VERSION)


def load_checkpoint(path: Path, model: nn.Module, optimizer: Optional[torch.optim.Optimizer] = None,
                    generators: Optional[Dict[str, torch.Generator]] = None,
                    restore_rng: bool = True) -> int:
    """
    Restaura um checkpoint gravado por ``save_checkpoint``

    Args:
        path: Arquivo
        model: Modelo com a mesma arquitetura
        optimizer: AdamW a restaurar (opcional)
        generators: Geradores adicionais a restaurar
        restore_rng: Restaura também o RNG global do torch

    Returns:
        Passo de treino gravado
    """
    arrays = read_checkpoint(path)

    state = model.state_dict()
    expected = {_MODEL + name for name in state}
    found = {name for name in arrays if name.startswith(_MODEL)}
    if expected != found:
        missing = sorted(expected - found)[:3]
        unexpected = sorted(found - expected)[:3]
        raise CheckpointError(
            f"Checkpoint incompatível com o modelo (faltando: {missing}, inesperados: {unexpected})"
        )

    with torch.no_grad():
        for name, tensor in state.items():
            value = torch.from_numpy(arrays[_MODEL + name])
            if tuple(value.shape) != tuple(tensor.shape):
                raise CheckpointError(f"Formato de '{name}' difere: {tuple(value.shape)} vs {tuple(tensor.shape)}")
            tensor.copy_(value.to(tensor.dtype))

    if optimizer is not None:
        params = dict(model.named_parameters())
        for name, param in params.items():
            key = f"{_OPTIM}{name}/"
            if key + 'step' not in arrays:
                continue
            optimizer.state[param] = {
                'step': torch.tensor(float(arrays[key + 'step'])),
                'exp_avg': torch.from_numpy(arrays[key + 'exp_avg']).to(param.dtype),
                'exp_avg_sq': torch.from_numpy(arrays[key + 'exp_avg_sq']).to(param.dtype),
            }

    if restore_rng:
        torch.set_rng_state(_array_to_rng(arrays[_RNG + 'torch']))
    for name, module in model.named_modules():
        rng = getattr(module, 'rng', None)
        key = f"{_RNG}module/{name}"
        if isinstance(rng, torch.Generator) and key in arrays:
            rng.set_state(_array_to_rng(arrays[key]))
    for name, generator in (generators or {}).items():
        key = f"{_RNG}extra/{name}"
        if key in arrays:
            generator.set_state(_array_to_rng(arrays[key]))

    step = int(arrays[_STEP])
    logger.info(f"Checkpoint carregado: {path} (passo {step})")
    return step
