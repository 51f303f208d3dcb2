"""
Allocation Counter
==================
Contador instrumentado de buffers auxiliares das rotinas de atenção

Mede apenas o que cada rotina aloca além das entradas e da saída: matriz de
scores L×L, blocos de features φ(q) e φ(k) e acumuladores Σφ(k)vᵀ e Σφ(k).
A medida não depende do alocador nem do sistema operacional.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from typing import Dict, Iterator, Optional

import torch

_ACTIVE: ContextVar[Optional["AllocationCounter"]] = ContextVar('allocation_counter', default=None)


class AllocationCounter:
    """Bytes auxiliares vivos, pico e total por rótulo"""

    def __init__(self):
        self.current = 0
        self.peak = 0
        self.by_label: Dict[str, int] = {}

    def allocate(self, tensor: torch.Tensor, label: str) -> None:
        nbytes = tensor.numel() * tensor.element_size()
        self.current += nbytes
        self.peak = max(self.peak, self.current)
        self.by_label[label] = max(self.by_label.get(label, 0), nbytes)

    def release(self, tensor: torch.Tensor) -> None:
        self.current -= tensor.numel() * tensor.element_size()


@contextmanager
def track_allocations() -> Iterator[AllocationCounter]:
    """Ativa um contador para o bloco"""
    counter = AllocationCounter()
    token = _ACTIVE.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)


def record(tensor: torch.Tensor, label: str) -> torch.Tensor:
    counter = _ACTIVE.get()
    if counter is not None:
        counter.allocate(tensor, label)
    return tensor


def release(*tensors: torch.Tensor) -> None:
    counter = _ACTIVE.get()
    if counter is not None:
        for tensor in tensors:
            counter.release(tensor)
