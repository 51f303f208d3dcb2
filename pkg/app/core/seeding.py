"""
Seeding Utilities
=================
Toda a aleatoriedade do laboratório deriva de uma semente explícita
"""

import hashlib

import torch


def derive_seed(root: int, *labels) -> int:
    """
    Deriva uma semente determinística a partir da semente raiz e rótulos

    Args:
        root: Semente raiz
        labels: Rótulos que identificam o consumidor (ex: 'layer0', 'head1')

    Returns:
        Semente de 63 bits
    """
    key = ':'.join([str(int(root))] + [str(label) for label in labels])
    digest = hashlib.blake2b(key.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little') & ((1 << 63) - 1)


def make_generator(root: int, *labels) -> torch.Generator:
    """Cria um torch.Generator (CPU) semeado com a semente derivada"""
    generator = torch.Generator(device='cpu')
    generator.manual_seed(derive_seed(root, *labels))
    return generator
