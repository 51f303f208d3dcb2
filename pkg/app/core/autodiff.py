"""
Autodiff Module
===============
Aritmética de arrays densos (float64) com diferenciação reversa

Os valores são tensores do PyTorch em float64 e os adjuntos vêm do autograd.
Este módulo acrescenta o contrato do laboratório por cima dele:

- ``Tape`` registra uma passada forward e permite exatamente uma varredura
  reversa (backward duas vezes sem novo forward é erro de contrato);
- as operações públicas (``matmul``, ``elementwise``, ``reduce``,
  ``softmax``) validam formatos, só aceitam broadcasting escalar-com-array e
  garantem valores finitos na saída;
- ``gradcheck`` compara gradientes com diferenças finitas centrais.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Union

import torch
import torch.nn.functional as F

from app.core.errors import ContractError, DimensionError, NumericalError
from app.core.logging import get_logger

logger = get_logger(__name__)

DTYPE = torch.float64
LEAKY_SLOPE = 0.01

# Um Node é um tensor: value = dados, gradient = .grad, parents = .grad_fn
Node = torch.Tensor
Scalar = Union[int, float, torch.Tensor]

_ACTIVE_TAPE: ContextVar[Optional["Tape"]] = ContextVar('active_tape', default=None)

UNARY_OPS = {'exp', 'cos', 'sin', 'tanh', 'leaky_relu', 'gelu', 'neg'}
BINARY_OPS = {'add', 'mul'}
REDUCE_OPS = {'sum', 'mean', 'max'}


def array(data, requires_grad: bool = False) -> Node:
    """
    Cria um array denso float64 (folha)

    Args:
        data: Dados (lista aninhada, numpy ou tensor)
        requires_grad: Se a folha é um parâmetro diferenciável

    Returns:
        Tensor float64
    """
    tensor = torch.as_tensor(data, dtype=DTYPE).clone()
    _ensure_finite('array', tensor)
    return tensor.requires_grad_(requires_grad)


class Tape:
    """Registro ordenado de uma passada forward com uma única varredura reversa"""

    def __init__(self):
        self._leaves: Dict[str, Node] = {}
        self._operations: List[str] = []
        self._consumed = False
        self._forward_count = 0

    def watch(self, name: str, tensor: Node) -> Node:
        """
        Registra uma folha (parâmetro ou entrada) cujo gradiente será retornado

        Args:
            name: Nome da folha
            tensor: Tensor folha

        Returns:
            O próprio tensor, agora com requires_grad
        """
        if tensor.grad_fn is not None:
            raise ContractError(f"'{name}' não é folha: foi produzido por {tensor.grad_fn.name()}")
        self._leaves[name] = tensor.requires_grad_(True)
        return tensor

    def watch_module(self, module: torch.nn.Module, prefix: str = '') -> None:
        """Registra todos os parâmetros treináveis de um módulo"""
        for name, param in module.named_parameters():
            if param.requires_grad:
                self._leaves[f"{prefix}{name}"] = param

    @property
    def leaves(self) -> Dict[str, Node]:
        return dict(self._leaves)

    @property
    def operations(self) -> List[str]:
        """Operações da última varredura, em ordem reversa de execução"""
        return list(self._operations)

    @contextmanager
    def forward(self) -> Iterator["Tape"]:
        """
        Abre uma nova passada forward

        Limpa os gradientes das folhas (não há acúmulo entre passadas) e
        rearma a varredura reversa.
        """
        for leaf in self._leaves.values():
            leaf.grad = None
        self._operations = []
        self._consumed = False
        self._forward_count += 1
        token = _ACTIVE_TAPE.set(self)
        try:
            yield self
        finally:
            _ACTIVE_TAPE.reset(token)

    def record(self, op: str) -> None:
        self._operations.append(op)

    def backward(self, loss: Node) -> Dict[str, Node]:
        """
        Executa a varredura reversa a partir de uma loss escalar

        Args:
            loss: Tensor escalar

        Returns:
            Gradientes de todas as folhas alcançáveis a partir da loss
        """
        if self._forward_count == 0:
            raise ContractError("backward chamado antes de qualquer forward")
        if self._consumed:
            raise ContractError("backward já executado nesta passada; rode um novo forward")
        if loss.dim() != 0:
            raise ContractError(f"backward exige loss escalar, recebido formato {tuple(loss.shape)}")
        if loss.grad_fn is None:
            raise ContractError("loss não depende de nenhuma folha registrada")
        if not torch.isfinite(loss):
            raise NumericalError(f"loss não finita: {loss.item()}")

        self._operations = _reverse_order(loss)
        logger.debug(f"Varredura reversa sobre {len(self._operations)} nós")
        loss.backward()
        self._consumed = True

        return {
            name: leaf.grad
            for name, leaf in self._leaves.items()
            if leaf.grad is not None
        }


def _reverse_order(loss: Node) -> List[str]:
    """Nós do grafo do autograd em ordem reversa de execução (cada um uma vez)"""
    order: List[str] = []
    visited = set()
    stack = [(loss.grad_fn, False)]
    post: List = []
    while stack:
        fn, expanded = stack.pop()
        if fn is None:
            continue
        if expanded:
            post.append(fn)
            continue
        if fn in visited:
            continue
        visited.add(fn)
        stack.append((fn, True))
        for child, _ in fn.next_functions:
            if child is not None and child not in visited:
                stack.append((child, False))
    # post está em pós-ordem (entradas antes das saídas); a varredura é o inverso
    for fn in reversed(post):
        order.append(fn.name())
    return order


def _ensure_finite(op: str, out: Node) -> None:
    if not torch.isfinite(out).all():
        raise NumericalError(f"{op} produziu valores não finitos")


def _finish(op: str, out: Node) -> Node:
    _ensure_finite(op, out)
    tape = _ACTIVE_TAPE.get()
    if tape is not None:
        tape.record(op)
    return out


def _is_scalar(x) -> bool:
    return not isinstance(x, torch.Tensor) or x.numel() == 1 and x.dim() <= 1


def _check_broadcast(op: str, a, b) -> None:
    if _is_scalar(a) or _is_scalar(b):
        return
    if a.shape != b.shape:
        raise DimensionError(
            f"{op}: formatos {tuple(a.shape)} e {tuple(b.shape)} não são compatíveis "
            f"(apenas escalar-com-array ou formatos iguais)"
        )


def matmul(a: Node, b: Node) -> Node:
    """
    Produto matricial (com dimensões de lote iguais, se houver)

    Args:
        a: Array (..., n, k)
        b: Array (..., k, m)

    Returns:
        Array (..., n, m)
    """
    if a.dim() < 2 or b.dim() < 2:
        raise DimensionError(f"matmul exige arrays com ao menos 2 dimensões: {tuple(a.shape)} x {tuple(b.shape)}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: extensões internas diferem ({a.shape[-1]} != {b.shape[-2]})")
    if a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: dimensões de lote diferem ({tuple(a.shape[:-2])} != {tuple(b.shape[:-2])})")
    return _finish('matmul', a @ b)


def elementwise(op: str, *args, factor: Optional[Scalar] = None) -> Node:
    """
    Aplica uma operação elemento a elemento

    Args:
        op: Uma de add, mul, exp, cos, sin, tanh, leaky_relu, gelu, neg, scale
        args: Operandos (dois para add/mul, um para as demais)
        factor: Fator escalar de ``scale``

    Returns:
        Array resultante
    """
    if op in BINARY_OPS:
        if len(args) != 2:
            raise ContractError(f"{op} exige 2 operandos, recebeu {len(args)}")
        a, b = args
        _check_broadcast(op, a, b)
        out = a + b if op == 'add' else a * b
    elif op in UNARY_OPS:
        if len(args) != 1:
            raise ContractError(f"{op} exige 1 operando, recebeu {len(args)}")
        (x,) = args
        if op == 'exp':
            out = torch.exp(x)
        elif op == 'cos':
            out = torch.cos(x)
        elif op == 'sin':
            out = torch.sin(x)
        elif op == 'tanh':
            out = torch.tanh(x)
        elif op == 'leaky_relu':
            out = F.leaky_relu(x, negative_slope=LEAKY_SLOPE)
        elif op == 'gelu':
            out = F.gelu(x)
        else:
            out = -x
    elif op == 'scale':
        if len(args) != 1 or factor is None:
            raise ContractError("scale exige 1 operando e um fator escalar")
        if not _is_scalar(factor):
            raise DimensionError(f"scale: fator deve ser escalar, recebido formato {tuple(factor.shape)}")
        out = args[0] * factor
    else:
        raise ContractError(f"Operação elemento a elemento desconhecida: {op}")

    return _finish(op, out)


def reduce(op: str, x: Node, axis: Optional[int] = None, keepdim: bool = False) -> Node:
    """
    Redução ao longo de um eixo (ou de todos)

    Args:
        op: sum, mean ou max
        x: Array de entrada
        axis: Eixo (None = todos)
        keepdim: Mantém o eixo reduzido com extensão 1

    Returns:
        Array reduzido
    """
    if op not in REDUCE_OPS:
        raise ContractError(f"Redução desconhecida: {op}")
    if axis is not None and not -x.dim() <= axis < x.dim():
        raise DimensionError(f"Eixo {axis} fora do intervalo para formato {tuple(x.shape)}")

    if op == 'sum':
        out = x.sum() if axis is None else x.sum(dim=axis, keepdim=keepdim)
    elif op == 'mean':
        out = x.mean() if axis is None else x.mean(dim=axis, keepdim=keepdim)
    else:
        out = x.max() if axis is None else x.max(dim=axis, keepdim=keepdim).values
    return _finish(op, out)


def softmax(x: Node, axis: int = -1) -> Node:
    """Softmax numericamente estável ao longo de um eixo"""
    if not -x.dim() <= axis < x.dim():
        raise DimensionError(f"Eixo {axis} fora do intervalo para formato {tuple(x.shape)}")
    return _finish('softmax', torch.softmax(x, dim=axis))


def gradcheck(
    fn: Callable[..., Node],
    *inputs: Node,
    step: float = 1e-5,
    rtol: float = 1e-3,
    atol: float = 1e-8,
) -> bool:
    """
    Compara gradientes reversos com diferenças finitas centrais (float64)

    Args:
        fn: Função dos tensores de entrada
        inputs: Entradas float64 com requires_grad
        step: Passo das diferenças finitas
        rtol: Erro relativo tolerado
        atol: Erro absoluto tolerado (piso para gradientes ~0)

    Returns:
        True se todos os gradientes concordam
    """
    for tensor in inputs:
        if tensor.dtype != DTYPE:
            raise ContractError(f"gradcheck exige float64, recebido {tensor.dtype}")
    return torch.autograd.gradcheck(
        fn, tuple(inputs), eps=step, atol=atol, rtol=rtol, raise_exception=False
    )


def parameters_as_inputs(module: torch.nn.Module, names: Sequence[str]) -> Dict[str, Node]:
    """
    Cópias-folha de parâmetros selecionados de um módulo, para ``gradcheck``
    via ``torch.func.functional_call``
    """
    params = dict(module.named_parameters())
    missing = [name for name in names if name not in params]
    if missing:
        raise ContractError(f"Parâmetros inexistentes: {missing}")
    return {name: params[name].detach().clone().requires_grad_(True) for name in names}
