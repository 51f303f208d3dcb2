"""
Spectral Encoder
================
Encoder transformer pequeno montado sobre atenção kernelizada: embedding
linear da entrada many-hot, posições (aprendíveis ou senoidais), blocos
pre-norm, pooling (posição 0 ou CLS) e classificador de 9 classes
"""

import math
from typing import Dict, Iterator, List, Tuple

import torch
import torch.nn as nn

from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError, DivergenceError
from app.core.logging import get_logger
from app.core.seeding import derive_seed
from app.schemas.config import EncoderConfig, TrainingConfig
from app.services.attention import AttentionDiagnostics, MultiHeadAttention
from app.services.spectral import SpectralSampler, maybe_resample

logger = get_logger(__name__)


def sinusoidal_positions(length: int, d_model: int) -> torch.Tensor:
    """Codificação posicional senoidal (length, d_model)"""
    position = torch.arange(length, dtype=DTYPE).unsqueeze(1)
    freq = torch.exp(torch.arange(0, d_model, 2, dtype=DTYPE) * (-math.log(10000.0) / d_model))
    table = torch.zeros(length, d_model, dtype=DTYPE)
    table[:, 0::2] = torch.sin(position * freq)
    table[:, 1::2] = torch.cos(position * freq[: d_model // 2])
    return table


class EncoderBlock(nn.Module):
    """Bloco residual pre-norm: x + Attn(LN(x)), depois x + FF(LN(x))"""

    def __init__(self, config: EncoderConfig, seed: int, label: str):
        super().__init__()
        self.attention_norm = nn.LayerNorm(config.d_model)
        self.attention = MultiHeadAttention(config.d_model, config.attention, seed=seed, label=label)
        self.feedforward_norm = nn.LayerNorm(config.d_model)
        self.feedforward = nn.Sequential(
            nn.Linear(config.d_model, config.d_ff),
            nn.GELU(),
            nn.Linear(config.d_ff, config.d_model),
        )
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.dropout(self.attention(self.attention_norm(x)))
        x = x + self.dropout(self.feedforward(self.feedforward_norm(x)))
        return x


class SpectralEncoder(nn.Module):
    """Encoder + classificador para a tarefa sintética"""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed

        # inicialização determinística sem alterar o RNG global
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(derive_seed(seed, 'init'))
            self._build(config, seed)
        self.to(DTYPE)

        logger.info(
            f"Encoder criado: {config.layers} camadas, d_model={config.d_model}, "
            f"atenção={self.variant}, parâmetros={self.parameter_count()}"
        )

    def _build(self, config: EncoderConfig, seed: int) -> None:
        d_model = config.d_model
        self.embedding = nn.Linear(config.input_dim, d_model)

        slots = config.max_len + (1 if config.pooling == 'cls' else 0)
        if config.positional == 'learnable':
            self.positions = nn.Parameter(torch.randn(slots, d_model) * 0.02)
        else:
            self.register_buffer('positions', sinusoidal_positions(slots, d_model))

        if config.pooling == 'cls':
            self.cls_token = nn.Parameter(torch.zeros(d_model))
        else:
            self.cls_token = None

        self.blocks = nn.ModuleList([
            EncoderBlock(config, seed=seed, label=f"layer{index}")
            for index in range(config.layers)
        ])
        self.norm = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(config.dropout)
        self.classifier_hidden = nn.Linear(d_model, config.hidden)
        self.classifier_out = nn.Linear(config.hidden, config.classes)

    @property
    def variant(self) -> str:
        attention = self.config.attention
        if attention.kind == 'softmax':
            return 'softmax'
        return f"{attention.sampler.kind}-{attention.featmap.kind}"

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def samplers(self) -> Iterator[Tuple[str, SpectralSampler]]:
        """Samplers espectrais de todas as camadas, com seus nomes"""
        for name, module in self.named_modules():
            if isinstance(module, SpectralSampler):
                yield name, module

    def resample(self, step: int) -> None:
        """Aplica a política de reamostragem a todos os samplers"""
        for _, sampler in self.samplers():
            maybe_resample(sampler, step)

    def redraw(self) -> None:
        """Força Ω novo em todos os samplers"""
        with torch.no_grad():
            for _, sampler in self.samplers():
                sampler.redraw()

    def diagnostics(self) -> AttentionDiagnostics:
        total = AttentionDiagnostics()
        for block in self.blocks:
            total.near_zero += block.attention.diagnostics.near_zero
            total.evaluated += block.attention.diagnostics.evaluated
        return total

    def reset_diagnostics(self) -> None:
        for block in self.blocks:
            block.attention.diagnostics.reset()

    def forward(self, inputs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            inputs: Entrada many-hot (B, L, input_dim)

        Returns:
            (representação agregada (B, d_model), logits (B, classes))
        """
        if inputs.dim() != 3 or inputs.shape[-1] != self.config.input_dim:
            raise DimensionError(
                f"Entrada deve ter formato (B, L, {self.config.input_dim}), recebido {tuple(inputs.shape)}"
            )
        batch, length, _ = inputs.shape
        if length > self.config.max_len:
            raise ConfigurationError(f"Sequência de comprimento {length} excede o máximo {self.config.max_len}")

        x = self.embedding(inputs.to(DTYPE))
        if self.cls_token is not None:
            x = torch.cat([self.cls_token.expand(batch, 1, -1), x], dim=1)
        x = self.dropout(x + self.positions[: x.shape[1]])

        for block in self.blocks:
            x = block(x)

        pooled = self.norm(x)[:, 0]
        hidden = torch.relu(self.classifier_hidden(pooled))
        return pooled, self.classifier_out(hidden)


def encoder_forward(model: SpectralEncoder, inputs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Passada forward: (representação agregada, logits)"""
    return model(inputs)


def build_optimizer(model: nn.Module, config: TrainingConfig) -> torch.optim.AdamW:
    """AdamW com decaimento desacoplado e taxa constante"""
    return torch.optim.AdamW(
        model.parameters(),
        lr=config.lr,
        betas=(config.beta1, config.beta2),
        eps=config.eps,
        weight_decay=config.weight_decay,
    )


def adamw_step(optimizer: torch.optim.Optimizer, params: Dict[str, torch.Tensor],
               grads: Dict[str, torch.Tensor], last_checkpoint=None) -> None:
    """
    Um passo de AdamW a partir de gradientes explícitos

    Args:
        optimizer: Otimizador (guarda momentos e contagem de passos)
        params: Parâmetros por nome
        grads: Gradientes por nome (parâmetros ausentes não são atualizados)
        last_checkpoint: Checkpoint citado se o treino for abortado
    """
    bad: List[str] = []
    for name, param in params.items():
        grad = grads.get(name)
        if grad is not None and grad.shape != param.shape:
            raise DimensionError(f"Gradiente de '{name}' com formato {tuple(grad.shape)}, esperado {tuple(param.shape)}")
        if grad is not None and not torch.isfinite(grad).all():
            bad.append(name)
        param.grad = grad

    if bad:
        logger.error(f"❌ Gradiente não finito em: {', '.join(bad)}")
        raise DivergenceError(f"Gradiente não finito em {len(bad)} parâmetro(s): {bad[0]}", last_checkpoint)

    optimizer.step()

