"""
Sparsity Trainer
================
Treino do encoder na tarefa sintética, checkpoints nos limiares de acurácia
de validação, estatísticas de gradiente do classificador e leitura binária
para as métricas de estocasticidade
"""

from pathlib import Path
from typing import Dict, List, Optional

import torch
import torch.nn.functional as F

from app.core.autodiff import Tape
from app.core.errors import DivergenceError, NumericalError
from app.core.logging import get_logger
from app.core.seeding import make_generator
from app.schemas.config import LabConfig, TrainingConfig
from app.schemas.records import GradientStatistics, TrainingResult, VarianceReport
from app.services.encoder import SpectralEncoder, adamw_step, build_optimizer
from app.services.stochasticity import stochasticity_metrics
from app.services.synthetic import SyntheticDataset, generate_sparsity_dataset
from app.utils.checkpoint import save_checkpoint
from app.utils.file_utils import FileUtils

logger = get_logger(__name__)

EVAL_BATCH = 1000


class SparsityTrainer:
    """Laço de treino com AdamW, reamostragem de Ω e checkpoints por limiar"""

    def __init__(self, model: SpectralEncoder, config: TrainingConfig, seed: int,
                 checkpoint_dir: Optional[Path] = None, variant: Optional[str] = None):
        """
        Inicializa o treinador

        Args:
            model: Encoder a treinar
            config: Hiperparâmetros
            seed: Semente raiz (dropout e ordem dos lotes)
            checkpoint_dir: Diretório dos checkpoints (None = não grava)
            variant: Nome da variante (padrão: o do modelo)
        """
        self.model = model
        self.config = config
        self.seed = seed
        self.variant = variant or model.variant
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None

        self.optimizer = build_optimizer(model, config)
        self.params = dict(model.named_parameters())
        self.tape = Tape()
        self.tape.watch_module(model)
        self.batch_rng = make_generator(seed, 'batches')
        self.dropout_rng = make_generator(seed, 'dropout')
        self.step = 0
        self.last_checkpoint: Optional[Path] = None

    @property
    def generators(self) -> Dict[str, torch.Generator]:
        return {'batches': self.batch_rng, 'dropout': self.dropout_rng}

    def train_step(self, inputs: torch.Tensor, targets: torch.Tensor) -> float:
        """
        Um passo: reamostragem, forward, backward pela Tape e AdamW

        Args:
            inputs: Lote many-hot (B, L, 3)
            targets: Índices de classe (B,)

        Returns:
            Loss do lote
        """
        self.step += 1
        self.model.train()
        self.model.resample(self.step)

        # dropout sorteado do gerador do treinador; o RNG global fica intacto
        with torch.random.fork_rng(devices=[]):
            torch.set_rng_state(self.dropout_rng.get_state())
            with self.tape.forward():
                try:
                    _, logits = self.model(inputs)
                except DivergenceError:
                    raise
                except NumericalError as e:
                    logger.error(f"❌ Forward não finito no passo {self.step}: {e}")
                    raise DivergenceError(f"Forward não finito no passo {self.step}", self.last_checkpoint) from e
                loss = F.cross_entropy(logits, targets)
                if not torch.isfinite(loss):
                    logger.error(f"❌ Loss não finita no passo {self.step}")
                    raise DivergenceError(f"Loss não finita no passo {self.step}", self.last_checkpoint)
                grads = self.tape.backward(loss)
            self.dropout_rng.set_state(torch.get_rng_state())

        adamw_step(self.optimizer, self.params, grads, self.last_checkpoint)
        return float(loss)

    @torch.no_grad()
    def evaluate(self, dataset: SyntheticDataset) -> float:
        """Acurácia em um conjunto (dropout desligado)"""
        self.model.eval()
        inputs, targets = dataset.inputs(), dataset.targets()
        correct = 0
        for start in range(0, len(dataset), EVAL_BATCH):
            _, logits = self.model(inputs[start:start + EVAL_BATCH])
            correct += int((logits.argmax(dim=-1) == targets[start:start + EVAL_BATCH]).sum())
        return correct / max(len(dataset), 1)

    def save(self, tag: str) -> Optional[Path]:
        if self.checkpoint_dir is None:
            return None
        path = FileUtils.checkpoint_path(self.checkpoint_dir, self.variant, tag)
        save_checkpoint(path, self.model, self.optimizer, self.step, self.generators)
        return path

    def train(self, train: SyntheticDataset, validation: SyntheticDataset) -> TrainingResult:
        """
        Treina até ``max_steps`` (ou até a acurácia alvo)

        Args:
            train: Conjunto de treino
            validation: Conjunto de validação

        Returns:
            Curva de aprendizado e checkpoints
        """
        config = self.config
        result = TrainingResult(variant=self.variant)
        pending = list(config.thresholds)
        inputs, targets = train.inputs(), train.targets()

        logger.info(f"🚀 Treinando {self.variant}: {len(train)} exemplos, até {config.max_steps} passos")

        while self.step < config.max_steps:
            index = torch.randint(len(train), (config.batch_size,), generator=self.batch_rng)
            loss = self.train_step(inputs[index], targets[index])

            if self.step % config.eval_every != 0 and self.step != config.max_steps:
                continue

            accuracy = self.evaluate(validation)
            result.steps.append(self.step)
            result.losses.append(loss)
            result.accuracies.append(accuracy)
            result.final_accuracy = accuracy

            while pending and accuracy >= pending[0]:
                threshold = pending.pop(0)
                tag = f"acc{int(round(threshold * 100))}"
                path = self.save(tag)
                result.checkpoint_accuracies[tag] = accuracy
                if path is not None:
                    result.checkpoints[tag] = str(path)
                logger.info(f"✅ Limiar {threshold:.0%} atingido no passo {self.step} (acc={accuracy:.4f})")

            self.last_checkpoint = self.save('last') or self.last_checkpoint
            diagnostics = self.model.diagnostics()
            logger.info(
                f"[{self.variant}] passo {self.step}: loss={loss:.4f} acc_val={accuracy:.4f} "
                f"denominadores≈0={diagnostics.near_zero}/{diagnostics.evaluated}"
            )
            self.model.reset_diagnostics()

            if config.stop_at_target and accuracy >= config.target_accuracy:
                result.reached_target = True
                break

        result.reached_target = result.reached_target or result.final_accuracy >= config.target_accuracy
        result.last_checkpoint = str(self.last_checkpoint) if self.last_checkpoint else None
        logger.info(f"Treino de {self.variant} encerrado: acc_val={result.final_accuracy:.4f} em {self.step} passos")
        return result


def run_sparsity_experiment(variant: str, lab: LabConfig, seed: int,
                            checkpoint_dir: Optional[Path] = None) -> TrainingResult:
    """
    Gera o conjunto, monta o encoder da variante e treina

    Args:
        variant: Variante (ex: 'gmm-rks')
        lab: Configuração resolvida
        seed: Semente efetiva
        checkpoint_dir: Diretório dos checkpoints

    Returns:
        TrainingResult
    """
    dataset = generate_sparsity_dataset(lab.data, seed)
    train, validation = dataset.split(lab.data.split, seed)
    model = SpectralEncoder(lab.encoder_config(variant), seed=seed)
    trainer = SparsityTrainer(model, lab.train, seed, checkpoint_dir, variant)
    return trainer.train(train, validation)


def gradient_statistics(model: SpectralEncoder, inputs: torch.Tensor, targets: torch.Tensor,
                        repetitions: int = 50) -> GradientStatistics:
    """
    Gradientes do viés da camada oculta do classificador (um por neurônio e
    exemplo), repetidos com Ω novo e dropout desligado

    Args:
        model: Encoder (tipicamente carregado de um checkpoint)
        inputs: Exemplos many-hot (N, L, 3)
        targets: Índices de classe (N,)
        repetitions: Repetições com Ω novo

    Returns:
        Média dos valores absolutos e desvio padrão entre repetições,
        ambos médios sobre neurônios e exemplos
    """
    model.eval()
    captured: List[torch.Tensor] = []

    def keep_preactivation(_module, _inputs, output):
        output.retain_grad()
        captured.append(output)

    handle = model.classifier_hidden.register_forward_hook(keep_preactivation)
    samples = []
    try:
        for _ in range(repetitions):
            model.redraw()
            captured.clear()
            model.zero_grad(set_to_none=True)
            _, logits = model(inputs)
            # soma das losses: o gradiente da pré-ativação de cada exemplo
            # é exatamente o gradiente do viés para aquele exemplo
            F.cross_entropy(logits, targets, reduction='sum').backward()
            samples.append(captured[0].grad.detach().clone())
    finally:
        handle.remove()

    grads = torch.stack(samples)  # (repetições, N, neurônios)
    abs_mean = float(grads.abs().mean())
    std = float(torch.std(grads - grads[0], dim=0, correction=0).mean())
    logger.info(f"Estatísticas de gradiente: |g|={abs_mean:.3e}, std={std:.3e} ({repetitions} repetições)")
    return GradientStatistics(
        abs_mean=abs_mean,
        std=std,
        neurons=grads.shape[-1],
        datapoints=grads.shape[1],
        repetitions=repetitions,
    )


def binary_scores(model: SpectralEncoder, inputs: torch.Tensor, bound: int = 4) -> torch.Tensor:
    """
    Saída escalar pré-sigmoide: log-massa das classes positivas contra as demais

    Returns:
        (N,) com valor > 0 ⇔ rótulo previsto mais provável positivo
    """
    _, logits = model(inputs)
    positive = logits[:, bound + 1:]
    rest = logits[:, :bound + 1]
    return torch.logsumexp(positive, dim=-1) - torch.logsumexp(rest, dim=-1)


@torch.no_grad()
def collect_binary_outputs(model: SpectralEncoder, inputs: torch.Tensor, runs: int) -> torch.Tensor:
    """Saídas binárias (N, runs), Ω novo a cada execução"""
    model.eval()
    outputs = []
    for _ in range(runs):
        model.redraw()
        outputs.append(binary_scores(model, inputs))
    return torch.stack(outputs, dim=1)


def stochasticity_report(model: SpectralEncoder, dataset: SyntheticDataset, runs: int) -> VarianceReport:
    """RSD/PI/VA/AGV de um encoder treinado sobre a leitura binária"""
    outputs = collect_binary_outputs(model, dataset.inputs(), runs)
    return stochasticity_metrics(outputs, dataset.labels > 0)
