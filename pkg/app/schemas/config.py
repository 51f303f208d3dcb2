"""
Configuration Schemas
=====================
Modelos Pydantic dos arquivos de configuração de experimentos

O arquivo é texto ``chave=valor`` com chaves pontuadas (``sampler.kind=gmm``).
Cada seção do arquivo corresponde a um modelo abaixo; chaves desconhecidas
são erro de configuração.
"""

import hashlib
import json
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.config import settings, read_config_file
from app.core.errors import ConfigurationError

SamplerKind = Literal['gmm', 'fastfood', 'generative']
FeatureKind = Literal['rks', 'prf']

SOFTMAX = 'softmax'
KERNEL_VARIANTS: Tuple[str, ...] = tuple(
    f"{sampler}-{feature}"
    for sampler in ('gmm', 'fastfood', 'generative')
    for feature in ('rks', 'prf')
)
VARIANTS: Tuple[str, ...] = KERNEL_VARIANTS + (SOFTMAX,)


def parse_variant(name: str) -> Tuple[Optional[str], Optional[str]]:
    """
    Decompõe o nome de uma variante em (sampler, feature map)

    Args:
        name: Ex: 'gmm-rks', 'fastfood-prf' ou 'softmax'

    Returns:
        (sampler, feature) ou (None, None) para softmax
    """
    name = name.strip().lower()
    if name == SOFTMAX:
        return None, None
    if name not in KERNEL_VARIANTS:
        raise ConfigurationError(f"Variante desconhecida: {name!r} (disponíveis: {', '.join(VARIANTS)})")
    sampler, feature = name.split('-')
    return sampler, feature


def _split_csv(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(',') if item.strip()]
    return value


def _empty_as_none(value: Any) -> Any:
    if isinstance(value, str) and value.strip() == '':
        return None
    return value


CsvInts = Annotated[List[int], BeforeValidator(_split_csv)]
CsvFloats = Annotated[List[float], BeforeValidator(_split_csv)]
CsvNames = Annotated[List[str], BeforeValidator(_split_csv)]
OptionalInt = Annotated[Optional[int], BeforeValidator(_empty_as_none)]
OptionalPath = Annotated[Optional[str], BeforeValidator(_empty_as_none)]


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


# =============================================================================
# Feature maps e samplers
# =============================================================================

class FeatureMapSpec(_Section):
    """Feature map (RKS ou PRF) e sua política de amostragem"""
    kind: FeatureKind = Field('rks', description="Família do feature map")
    samples: int = Field(16, ge=1, description="Número M de frequências")
    eps: float = Field(1e-6, ge=0, description="Estabilizador do denominador")
    clamp: float = Field(30.0, gt=0, description="Limite do expoente do PRF")
    resample_interval: int = Field(100, ge=1, description="Reamostrar Ω a cada N passos")
    half_norm: bool = Field(False, description="PRF com ‖x‖²/2 (kernel softmax)")


class GmmConfig(_Section):
    """Sampler de mistura de Gaussianas"""
    components: int = Field(2, ge=1, description="Número C de componentes")
    symmetric: bool = Field(True, description="Componentes pareadas μ₂ = −μ₁ com escala compartilhada")
    init_mean_std: float = Field(0.1, ge=0, description="Desvio da inicialização das médias")
    init_scale: float = Field(1.0, ge=0, description="S inicial = init_scale · I")

    @model_validator(mode='after')
    def check_symmetric(self) -> 'GmmConfig':
        if self.symmetric and self.components != 2:
            raise ValueError("gmm.symmetric exige gmm.components=2")
        return self


class FastFoodConfig(_Section):
    """Sampler FastFood (S·H·G·Π·H·B)"""
    learnable: str = Field('sgb', description="Subconjunto aprendível de {s, g, b}")
    sigma: float = Field(1.0, gt=0, description="Largura de banda σ (fixa)")

    @field_validator('learnable', mode='before')
    @classmethod
    def normalize_learnable(cls, value: Any) -> str:
        value = '' if value is None else str(value).strip().lower()
        if set(value) - set('sgb') or len(set(value)) != len(value):
            raise ValueError(f"fastfood.learnable inválido: {value!r} (use um subconjunto de 'sgb')")
        return ''.join(sorted(value))


class GeneratorConfig(_Section):
    """Sampler gerativo (MLP sobre ruído normal)"""
    hidden_layers: int = Field(4, ge=1, description="Camadas ocultas de largura d_q")
    output_scale: bool = Field(True, description="Multiplica tanh por uma escala aprendível")
    init_scale: float = Field(3.0, gt=0, description="Valor inicial da escala de saída")


class SamplerSection(_Section):
    kind: SamplerKind = 'gmm'


class SamplerConfig(_Section):
    """Configuração completa de um sampler espectral"""
    kind: SamplerKind = 'gmm'
    gmm: GmmConfig = GmmConfig()
    fastfood: FastFoodConfig = FastFoodConfig()
    generator: GeneratorConfig = GeneratorConfig()


# =============================================================================
# Atenção e modelo
# =============================================================================

class AttentionSection(_Section):
    heads: int = Field(4, ge=1)
    d_query: int = Field(16, ge=1, description="d_q = d_k por cabeça")
    d_value: int = Field(16, ge=1, description="d_v por cabeça")
    causal: bool = False
    mode: Literal['linear', 'quadratic'] = 'linear'


class AttentionConfig(_Section):
    """Camada de atenção multi-cabeça"""
    heads: int = Field(4, ge=1)
    d_query: int = Field(16, ge=1)
    d_value: int = Field(16, ge=1)
    causal: bool = False
    mode: Literal['linear', 'quadratic'] = 'linear'
    kind: Literal['kernel', 'softmax'] = 'kernel'
    featmap: FeatureMapSpec = FeatureMapSpec()
    sampler: SamplerConfig = SamplerConfig()


class ModelSection(_Section):
    layers: int = Field(3, ge=1)
    d_model: int = Field(64, ge=1)
    d_ff: int = Field(64, ge=1)
    hidden: int = Field(64, ge=1, description="Largura da camada oculta do classificador")
    classes: int = Field(9, ge=2)
    positional: Literal['learnable', 'sinusoidal'] = 'learnable'
    pooling: Literal['position0', 'cls'] = 'position0'
    dropout: float = Field(0.1, ge=0, lt=1)
    max_len: OptionalInt = Field(None, ge=1, description="Comprimento máximo (padrão: data.length)")


class EncoderConfig(_Section):
    """Encoder transformer com atenção kernelizada"""
    layers: int = Field(3, ge=1)
    d_model: int = Field(64, ge=1)
    d_ff: int = Field(64, ge=1)
    hidden: int = Field(64, ge=1)
    classes: int = Field(9, ge=2)
    input_dim: int = Field(3, ge=1, description="Canais do many-hot de entrada")
    positional: Literal['learnable', 'sinusoidal'] = 'learnable'
    pooling: Literal['position0', 'cls'] = 'position0'
    dropout: float = Field(0.1, ge=0, lt=1)
    max_len: int = Field(50, ge=1)
    attention: AttentionConfig = AttentionConfig()

    @model_validator(mode='after')
    def check_heads(self) -> 'EncoderConfig':
        if self.attention.heads * self.attention.d_value != self.d_model:
            raise ValueError(
                f"heads × d_value ({self.attention.heads} × {self.attention.d_value}) "
                f"deve ser igual a d_model ({self.d_model})"
            )
        return self


# =============================================================================
# Experimentos
# =============================================================================

class SparsitySpec(_Section):
    """Tarefa sintética de esparsidade"""
    p: float = Field(0.5, ge=0, le=1, description="Probabilidade de relevância")
    length: int = Field(50, ge=1, description="Comprimento L das sequências")
    size: int = Field(20000, ge=0, description="Número N de exemplos")
    split: float = Field(0.8, gt=0, lt=1, description="Fração de treino")
    balance: bool = Field(True, description="Balanceamento por sobre-geração")
    bound: int = Field(4, ge=1, description="Limite do valor absoluto de qualquer prefixo")


class TrainingConfig(_Section):
    """Hiperparâmetros de treino (AdamW, taxa constante)"""
    lr: float = Field(5e-5, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.98, ge=0, lt=1)
    eps: float = Field(1e-9, gt=0)
    weight_decay: float = Field(0.1, ge=0)
    batch_size: int = Field(400, ge=1)
    max_steps: int = Field(30000, ge=1)
    eval_every: int = Field(100, ge=1)
    thresholds: CsvFloats = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8])
    target_accuracy: float = Field(0.95, gt=0, le=1)
    stop_at_target: bool = Field(True, description="Encerra ao atingir target_accuracy")

    @field_validator('thresholds')
    @classmethod
    def sorted_thresholds(cls, value: List[float]) -> List[float]:
        if any(not 0 < t < 1 for t in value):
            raise ValueError("limiares devem estar em (0, 1)")
        return sorted(value)


class BenchSection(_Section):
    lengths: CsvInts = Field(default_factory=lambda: [256, 512, 1024, 2048, 4096])
    trials: int = Field(3, ge=1)
    warmup: int = Field(1, ge=0)
    batch: int = Field(1, ge=1)
    linear_max_ratio: float = Field(6.0, gt=0, description="time(4096)/time(1024) máximo (kernel)")
    softmax_min_ratio: float = Field(10.0, gt=0, description="time(4096)/time(1024) mínimo (softmax)")
    alloc_tolerance: float = Field(0.1, ge=0)
    check: bool = Field(True, description="Aplica os critérios de escala")


class MseSection(_Section):
    sets: int = Field(20, ge=1, description="Conjuntos aleatórios de parâmetros")
    m: int = Field(8, ge=1)
    trials: int = Field(1_000_000, ge=10_000)
    chunk: int = Field(100_000, ge=1)
    dim: int = Field(2, ge=1)
    rel_tol: float = Field(0.03, gt=0)
    input_scale: float = Field(0.5, gt=0, description="Escala de q, k, μ e S sorteados")


class KernelCheckSection(_Section):
    pairs: int = Field(100, ge=1)
    samples: int = Field(65536, ge=1)
    dim: int = Field(2, ge=1)
    sigmas: float = Field(3.0, gt=0, description="Tolerância em erros padrão")
    outlier_fraction: float = Field(0.0, ge=0, le=1, description="Fração de pares tolerada fora da banda")
    self_similarity: int = Field(10000, ge=1)
    oracle_instances: int = Field(50, ge=1)
    oracle_lengths: CsvInts = Field(default_factory=lambda: [8, 64, 128])
    oracle_tol: float = Field(1e-6, gt=0)
    fastfood_dims: CsvInts = Field(default_factory=lambda: [4, 8, 16, 64])


class GradStatsSection(_Section):
    checkpoint: OptionalPath = None
    datapoints: int = Field(50, ge=1)
    repetitions: int = Field(50, ge=1)


class EigvalsSection(_Section):
    checkpoint: OptionalPath = None


class StochasticitySection(_Section):
    checkpoint: OptionalPath = None
    runs: int = Field(100, ge=1)
    examples: int = Field(200, ge=1)


# =============================================================================
# Configuração completa
# =============================================================================

class LabConfig(_Section):
    """Configuração resolvida de uma invocação"""
    seed: int = Field(settings.DEFAULT_SEED, description="Semente raiz")
    variants: CsvNames = Field(default_factory=list, description="Variantes (padrão: sampler.kind-featmap.kind)")
    sampler: SamplerSection = SamplerSection()
    featmap: FeatureMapSpec = FeatureMapSpec()
    gmm: GmmConfig = GmmConfig()
    fastfood: FastFoodConfig = FastFoodConfig()
    generator: GeneratorConfig = GeneratorConfig()
    attention: AttentionSection = AttentionSection()
    model: ModelSection = ModelSection()
    data: SparsitySpec = SparsitySpec()
    train: TrainingConfig = TrainingConfig()
    bench: BenchSection = BenchSection()
    mse: MseSection = MseSection()
    kernel: KernelCheckSection = KernelCheckSection()
    gradstats: GradStatsSection = GradStatsSection()
    eigvals: EigvalsSection = EigvalsSection()
    stochasticity: StochasticitySection = StochasticitySection()

    @field_validator('variants')
    @classmethod
    def known_variants(cls, value: List[str]) -> List[str]:
        names = [name.strip().lower() for name in value]
        for name in names:
            parse_variant(name)
        return names

    @classmethod
    def load(cls, path: Path, **overrides: Any) -> 'LabConfig':
        """
        Lê, aninha e valida um arquivo de configuração

        Args:
            path: Caminho do arquivo
            overrides: Valores de topo que substituem os do arquivo (ex: seed)

        Returns:
            LabConfig validado
        """
        raw = read_config_file(path)
        raw.update({key: value for key, value in overrides.items() if value is not None})
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: Dict[str, Any]) -> 'LabConfig':
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            problems = '; '.join(
                f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}"
                for err in e.errors()
            )
            raise ConfigurationError(f"Configuração inválida: {problems}") from e

    def resolved_variants(self) -> List[str]:
        if self.variants:
            return list(self.variants)
        return [f"{self.sampler.kind}-{self.featmap.kind}"]

    def sampler_config(self, kind: Optional[str] = None) -> SamplerConfig:
        return SamplerConfig(
            kind=kind or self.sampler.kind,
            gmm=self.gmm,
            fastfood=self.fastfood,
            generator=self.generator,
        )

    def attention_config(self, variant: str) -> AttentionConfig:
        sampler, feature = parse_variant(variant)
        return AttentionConfig(
            heads=self.attention.heads,
            d_query=self.attention.d_query,
            d_value=self.attention.d_value,
            causal=self.attention.causal,
            mode=self.attention.mode,
            kind=SOFTMAX if sampler is None else 'kernel',
            featmap=self.featmap if feature is None else self.featmap.model_copy(update={'kind': feature}),
            sampler=self.sampler_config(sampler),
        )

    def encoder_config(self, variant: str) -> EncoderConfig:
        try:
            return EncoderConfig(
                layers=self.model.layers,
                d_model=self.model.d_model,
                d_ff=self.model.d_ff,
                hidden=self.model.hidden,
                classes=self.model.classes,
                positional=self.model.positional,
                pooling=self.model.pooling,
                dropout=self.model.dropout,
                max_len=self.model.max_len or self.data.length,
                attention=self.attention_config(variant),
            )
        except ValidationError as e:
            raise ConfigurationError(f"Configuração de modelo inválida: {e.errors()[0]['msg']}") from e

    def config_hash(self) -> str:
        """SHA-256 do JSON canônico da configuração resolvida"""
        canonical = json.dumps(self.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def resolve_seed(config_seed: int, cli_seed: Optional[int] = None) -> int:
    """
    Precedência: semente do arquivo < KLAB_SEED < --seed

    Args:
        config_seed: Semente lida do arquivo
        cli_seed: Semente da linha de comando

    Returns:
        Semente efetiva
    """
    if cli_seed is not None:
        return cli_seed
    env_seed = settings.seed_override()
    if env_seed is not None:
        return env_seed
    return config_seed
