"""
Schemas Module
==============
Modelos de dados Pydantic
"""

from app.schemas.config import (
    VARIANTS,
    KERNEL_VARIANTS,
    parse_variant,
    resolve_seed,
    FeatureMapSpec,
    SamplerConfig,
    AttentionConfig,
    EncoderConfig,
    SparsitySpec,
    TrainingConfig,
    LabConfig,
)
from app.schemas.records import (
    ResultRecord,
    CheckResult,
    BenchResult,
    VarianceReport,
    GradientStatistics,
    TrainingResult,
)

__all__ = [
    'VARIANTS',
    'KERNEL_VARIANTS',
    'parse_variant',
    'resolve_seed',
    'FeatureMapSpec',
    'SamplerConfig',
    'AttentionConfig',
    'EncoderConfig',
    'SparsitySpec',
    'TrainingConfig',
    'LabConfig',
    'ResultRecord',
    'CheckResult',
    'BenchResult',
    'VarianceReport',
    'GradientStatistics',
    'TrainingResult',
]
