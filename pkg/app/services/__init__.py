"""
Services Module
===============
Samplers espectrais, feature maps, atenção, encoder, análise e experimentos
"""

from app.services.spectral import FrequencyMatrix, SpectralSampler, build_sampler, maybe_resample
from app.services.gmm_sampler import GmmSampler, gmm_sample
from app.services.fastfood_sampler import FastFoodSampler, fastfood_matrix_apply, fwht
from app.services.generative_sampler import GenerativeSampler, generator_sample
from app.services.feature_maps import kernel_estimate, prf_map, rks_map
from app.services.attention import (
    MultiHeadAttention,
    causal_linear_attention,
    linear_kernel_attention,
    quadratic_kernel_attention,
    softmax_attention,
)
from app.services.encoder import SpectralEncoder, adamw_step, encoder_forward
from app.services.analysis import covariance_eigenvalues, mc_mse, mse_prf_closed_form, mse_rks_closed_form
from app.services.stochasticity import stochasticity_metrics
from app.services.synthetic import generate_sparsity_dataset
from app.services.trainer import SparsityTrainer, gradient_statistics, run_sparsity_experiment
from app.services.benchmark import run_scaling_bench

__all__ = [
    'FrequencyMatrix', 'SpectralSampler', 'build_sampler', 'maybe_resample',
    'GmmSampler', 'gmm_sample',
    'FastFoodSampler', 'fastfood_matrix_apply', 'fwht',
    'GenerativeSampler', 'generator_sample',
    'kernel_estimate', 'prf_map', 'rks_map',
    'MultiHeadAttention', 'causal_linear_attention', 'linear_kernel_attention',
    'quadratic_kernel_attention', 'softmax_attention',
    'SpectralEncoder', 'adamw_step', 'encoder_forward',
    'covariance_eigenvalues', 'mc_mse', 'mse_prf_closed_form', 'mse_rks_closed_form',
    'stochasticity_metrics',
    'generate_sparsity_dataset',
    'SparsityTrainer', 'gradient_statistics', 'run_sparsity_experiment',
    'run_scaling_bench',
]
