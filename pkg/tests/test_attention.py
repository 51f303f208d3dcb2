"""
Testes da atenção kernelizada (quadrática, linear, causal) e da softmax
"""

import math

import pytest
import torch

from app.core import autodiff as ad
from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError, NumericalError
from app.schemas.config import AttentionConfig, FeatureMapSpec, SamplerConfig
from app.services.attention import (
    FEATURE_CHUNK,
    AttentionDiagnostics,
    MultiHeadAttention,
    causal_linear_attention,
    feature_kernel,
    linear_kernel_attention,
    quadratic_kernel_attention,
    softmax_attention,
    stabilize,
)
from app.services.spectral import FrequencyMatrix
from app.utils.alloc import track_allocations


def _exp_kernel(Q, K):
    return torch.exp(Q @ K.transpose(-1, -2) / math.sqrt(Q.shape[-1]))


def _inputs(randn, length, d_q=8, d_v=4, scale=0.25):
    return randn(1, length, d_q, scale=scale), randn(1, length, d_q, scale=scale), randn(1, length, d_v)


# =============================================================================
# Forma quadrática
# =============================================================================

def test_single_token_returns_value(randn):
    Q, K, V = _inputs(randn, 1)
    out = quadratic_kernel_attention(Q, K, V, _exp_kernel, eps=0.0)
    assert torch.allclose(out, V, atol=1e-15)


def test_constant_kernel_averages_values(randn):
    Q, K, V = _inputs(randn, 6)
    out = quadratic_kernel_attention(Q, K, V, lambda q, k: torch.ones(1, 6, 6, dtype=DTYPE), eps=0.0)
    assert torch.allclose(out, V.mean(dim=-2, keepdim=True).expand_as(V), atol=1e-14)


def test_exponential_kernel_matches_softmax(randn):
    Q, K, V = _inputs(randn, 16, scale=1.0)
    kernelized = quadratic_kernel_attention(Q, K, V, _exp_kernel, eps=0.0)
    assert torch.allclose(kernelized, softmax_attention(Q, K, V), atol=1e-10)


def test_quadratic_matches_explicit_loops(randn):
    Q, K, V = _inputs(randn, 5)
    out = quadratic_kernel_attention(Q, K, V, _exp_kernel, eps=0.0)[0]
    for i in range(5):
        weights = torch.stack([_exp_kernel(Q[0, i:i + 1], K[0, j:j + 1])[0, 0] for j in range(5)])
        expected = (weights.unsqueeze(-1) * V[0]).sum(dim=0) / weights.sum()
        assert torch.allclose(out[i], expected, atol=1e-12)


def test_zero_denominator_without_eps(randn):
    Q, K, V = _inputs(randn, 4)
    zeros = lambda q, k: torch.zeros(1, 4, 4, dtype=DTYPE)  # noqa: E731
    with pytest.raises(NumericalError):
        quadratic_kernel_attention(Q, K, V, zeros, eps=0.0)
    assert torch.all(quadratic_kernel_attention(Q, K, V, zeros, eps=1e-6) == 0)


def test_stabilize_sign_convention():
    out = stabilize(torch.tensor([0.0, -1.0, 2.0], dtype=DTYPE), 0.1)
    assert torch.allclose(out, torch.tensor([0.1, -1.1, 2.1], dtype=DTYPE), atol=1e-15)


def test_stabilize_counts_near_zero():
    diagnostics = AttentionDiagnostics()
    stabilize(torch.tensor([0.0, 1e-9, 1.0], dtype=DTYPE), 1e-6, diagnostics)
    assert (diagnostics.near_zero, diagnostics.evaluated) == (2, 3)
    diagnostics.reset()
    assert diagnostics.evaluated == 0


def test_shape_errors(randn):
    Q, K, V = _inputs(randn, 4)
    with pytest.raises(DimensionError):
        quadratic_kernel_attention(Q, K[..., :3], V, _exp_kernel)
    with pytest.raises(DimensionError):
        softmax_attention(Q, K, V[:, :3])


# =============================================================================
# Forma linear
# =============================================================================

@pytest.mark.parametrize('kind', ['rks', 'prf'])
def test_linear_matches_quadratic(randn, kind):
    Q, K, V = _inputs(randn, 64)
    spec = FeatureMapSpec(kind=kind, samples=16)
    omega = FrequencyMatrix(rows=randn(16, 8))
    linear = linear_kernel_attention(Q, K, V, spec, omega)
    quadratic = quadratic_kernel_attention(Q, K, V, feature_kernel(spec, omega), spec.eps)
    assert torch.allclose(linear, quadratic, atol=1e-8, rtol=0)


@pytest.mark.parametrize('kind', ['rks', 'prf'])
def test_causal_matches_masked_quadratic(randn, kind):
    Q, K, V = _inputs(randn, 32)
    spec = FeatureMapSpec(kind=kind, samples=16)
    omega = FrequencyMatrix(rows=randn(16, 8))
    causal = causal_linear_attention(Q, K, V, spec, omega)
    masked = quadratic_kernel_attention(Q, K, V, feature_kernel(spec, omega), spec.eps, causal=True)
    assert torch.allclose(causal, masked, atol=1e-8, rtol=0)


def test_causal_first_row_is_first_value(randn):
    Q, K, V = _inputs(randn, 10)
    spec = FeatureMapSpec(kind='prf', samples=16, eps=0.0)
    out = causal_linear_attention(Q, K, V, spec, FrequencyMatrix(rows=randn(16, 8)))
    assert torch.allclose(out[:, 0], V[:, 0], atol=1e-12)


def test_prf_weights_are_convex(randn):
    length = 12
    Q, K, _ = _inputs(randn, length)
    spec = FeatureMapSpec(kind='prf', samples=16)
    weights = quadratic_kernel_attention(Q, K, torch.eye(length, dtype=DTYPE).unsqueeze(0),
                                         feature_kernel(spec, FrequencyMatrix(rows=randn(16, 8))), spec.eps)
    assert torch.all(weights >= -1e-12)
    assert torch.all((weights.sum(dim=-1) - 1).abs() <= 1e-5)


def test_linear_auxiliary_memory_is_flat(randn):
    spec = FeatureMapSpec(kind='rks', samples=16)
    omega = FrequencyMatrix(rows=randn(16, 8))
    peaks = {}
    for length in (64, 256):
        Q, K, V = _inputs(randn, length)
        with track_allocations() as counter:
            linear_kernel_attention(Q, K, V, spec, omega)
        peaks[length] = counter.peak
    assert peaks[64] == peaks[256] > 0


def test_linear_memory_counts_feature_blocks(randn):
    spec = FeatureMapSpec(kind='prf', samples=32)
    omega = FrequencyMatrix(rows=randn(32, 8))
    counters = {}
    for length in (256, 4096):
        Q, K, V = _inputs(randn, length)
        with track_allocations() as counter:
            linear_kernel_attention(Q, K, V, spec, omega)
        counters[length] = counter
    block = FEATURE_CHUNK * 32 * 8
    assert counters[4096].by_label['phi_k'] == counters[4096].by_label['phi_q'] == block
    assert counters[256].peak == counters[4096].peak
    assert counters[4096].current == 0


@pytest.mark.parametrize('chunk', [1, 7, 64, 500])
def test_chunk_size_does_not_change_output(randn, chunk):
    spec = FeatureMapSpec(kind='rks', samples=16)
    omega = FrequencyMatrix(rows=randn(16, 8))
    Q, K, V = _inputs(randn, 100)
    whole = linear_kernel_attention(Q, K, V, spec, omega, chunk=100)
    assert torch.allclose(linear_kernel_attention(Q, K, V, spec, omega, chunk=chunk), whole, atol=1e-12)
    causal = causal_linear_attention(Q, K, V, spec, omega, chunk=100)
    assert torch.allclose(causal_linear_attention(Q, K, V, spec, omega, chunk=chunk), causal, atol=1e-12)


def test_invalid_chunk(randn):
    spec = FeatureMapSpec(kind='rks', samples=16)
    Q, K, V = _inputs(randn, 8)
    with pytest.raises(ConfigurationError):
        linear_kernel_attention(Q, K, V, spec, FrequencyMatrix(rows=randn(16, 8)), chunk=0)


def test_quadratic_scores_grow_with_length(randn):
    sizes = {}
    for length in (64, 256):
        Q, K, V = _inputs(randn, length)
        with track_allocations() as counter:
            softmax_attention(Q, K, V)
        sizes[length] = counter.by_label['scores']
    assert sizes[256] == 16 * sizes[64]


# =============================================================================
# Softmax
# =============================================================================

def test_softmax_zero_queries_average_values(randn):
    _, K, V = _inputs(randn, 7)
    out = softmax_attention(torch.zeros(1, 7, 8, dtype=DTYPE), K, V)
    assert torch.allclose(out, V.mean(dim=-2, keepdim=True).expand_as(V), atol=1e-14)


def test_softmax_causal_first_row(randn):
    Q, K, V = _inputs(randn, 5)
    out = softmax_attention(Q, K, V, causal=True)
    assert torch.allclose(out[:, 0], V[:, 0], atol=1e-15)


def test_permutation_equivariance(randn):
    Q, K, V = _inputs(randn, 9)
    perm = torch.randperm(9)
    spec = FeatureMapSpec(kind='prf', samples=8)
    omega = FrequencyMatrix(rows=randn(8, 8))
    base = linear_kernel_attention(Q, K, V, spec, omega)
    assert torch.allclose(linear_kernel_attention(Q, K[:, perm], V[:, perm], spec, omega), base, atol=1e-12)
    assert torch.allclose(linear_kernel_attention(Q[:, perm], K, V, spec, omega), base[:, perm], atol=1e-12)


# =============================================================================
# Multi-cabeça
# =============================================================================

def _mha_config(**overrides) -> AttentionConfig:
    values = dict(heads=2, d_query=4, d_value=4, featmap=FeatureMapSpec(kind='rks', samples=8),
                  sampler=SamplerConfig(kind='gmm'))
    values.update(overrides)
    return AttentionConfig(**values)


def test_multihead_linear_equals_quadratic(randn):
    linear = MultiHeadAttention(8, _mha_config(mode='linear'), seed=3, label='mha')
    quadratic = MultiHeadAttention(8, _mha_config(mode='quadratic'), seed=3, label='mha')
    quadratic.load_state_dict(linear.state_dict())
    x = randn(2, 6, 8, scale=0.3)
    assert torch.allclose(linear(x), quadratic(x), atol=1e-8)


def test_multihead_shapes_and_softmax(randn):
    x = randn(3, 5, 8)
    kernel = MultiHeadAttention(8, _mha_config(causal=True), seed=0)
    softmax = MultiHeadAttention(8, _mha_config(kind='softmax'))
    assert kernel(x).shape == (3, 5, 8)
    assert softmax(x).shape == (3, 5, 8)
    assert softmax.sampler is None


def test_multihead_gradients(randn):
    layer = MultiHeadAttention(8, _mha_config(featmap=FeatureMapSpec(kind='prf', samples=8)), seed=1)
    x = randn(1, 8, 8, scale=0.5).requires_grad_(True)
    assert ad.gradcheck(lambda inp: layer(inp), x)
