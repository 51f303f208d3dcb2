"""
Testes do encoder, do classificador e do passo de AdamW
"""

import pytest
import torch
import torch.nn as nn
from torch.func import functional_call

from app.core import autodiff as ad
from app.core.autodiff import DTYPE
from app.core.errors import ConfigurationError, DimensionError, DivergenceError
from app.schemas.config import TrainingConfig
from app.services.encoder import SpectralEncoder, adamw_step, build_optimizer, encoder_forward, sinusoidal_positions


def _many_hot(batch: int, length: int, seed: int = 0) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    values = torch.randint(0, 2, (batch, length), generator=generator)
    relevance = torch.randint(0, 2, (batch, length), generator=generator)
    return torch.stack([values == 1, values == 0, relevance == 1], dim=-1).to(DTYPE)


@pytest.fixture
def encoder(tiny_lab) -> SpectralEncoder:
    return SpectralEncoder(tiny_lab.encoder_config('gmm-rks'), seed=0)


def test_logits_shape(encoder):
    pooled, logits = encoder_forward(encoder, _many_hot(4, 8))
    assert pooled.shape == (4, 16)
    assert logits.shape == (4, 9)
    assert encoder.variant == 'gmm-rks'


def test_zero_weights_give_uniform_prediction(encoder):
    with torch.no_grad():
        for param in encoder.parameters():
            param.zero_()
    _, logits = encoder(_many_hot(3, 8))
    probabilities = torch.softmax(logits, dim=-1)
    assert torch.allclose(probabilities, torch.full((3, 9), 1 / 9, dtype=DTYPE), atol=1e-15)


def test_rejects_overlength_and_bad_shape(encoder):
    with pytest.raises(ConfigurationError):
        encoder(_many_hot(2, 9))
    with pytest.raises(DimensionError):
        encoder(torch.zeros(2, 8, 2, dtype=DTYPE))


def test_same_seed_same_model(tiny_lab):
    config = tiny_lab.encoder_config('fastfood-prf')
    state = torch.get_rng_state()
    a = SpectralEncoder(config, seed=5)
    b = SpectralEncoder(config, seed=5)
    assert torch.equal(torch.get_rng_state(), state)
    for (name, x), (_, y) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(x, y), name
    inputs = _many_hot(2, 8)
    assert torch.equal(a(inputs)[1], b(inputs)[1])


@pytest.mark.parametrize('variant', ['gmm-prf', 'fastfood-rks', 'generative-rks', 'generative-prf', 'softmax'])
def test_every_variant_runs(tiny_lab, variant):
    model = SpectralEncoder(tiny_lab.encoder_config(variant), seed=1)
    _, logits = model(_many_hot(2, 8))
    assert torch.isfinite(logits).all()
    assert len(list(model.samplers())) == (0 if variant == 'softmax' else 1)


def test_cls_pooling_and_sinusoidal_positions(make_lab):
    lab = make_lab(model={'pooling': 'cls', 'positional': 'sinusoidal'})
    model = SpectralEncoder(lab.encoder_config('gmm-prf'), seed=0)
    assert model.positions.shape == (9, 16)
    assert model(_many_hot(2, 8))[1].shape == (2, 9)
    table = sinusoidal_positions(4, 6)
    assert torch.equal(table[0, 1::2], torch.ones(3, dtype=DTYPE))


def test_heads_must_tile_model_width(make_lab):
    lab = make_lab(attention={'heads': 3})
    with pytest.raises(ConfigurationError):
        lab.encoder_config('gmm-rks')


def test_gradients_through_encoder(encoder):
    encoder.eval()
    inputs = _many_hot(2, 8)
    names = ['blocks.0.attention.sampler.means', 'blocks.0.attention.query.weight', 'classifier_hidden.weight']
    params = ad.parameters_as_inputs(encoder, names)

    def loss(*tensors):
        _, logits = functional_call(encoder, dict(zip(names, tensors)), (inputs,))
        return logits.logsumexp(dim=-1).sum()

    assert ad.gradcheck(loss, *params.values())


def test_redraw_changes_omega_and_output(encoder):
    encoder.eval()
    inputs = _many_hot(2, 8)
    before = encoder(inputs)[1]
    encoder.redraw()
    assert not torch.equal(encoder(inputs)[1], before)


# =============================================================================
# AdamW
# =============================================================================

def _holder(value: float) -> nn.Module:
    holder = nn.Module()
    holder.w = nn.Parameter(torch.tensor([value], dtype=DTYPE))
    return holder


def test_adamw_first_step_by_hand():
    holder = _holder(1.0)
    optimizer = build_optimizer(holder, TrainingConfig(lr=0.1, weight_decay=0.01))
    adamw_step(optimizer, {'w': holder.w}, {'w': torch.tensor([0.5], dtype=DTYPE)})

    # decaimento desacoplado e, no primeiro passo, m̂ = g e v̂ = g²
    expected = 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-9)
    assert abs(float(holder.w) - expected) <= 1e-12


def test_adamw_three_steps_by_hand():
    lr, decay, beta1, beta2, eps = 0.1, 0.01, 0.9, 0.98, 1e-9
    holder = _holder(1.0)
    optimizer = build_optimizer(holder, TrainingConfig(lr=lr, weight_decay=decay))

    w, m, v = 1.0, 0.0, 0.0
    for t in range(1, 4):
        adamw_step(optimizer, {'w': holder.w}, {'w': torch.ones(1, dtype=DTYPE)})
        w *= 1 - lr * decay
        m = beta1 * m + (1 - beta1)
        v = beta2 * v + (1 - beta2)
        m_hat, v_hat = m / (1 - beta1 ** t), v / (1 - beta2 ** t)
        w -= lr * m_hat / (v_hat ** 0.5 + eps)
        assert abs(float(holder.w) - w) <= 1e-12, t


def test_adamw_zero_gradient_only_decays():
    holder = _holder(2.0)
    optimizer = build_optimizer(holder, TrainingConfig(lr=0.5, weight_decay=0.1))
    adamw_step(optimizer, {'w': holder.w}, {'w': torch.zeros(1, dtype=DTYPE)})
    assert abs(float(holder.w) - 2.0 * (1 - 0.05)) <= 1e-12


def test_adamw_rejects_non_finite_gradient(tmp_path):
    holder = _holder(1.0)
    optimizer = build_optimizer(holder, TrainingConfig())
    with pytest.raises(DivergenceError) as excinfo:
        adamw_step(optimizer, {'w': holder.w}, {'w': torch.tensor([float('nan')], dtype=DTYPE)},
                   last_checkpoint=tmp_path / 'last.ckpt')
    assert excinfo.value.last_checkpoint == tmp_path / 'last.ckpt'
    assert float(holder.w) == 1.0


def test_adamw_rejects_shape_mismatch():
    holder = _holder(1.0)
    optimizer = build_optimizer(holder, TrainingConfig())
    with pytest.raises(DimensionError):
        adamw_step(optimizer, {'w': holder.w}, {'w': torch.zeros(2, dtype=DTYPE)})
