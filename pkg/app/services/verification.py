"""
Acceptance Checks
=================
Verificações de aceitação por oráculo: equivalência entre as formas linear
e quadrática da atenção, aproximação do kernel Gaussiano, auto-similaridade
RKS, FastFood rápido contra denso e as formas fechadas do MSE contra Monte
Carlo
"""

import math
from typing import List, Sequence

import torch

from app.core.autodiff import DTYPE
from app.core.logging import get_logger
from app.core.seeding import make_generator
from app.schemas.config import KERNEL_VARIANTS, FeatureMapSpec, KernelCheckSection, LabConfig, MseSection, parse_variant
from app.schemas.records import CheckResult
from app.services.analysis import MseInputs, mc_mse, mse_prf_closed_form, mse_rks_closed_form
from app.services.attention import feature_kernel, linear_kernel_attention, quadratic_kernel_attention
from app.services.fastfood_sampler import fastfood_dense, fastfood_matrix_apply
from app.services.feature_maps import feature_map, gaussian_kernel, kernel_estimate
from app.services.spectral import FrequencyMatrix, build_sampler

logger = get_logger(__name__)

ORACLE_INPUT_SCALE = 0.25
PAIR_SCALE = 0.5
SELF_SIMILARITY_TOL = 1e-12
FASTFOOD_TOL = 1e-10
FASTFOOD_BLOCKS = 2


def _report(check: CheckResult) -> CheckResult:
    status = "✅" if check.passed else "❌"
    message = f"{status} {check.name}: valor={check.value:.3g} (tolerância {check.tolerance:.3g})"
    if check.passed:
        logger.info(message)
    else:
        logger.warning(message)
    return check


def oracle_equivalence(lab: LabConfig, seed: int, variants: Sequence[str] = KERNEL_VARIANTS) -> List[CheckResult]:
    """
    Forma linear contra o oráculo quadrático com κ = φᵀφ, por variante

    Args:
        lab: Configuração (M, d_q, d_v, samplers)
        seed: Semente raiz
        variants: Variantes kernelizadas

    Returns:
        Uma verificação por variante (pior diferença absoluta)
    """
    section = lab.kernel
    d_q, d_v = lab.attention.d_query, lab.attention.d_value
    checks = []
    for variant in variants:
        sampler_kind, feature = parse_variant(variant)
        if sampler_kind is None:
            continue
        spec = lab.featmap.model_copy(update={'kind': feature})
        sampler = build_sampler(lab.sampler_config(sampler_kind), dim=d_q, samples=spec.samples,
                                seed=seed, label=f"oracle.{variant}")
        generator = make_generator(seed, 'oracle', variant)

        worst = 0.0
        with torch.no_grad():
            for _ in range(section.oracle_instances):
                sampler.redraw()
                omega = sampler()
                for length in section.oracle_lengths:
                    Q = torch.randn(1, length, d_q, generator=generator, dtype=DTYPE) * ORACLE_INPUT_SCALE
                    K = torch.randn(1, length, d_q, generator=generator, dtype=DTYPE) * ORACLE_INPUT_SCALE
                    V = torch.randn(1, length, d_v, generator=generator, dtype=DTYPE)
                    linear = linear_kernel_attention(Q, K, V, spec, omega)
                    quadratic = quadratic_kernel_attention(Q, K, V, feature_kernel(spec, omega), spec.eps)
                    worst = max(worst, float((linear - quadratic).abs().max()))

        checks.append(_report(CheckResult(
            name=f"oracle_equivalence.{variant}",
            passed=worst <= section.oracle_tol,
            value=worst,
            tolerance=section.oracle_tol,
            detail={'instances': section.oracle_instances, 'lengths': list(section.oracle_lengths)},
        )))
    return checks


def _per_sample_terms(q: torch.Tensor, k: torch.Tensor, spec: FeatureMapSpec,
                      omega: FrequencyMatrix) -> torch.Tensor:
    """Termos (..., M) cuja média é a estimativa φ(q)ᵀφ(k)"""
    products = feature_map(q, spec, omega) * feature_map(k, spec, omega) * omega.samples
    if spec.kind == 'rks':
        half = omega.samples
        return products[..., :half] + products[..., half:]
    return products


def kernel_approximation(section: KernelCheckSection, seed: int) -> List[CheckResult]:
    """
    Estimativas RKS e PRF com Ω normal padrão contra e^{−‖q−k‖²/2}

    Cada par precisa cair a no máximo ``sigmas`` erros padrão de Monte Carlo
    do valor exato; ``outlier_fraction`` (padrão 0) admite pares fora da banda.
    """
    generator = make_generator(seed, 'kernel_approximation')
    q = torch.randn(section.pairs, section.dim, generator=generator, dtype=DTYPE) * PAIR_SCALE
    k = torch.randn(section.pairs, section.dim, generator=generator, dtype=DTYPE) * PAIR_SCALE
    exact = gaussian_kernel(q, k)
    allowed = math.floor(section.outlier_fraction * section.pairs)

    checks = []
    for kind in ('rks', 'prf'):
        spec = FeatureMapSpec(kind=kind, samples=section.samples)
        omega = FrequencyMatrix(
            rows=torch.randn(section.samples, section.dim, generator=generator, dtype=DTYPE),
            sampler='normal',
        )
        terms = _per_sample_terms(q, k, spec, omega)
        estimate = terms.mean(dim=-1)
        stderr = terms.std(dim=-1) / math.sqrt(section.samples)
        z = (estimate - exact).abs() / stderr
        outliers = int((z > section.sigmas).sum())
        checks.append(_report(CheckResult(
            name=f"kernel_approximation.{kind}",
            passed=outliers <= allowed,
            value=float(z.max()),
            tolerance=section.sigmas,
            detail={'pairs': section.pairs, 'outliers': outliers, 'allowed_outliers': allowed,
                    'outlier_fraction': section.outlier_fraction,
                    'samples': section.samples},
        )))
    return checks


def rks_self_similarity(section: KernelCheckSection, seed: int) -> CheckResult:
    """κ̂(x, x) = 1 para x e Ω quaisquer"""
    generator = make_generator(seed, 'self_similarity')
    x = torch.randn(section.self_similarity, section.dim, generator=generator, dtype=DTYPE) * 3.0
    omega = FrequencyMatrix(rows=torch.randn(64, section.dim, generator=generator, dtype=DTYPE) * 2.0)
    values = kernel_estimate(x, x, FeatureMapSpec(kind='rks', samples=64), omega)
    worst = float((values - 1.0).abs().max())
    return _report(CheckResult(
        name="rks_self_similarity",
        passed=worst <= SELF_SIMILARITY_TOL,
        value=worst,
        tolerance=SELF_SIMILARITY_TOL,
        detail={'points': section.self_similarity},
    ))


def fastfood_fast_vs_dense(section: KernelCheckSection, seed: int) -> List[CheckResult]:
    """Aplicação rápida (duas WHT) contra a multiplicação por V denso"""
    generator = make_generator(seed, 'fastfood_dense')
    checks = []
    for d in section.fastfood_dims:
        scale = torch.rand(FASTFOOD_BLOCKS, d, generator=generator, dtype=DTYPE) + 0.5
        gauss = torch.randn(FASTFOOD_BLOCKS, d, generator=generator, dtype=DTYPE)
        sign = torch.where(torch.rand(FASTFOOD_BLOCKS, d, generator=generator) < 0.5, -1.0, 1.0).to(DTYPE)
        perm = torch.stack([torch.randperm(d, generator=generator) for _ in range(FASTFOOD_BLOCKS)])
        x = torch.randn(8, d, generator=generator, dtype=DTYPE)

        fast = fastfood_matrix_apply(x, scale, gauss, sign, perm)
        dense = x @ fastfood_dense(scale, gauss, sign, perm).T
        worst = float((fast - dense).abs().max())
        checks.append(_report(CheckResult(
            name=f"fastfood_dense.d{d}",
            passed=worst <= FASTFOOD_TOL,
            value=worst,
            tolerance=FASTFOOD_TOL,
        )))

    # caso à mão: fatores identidade em d=4 dão V = 2I
    ones = torch.ones(1, 4, dtype=DTYPE)
    identity = fastfood_dense(ones, ones, ones, torch.arange(4).unsqueeze(0))
    worst = float((identity - 2.0 * torch.eye(4, dtype=DTYPE)).abs().max())
    checks.append(_report(CheckResult(
        name="fastfood_dense.identity_d4", passed=worst <= FASTFOOD_TOL, value=worst, tolerance=FASTFOOD_TOL,
    )))
    return checks


def run_kernel_checks(lab: LabConfig, seed: int) -> List[CheckResult]:
    """Todas as verificações do comando kernel-check"""
    checks = []
    checks.extend(oracle_equivalence(lab, seed))
    checks.extend(kernel_approximation(lab.kernel, seed))
    checks.append(rks_self_similarity(lab.kernel, seed))
    checks.extend(fastfood_fast_vs_dense(lab.kernel, seed))
    return checks


def random_mse_inputs(section: MseSection, generator: torch.Generator) -> MseInputs:
    """Um conjunto aleatório (q, k, μ, S) na escala configurada"""
    def draw(*shape: int) -> torch.Tensor:
        return torch.randn(*shape, generator=generator, dtype=DTYPE) * section.input_scale

    return MseInputs(q=draw(section.dim), k=draw(section.dim), mean=draw(section.dim),
                     scale=draw(section.dim, section.dim), m=section.m)


def _relative(measured: float, predicted: float) -> float:
    if predicted == 0.0:
        return 0.0 if measured == 0.0 else math.inf
    return abs(measured - predicted) / abs(predicted)


def verify_mse(section: MseSection, seed: int) -> List[CheckResult]:
    """
    Formas fechadas do MSE contra Monte Carlo

    RKS: concordância relativa e cota 2/m. PRF: concordância da forma com
    normas ao quadrado; a forma com normas simples precisa falhar em ao menos
    um conjunto.

    Returns:
        Verificações rks_mse, rks_bound, prf_mse e prf_unsquared_rejected
    """
    generator = make_generator(seed, 'verify_mse')
    bound = 2.0 / section.m
    rks_errors, prf_errors, unsquared_errors = [], [], []
    rks_worst_value = 0.0
    sets = []

    for index in range(section.sets):
        inp = random_mse_inputs(section, generator)
        rks_closed = mse_rks_closed_form(inp)
        rks_mc, rks_se = mc_mse('rks', inp, section.trials, seed=seed + index, chunk=section.chunk)
        prf_closed = mse_prf_closed_form(inp)
        prf_unsquared = mse_prf_closed_form(inp, squared=False)
        prf_mc, prf_se = mc_mse('prf', inp, section.trials, seed=seed + index, chunk=section.chunk)

        rks_errors.append(_relative(rks_mc, rks_closed))
        prf_errors.append(_relative(prf_mc, prf_closed))
        unsquared_errors.append(_relative(prf_mc, prf_unsquared))
        rks_worst_value = max(rks_worst_value, rks_closed)
        sets.append({
            'rks_closed': rks_closed, 'rks_mc': rks_mc, 'rks_stderr': rks_se,
            'prf_closed': prf_closed, 'prf_unsquared': prf_unsquared, 'prf_mc': prf_mc, 'prf_stderr': prf_se,
        })
        logger.debug(f"Conjunto {index}: RKS {rks_closed:.4g}/{rks_mc:.4g}, PRF {prf_closed:.4g}/{prf_mc:.4g}")

    return [
        _report(CheckResult(name="rks_mse", passed=max(rks_errors) <= section.rel_tol,
                            value=max(rks_errors), tolerance=section.rel_tol, detail={'sets': sets})),
        _report(CheckResult(name="rks_bound", passed=rks_worst_value <= bound,
                            value=rks_worst_value, tolerance=bound)),
        _report(CheckResult(name="prf_mse", passed=max(prf_errors) <= section.rel_tol,
                            value=max(prf_errors), tolerance=section.rel_tol)),
        _report(CheckResult(name="prf_unsquared_rejected", passed=max(unsquared_errors) > section.rel_tol,
                            value=max(unsquared_errors), tolerance=section.rel_tol)),
    ]
