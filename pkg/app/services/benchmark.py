"""
Scaling Benchmark
=================
Tempo por passo e memória auxiliar instrumentada da camada de atenção ao
longo de comprimentos de sequência crescentes
"""

import resource
import statistics
import sys
import time
from typing import Dict, List, Optional, Sequence

import torch

from app.core.autodiff import DTYPE
from app.core.logging import get_logger
from app.core.seeding import make_generator
from app.schemas.config import BenchSection, LabConfig, parse_variant
from app.schemas.records import BenchResult, CheckResult
from app.services.attention import MultiHeadAttention
from app.utils.alloc import track_allocations

logger = get_logger(__name__)

RATIO_PAIR = (1024, 4096)


def os_peak_kb() -> int:
    """Pico de RSS do processo em KiB (informativo; depende do SO)"""
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # macOS reporta em bytes
    return peak // 1024 if sys.platform == 'darwin' else peak


def measure_attention(layer: MultiHeadAttention, length: int, batch: int, d_model: int,
                      trials: int, warmup: int, generator: torch.Generator) -> Dict[str, float]:
    """
    Mede uma camada em um comprimento

    Args:
        layer: Camada de atenção (modo avaliação)
        length: Comprimento L
        batch: Tamanho do lote
        d_model: Largura da entrada
        trials: Repetições medidas
        warmup: Repetições descartadas
        generator: Gerador das entradas

    Returns:
        Mediana do tempo por passo e pico de bytes auxiliares
    """
    x = torch.randn(batch, length, d_model, generator=generator, dtype=DTYPE)
    times = []
    peak = 0
    with torch.no_grad():
        for _ in range(warmup):
            layer(x)
        for _ in range(trials):
            with track_allocations() as counter:
                start = time.perf_counter()
                layer(x)
                times.append(time.perf_counter() - start)
            peak = max(peak, counter.peak)
    return {'seconds': statistics.median(times), 'aux_bytes': peak}


def run_scaling_bench(variants: Sequence[str], lengths: Sequence[int], trials: int,
                      lab: Optional[LabConfig] = None, seed: int = 0) -> List[BenchResult]:
    """
    Varre (variante, L) em série; falta de memória vira linha de falha

    Args:
        variants: Variantes a medir
        lengths: Comprimentos
        trials: Repetições por ponto
        lab: Configuração (M, d_q, cabeças fixos ao longo de L)
        seed: Semente raiz

    Returns:
        Uma linha por (variante, L)
    """
    lab = lab or LabConfig()
    bench: BenchSection = lab.bench
    d_model = lab.model.d_model
    results = []

    for variant in variants:
        layer = MultiHeadAttention(d_model, lab.attention_config(variant), seed=seed, label=f"bench.{variant}")
        layer.eval()
        generator = make_generator(seed, 'bench', variant)

        for length in lengths:
            try:
                measured = measure_attention(layer, length, bench.batch, d_model,
                                             trials, bench.warmup, generator)
                row = BenchResult(
                    variant=variant,
                    length=length,
                    seconds_per_step=measured['seconds'],
                    aux_bytes=int(measured['aux_bytes']),
                    steps=trials,
                    os_peak_kb=os_peak_kb(),
                )
                logger.info(
                    f"[bench] {variant} L={length}: {row.seconds_per_step * 1e3:.3f} ms/passo, "
                    f"aux={row.aux_bytes} bytes"
                )
            except (MemoryError, RuntimeError) as e:
                logger.warning(f"[bench] {variant} L={length} falhou: {e}")
                row = BenchResult(variant=variant, length=length, failed=True, error=str(e), steps=0)
            results.append(row)

    return results


def _by_variant(results: Sequence[BenchResult]) -> Dict[str, Dict[int, BenchResult]]:
    table: Dict[str, Dict[int, BenchResult]] = {}
    for row in results:
        if not row.failed:
            table.setdefault(row.variant, {})[row.length] = row
    return table


def check_scaling(results: Sequence[BenchResult], bench: BenchSection) -> List[CheckResult]:
    """
    Critérios de escala: razão de tempo entre L=4096 e L=1024 (≤ limite para
    variantes kernelizadas, ≥ limite para softmax) e memória auxiliar plana
    nas variantes kernelizadas

    Pontos ausentes ou com falha deixam o critério correspondente de fora.
    """
    checks = []
    short, long = RATIO_PAIR
    for variant, rows in _by_variant(results).items():
        kernelized = parse_variant(variant)[0] is not None

        if short in rows and long in rows:
            ratio = rows[long].seconds_per_step / rows[short].seconds_per_step
            if kernelized:
                passed, tolerance = ratio <= bench.linear_max_ratio, bench.linear_max_ratio
            else:
                passed, tolerance = ratio >= bench.softmax_min_ratio, bench.softmax_min_ratio
            checks.append(CheckResult(
                name=f"bench.time_ratio.{variant}", passed=passed, value=ratio, tolerance=tolerance,
                detail={'short': short, 'long': long},
            ))

        if kernelized and len(rows) > 1:
            sizes = [row.aux_bytes for row in rows.values()]
            spread = max(sizes) / min(sizes) - 1.0 if min(sizes) > 0 else float('inf')
            checks.append(CheckResult(
                name=f"bench.aux_flat.{variant}", passed=spread <= bench.alloc_tolerance,
                value=spread, tolerance=bench.alloc_tolerance,
                detail={'aux_bytes': {str(length): row.aux_bytes for length, row in sorted(rows.items())}},
            ))

    for check in checks:
        if not check.passed:
            logger.warning(f"Critério {check.name} não atendido: {check.value:.3f} (limite {check.tolerance})")
    return checks


def monotone_in_length(results: Sequence[BenchResult]) -> Dict[str, bool]:
    """Sanidade: tempo não decrescente em L por variante (informativo)"""
    verdict = {}
    for variant, rows in _by_variant(results).items():
        times = [rows[length].seconds_per_step for length in sorted(rows)]
        verdict[variant] = all(a <= b for a, b in zip(times, times[1:]))
    return verdict
