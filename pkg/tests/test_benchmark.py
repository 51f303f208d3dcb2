"""
Testes do benchmark de escala
"""

import pytest

from app.schemas.config import BenchSection
from app.schemas.records import BenchResult
from app.services import benchmark
from app.services.benchmark import check_scaling, monotone_in_length, run_scaling_bench


def _row(variant: str, length: int, seconds: float, aux: int = 1024, failed: bool = False) -> BenchResult:
    return BenchResult(variant=variant, length=length, seconds_per_step=None if failed else seconds,
                       aux_bytes=None if failed else aux, steps=0 if failed else 3, failed=failed)


def test_sweep_rows_and_memory_shape(tiny_lab):
    results = run_scaling_bench(['gmm-rks', 'softmax'], [64, 128], trials=2, lab=tiny_lab)
    assert [(row.variant, row.length) for row in results] == [
        ('gmm-rks', 64), ('gmm-rks', 128), ('softmax', 64), ('softmax', 128),
    ]
    assert all(not row.failed and row.seconds_per_step > 0 and row.steps == 2 for row in results)

    kernel = {row.length: row.aux_bytes for row in results if row.variant == 'gmm-rks'}
    softmax = {row.length: row.aux_bytes for row in results if row.variant == 'softmax'}
    assert kernel[64] == kernel[128]
    assert softmax[128] == 4 * softmax[64]


def test_failed_point_does_not_stop_sweep(tiny_lab, monkeypatch):
    original = benchmark.measure_attention

    def flaky(layer, length, *args, **kwargs):
        if length == 32:
            raise RuntimeError("sem memória")
        return original(layer, length, *args, **kwargs)

    monkeypatch.setattr(benchmark, 'measure_attention', flaky)
    results = run_scaling_bench(['fastfood-prf'], [16, 32, 64], trials=1, lab=tiny_lab)
    assert [row.failed for row in results] == [False, True, False]
    assert results[1].error == "sem memória"


def test_check_scaling_ratios():
    bench = BenchSection()
    results = [
        _row('gmm-prf', 1024, 1.0), _row('gmm-prf', 4096, 4.5),
        _row('softmax', 1024, 1.0, aux=10), _row('softmax', 4096, 16.0, aux=160),
    ]
    checks = {check.name: check for check in check_scaling(results, bench)}
    assert checks['bench.time_ratio.gmm-prf'].passed
    assert checks['bench.time_ratio.gmm-prf'].value == pytest.approx(4.5)
    assert checks['bench.time_ratio.softmax'].passed
    assert checks['bench.aux_flat.gmm-prf'].passed
    assert 'bench.aux_flat.softmax' not in checks


def test_check_scaling_failures():
    bench = BenchSection()
    results = [
        _row('gmm-rks', 1024, 1.0, aux=100), _row('gmm-rks', 4096, 16.0, aux=400),
        _row('softmax', 1024, 1.0), _row('softmax', 4096, 3.0),
    ]
    checks = {check.name: check.passed for check in check_scaling(results, bench)}
    assert checks == {
        'bench.time_ratio.gmm-rks': False,
        'bench.aux_flat.gmm-rks': False,
        'bench.time_ratio.softmax': False,
    }


def test_missing_points_skip_ratio():
    results = [_row('gmm-rks', 1024, 1.0), _row('gmm-rks', 4096, 0.0, failed=True), _row('gmm-rks', 2048, 2.0)]
    names = [check.name for check in check_scaling(results, BenchSection())]
    assert names == ['bench.aux_flat.gmm-rks']


def test_monotone_in_length():
    results = [_row('softmax', 16, 1.0), _row('softmax', 32, 2.0),
               _row('gmm-rks', 16, 2.0), _row('gmm-rks', 32, 1.0)]
    assert monotone_in_length(results) == {'softmax': True, 'gmm-rks': False}
