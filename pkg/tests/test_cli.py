"""
Testes da linha de comando: códigos de saída, registros e precedência da semente
"""

import json
import logging
from pathlib import Path
from typing import Dict, List

import pytest

from app.cli import cli_dispatch
from app.core.config import settings
from app.core.errors import EXIT_ERROR, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION

BENCH_ARGS = ['--lengths', '16,32', '--variants', 'gmm-rks,softmax']


def read_records(path: Path) -> List[Dict]:
    return [json.loads(line) for line in path.read_text(encoding='utf-8').splitlines() if line.strip()]


@pytest.fixture
def checkpoints(tmp_path, monkeypatch) -> Path:
    directory = tmp_path / 'checkpoints'
    monkeypatch.setattr(settings, 'CHECKPOINT_DIR', directory)
    return directory


# =============================================================================
# Uso e configuração
# =============================================================================

def test_usage_errors(write_config):
    config = str(write_config())
    assert cli_dispatch(['bench', '--config', config, '--bogus']) == EXIT_USAGE
    assert cli_dispatch([]) == EXIT_USAGE
    assert cli_dispatch(['bench']) == EXIT_USAGE
    assert cli_dispatch(['bench', '--config', config, '--lengths', '16,abc']) == EXIT_USAGE
    assert cli_dispatch(['bench', '--config', config, '--variants', 'gmm-orf']) == EXIT_USAGE


def test_missing_config_names_path(tmp_path, caplog):
    missing = tmp_path / 'nope.conf'
    with caplog.at_level(logging.ERROR):
        assert cli_dispatch(['bench', '--config', str(missing)]) == EXIT_ERROR
    assert str(missing) in caplog.text


def test_unknown_config_key(write_config, tmp_path):
    config = write_config(sampler={'colour': 'red'})
    out = tmp_path / 'out.jsonl'
    assert cli_dispatch(['bench', '--config', str(config), '--out', str(out)] + BENCH_ARGS) == EXIT_ERROR


def test_invalid_section_value(write_config):
    config = write_config(featmap={'samples': 0})
    assert cli_dispatch(['bench', '--config', str(config)] + BENCH_ARGS) == EXIT_ERROR


# =============================================================================
# bench
# =============================================================================

def test_bench_records(write_config, tmp_path):
    config = write_config()
    out = tmp_path / 'bench.jsonl'
    assert cli_dispatch(['bench', '--config', str(config), '--out', str(out)] + BENCH_ARGS) == EXIT_OK

    records = read_records(out)
    assert [(r['variant'], r['L']) for r in records] == [('gmm-rks', 16), ('gmm-rks', 32),
                                                        ('softmax', 16), ('softmax', 32)]
    for record in records:
        assert record['metric'] == 'seconds_per_step'
        assert record['seed'] == 7
        assert len(record['config_hash']) == 64
        assert record['extra']['failed'] is False


def test_bench_to_stdout(write_config, capsys):
    config = write_config()
    assert cli_dispatch(['bench', '--config', str(config)] + BENCH_ARGS) == EXIT_OK
    lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    assert len(lines) == 4
    assert all(json.loads(line)['metric'] == 'seconds_per_step' for line in lines)


def test_seed_precedence(write_config, tmp_path, monkeypatch):
    config = str(write_config(seed=7))
    out = tmp_path / 'seed.jsonl'
    args = ['bench', '--config', config, '--out', str(out), '--lengths', '16', '--variants', 'softmax']

    monkeypatch.delenv('KLAB_SEED', raising=False)
    assert cli_dispatch(args) == EXIT_OK
    assert read_records(out)[0]['seed'] == 7

    monkeypatch.setenv('KLAB_SEED', '11')
    assert cli_dispatch(args) == EXIT_OK
    assert read_records(out)[0]['seed'] == 11

    assert cli_dispatch(args + ['--seed', '13']) == EXIT_OK
    assert read_records(out)[0]['seed'] == 13

    monkeypatch.setenv('KLAB_SEED', 'onze')
    assert cli_dispatch(args) == EXIT_ERROR


def test_same_seed_same_config_hash(write_config, tmp_path):
    config = str(write_config())
    hashes = []
    for name in ('a.jsonl', 'b.jsonl'):
        out = tmp_path / name
        assert cli_dispatch(['bench', '--config', config, '--out', str(out), '--lengths', '16',
                             '--variants', 'gmm-prf']) == EXIT_OK
        hashes.append(read_records(out)[0]['config_hash'])
    assert hashes[0] == hashes[1]


# =============================================================================
# kernel-check e verify-mse
# =============================================================================

def test_kernel_check_passes(write_config, tmp_path):
    # aproximação do kernel nos padrões: 100 pares, M = 65536, banda de 3 erros padrão
    config = write_config(kernel={
        'oracle_instances': 2, 'oracle_lengths': [8], 'self_similarity': 100, 'fastfood_dims': [4, 8],
    })
    out = tmp_path / 'kernel.jsonl'
    assert cli_dispatch(['kernel-check', '--config', str(config), '--out', str(out)]) == EXIT_OK

    records = {r['metric']: r for r in read_records(out)}
    assert records['oracle_equivalence.gmm-rks']['variant'] == 'gmm-rks'
    assert records['rks_self_similarity']['variant'] == 'all'
    assert {'fastfood_dense.d4', 'fastfood_dense.d8', 'fastfood_dense.identity_d4'} <= set(records)
    assert all(r['extra']['passed'] for r in records.values())
    approximation = records['kernel_approximation.prf']['extra']
    assert approximation['allowed_outliers'] == 0 and approximation['outliers'] == 0


MSE_FAST = {'sets': 3, 'trials': 100_000, 'chunk': 100_000, 'input_scale': 0.3}


def test_verify_mse_passes(write_config, tmp_path):
    config = write_config(mse=dict(MSE_FAST, rel_tol=0.1))
    out = tmp_path / 'mse.jsonl'
    assert cli_dispatch(['verify-mse', '--config', str(config), '--out', str(out)]) == EXIT_OK
    metrics = [r['metric'] for r in read_records(out)]
    assert metrics == ['rks_mse', 'rks_bound', 'prf_mse', 'prf_unsquared_rejected']


def test_verify_mse_fails_with_impossible_tolerance(write_config, tmp_path):
    config = write_config(mse=dict(MSE_FAST, rel_tol=1e-9))
    out = tmp_path / 'mse.jsonl'
    assert cli_dispatch(['verify-mse', '--config', str(config), '--out', str(out)]) == EXIT_VALIDATION
    passed = {r['metric']: r['extra']['passed'] for r in read_records(out)}
    assert passed['rks_mse'] is False


# =============================================================================
# Treino e análises sobre checkpoints
# =============================================================================

def test_training_below_target_is_validation_failure(write_config, tmp_path, checkpoints):
    config = write_config()
    out = tmp_path / 'train.jsonl'
    assert cli_dispatch(['train-synthetic', '--config', str(config), '--out', str(out),
                         '--variants', 'gmm-rks']) == EXIT_VALIDATION
    metrics = [r['metric'] for r in read_records(out)]
    assert metrics.count('val_accuracy') == 2
    assert metrics[-1] == 'final_accuracy'


def test_train_then_analyse(write_config, tmp_path, checkpoints):
    config = str(write_config(
        data={'p': 0.0},
        train={'max_steps': 100, 'eval_every': 20},
        gradstats={'repetitions': 3, 'datapoints': 10},
        stochasticity={'runs': 3, 'examples': 10},
    ))
    variants = ['--variants', 'gmm-rks,gmm-prf']

    out = tmp_path / 'train.jsonl'
    assert cli_dispatch(['train-synthetic', '--config', config, '--out', str(out)] + variants) == EXIT_OK
    tags = {(r['variant'], r['extra']['tag']) for r in read_records(out) if r['metric'] == 'checkpoint_accuracy'}
    assert ('gmm-prf', 'acc40') in tags and ('gmm-rks', 'acc40') in tags
    assert (checkpoints / 'gmm_rks_last.ckpt').is_file()

    out = tmp_path / 'grad.jsonl'
    assert cli_dispatch(['grad-stats', '--config', config, '--out', str(out)] + variants) == EXIT_OK
    records = read_records(out)
    assert {(r['variant'], r['metric']) for r in records} >= {
        ('gmm-rks', 'grad_abs_mean'), ('gmm-rks', 'grad_std'), ('gmm-prf', 'grad_abs_mean'), ('gmm-prf', 'grad_std'),
    }
    assert all(r['extra']['datapoints'] == 10 for r in records if r['metric'] == 'grad_std')

    out = tmp_path / 'stoch.jsonl'
    assert cli_dispatch(['stochasticity', '--config', config, '--out', str(out)] + variants) == EXIT_OK
    metrics = [r['metric'] for r in read_records(out) if r['variant'] == 'gmm-prf']
    assert metrics == ['rsd_mean', 'pi_mean', 'accuracy', 'va', 'agv']

    out = tmp_path / 'eig.jsonl'
    assert cli_dispatch(['eigvals', '--config', config, '--out', str(out)] + variants) == EXIT_OK
    records = read_records(out)
    # 2 variantes × 2 cabeças × (máximo, média)
    assert len(records) == 8
    assert all(len(r['extra']['eigenvalues']) == 4 for r in records)

    explicit = ['--checkpoint', str(checkpoints / 'gmm_rks_last.ckpt')]
    assert cli_dispatch(['eigvals', '--config', config] + variants + explicit) == EXIT_ERROR
    assert cli_dispatch(['eigvals', '--config', config, '--out', str(out),
                         '--variants', 'gmm-rks'] + explicit) == EXIT_OK


def test_analysis_without_checkpoint_fails(write_config, checkpoints):
    config = str(write_config())
    assert cli_dispatch(['stochasticity', '--config', config, '--variants', 'gmm-rks']) == EXIT_ERROR
