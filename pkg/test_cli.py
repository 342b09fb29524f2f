"""
End-to-end runs of the experiment commands on the synthetic fixture.
"""
import json
import logging
import shutil

import pytest

from conftest import FIXTURE_TSV, GOLDEN_JSON
from run_experiment import CHECKPOINT_FILE, CONFIG_FILE, HISTORY_FILE, main
from src.evaluation.report_writer import MATRIX_FILE, PREDICTIONS_FILE, REPORT_FILE
from src.utils import logger as log_setup

TEXT_FLAGS = ['--mode', 'text', '--max-epochs', '3', '--batch-size', '16', '--text-hidden', '16', '--seed', '3']


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    return tmp_path_factory.mktemp('cli')


@pytest.fixture(scope='module')
def prepared(workspace):
    out = workspace / 'prepared'
    code = main(['--log-dir', str(workspace / 'logs'), 'prepare', '--input', str(FIXTURE_TSV),
                 '--out', str(out), '--seed', '1234'])
    assert code == 0
    return out


@pytest.fixture(scope='module')
def text_run(workspace, prepared):
    code = main(['--log-dir', str(workspace / 'logs'), '--quiet', 'train', '--data-dir', str(prepared),
                 '--output-dir', str(workspace / 'runs'), '--run-name', 'text-a', *TEXT_FLAGS])
    assert code == 0
    return workspace / 'runs' / 'text-a'


def run(workspace, *argv):
    return main(['--log-dir', str(workspace / 'logs'), '--quiet', *argv])


def test_prepare_matches_golden_counts(prepared):
    golden = json.loads(GOLDEN_JSON.read_text(encoding='utf-8'))
    manifest = json.loads((prepared / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['totals'] == golden['totals']
    assert manifest['counts'] == golden['counts']
    assert manifest['curation'] == golden['curation']
    assert manifest['image_root'] == str(FIXTURE_TSV.parent.resolve())


def test_prepare_missing_input_is_a_usage_error(tmp_path):
    out = tmp_path / 'never'
    code = main(['--log-dir', str(tmp_path / 'logs'), 'prepare', '--input', str(tmp_path / 'absent.tsv'),
                 '--out', str(out)])
    assert code == 2
    assert not out.exists()


def test_unknown_command_exits_two(tmp_path):
    assert main(['--log-dir', str(tmp_path), 'explode']) == 2


def test_train_writes_a_complete_run(text_run):
    for name in (CONFIG_FILE, 'manifest.json', HISTORY_FILE, CHECKPOINT_FILE, 'train.log'):
        assert (text_run / name).exists(), name
    history = [json.loads(line) for line in (text_run / HISTORY_FILE).read_text(encoding='utf-8').splitlines()]
    assert [h['epoch'] for h in history] == [1, 2, 3]
    config = json.loads((text_run / CONFIG_FILE).read_text(encoding='utf-8'))
    assert config['lr'] == 0.01 and config['patience'] == 10


def test_training_is_reproducible(workspace, prepared, text_run):
    code = run(workspace, 'train', '--data-dir', str(prepared), '--output-dir', str(workspace / 'runs'),
               '--run-name', 'text-b', *TEXT_FLAGS)
    assert code == 0
    other = workspace / 'runs' / 'text-b'
    assert (other / HISTORY_FILE).read_bytes() == (text_run / HISTORY_FILE).read_bytes()
    assert (other / CHECKPOINT_FILE).read_bytes() == (text_run / CHECKPOINT_FILE).read_bytes()


def test_finished_run_is_not_overwritten(workspace, prepared, text_run):
    before = (text_run / CHECKPOINT_FILE).read_bytes()
    code = run(workspace, 'train', '--data-dir', str(prepared), '--output-dir', str(workspace / 'runs'),
               '--run-name', 'text-a', *TEXT_FLAGS)
    assert code == 2
    assert (text_run / CHECKPOINT_FILE).read_bytes() == before


def test_evaluate_writes_reports(workspace, text_run):
    out = workspace / 'eval-text'
    assert run(workspace, 'evaluate', '--checkpoint', str(text_run), '--split', 'test', '--out', str(out)) == 0
    for name in (REPORT_FILE, MATRIX_FILE, PREDICTIONS_FILE):
        assert (out / name).exists()
    document = json.loads((out / REPORT_FILE).read_text(encoding='utf-8'))
    assert document['split'] == 'test' and document['mode'] == 'text'
    assert {'weighted', 'macro'} <= set(document['metrics'])
    assert sum(map(sum, document['confusion_matrix']['counts'])) == 8


def test_evaluate_refuses_splits_of_another_task(workspace, prepared, text_run):
    other = workspace / 'prepared-humanitarian'
    shutil.copytree(prepared, other)
    manifest = json.loads((other / 'manifest.json').read_text(encoding='utf-8'))
    manifest['task'] = 'humanitarian'
    (other / 'manifest.json').write_text(json.dumps(manifest), encoding='utf-8')
    code = run(workspace, 'evaluate', '--checkpoint', str(text_run), '--data-dir', str(other),
               '--out', str(workspace / 'eval-never'))
    assert code == 2
    assert not (workspace / 'eval-never').exists()


def test_predict_prints_json_last(workspace, text_run, capsys):
    capsys.readouterr()
    code = run(workspace, 'predict', '--checkpoint', str(text_run / CHECKPOINT_FILE),
               '--text', 'Bridge collapsed near the river, rescue teams on site')
    assert code == 0
    document = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert document['label'] in ('informative', 'not_informative')
    assert sum(document['probabilities'].values()) == pytest.approx(1.0, abs=1e-5)


def test_predict_without_the_needed_modality(workspace, text_run):
    assert run(workspace, 'predict', '--checkpoint', str(text_run)) == 2


def test_report_compares_runs_with_published_numbers(workspace, text_run, capsys):
    out = workspace / 'eval-report'
    assert run(workspace, 'evaluate', '--checkpoint', str(text_run), '--out', str(out)) == 0
    capsys.readouterr()
    assert run(workspace, 'report', str(out), '--reference') == 0
    printed = capsys.readouterr().out
    assert 'eval-report' in printed


def test_report_needs_something_to_show(workspace):
    assert run(workspace, 'report') == 2


def test_gradcheck_ops(workspace):
    assert run(workspace, 'gradcheck', '--ops-only', '--max-coords', '4') == 0


def test_multimodal_warm_start_from_the_text_run(tmp_path, fixture_release, text_run):
    prepared = tmp_path / 'prepared'
    assert main(['--log-dir', str(tmp_path / 'logs'), 'prepare', '--input', str(fixture_release),
                 '--out', str(prepared), '--seed', '1234']) == 0

    code = run(tmp_path, 'train', '--data-dir', str(prepared), '--output-dir', str(tmp_path / 'runs'),
               '--run-name', 'fusion', '--mode', 'multimodal', '--max-epochs', '2', '--batch-size', '16',
               '--text-hidden', '16', '--fusion-hidden', '32', '--width-scale', '0.0625', '--image-size', '8',
               '--warm-start-text', str(text_run / CHECKPOINT_FILE), '--freeze-text', '--seed', '3')
    assert code == 0
    run_dir = tmp_path / 'runs' / 'fusion'
    config = json.loads((run_dir / CONFIG_FILE).read_text(encoding='utf-8'))
    assert config['mode'] == 'multimodal' and config['lr'] == 0.0001 and config['freeze_text']

    out = tmp_path / 'eval'
    assert run(tmp_path, 'evaluate', '--checkpoint', str(run_dir), '--split', 'dev', '--out', str(out)) == 0
    document = json.loads((out / REPORT_FILE).read_text(encoding='utf-8'))
    assert document['mode'] == 'multimodal'
    assert sum(map(sum, document['confusion_matrix']['counts'])) == 8

    image = fixture_release.parent / 'images' / '1001_0.jpg'
    assert run(tmp_path, 'predict', '--checkpoint', str(run_dir), '--text', 'flooded streets', '--image',
               str(image)) == 0


def test_log_format_comes_from_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(log_setup, 'LOG_FORMAT', '%(levelname)s|%(message)s')
    root = log_setup.setup_logging('INFO', log_dir=tmp_path, log_file='fmt.log')
    formats = {handler.formatter._fmt for handler in root.handlers if handler.formatter is not None}
    assert formats == {'%(levelname)s|%(message)s'}
    logging.getLogger('crisis.test').warning('rotating file check')
    assert 'WARNING|rotating file check' in (tmp_path / 'fmt.log').read_text(encoding='utf-8')
