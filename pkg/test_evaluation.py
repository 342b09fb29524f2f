"""
Metrics against the published CrisisMMD confusion matrices, report files and split evaluation.
"""
import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from config.schema import TASK_SCHEMAS, train_config_for
from src.evaluation.evaluator import EvaluationResult, Prediction, evaluate, predict_dataset
from src.evaluation.metrics import (
    ConfusionMatrix,
    EvalReport,
    classification_report,
    confusion_matrix,
    error_breakdown,
)
from src.evaluation.reference_results import REFERENCE_SCORES, compare_with_reference, reference_matrix
from src.evaluation.report_writer import (
    MATRIX_FILE,
    PREDICTIONS_FILE,
    REPORT_FILE,
    render_confusion_matrix,
    write_report,
)
from src.models.dataset import PairDataset
from src.models.fusion import build_model
from src.text.text_cnn import TextCnnParams
from src.text.vocabulary import EMBEDDING_DIM, EmbeddingTable
from src.utils.errors import ConfigurationError, ContractError, LabelError

INFORMATIVE = ['informative', 'not_informative']


def headline(task, mode):
    return classification_report(reference_matrix(task, mode)).headline()


class TestReferenceMatrices:
    def test_text_informative(self):
        assert headline('informative', 'text') == {'accuracy': 80.8, 'precision': 81.0, 'recall': 80.8, 'f1': 80.9}

    def test_text_recall_disagrees_with_published_value(self):
        # published recall is 81.0; support-weighted recall must equal accuracy
        assert REFERENCE_SCORES[('informative', 'text')][2] == 81.0
        report = classification_report(reference_matrix('informative', 'text'))
        assert report.weighted_recall == pytest.approx(report.accuracy)

    def test_multimodal_informative(self):
        scores = headline('informative', 'multimodal')
        assert (scores['accuracy'], scores['precision'], scores['f1']) == (84.4, 84.1, 84.2)

    def test_text_humanitarian(self):
        assert headline('humanitarian', 'text')['accuracy'] == 70.4

    def test_multimodal_humanitarian(self):
        assert headline('humanitarian', 'multimodal')['accuracy'] == 78.4

    @pytest.mark.parametrize("task,computed,published", [('informative', 83.1, 83.3), ('humanitarian', 78.0, 76.8)])
    def test_image_matrices_kept_as_published(self, task, computed, published):
        assert headline(task, 'image')['accuracy'] == computed
        assert REFERENCE_SCORES[(task, 'image')][0] == published

    def test_humanitarian_axes_follow_task_order(self):
        cm = reference_matrix('humanitarian', 'text')
        assert cm.classes == list(TASK_SCHEMAS['humanitarian'].classes)
        assert cm.counts[1, 1] == 85  # rescue / rescue
        assert cm.counts[4, 4] == 458  # not_humanitarian / not_humanitarian
        assert cm.total == 955

    def test_comparison_rows(self):
        report = classification_report(reference_matrix('informative', 'text'))
        rows = {row.metric: row for row in compare_with_reference(report, 'informative', 'text')}
        assert rows['accuracy'].delta == 0.0
        assert rows['recall'].delta == -0.2
        assert compare_with_reference(report, 'informative', 'unknown') == []


class TestMetrics:
    def test_constant_majority_prediction(self):
        gold = [0] * 60 + [1] * 40
        report = classification_report(confusion_matrix(gold, [0] * 100, 2))
        assert report.headline() == {'accuracy': 60.0, 'precision': 36.0, 'recall': 60.0, 'f1': 45.0}

    def test_perfect_predictions(self, rng):
        gold = rng.integers(0, 5, size=50)
        report = classification_report(confusion_matrix(gold, gold, 5))
        assert report.headline() == {'accuracy': 100.0, 'precision': 100.0, 'recall': 100.0, 'f1': 100.0}

    def test_absent_class_scores_zero_without_nan(self):
        report = classification_report(ConfusionMatrix(np.array([[5, 0, 0], [0, 3, 0], [0, 0, 0]])))
        absent = report.per_class[2]
        assert (absent.precision, absent.recall, absent.f1, absent.support) == (0.0, 0.0, 0.0, 0)
        assert report.macro_f1 == pytest.approx(2 / 3)
        assert report.weighted_f1 == 1.0

    def test_never_predicted_class(self):
        report = classification_report(ConfusionMatrix(np.array([[4, 0], [3, 0]])))
        assert report.per_class[1].precision == 0.0
        assert np.isfinite(report.weighted_f1)

    def test_example_order_does_not_matter(self, rng):
        gold = rng.integers(0, 3, size=40)
        pred = rng.integers(0, 3, size=40)
        order = rng.permutation(40)
        assert_allclose(confusion_matrix(gold, pred, 3).counts, confusion_matrix(gold[order], pred[order], 3).counts)

    def test_matches_a_direct_count(self, rng):
        gold = rng.integers(0, 4, size=300)
        pred = np.where(rng.random(300) < 0.6, gold, rng.integers(0, 4, size=300))
        report = classification_report(confusion_matrix(gold, pred, 4))

        weighted = {'precision': 0.0, 'recall': 0.0, 'f1': 0.0}
        for k in range(4):
            tp = sum(1 for g, p in zip(gold, pred) if g == k and p == k)
            predicted = sum(1 for p in pred if p == k)
            actual = sum(1 for g in gold if g == k)
            precision = tp / predicted if predicted else 0.0
            recall = tp / actual if actual else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            weighted['precision'] += actual / 300 * precision
            weighted['recall'] += actual / 300 * recall
            weighted['f1'] += actual / 300 * f1
            assert report.per_class[k].f1 == pytest.approx(f1)

        assert report.accuracy == pytest.approx(np.mean(gold == pred))
        assert report.weighted_precision == pytest.approx(weighted['precision'])
        assert report.weighted_recall == pytest.approx(weighted['recall'])
        assert report.weighted_f1 == pytest.approx(weighted['f1'])

    def test_out_of_range_prediction(self):
        with pytest.raises(LabelError) as excinfo:
            confusion_matrix([0, 1, 1], [0, 2, 1], 2)
        assert excinfo.value.index == 1

    def test_empty_matrix(self):
        with pytest.raises(ContractError):
            classification_report(ConfusionMatrix(np.zeros((2, 2), dtype=np.int64)))

    def test_error_breakdown(self):
        errors = error_breakdown(reference_matrix('informative', 'text'), 0)
        assert (errors.false_negatives, errors.false_positives) == (155, 139)
        assert errors.missed_as == {'not_informative': 155}
        with pytest.raises(LabelError):
            error_breakdown(reference_matrix('informative', 'text'), 2)

    def test_percent_rounding(self):
        assert EvalReport.percent(0.80834) == 80.8


class TestReportFiles:
    def test_rows_are_human_labels(self):
        text = render_confusion_matrix(ConfusionMatrix(np.array([[1, 2], [3, 4]]), INFORMATIVE))
        lines = text.splitlines()
        assert lines[0].strip() == 'Predicted'
        assert lines[2].startswith('Human') and lines[2].split()[-2:] == ['1', '2']
        assert lines[3].split()[-2:] == ['3', '4']
        assert 'Inform: informative' in lines

    def test_written_files(self, tmp_path):
        cm = ConfusionMatrix(np.array([[2, 1], [0, 1]]), INFORMATIVE)
        predictions = [Prediction('a:1', 0, 0, [0.9, 0.1]), Prediction('b:1', 0, 0, [0.8, 0.2]),
                       Prediction('c:1', 0, 1, [0.4, 0.6]), Prediction('d:1', 1, 1, [0.3, 0.7])]
        result = EvaluationResult(classification_report(cm), cm, predictions)

        paths = write_report(result, tmp_path / 'eval', task='informative', mode='text', split='test')
        assert [p.name for p in paths] == [REPORT_FILE, MATRIX_FILE, PREDICTIONS_FILE]

        document = json.loads((tmp_path / 'eval' / REPORT_FILE).read_text(encoding='utf-8'))
        assert document['metrics']['accuracy'] == 0.75
        assert set(document['metrics']['weighted']) == set(document['metrics']['macro']) == {'precision', 'recall', 'f1'}
        assert document['confusion_matrix']['counts'] == [[2, 1], [0, 1]]
        assert [row['metric'] for row in document['reference']] == ['accuracy', 'precision', 'recall', 'f1']

        table = pd.read_csv(tmp_path / 'eval' / PREDICTIONS_FILE, sep='\t')
        assert list(table.columns) == ['key', 'gold', 'predicted', 'p_informative', 'p_not_informative']
        assert table.loc[2, 'predicted'] == 'not_informative'


class TestEvaluate:
    @pytest.fixture
    def model_and_data(self, rng):
        matrix = rng.uniform(-0.25, 0.25, (20, EMBEDDING_DIM)).astype(np.float32)
        matrix[0] = 0
        config = train_config_for('text', text_hidden=16)
        model = build_model(config, text_branch=TextCnnParams(EmbeddingTable(matrix), 5, 2, hidden=16))
        data = PairDataset(labels=np.arange(10) % 2, text=rng.integers(1, 20, size=(10, 5)),
                           keys=[f"t{i}:img" for i in range(10)])
        return model, data

    def test_report_covers_every_example(self, model_and_data):
        model, data = model_and_data
        result = evaluate(model, data, TASK_SCHEMAS['informative'], batch_size=4)
        assert result.matrix.total == 10
        assert [p.key for p in result.predictions] == data.keys
        assert all(sum(p.probabilities) == pytest.approx(1.0) for p in result.predictions)

    def test_threaded_inference_keeps_order(self, model_and_data):
        model, data = model_and_data
        serial = predict_dataset(model, data, batch_size=3, max_workers=1)
        threaded = predict_dataset(model, data, batch_size=3, max_workers=3)
        assert_allclose(serial[1], threaded[1])

    def test_task_with_a_different_class_count(self, model_and_data):
        model, data = model_and_data
        with pytest.raises(ConfigurationError):
            evaluate(model, data, TASK_SCHEMAS['humanitarian'])
