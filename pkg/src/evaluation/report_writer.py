import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from src.evaluation.evaluator import EvaluationResult
from src.evaluation.metrics import ConfusionMatrix, EvalReport, error_breakdown
from src.evaluation.reference_results import compare_with_reference

logger = logging.getLogger(__name__)

REPORT_FILE = 'report.json'
MATRIX_FILE = 'confusion_matrix.txt'
PREDICTIONS_FILE = 'predictions.tsv'


def _abbreviation(label: str) -> str:
    return label.split('_')[0][:6].capitalize()


def render_confusion_matrix(cm: ConfusionMatrix) -> str:
    """Rows are the human label, columns the prediction, with a legend for the abbreviations"""
    names = cm.classes or [str(k) for k in range(cm.num_classes)]
    short = [_abbreviation(name) for name in names]
    width = max(6, max(len(s) for s in short), len(str(int(cm.counts.max(initial=0)))))

    lines = [" " * (width + 8) + "Predicted"]
    lines.append(" " * 8 + "".rjust(width) + " " + " ".join(s.rjust(width) for s in short))
    for k, row in enumerate(cm.counts):
        prefix = "Human   " if k == 0 else " " * 8
        lines.append(prefix + short[k].rjust(width) + " " + " ".join(str(int(v)).rjust(width) for v in row))
    lines.append("")
    lines.extend(f"{s}: {name}" for s, name in zip(short, names))
    return "\n".join(lines) + "\n"


def report_document(report: EvalReport, cm: ConfusionMatrix, task: Optional[str] = None,
                    mode: Optional[str] = None, split: Optional[str] = None) -> Dict:
    document = {
        'task': task,
        'mode': mode,
        'split': split,
        'metrics': report.to_dict(),
        'confusion_matrix': cm.to_dict(),
        'errors': [vars(error_breakdown(cm, k)) for k in range(cm.num_classes)],
    }
    if task and mode:
        document['reference'] = [
            {'metric': row.metric, 'ours': row.ours, 'reference': row.reference, 'delta': row.delta}
            for row in compare_with_reference(report, task, mode)
        ]
    return document


def write_report(result: EvaluationResult, out_dir: Union[str, Path], task: Optional[str] = None,
                 mode: Optional[str] = None, split: Optional[str] = None,
                 classes: Optional[List[str]] = None) -> List[Path]:
    """report.json + confusion_matrix.txt + predictions.tsv; returns the written paths"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report_path = out_dir / REPORT_FILE
    with open(report_path, 'w', encoding='utf-8') as handle:
        json.dump(report_document(result.report, result.matrix, task, mode, split), handle,
                  indent=2, sort_keys=True)
        handle.write('\n')

    matrix_path = out_dir / MATRIX_FILE
    matrix_path.write_text(render_confusion_matrix(result.matrix), encoding='utf-8')

    names = classes or result.matrix.classes or []
    rows = []
    for p in result.predictions:
        row = {'key': p.key, 'gold': names[p.gold] if names else p.gold,
               'predicted': names[p.predicted] if names else p.predicted}
        for k, prob in enumerate(p.probabilities):
            row[f"p_{names[k] if names else k}"] = round(prob, 6)
        rows.append(row)
    predictions_path = out_dir / PREDICTIONS_FILE
    pd.DataFrame(rows).to_csv(predictions_path, sep='\t', index=False, lineterminator='\n')

    logger.info(f"Wrote evaluation report to {out_dir}")
    return [report_path, matrix_path, predictions_path]
