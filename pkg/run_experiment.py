#!/usr/bin/env python3
"""
Crisis tweet classification experiments.

Commands:
    prepare    curate annotations into train/dev/test splits plus a manifest
    train      train a text, image or multimodal model into runs/<name>/
    evaluate   score a checkpoint on one split and write report files
    predict    classify a single tweet text and/or image
    gradcheck  finite-difference verification of every backward rule
    report     compare evaluation reports side by side (and with published numbers)

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""
import argparse
import json
import logging
import os
import platform
import shutil
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from config.config import (DATA_ROOT, DEFAULT_SEED, EMBEDDINGS_PATH, EVAL_BATCH_SIZE, GRADCHECK_MAX_COORDS,
                           GRADCHECK_TOLERANCE, LOG_LEVEL, MAX_WORKERS, PRETRAINED_VGG16, RUNS_DIR,
                           SPLIT_RATIOS, print_config)
from config.schema import MODES, TASK_SCHEMAS, TASKS, ExperimentConfig, resolve_experiment_config
from src.curation.annotations import curate, parse_annotations
from src.curation.crisismmd import load_release
from src.curation.splits import MANIFEST_FILE, make_splits, read_manifest, read_splits, write_splits
from src.evaluation.evaluator import evaluate
from src.evaluation.metrics import ConfusionMatrix, EvalReport, classification_report
from src.evaluation.reference_results import (REFERENCE_SCORES, compare_split_counts, compare_with_reference,
                                              reference_matrix)
from src.evaluation.report_writer import REPORT_FILE, write_report
from src.image.preprocessing import ImageBatchLoader, load_raster, preprocess_image
from src.image.vgg16 import vgg16_init
from src.models.dataset import build_dataset
from src.models.fusion import FusionParams, build_model, predict, restore_model
from src.models.gradcheck_suite import run_suite
from src.models.trainer import EpochRecord, train
from src.storage.checkpoint import load_checkpoint, save_checkpoint
from src.text.preprocessing import preprocess_many, preprocess_tweet
from src.text.text_cnn import TextCnnParams
from src.text.vocabulary import EMBEDDING_DIM, EmbeddingTable, Vocabulary, build_vocab, encode_batch
from src.utils.errors import USAGE_ERRORS, ConfigurationError, FormatError
from src.utils.logger import attach_run_log, setup_logging
from src.utils.summary_generator import SummaryGenerator

logger = logging.getLogger(__name__)
console = Console()

CONFIG_FILE = 'resolved_config.json'
HISTORY_FILE = 'history.jsonl'
CHECKPOINT_FILE = 'checkpoint.cfck'


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(description='Multimodal (text + image) crisis tweet classification')
    parser.add_argument('--log-level', default=LOG_LEVEL, help='Logging level')
    parser.add_argument('--log-dir', help='Directory for the rotating log files')
    parser.add_argument('--quiet', action='store_true', help='Disable progress bars')
    parser.add_argument('--show-config', action='store_true', help='Print environment configuration first')
    commands = parser.add_subparsers(dest='command', required=True)

    prepare = commands.add_parser('prepare', help='Curate annotations into train/dev/test splits')
    prepare.add_argument('--input', nargs='+', required=True,
                         help='Canonical annotation TSV, or CrisisMMD release files/directories')
    prepare.add_argument('--out', default=DATA_ROOT, help='Output directory for splits and manifest')
    prepare.add_argument('--task', choices=TASKS, default='informative', help='Classification task')
    prepare.add_argument('--format', choices=('canonical', 'crisismmd'), default='canonical',
                         help='Layout of the input annotations')
    prepare.add_argument('--seed', type=int, default=DEFAULT_SEED, help='Split seed')
    prepare.add_argument('--ratios', default=','.join(str(r) for r in SPLIT_RATIOS),
                         help='train,dev,test ratios')
    prepare.add_argument('--image-root', help='Directory image paths are relative to')
    prepare.add_argument('--reference', action='store_true', help='Show published split sizes alongside')

    trainer = commands.add_parser('train', help='Train a model into a run directory')
    trainer.add_argument('--config', help='JSON experiment config (flags override it)')
    trainer.add_argument('--data-dir', dest='data_dir', help='Directory written by prepare')
    trainer.add_argument('--mode', choices=MODES)
    trainer.add_argument('--task', choices=TASKS)
    trainer.add_argument('--lr', type=float)
    trainer.add_argument('--batch-size', dest='batch_size', type=int)
    trainer.add_argument('--max-epochs', dest='max_epochs', type=int)
    trainer.add_argument('--patience', type=int)
    trainer.add_argument('--plateau-patience', dest='plateau_patience', type=int)
    trainer.add_argument('--seed', type=int)
    trainer.add_argument('--text-hidden', dest='text_hidden', type=int)
    trainer.add_argument('--fusion-hidden', dest='fusion_hidden', type=int)
    trainer.add_argument('--width-scale', dest='width_scale', type=float)
    trainer.add_argument('--image-size', dest='image_size', type=int)
    trainer.add_argument('--embeddings', dest='embeddings_path', help='Embedding text file')
    trainer.add_argument('--pretrained-vgg16', dest='pretrained_vgg16', help='Converted VGG16 checkpoint')
    trainer.add_argument('--warm-start-text', dest='warm_start_text', help='Text-only checkpoint')
    trainer.add_argument('--warm-start-image', dest='warm_start_image', help='Image-only checkpoint')
    trainer.add_argument('--freeze-text', dest='freeze_text', action='store_true', default=None)
    trainer.add_argument('--freeze-image', dest='freeze_image', action='store_true', default=None)
    trainer.add_argument('--image-root', dest='image_root')
    trainer.add_argument('--output-dir', dest='output_dir', help=f'Parent of run directories (default {RUNS_DIR})')
    trainer.add_argument('--run-name', dest='run_name')
    trainer.add_argument('--max-workers', dest='max_workers', type=int)

    evaluator = commands.add_parser('evaluate', help='Score a checkpoint on one split')
    evaluator.add_argument('--checkpoint', required=True, help='Checkpoint file or run directory')
    evaluator.add_argument('--data-dir', help='Prepared splits (default: the run\'s data directory)')
    evaluator.add_argument('--split', choices=('train', 'dev', 'test'), default='test')
    evaluator.add_argument('--out', help='Report directory')
    evaluator.add_argument('--image-root')
    evaluator.add_argument('--batch-size', type=int, default=EVAL_BATCH_SIZE)
    evaluator.add_argument('--max-workers', type=int, default=MAX_WORKERS)

    predictor = commands.add_parser('predict', help='Classify one tweet')
    predictor.add_argument('--checkpoint', required=True, help='Checkpoint file or run directory')
    predictor.add_argument('--text', help='Tweet text')
    predictor.add_argument('--image', help='Tweet image file')

    checker = commands.add_parser('gradcheck', help='Verify backward rules against finite differences')
    checker.add_argument('--seed', type=int, default=0)
    checker.add_argument('--tolerance', type=float, default=GRADCHECK_TOLERANCE)
    checker.add_argument('--max-coords', type=int, default=GRADCHECK_MAX_COORDS)
    checker.add_argument('--ops-only', action='store_true', help='Skip the composite networks')

    reporter = commands.add_parser('report', help='Compare evaluation reports')
    reporter.add_argument('paths', nargs='*', help='report.json files, evaluation or run directories')
    reporter.add_argument('--reference', action='store_true',
                          help='Recompute the published rows from the published confusion matrices')

    return parser.parse_args(argv)


# -- helpers ---------------------------------------------------------------

def _write_json(path: Path, document: Any):
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write('\n')


def _checkpoint_path(path: str) -> Path:
    candidate = Path(path)
    if candidate.is_dir():
        candidate = candidate / CHECKPOINT_FILE
    if not candidate.exists():
        raise FileNotFoundError(f"checkpoint not found: {candidate}")
    return candidate


def _load_run(path: str):
    checkpoint = _checkpoint_path(path)
    entries, meta = load_checkpoint(checkpoint)
    if not meta or 'architecture' not in meta:
        raise FormatError(f"{checkpoint} carries no model metadata")
    return checkpoint, entries, meta


def _unique_tweets(records):
    seen = set()
    for record in records:
        if record.tweet_id not in seen:
            seen.add(record.tweet_id)
            yield record


def _image_loader(mode: str, image_size: int, root: Optional[str], max_workers: int) -> Optional[ImageBatchLoader]:
    if mode == 'text':
        return None
    return ImageBatchLoader(size=image_size, max_workers=max_workers, root=root)


def _split_table(manifest: Dict[str, Any]) -> Table:
    """Per-class counts laid out as text (train/dev/test/total) then image"""
    counts = manifest['counts']
    table = Table(show_header=True, title=f"{manifest.get('task')} splits")
    table.add_column("Class", style="cyan")
    for modality in ("Text", "Image"):
        for split in ("Train", "Dev", "Test", "Total"):
            table.add_column(f"{modality} {split}", justify="right", style="magenta")

    column_totals = [0] * 8
    for label in manifest['classes']:
        row = []
        for modality in ('text', 'image'):
            values = [counts[split].get(label, {}).get(modality, 0) for split in ('train', 'dev', 'test')]
            row.extend(values + [sum(values)])
        column_totals = [a + b for a, b in zip(column_totals, row)]
        table.add_row(label, *[str(v) for v in row])
    table.add_row("Total", *[str(v) for v in column_totals], style="bold")
    return table


def _reference_split_table(manifest: Dict[str, Any]) -> Table:
    table = Table(show_header=True, title="prepared / published")
    table.add_column("Class", style="cyan")
    for name in ("Train text", "Train image", "Dev", "Test"):
        table.add_column(name, justify="right")
    for row in compare_split_counts(manifest):
        table.add_row(row['class'], *[f"{ours} / {published}" for ours, published in
                                      (row['train_text'], row['train_image'], row['dev'], row['test'])])
    return table


def _matrix_table(cm: ConfusionMatrix, title: str) -> Table:
    table = Table(show_header=True, title=title)
    table.add_column("Human \\ Predicted", style="cyan")
    for name in cm.classes:
        table.add_column(name, justify="right")
    for name, row in zip(cm.classes, cm.counts):
        table.add_row(name, *[str(int(v)) for v in row])
    return table


def _report_table(report: EvalReport, title: str) -> Table:
    table = Table(show_header=True, title=title)
    table.add_column("Averaging", style="cyan")
    for name in ("Accuracy", "Precision", "Recall", "F1"):
        table.add_column(name, justify="right", style="magenta")
    pct = EvalReport.percent
    table.add_row("weighted", f"{pct(report.accuracy):.1f}", f"{pct(report.weighted_precision):.1f}",
                  f"{pct(report.weighted_recall):.1f}", f"{pct(report.weighted_f1):.1f}")
    table.add_row("macro", f"{pct(report.accuracy):.1f}", f"{pct(report.macro_precision):.1f}",
                  f"{pct(report.macro_recall):.1f}", f"{pct(report.macro_f1):.1f}")
    return table


# -- commands --------------------------------------------------------------

def cmd_prepare(args, summary: SummaryGenerator) -> int:
    ratios = tuple(float(r) for r in args.ratios.split(','))
    if args.format == 'crisismmd':
        records = load_release(args.input, args.task)
        first = Path(args.input[0]).resolve()
        default_root = first.parent if first.is_dir() else first.parent.parent
    else:
        if len(args.input) != 1:
            raise ConfigurationError("the canonical format takes exactly one annotation file")
        records = parse_annotations(args.input[0], task=args.task)
        default_root = Path(args.input[0]).resolve().parent

    curated, stats = curate(records, args.task)
    splits = make_splits(curated, ratios=ratios, seed=args.seed, task=args.task)
    splits.manifest['curation'] = stats
    splits.manifest['image_root'] = str(Path(args.image_root).resolve() if args.image_root else default_root)
    out_dir = write_splits(splits, args.out)

    console.print(_split_table(splits.manifest))
    if args.reference:
        console.print(_reference_split_table(splits.manifest))

    for name, value in stats.items():
        summary.add_metric(name.replace('_', ' ').capitalize(), value)
    for split, total in splits.manifest['totals'].items():
        summary.add_metric(f"{split} tweets / pairs", f"{total['text']} / {total['image']}")
    for name in ('train.tsv', 'dev.tsv', 'test.tsv', MANIFEST_FILE):
        summary.add_artifact(out_dir / name)
    return 0


def _resolve_train_config(args) -> ExperimentConfig:
    overrides = {name: getattr(args, name, None) for name in ExperimentConfig.model_fields}
    config = resolve_experiment_config(args.config, overrides,
                                       defaults={'data_dir': DATA_ROOT, 'embeddings_path': EMBEDDINGS_PATH})
    if (config.pretrained_vgg16 is None and PRETRAINED_VGG16 and config.mode != 'text'
            and config.width_scale == 1.0 and not config.warm_start_image):
        config = config.model_copy(update={'pretrained_vgg16': PRETRAINED_VGG16})
    return config


def _build_training_model(config: ExperimentConfig, splits, manifest):
    """Fresh (or warm-started) model for config.mode, plus the vocabulary it reads"""
    num_classes = TASK_SCHEMAS[config.task].num_classes
    max_len = manifest['max_len']
    vocab = text_branch = image_branch = None
    warm_text = None

    if config.mode in ('text', 'multimodal'):
        if config.warm_start_text:
            warm_text, warm_meta = load_checkpoint(config.warm_start_text)
            if not warm_meta or not warm_meta.get('vocab'):
                raise FormatError(f"{config.warm_start_text} has no vocabulary metadata")
            if warm_meta.get('task') != config.task:
                logger.warning(f"Warm-start text checkpoint was trained for task '{warm_meta.get('task')}'")
            # the warm-started embedding rows only make sense with their own vocabulary
            vocab = Vocabulary(list(warm_meta['vocab']))
            max_len = warm_meta['max_len']
            table = EmbeddingTable(np.zeros((len(vocab), EMBEDDING_DIM), dtype=np.float32),
                                   trainable=config.train_embeddings)
        else:
            tokens = preprocess_many([r.text for r in _unique_tweets(splits.train)], config.max_workers)
            vocab, table = build_vocab(tokens, config.embeddings_path, seed=config.seed,
                                       trainable=config.train_embeddings)
        text_branch = TextCnnParams(table, max_len, num_classes, hidden=config.text_hidden,
                                    dropout=config.text_dropout, seed=config.seed)

    if config.mode in ('image', 'multimodal'):
        pretrained = None if config.warm_start_image else config.pretrained_vgg16
        image_branch = vgg16_init(num_classes, config.width_scale, pretrained=pretrained,
                                  image_size=config.image_size, seed=config.seed)

    model = build_model(config, text_branch, image_branch, warm_start_text=warm_text,
                        warm_start_image=config.warm_start_image, num_classes=num_classes)
    return model, vocab, max_len


def cmd_train(args, summary: SummaryGenerator) -> int:
    config = _resolve_train_config(args)
    run_dir = Path(config.output_dir) / config.resolved_run_name()
    if (run_dir / CHECKPOINT_FILE).exists():
        raise ConfigurationError(f"{run_dir} already holds a finished run; pick another --run-name")
    run_dir.mkdir(parents=True, exist_ok=True)

    detach = attach_run_log(run_dir)
    try:
        logger.info(f"Run directory: {run_dir}")
        _write_json(run_dir / CONFIG_FILE, config.model_dump())
        splits = read_splits(config.data_dir)
        manifest = splits.manifest
        if manifest.get('task') != config.task:
            raise ConfigurationError(f"splits in {config.data_dir} were prepared for task "
                                     f"'{manifest.get('task')}', config asks for '{config.task}'")
        shutil.copyfile(Path(config.data_dir) / MANIFEST_FILE, run_dir / MANIFEST_FILE)

        schema = TASK_SCHEMAS[config.task]
        model, vocab, max_len = _build_training_model(config, splits, manifest)
        loader = _image_loader(config.mode, config.image_size, config.image_root or manifest.get('image_root'),
                               config.max_workers)
        train_set = build_dataset(splits.train, schema, config.mode, vocab, max_len, loader, config.max_workers)
        dev_set = build_dataset(splits.dev, schema, config.mode, vocab, max_len, loader, config.max_workers)

        history_path = run_dir / HISTORY_FILE
        history_path.write_text('', encoding='utf-8')

        def append_history(record: EpochRecord):
            with open(history_path, 'a', encoding='utf-8') as handle:
                handle.write(json.dumps(record.to_dict(), sort_keys=True) + '\n')

        result = train(config.train_config(), train_set, dev_set, model, on_epoch=append_history,
                       max_workers=config.max_workers, show_progress=not args.quiet)

        metadata = {
            'task': config.task,
            'mode': config.mode,
            'classes': list(schema.classes),
            'schema_version': schema.version,
            'max_len': max_len,
            'vocab': vocab.tokens if vocab is not None else None,
            'architecture': model.architecture(),
            'seed': config.seed,
            'best_epoch': result.best_epoch,
            'best_dev_accuracy': result.best_dev_accuracy,
            'epochs_run': result.epochs_run,
            'stopped_early': result.stopped_early,
        }
        entries = dict(model.state_entries())
        entries.update(result.optimizer_entries)
        save_checkpoint(run_dir / CHECKPOINT_FILE, entries, metadata)
    finally:
        detach()

    final = result.history[result.best_epoch - 1]
    summary.set_training(result.epochs_run, result.best_epoch, result.stopped_early)
    summary.add_metric("Best dev accuracy (%)", EvalReport.percent(result.best_dev_accuracy))
    summary.add_metric("Train accuracy at best epoch (%)", EvalReport.percent(final.train_accuracy))
    summary.add_metric("Parameters", model.parameter_count())
    for name in (CONFIG_FILE, MANIFEST_FILE, HISTORY_FILE, CHECKPOINT_FILE, 'train.log'):
        summary.add_artifact(run_dir / name)
    return 0


def _restore(meta: Dict[str, Any], entries) -> FusionParams:
    return restore_model(meta['architecture'], entries)


def _run_config(checkpoint: Path) -> Dict[str, Any]:
    path = checkpoint.parent / CONFIG_FILE
    if not path.exists():
        return {}
    with open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def cmd_evaluate(args, summary: SummaryGenerator) -> int:
    checkpoint, entries, meta = _load_run(args.checkpoint)
    run_config = _run_config(checkpoint)
    data_dir = args.data_dir or run_config.get('data_dir') or DATA_ROOT
    manifest = read_manifest(data_dir)
    if manifest.get('task') != meta['task']:
        raise ConfigurationError(f"checkpoint was trained for task '{meta['task']}', "
                                 f"splits in {data_dir} are for '{manifest.get('task')}'")

    task, mode = meta['task'], meta['mode']
    schema = TASK_SCHEMAS[task]
    params = _restore(meta, entries)
    vocab = Vocabulary(list(meta['vocab'])) if meta.get('vocab') else None
    image_arch = meta['architecture'].get('image') or {}
    loader = _image_loader(mode, image_arch.get('image_size', 224),
                           args.image_root or run_config.get('image_root') or manifest.get('image_root'),
                           args.max_workers)

    records = read_splits(data_dir).split(args.split)
    dataset = build_dataset(records, schema, mode, vocab, meta.get('max_len'), loader, args.max_workers)
    result = evaluate(params, dataset, schema, batch_size=args.batch_size, max_workers=args.max_workers)

    out_dir = Path(args.out) if args.out else Path(RUNS_DIR) / 'eval' / f"{checkpoint.parent.name}-{args.split}"
    paths = write_report(result, out_dir, task=task, mode=mode, split=args.split)

    console.print(_report_table(result.report, f"{task} / {mode} / {args.split}"))
    console.print(_matrix_table(result.matrix, "Confusion matrix"))

    summary.add_scores(args.split, result.report.headline())
    for path in paths:
        summary.add_artifact(path)
    return 0


def cmd_predict(args, summary: SummaryGenerator) -> int:
    _, entries, meta = _load_run(args.checkpoint)
    params = _restore(meta, entries)

    text_batch = image_batch = None
    if args.text is not None and meta.get('vocab'):
        text_batch = encode_batch([preprocess_tweet(args.text)], Vocabulary(list(meta['vocab'])), meta['max_len'])
    if args.image is not None:
        image_size = (meta['architecture'].get('image') or {}).get('image_size', 224)
        image_batch = preprocess_image(load_raster(args.image), size=image_size)[None]

    ids, probs = predict(params, text_batch, image_batch)
    classes = meta['classes']
    document = {
        'label': classes[int(ids[0])],
        'probabilities': {label: round(float(p), 6) for label, p in zip(classes, probs[0])},
    }
    summary.add_metric("Predicted", document['label'])
    summary.print_summary()
    print(json.dumps(document, sort_keys=True))
    return 0


def cmd_gradcheck(args, summary: SummaryGenerator) -> int:
    results = run_suite(seed=args.seed, tolerance=args.tolerance, max_coords=args.max_coords,
                        include_composites=not args.ops_only)

    table = Table(show_header=True, title="Gradient checks (64-bit, central differences)")
    table.add_column("Check", style="cyan")
    table.add_column("Tolerance", justify="right")
    table.add_column("Max rel. error", justify="right")
    table.add_column("Coords", justify="right")
    table.add_column("Result")
    for result in results:
        coords = sum(p.checked for p in result.report.parameters) if result.report else 0
        verdict = "[green]pass[/green]" if result.passed else f"[bold red]FAIL[/bold red] {result.error or ''}"
        table.add_row(result.name, f"{result.tolerance:.0e}", f"{result.max_relative_error:.2e}",
                      str(coords), verdict)
    console.print(table)

    failed = [r.name for r in results if not r.passed]
    summary.add_metric("Checks passed", f"{len(results) - len(failed)} / {len(results)}")
    for name in failed:
        summary.add_warning(f"gradient check failed: {name}")
    if failed:
        logger.error(f"Gradient check failed for: {', '.join(failed)}")
        return 1
    return 0


def _report_files(paths: List[str]) -> List[Path]:
    found = []
    for raw in paths:
        path = Path(raw)
        if path.is_file():
            found.append(path)
        elif path.is_dir():
            matches = sorted(path.rglob(REPORT_FILE))
            if not matches:
                raise FileNotFoundError(f"no {REPORT_FILE} under {path}")
            found.extend(matches)
        else:
            raise FileNotFoundError(f"report path not found: {path}")
    return found


def cmd_report(args, summary: SummaryGenerator) -> int:
    if not args.paths and not args.reference:
        raise ConfigurationError("give report paths, --reference, or both")

    if args.paths:
        table = Table(show_header=True, title="Weighted scores (%)")
        for name in ("Report", "Task", "Mode", "Split", "Accuracy", "Precision", "Recall", "F1", "Published acc."):
            table.add_column(name, justify="left" if name in ("Report", "Task", "Mode", "Split") else "right")
        for path in _report_files(args.paths):
            with open(path, 'r', encoding='utf-8') as handle:
                document = json.load(handle)
            scores = document['metrics']['percent']
            published = REFERENCE_SCORES.get((document.get('task'), document.get('mode')))
            table.add_row(path.parent.name, str(document.get('task')), str(document.get('mode')),
                          str(document.get('split')), f"{scores['accuracy']:.1f}", f"{scores['precision']:.1f}",
                          f"{scores['recall']:.1f}", f"{scores['f1']:.1f}",
                          f"{published[0]:.1f}" if published else "-")
            summary.add_scores(f"{path.parent.name}", scores)
        console.print(table)

    if args.reference:
        table = Table(show_header=True, title="Published confusion matrices, recomputed (published in brackets)")
        for name in ("Task", "Mode", "Accuracy", "Precision", "Recall", "F1", "Note"):
            table.add_column(name, justify="left" if name in ("Task", "Mode", "Note") else "right")
        for (task, mode), _ in REFERENCE_SCORES.items():
            report = classification_report(reference_matrix(task, mode))
            rows = compare_with_reference(report, task, mode)
            mismatched = [row.metric for row in rows if abs(row.delta) > 0.1]
            note = f"[yellow]differs from published {', '.join(mismatched)}[/yellow]" if mismatched else "matches"
            table.add_row(task, mode, *[f"{row.ours:.1f} ({row.reference:.1f})" for row in rows], note)
        console.print(table)
    return 0


COMMANDS = {
    'prepare': cmd_prepare,
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'predict': cmd_predict,
    'gradcheck': cmd_gradcheck,
    'report': cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors exit with 2, --help with 0
        return exc.code if isinstance(exc.code, int) else 2

    setup_logging(args.log_level, log_dir=args.log_dir)
    logger.info(f"Starting '{args.command}' on {platform.system()} (pid {os.getpid()})")
    if args.show_config:
        print_config()

    summary = SummaryGenerator(args.command)
    try:
        code = COMMANDS[args.command](args, summary)
    except USAGE_ERRORS + (ValidationError,) as exc:
        logger.error(f"{args.command} failed: {exc}")
        summary.add_warning(str(exc))
        code = 2
    except Exception as exc:
        logger.error(f"{args.command} failed: {exc}", exc_info=True)
        summary.add_warning(str(exc))
        code = 1

    if args.command != 'predict' or code != 0:
        summary.print_summary()
    return code


if __name__ == "__main__":
    sys.exit(main())
