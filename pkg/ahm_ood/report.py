"""Rendering reports and reading and writing per-run artifacts."""
from collections import OrderedDict
import csv
from dataclasses import dataclass
import json
import logging
import os
from .errors import ConfigurationError
from .errors import DatasetParseError
from .metrics import MetricSummary


logger = logging.getLogger(__name__)


# the columns of report.csv
REPORT_COLUMNS = ('protocol', 'method', 'auroc_mean', 'auroc_std', 'fpr_mean', 'fpr_std', 'n_runs')
# the columns of a run's scores.csv
SCORE_COLUMNS = ('doc_id', 'method', 'score', 'is_ood')
# the supported report formats and their file names
REPORT_FORMATS = OrderedDict([('csv', 'report.csv'), ('markdown', 'report.md')])
# the file names of the artifacts in a run directory
SPLIT_FILE = 'split.jsonl'
PARAMS_FILE = 'params.npz'
PRETRAINED_FILE = 'pretrained.npz'
CHECKPOINT_MANIFEST = 'checkpoints.json'
ENSEMBLE_FILE = 'ensemble.json'
SCORES_FILE = 'scores.csv'


@dataclass(frozen=True)
class ScoreRow:
    """A document's score under one method and whether it is OOD."""

    doc_id: str
    method: str
    score: float
    is_ood: bool


def _number(value):
    return '{:.10g}'.format(value)


def render_csv(report):
    """Return the report as CSV text, one row per (protocol, method)."""
    lines = [','.join(REPORT_COLUMNS)]
    for (protocol, method), summary in report.summaries.items():
        lines.append(','.join([
            protocol,
            method,
            _number(summary.auroc_mean),
            _number(summary.auroc_std),
            _number(summary.fpr_mean),
            _number(summary.fpr_std),
            str(summary.n_runs),
        ]))
    return '\n'.join(lines) + '\n'


def _cell(summary, mean, std):
    if summary is None:
        return '-'
    return '{:.3f} ± {:.3f}'.format(getattr(summary, mean), getattr(summary, std))


def render_markdown(report):
    """Return the report as a markdown grid of methods by protocols."""
    protocols = report.protocols
    header = ['Method']
    for protocol in protocols:
        header.extend(['{} AUROC'.format(protocol), '{} FPR@95'.format(protocol)])
    lines = [
        '| {} |'.format(' | '.join(header)),
        '|{}|'.format('|'.join('---' for _ in header)),
    ]
    for method in report.methods:
        cells = [method]
        for protocol in protocols:
            summary = report.summaries.get((protocol, method))
            cells.append(_cell(summary, 'auroc_mean', 'auroc_std'))
            cells.append(_cell(summary, 'fpr_mean', 'fpr_std'))
        lines.append('| {} |'.format(' | '.join(cells)))
    runs = [
        '{} {}'.format(protocol, max(summary.n_runs for (name, _), summary in report.summaries.items()
                                     if name == protocol))
        for protocol in protocols
    ]
    if runs:
        lines.extend(['', 'runs: {}'.format(', '.join(runs))])
    provenance = report.provenance or {}
    if provenance.get('config_hash'):
        lines.extend(['', 'config hash: `{}`'.format(provenance['config_hash'])])
    return '\n'.join(lines) + '\n'


_RENDERERS = {'csv': render_csv, 'markdown': render_markdown}


def report_render(report, format, directory):
    """
    Write a report in one format into a directory.

    Args:
        report (OodEvalReport): the report to render
        format (str): 'csv' or 'markdown'
        directory (str): the output directory, created if missing

    Returns (str):
        the path of the written file

    """
    if format not in REPORT_FORMATS:
        msg = 'unknown report format {!r}; expected one of {}'
        raise ConfigurationError(msg.format(format, list(REPORT_FORMATS)))
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, REPORT_FORMATS[format])
    with open(path, 'w') as handle:
        handle.write(_RENDERERS[format](report))
    logger.info('wrote %s', path)
    return path


def read_report_csv(path):
    """
    Read the summaries of a report.csv file.

    Returns (OrderedDict):
        (protocol, method) -> MetricSummary in file order

    """
    summaries = OrderedDict()
    with open(path, newline='') as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise DatasetParseError(path, 1, 'expected columns {}'.format(REPORT_COLUMNS))
        for line_number, row in enumerate(reader, start=2):
            try:
                summaries[(row['protocol'], row['method'])] = MetricSummary(
                    float(row['auroc_mean']), float(row['auroc_std']),
                    float(row['fpr_mean']), float(row['fpr_std']),
                    int(row['n_runs']),
                )
            except (TypeError, ValueError) as error:
                raise DatasetParseError(path, line_number, str(error))
    return summaries


def write_scores(rows, path):
    """Write ScoreRow objects as CSV."""
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(SCORE_COLUMNS)
        for row in rows:
            writer.writerow([row.doc_id, row.method, repr(float(row.score)), int(row.is_ood)])


def read_scores(path):
    """Read the ScoreRow objects of a file written by write_scores."""
    rows = []
    with open(path, newline='') as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != SCORE_COLUMNS:
            raise DatasetParseError(path, 1, 'expected columns {}'.format(SCORE_COLUMNS))
        for line_number, row in enumerate(reader, start=2):
            try:
                rows.append(ScoreRow(row['doc_id'], row['method'], float(row['score']), bool(int(row['is_ood']))))
            except (TypeError, ValueError) as error:
                raise DatasetParseError(path, line_number, str(error))
    return rows


def write_json(document, path):
    """Write a JSON document with stable key order and indentation."""
    with open(path, 'w') as handle:
        json.dump(document, handle, indent=2)
        handle.write('\n')


def write_checkpoint_manifest(protocol, seed, selected_epoch, records, path):
    """Write the per-epoch checkpoint records of a run and the selected epoch."""
    write_json(OrderedDict([
        ('protocol', protocol),
        ('seed', seed),
        ('selected_epoch', selected_epoch),
        ('checkpoints', list(records)),
    ]), path)


def read_checkpoint_manifest(path):
    """Return the document written by write_checkpoint_manifest."""
    with open(path) as handle:
        return json.load(handle)


def run_directory(root, protocol, seed):
    """Return the directory holding the artifacts of one run."""
    return os.path.join(root, 'runs', protocol, 'seed-{}'.format(seed))


def write_run_artifacts(run, directory):
    """
    Write the ensemble, scores and checkpoint manifest of a run.

    Args:
        run (RunResult): the finished run
        directory (str): the run directory, created if missing

    Returns:
        None

    """
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, ENSEMBLE_FILE), 'w') as handle:
        handle.write(run.ensemble.to_json() + '\n')
    write_scores(run.scores, os.path.join(directory, SCORES_FILE))
    write_checkpoint_manifest(run.protocol, run.seed, run.checkpoint_epoch, run.checkpoint_records,
                              os.path.join(directory, CHECKPOINT_MANIFEST))
    logger.debug('wrote run artifacts to %s', directory)


def write_report(report, directory):
    """Write report.csv, report.md and provenance.json into a directory."""
    paths = [report_render(report, format, directory) for format in REPORT_FORMATS]
    provenance = os.path.join(directory, 'provenance.json')
    write_json(report.provenance, provenance)
    return paths + [provenance]


# explicitly define the outward facing API of this module
__all__ = [
    ScoreRow.__name__,
    render_csv.__name__,
    render_markdown.__name__,
    report_render.__name__,
    read_report_csv.__name__,
    write_scores.__name__,
    read_scores.__name__,
    write_json.__name__,
    write_checkpoint_manifest.__name__,
    read_checkpoint_manifest.__name__,
    run_directory.__name__,
    write_run_artifacts.__name__,
    write_report.__name__,
]
