"""Experiment configuration and the end-to-end OOD evaluation pipeline."""
from collections import OrderedDict
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from dataclasses import replace
import datetime
import hashlib
import json
import logging
import numpy as np
from tqdm import tqdm
import yaml
from .ahm import AhmConfig
from .ahm import run_search
from .data import DEFAULT_RATIOS
from .data import SyntheticSpec
from .data import generate
from .data import make_cross_split
from .data import make_intra_split
from .data import relabel
from .errors import AhmOodError
from .errors import ConfigurationError
from .errors import RunFailureError
from .linalg import DEFAULT_REGULARIZATION
from .methods import AHM_METHODS
from .methods import ALL_METHODS
from .methods import PROTOCOLS
from .metrics import BinaryScoreSet
from .metrics import aggregate_runs
from .metrics import auroc
from .metrics import fpr_at_tpr
from .metrics import silhouette
from .model.config import ModelConfig
from .model.embed import extract_embeddings
from .model.params import init_params
from .model.params import snapshot_pretrained
from .model.train import TrainConfig
from .model.train import fine_tune
from .report import ScoreRow
from .report import run_directory
from .report import write_run_artifacts
from .scoring import DEFAULT_KNN_K
from .scoring import FeatureExtractor
from .scoring import fit_contexts
from .scoring import score_dataset


logger = logging.getLogger(__name__)


# model fields filled in from the dataset and protocol
DERIVED_MODEL_FIELDS = ('text_vocab', 'num_patch_features', 'num_classes')


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines the outcome of an experiment."""

    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    ahm: AhmConfig = field(default_factory=AhmConfig)
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    # one run per seed; each seeds the split, initialization, training and search
    seeds: tuple = (0, 1, 2, 3, 4)
    # the scorers to evaluate, in report order
    scorers: tuple = tuple(ALL_METHODS)
    # the OOD protocols to run
    protocols: tuple = ('intra',)
    # the class held out by the intra protocol
    ood_class: int = 9
    # the train / eval_id / test_id fractions of ID documents
    ratios: tuple = DEFAULT_RATIOS
    # checkpoints whose eval_id silhouette falls below this are discarded
    silhouette_threshold: float = 0.0
    # checkpoints need eval accuracy >= this fraction of the best one
    accuracy_floor: float = 0.9
    # the neighbor rank of the knn scorers
    knn_k: int = DEFAULT_KNN_K
    # the covariance ridge of the Gaussian scorers
    regularization: float = DEFAULT_REGULARIZATION
    # the ViM / NECO subspace dimension, None for min(classes, hidden - 1)
    pca_dim: int = None
    # where reports and run artifacts are written
    output_dir: str = 'out'

    def __post_init__(self):
        for name in ('seeds', 'scorers', 'protocols', 'ratios'):
            value = getattr(self, name)
            if isinstance(value, (str, int)):
                value = (value, )
            object.__setattr__(self, name, tuple(value))
        if not self.seeds:
            raise ConfigurationError('seeds must not be empty')
        if any(isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) for seed in self.seeds):
            raise ConfigurationError('seeds must be integers, got {}'.format(list(self.seeds)))
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError('seeds must be unique, got {}'.format(list(self.seeds)))
        unknown = [name for name in self.scorers if name not in ALL_METHODS]
        if unknown:
            raise ConfigurationError('unknown scorers {}; expected names from {}'.format(unknown, ALL_METHODS))
        if len(set(self.scorers)) != len(self.scorers):
            raise ConfigurationError('scorers must not repeat')
        if not self.protocols or any(protocol not in PROTOCOLS for protocol in self.protocols):
            raise ConfigurationError('protocols must be a non-empty subset of {}'.format(PROTOCOLS))
        if not 0 <= self.ood_class < self.data.num_classes:
            raise ConfigurationError('ood_class must be in [0, {})'.format(self.data.num_classes))
        if 'intra' in self.protocols and self.data.num_classes < 3:
            raise ConfigurationError('the intra protocol needs >= 3 classes')
        if self.model.max_seq_len < self.data.seq_len_range[1] + 1:
            msg = 'max_seq_len {} cannot hold documents of length {} plus CLS'
            raise ConfigurationError(msg.format(self.model.max_seq_len, self.data.seq_len_range[1]))
        if not 0 <= self.accuracy_floor <= 1:
            raise ConfigurationError('accuracy_floor must be in [0, 1]')
        if self.knn_k < 1 or self.regularization < 0:
            raise ConfigurationError('knn_k must be >= 1 and regularization >= 0')

    def model_for(self, protocol):
        """Return the model shape for a protocol, with data-derived fields."""
        classes = self.data.num_classes - 1 if protocol == 'intra' else self.data.num_classes
        return replace(
            self.model,
            text_vocab=self.data.text_vocab,
            num_patch_features=self.data.num_patch_features,
            num_classes=classes,
        )

    def cross_data(self):
        """Return the spec of the second corpus used as cross-protocol OOD."""
        return replace(
            self.data,
            seed=self.data.seed + 1,
            layout_seed=self.data.layout_seed + 1,
            name='{}-b'.format(self.data.name),
        )

    def to_dict(self):
        """Return the configuration as plain nested JSON-compatible values."""
        document = asdict(self)
        for name in DERIVED_MODEL_FIELDS:
            document['model'].pop(name)
        return json.loads(json.dumps(document))


# the nested sections of a configuration file and the types they build
_SECTIONS = OrderedDict([
    ('model', ModelConfig),
    ('training', TrainConfig),
    ('ahm', AhmConfig),
    ('data', SyntheticSpec),
])


def _build_section(name, cls, values):
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigurationError('section {!r} must be a mapping'.format(name))
    known = {item.name for item in fields(cls)}
    if name == 'model':
        known -= set(DERIVED_MODEL_FIELDS)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError('unknown keys in {!r}: {}'.format(name, unknown))
    try:
        return cls(**values)
    except TypeError as error:
        raise ConfigurationError('{}: {}'.format(name, error))


def config_from_dict(document):
    """
    Build an ExperimentConfig from nested mappings.

    Args:
        document (dict): the parsed configuration; omitted keys take defaults

    Returns (ExperimentConfig):
        the validated configuration

    """
    document = dict(document or {})
    known = {item.name for item in fields(ExperimentConfig)}
    unknown = sorted(set(document) - known)
    if unknown:
        raise ConfigurationError('unknown configuration keys: {}'.format(unknown))
    for name, cls in _SECTIONS.items():
        document[name] = _build_section(name, cls, document.get(name))
    try:
        return ExperimentConfig(**document)
    except TypeError as error:
        raise ConfigurationError(str(error))


def apply_overrides(document, seeds=None, output_dir=None, assignments=()):
    """
    Return a copy of a configuration document with command-line overrides.

    Args:
        document (dict): the parsed configuration file
        seeds (list): replaces the seeds list when non-empty
        output_dir (str): replaces the output directory when given
        assignments (list): 'key=value' or 'section.key=value' strings whose
            values are parsed as YAML

    Returns (dict):
        the overridden document

    """
    document = json.loads(json.dumps(document or {}))
    for assignment in assignments:
        if '=' not in assignment:
            raise ConfigurationError('override {!r} is not of the form key=value'.format(assignment))
        path, text = assignment.split('=', 1)
        keys = path.strip().split('.')
        if len(keys) > 2 or not all(keys):
            raise ConfigurationError('override key {!r} must be key or section.key'.format(path))
        target = document
        for key in keys[:-1]:
            target = target.setdefault(key, {})
        target[keys[-1]] = yaml.safe_load(text)
    if seeds:
        document['seeds'] = list(seeds)
    if output_dir is not None:
        document['output_dir'] = output_dir
    return document


def load_config(path, seeds=None, output_dir=None, assignments=()):
    """Read a YAML configuration file and apply command-line overrides."""
    with open(path) as handle:
        try:
            document = yaml.safe_load(handle)
        except yaml.YAMLError as error:
            raise ConfigurationError('{}: {}'.format(path, error))
    if document is not None and not isinstance(document, dict):
        raise ConfigurationError('{}: the configuration must be a mapping'.format(path))
    return config_from_dict(apply_overrides(document, seeds, output_dir, assignments))


def config_hash(config):
    """Return the SHA-256 of the canonical JSON form of a configuration."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


@dataclass(frozen=True)
class RunResult:
    """The outcome of one (protocol, seed) run."""

    protocol: str
    seed: int
    # the epoch of the selected checkpoint
    checkpoint_epoch: int
    # one record per checkpoint: epoch, accuracies, silhouette, eligibility
    checkpoint_records: tuple
    ensemble: object
    # method -> (auroc, fpr at 95% tpr)
    metrics: dict
    scores: tuple


@dataclass(frozen=True)
class OodEvalReport:
    """Aggregated metrics of every (protocol, method) with provenance."""

    # (protocol, method) -> MetricSummary, in report order
    summaries: OrderedDict
    provenance: dict
    runs: tuple = ()

    @property
    def methods(self):
        """Return the distinct method names in report order."""
        return list(OrderedDict.fromkeys(method for _, method in self.summaries))

    @property
    def protocols(self):
        """Return the distinct protocols in report order."""
        return list(OrderedDict.fromkeys(protocol for protocol, _ in self.summaries))


def build_corpora(config):
    """Return the primary corpus and, for the cross protocol, the second one."""
    corpus = generate(config.data)
    corpus_b = generate(config.cross_data()) if 'cross' in config.protocols else None
    return corpus, corpus_b


def prepare_split(config, protocol, seed, corpus, corpus_b=None):
    """
    Return the relabeled split of a run.

    Args:
        config (ExperimentConfig): the experiment
        protocol (str): 'intra' or 'cross'
        seed (int): the run seed
        corpus (list): the ID corpus
        corpus_b (list): the OOD corpus of the cross protocol

    Returns (DatasetSplit):
        a split whose ID labels are 0..C-1 and whose OOD labels are None

    """
    if protocol == 'intra':
        split = make_intra_split(corpus, config.ood_class, config.ratios, seed)
    elif protocol == 'cross':
        if corpus_b is None:
            raise ConfigurationError('the cross protocol needs a second corpus')
        split = make_cross_split(corpus, corpus_b, config.ratios, seed)
    else:
        raise ConfigurationError('unknown protocol {!r}'.format(protocol))
    split, _ = relabel(split)
    return split


def select_checkpoint(checkpoints, eval_set, accuracy_floor, silhouette_threshold, batch_size=64):
    """
    Pick the checkpoint with the best-clustered eval embeddings.

    Checkpoints below accuracy_floor times the best eval accuracy are not
    considered; of the rest, those with an eval_id silhouette below the
    threshold are discarded and the highest silhouette wins (earliest epoch
    on ties).

    Args:
        checkpoints (list): the Checkpoint objects of a training run
        eval_set (list): labeled ID validation documents
        accuracy_floor (float): the fraction of the best eval accuracy needed
        silhouette_threshold (float): the smallest silhouette kept
        batch_size (int): the number of documents per forward pass

    Returns (tuple):
        - the selected Checkpoint, None if every checkpoint was filtered
        - one record per checkpoint describing the decision

    """
    if not checkpoints:
        return None, []
    best_accuracy = max(checkpoint.eval_accuracy for checkpoint in checkpoints)
    records = []
    selected, selected_score = None, -np.inf
    for checkpoint in checkpoints:
        record = checkpoint.summary()
        record['eligible'] = checkpoint.eval_accuracy >= accuracy_floor * best_accuracy
        record['silhouette'] = None
        if record['eligible']:
            embeddings = extract_embeddings(checkpoint.params, eval_set, None, 'cls_last', batch_size)
            score = silhouette(embeddings.features, embeddings.labels)
            record['silhouette'] = score
            if score >= silhouette_threshold and score > selected_score:
                selected, selected_score = checkpoint, score
        records.append(record)
    for record in records:
        record['selected'] = selected is not None and record['epoch'] == selected.epoch
    return selected, records


def train_model(config, split, protocol, seed, progress=False):
    """
    Fine-tune a freshly initialized model and select a checkpoint.

    Returns (tuple):
        the selected Checkpoint, the pre-fine-tuning snapshot and the
        checkpoint records

    """
    params = init_params(config.model_for(protocol), seed)
    pretrained = snapshot_pretrained(params)
    training = replace(config.training, seed=seed)
    _, checkpoints = fine_tune(params, list(split.train), training, list(split.eval_id), progress)
    selected, records = select_checkpoint(
        checkpoints, list(split.eval_id), config.accuracy_floor,
        config.silhouette_threshold, training.eval_batch_size)
    if selected is None:
        silhouettes = {record['epoch']: record['silhouette'] for record in records}
        msg = 'no checkpoint passed the silhouette threshold {} (silhouettes {})'
        raise RunFailureError(protocol, seed, msg.format(config.silhouette_threshold, silhouettes), silhouettes)
    logger.info('[%s seed=%d] selected epoch %d (eval acc %.3f)',
                protocol, seed, selected.epoch, selected.eval_accuracy)
    return selected, pretrained, records


def search_masks(config, params, split, seed, progress=False):
    """Run the mask search of a run on its train and eval_id documents."""
    return run_search(params, list(split.train), list(split.eval_id), replace(config.ahm, seed=seed), progress)


def score_split(config, params, pretrained, ensemble, split, methods=None):
    """
    Score the test_id and test_ood documents with every method.

    Returns (list):
        ScoreRow objects grouped by method, test_id before test_ood

    """
    methods = list(config.scorers if methods is None else methods)
    if ensemble is None and any(method in AHM_METHODS for method in methods):
        raise ConfigurationError('AHM scorers need a mask ensemble')
    extractor = FeatureExtractor(params, pretrained, ensemble, config.training.eval_batch_size)
    contexts = fit_contexts(extractor, list(split.train), methods, config.knn_k,
                            config.pca_dim, config.regularization)
    rows = []
    for method in methods:
        for name, is_ood in (('test_id', False), ('test_ood', True)):
            documents = list(getattr(split, name))
            scores = score_dataset(method, documents, params, contexts, extractor=extractor, name=name)
            rows.extend(ScoreRow(score.doc_id, method, score.value, is_ood) for score in scores)
    return rows


def evaluate_scores(rows, methods=None):
    """
    Return the AUROC and FPR at 95% TPR of every method in score rows.

    Returns (OrderedDict):
        method -> (auroc, fpr), in the order methods first appear

    """
    grouped = OrderedDict()
    for row in rows:
        grouped.setdefault(row.method, []).append(row)
    if methods is not None:
        missing = [method for method in methods if method not in grouped]
        if missing:
            raise ConfigurationError('no scores for methods {}'.format(missing))
        grouped = OrderedDict((method, grouped[method]) for method in methods)
    metrics = OrderedDict()
    for method, members in grouped.items():
        scores = BinaryScoreSet.from_scores([row.score for row in members], [row.is_ood for row in members])
        metrics[method] = (auroc(scores), fpr_at_tpr(scores))
    return metrics


def run_seed(config, protocol, seed, corpus, corpus_b=None, progress=False):
    """
    Run the full pipeline for one protocol and seed.

    Args:
        config (ExperimentConfig): the experiment
        protocol (str): 'intra' or 'cross'
        seed (int): the run seed
        corpus (list): the ID corpus
        corpus_b (list): the OOD corpus of the cross protocol
        progress (bool): whether to show progress bars

    Returns (RunResult):
        the selected checkpoint, the ensemble, per-method metrics and scores

    """
    try:
        split = prepare_split(config, protocol, seed, corpus, corpus_b)
        checkpoint, pretrained, records = train_model(config, split, protocol, seed, progress)
        ensemble = search_masks(config, checkpoint.params, split, seed, progress)
        rows = score_split(config, checkpoint.params, pretrained, ensemble, split)
        metrics = evaluate_scores(rows, config.scorers)
    except RunFailureError:
        raise
    except AhmOodError as error:
        raise RunFailureError(protocol, seed, '{}: {}'.format(type(error).__name__, error)) from error
    for method, (area, fpr) in metrics.items():
        logger.debug('[%s seed=%d] %s auroc=%.4f fpr=%.4f', protocol, seed, method, area, fpr)
    return RunResult(protocol, seed, checkpoint.epoch, tuple(records), ensemble, metrics, tuple(rows))


def _timestamp():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def summarize(config, runs):
    """Return the (protocol, method) -> MetricSummary mapping of finished runs."""
    summaries = OrderedDict()
    for protocol in config.protocols:
        members = sorted((run for run in runs if run.protocol == protocol), key=lambda run: run.seed)
        for method in config.scorers:
            summaries[(protocol, method)] = aggregate_runs(
                [run.metrics[method][0] for run in members],
                [run.metrics[method][1] for run in members],
            )
    return summaries


def run_experiment(config, progress=False, artifacts_dir=None):
    """
    Run every configured protocol and seed and aggregate the metrics.

    Args:
        config (ExperimentConfig): the experiment
        progress (bool): whether to show progress bars
        artifacts_dir (str): where per-run artifacts are written, None to skip

    Returns (OodEvalReport):
        the per (protocol, method) summaries with provenance

    """
    started = _timestamp()
    corpus, corpus_b = build_corpora(config)
    jobs = [(protocol, seed) for protocol in config.protocols for seed in sorted(config.seeds)]
    runs = []
    for protocol, seed in tqdm(jobs, desc='runs', disable=not progress):
        logger.info('[%s seed=%d] starting run', protocol, seed)
        run = run_seed(config, protocol, seed, corpus, corpus_b, progress)
        if artifacts_dir is not None:
            write_run_artifacts(run, run_directory(artifacts_dir, protocol, seed))
        runs.append(run)
    return build_report(config, runs, started)


def build_report(config, runs, started=None):
    """
    Assemble the report of finished runs.

    Args:
        config (ExperimentConfig): the experiment
        runs (list): the RunResult of every (protocol, seed)
        started (str): the ISO timestamp the experiment started at

    Returns (OodEvalReport):
        the summaries ordered by protocol then method, with provenance

    """
    runs = sorted(runs, key=lambda run: (config.protocols.index(run.protocol), run.seed))
    provenance = OrderedDict([
        ('config_hash', config_hash(config)),
        ('seeds', sorted(config.seeds)),
        ('started_at', started or _timestamp()),
        ('finished_at', _timestamp()),
        ('runs', [
            OrderedDict([
                ('protocol', run.protocol),
                ('seed', run.seed),
                ('checkpoint_epoch', run.checkpoint_epoch),
                ('selected_trials', run.ensemble.selected_trials),
                ('selected_masks', [mask.to_bitmap() for mask in run.ensemble.selected_masks]),
            ])
            for run in runs
        ]),
    ])
    return OodEvalReport(summarize(config, runs), provenance, tuple(runs))


# explicitly define the outward facing API of this module
__all__ = [
    ExperimentConfig.__name__,
    RunResult.__name__,
    OodEvalReport.__name__,
    config_from_dict.__name__,
    apply_overrides.__name__,
    load_config.__name__,
    config_hash.__name__,
    build_corpora.__name__,
    prepare_split.__name__,
    select_checkpoint.__name__,
    train_model.__name__,
    search_masks.__name__,
    score_split.__name__,
    evaluate_scores.__name__,
    run_seed.__name__,
    summarize.__name__,
    build_report.__name__,
    run_experiment.__name__,
]
