"""Attention head masking OOD detection experiments."""
import argparse
import logging
import os
import sys
from ..ahm import AhmEnsemble
from ..data import load_split
from ..data import save_corpus
from ..data import save_split
from ..errors import AhmOodError
from ..harness import RunResult
from ..harness import apply_overrides
from ..harness import build_corpora
from ..harness import build_report
from ..harness import config_from_dict
from ..harness import evaluate_scores
from ..harness import load_config
from ..harness import prepare_split
from ..harness import run_experiment
from ..harness import score_split
from ..harness import search_masks
from ..harness import train_model
from ..model.params import load_params
from ..model.params import save_params
from ..report import CHECKPOINT_MANIFEST
from ..report import ENSEMBLE_FILE
from ..report import PARAMS_FILE
from ..report import PRETRAINED_FILE
from ..report import SCORES_FILE
from ..report import SPLIT_FILE
from ..report import read_checkpoint_manifest
from ..report import read_scores
from ..report import run_directory
from ..report import write_checkpoint_manifest
from ..report import write_report
from ..report import write_scores


logger = logging.getLogger('ahm_ood')


# the subcommands in pipeline order
_COMMANDS = ['generate', 'train', 'search', 'score', 'evaluate', 'run-all']


def _get_args(argv=None):
    """Parse command line arguments and return them."""
    parser = argparse.ArgumentParser(prog='ahm-ood', description=__doc__)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', '-v',
        action='store_true',
        help='log debug messages'
    )
    verbosity.add_argument('--quiet', '-q',
        action='store_true',
        help='log warnings and errors only'
    )
    parser.add_argument('--no-progress',
        action='store_true',
        help='hide progress bars'
    )
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True
    for name in _COMMANDS:
        command = commands.add_parser(name, help='the {} stage'.format(name))
        command.add_argument('--config', '-c',
            type=str,
            default=None,
            help='the YAML experiment configuration (defaults if omitted)'
        )
        command.add_argument('--seed', '-s',
            type=int,
            action='append',
            default=[],
            help='a run seed; repeat to run several (replaces the configured list)'
        )
        command.add_argument('--out', '-o',
            type=str,
            default=None,
            help='the output directory'
        )
        command.add_argument('--set',
            type=str,
            action='append',
            default=[],
            metavar='SECTION.KEY=VALUE',
            help='override a configuration value; the value is parsed as YAML'
        )
    # parse arguments and return them
    return parser.parse_args(argv)


def _configure_logging(args):
    """Send log records to stderr at the level the flags ask for."""
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def _load(args):
    """Return the experiment configuration with the command line overrides."""
    if args.config is None:
        document = apply_overrides({}, args.seed, args.out, args.set)
        return config_from_dict(document)
    return load_config(args.config, args.seed, args.out, args.set)


def _runs(config):
    """Return the (protocol, seed) pairs of an experiment in report order."""
    return [(protocol, seed) for protocol in config.protocols for seed in sorted(config.seeds)]


def _generate(config, progress):
    corpus, corpus_b = build_corpora(config)
    data_dir = os.path.join(config.output_dir, 'data')
    os.makedirs(data_dir, exist_ok=True)
    save_corpus(corpus, os.path.join(data_dir, 'corpus.jsonl'))
    if corpus_b is not None:
        save_corpus(corpus_b, os.path.join(data_dir, 'corpus-cross.jsonl'))
    for protocol, seed in _runs(config):
        directory = run_directory(config.output_dir, protocol, seed)
        os.makedirs(directory, exist_ok=True)
        save_split(prepare_split(config, protocol, seed, corpus, corpus_b), os.path.join(directory, SPLIT_FILE))
        logger.info('wrote %s', os.path.join(directory, SPLIT_FILE))


def _split(config, protocol, seed):
    """Return the split of a run, generating it when no split file exists."""
    path = os.path.join(run_directory(config.output_dir, protocol, seed), SPLIT_FILE)
    if os.path.exists(path):
        return load_split(path)
    corpus, corpus_b = build_corpora(config)
    split = prepare_split(config, protocol, seed, corpus, corpus_b)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    save_split(split, path)
    return split


def _train(config, progress):
    for protocol, seed in _runs(config):
        directory = run_directory(config.output_dir, protocol, seed)
        checkpoint, pretrained, records = train_model(config, _split(config, protocol, seed), protocol, seed, progress)
        save_params(checkpoint.params, os.path.join(directory, PARAMS_FILE))
        save_params(pretrained, os.path.join(directory, PRETRAINED_FILE))
        write_checkpoint_manifest(protocol, seed, checkpoint.epoch, records,
                                  os.path.join(directory, CHECKPOINT_MANIFEST))


def _read_ensemble(directory):
    with open(os.path.join(directory, ENSEMBLE_FILE)) as handle:
        return AhmEnsemble.from_json(handle.read())


def _search(config, progress):
    for protocol, seed in _runs(config):
        directory = run_directory(config.output_dir, protocol, seed)
        params = load_params(os.path.join(directory, PARAMS_FILE))
        ensemble = search_masks(config, params, load_split(os.path.join(directory, SPLIT_FILE)), seed, progress)
        with open(os.path.join(directory, ENSEMBLE_FILE), 'w') as handle:
            handle.write(ensemble.to_json() + '\n')


def _score(config, progress):
    for protocol, seed in _runs(config):
        directory = run_directory(config.output_dir, protocol, seed)
        rows = score_split(
            config,
            load_params(os.path.join(directory, PARAMS_FILE)),
            load_params(os.path.join(directory, PRETRAINED_FILE)),
            _read_ensemble(directory),
            load_split(os.path.join(directory, SPLIT_FILE)),
        )
        write_scores(rows, os.path.join(directory, SCORES_FILE))
        logger.info('[%s seed=%d] wrote %d scores', protocol, seed, len(rows))


def _evaluate(config, progress):
    runs = []
    for protocol, seed in _runs(config):
        directory = run_directory(config.output_dir, protocol, seed)
        rows = read_scores(os.path.join(directory, SCORES_FILE))
        manifest = read_checkpoint_manifest(os.path.join(directory, CHECKPOINT_MANIFEST))
        runs.append(RunResult(
            protocol=protocol,
            seed=seed,
            checkpoint_epoch=manifest['selected_epoch'],
            checkpoint_records=tuple(manifest['checkpoints']),
            ensemble=_read_ensemble(directory),
            metrics=evaluate_scores(rows, config.scorers),
            scores=tuple(rows),
        ))
    write_report(build_report(config, runs), config.output_dir)


def _run_all(config, progress):
    report = run_experiment(config, progress, artifacts_dir=config.output_dir)
    write_report(report, config.output_dir)


# a key mapping of subcommands to the stage they run
_STAGES = {
    'generate': _generate,
    'train': _train,
    'search': _search,
    'score': _score,
    'evaluate': _evaluate,
    'run-all': _run_all,
}


def main(argv=None):
    """The main entry point for the command line interface."""
    # parse arguments from the command line (argparse validates arguments)
    args = _get_args(argv)
    _configure_logging(args)
    try:
        config = _load(args)
        _STAGES[args.command](config, not args.no_progress)
    except (AhmOodError, OSError) as error:
        logger.error('%s failed: %s', args.command, error)
        sys.exit(1)


# explicitly define the outward facing API of this module
__all__ = [main.__name__]
