"""Synthetic multi-modal document corpora, OOD splits and JSON Lines I/O."""
from collections import OrderedDict
from dataclasses import dataclass
import json
import logging
import math
import numpy as np
from .errors import ConfigurationError
from .errors import ContractError
from .errors import DatasetParseError
from .model.config import DocumentInput


logger = logging.getLogger(__name__)


# the identifier written in the header line of dataset files
FILE_FORMAT = 'ahm-ood-dataset'
# the version of the dataset file layout
FILE_VERSION = 1
# the names of the splits in file order
SPLIT_NAMES = ('train', 'eval_id', 'test_id', 'test_ood')
# the supported OOD protocols
PROTOCOLS = ('intra', 'cross')
# the default train / eval_id / test_id fractions of the ID documents
DEFAULT_RATIOS = (0.7, 0.15, 0.15)
# the share of a document's positions given to visual patches
PATCH_FRACTION = 0.25


@dataclass(frozen=True)
class SyntheticSpec:
    """The generative description of a synthetic document corpus."""

    # the number of document classes
    num_classes: int = 10
    # the number of documents generated per class
    docs_per_class: int = 60
    # the size of the text vocabulary
    text_vocab: int = 200
    # the fraction of text tokens drawn from the shared vocabulary
    class_vocab_overlap: float = 0.0
    # the distance of each class patch mean from the origin
    patch_mean_separation: float = 4.0
    # the standard deviation of the patch noise
    patch_noise_std: float = 0.5
    # the length of each patch vector
    num_patch_features: int = 16
    # the (min, max) document length excluding the CLS token
    seq_len_range: tuple = (12, 24)
    # the seed of the document sampler
    seed: int = 0
    # the seed of the vocabulary permutation and patch mean rotation
    layout_seed: int = 0
    # the prefix of every document id
    name: str = 'synth'

    def __post_init__(self):
        object.__setattr__(self, 'seq_len_range', tuple(int(n) for n in self.seq_len_range))
        for name in ('num_classes', 'docs_per_class', 'text_vocab', 'num_patch_features', 'seed', 'layout_seed'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError('{} must be of type: int'.format(name))
        if self.num_classes < 2:
            raise ConfigurationError('num_classes must be >= 2')
        if self.docs_per_class < 4:
            raise ConfigurationError('docs_per_class must be >= 4 to fill every split')
        if self.text_vocab < self.num_classes:
            msg = 'text_vocab ({}) is too small for {} class vocabulary slices'
            raise ConfigurationError(msg.format(self.text_vocab, self.num_classes))
        if self.num_patch_features < self.num_classes:
            msg = 'num_patch_features ({}) must be >= num_classes ({}) for distinct patch means'
            raise ConfigurationError(msg.format(self.num_patch_features, self.num_classes))
        if not 0 <= self.class_vocab_overlap <= 1:
            raise ConfigurationError('class_vocab_overlap must be in [0, 1]')
        if self.patch_mean_separation < 0 or self.patch_noise_std < 0:
            raise ConfigurationError('patch_mean_separation and patch_noise_std must be >= 0')
        if len(self.seq_len_range) != 2:
            raise ConfigurationError('seq_len_range must be a (min, max) pair')
        low, high = self.seq_len_range
        if not 2 <= low <= high:
            raise ConfigurationError('seq_len_range must satisfy 2 <= min <= max, got {}'.format(
                self.seq_len_range))

    @property
    def slice_size(self):
        """Return the number of vocabulary entries reserved for each class."""
        return self.text_vocab // self.num_classes


@dataclass(frozen=True)
class DatasetSplit:
    """Documents partitioned for one OOD protocol."""

    train: tuple
    eval_id: tuple
    test_id: tuple
    test_ood: tuple
    # 'intra' or 'cross'
    protocol: str = 'intra'
    # a human readable description of what the OOD documents are
    ood_descriptor: str = ''

    def __post_init__(self):
        for name in SPLIT_NAMES:
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.protocol not in PROTOCOLS:
            raise ContractError('protocol must be one of {}, got {!r}'.format(PROTOCOLS, self.protocol))
        seen = set()
        for name in SPLIT_NAMES:
            for document in getattr(self, name):
                if document.doc_id in seen:
                    raise ContractError('document {!r} appears twice'.format(document.doc_id))
                seen.add(document.doc_id)
        overlap = self.train_labels & {doc.label for doc in self.test_ood if doc.label is not None}
        if overlap:
            raise ContractError('OOD labels {} appear in train'.format(sorted(overlap)))

    @property
    def train_labels(self):
        """Return the set of class ids present in train."""
        return {doc.label for doc in self.train if doc.label is not None}

    def splits(self):
        """Return an ordered mapping of split name to documents."""
        return OrderedDict((name, getattr(self, name)) for name in SPLIT_NAMES)


def _layout(spec):
    """Return the vocabulary permutation and the (F, C) patch mean directions."""
    rng = np.random.default_rng(spec.layout_seed)
    permutation = rng.permutation(spec.text_vocab)
    # orthonormal columns of a random rotation: unit, mutually equidistant vertices
    gaussian = rng.standard_normal((spec.num_patch_features, spec.num_patch_features))
    rotation, upper = np.linalg.qr(gaussian)
    rotation = rotation * np.sign(np.diag(upper))
    return permutation, rotation[:, :spec.num_classes]


def generate(spec):
    """
    Sample a labeled two-modality corpus.

    Text tokens of class c come from the class's vocabulary slice, except a
    class_vocab_overlap fraction drawn from the whole vocabulary. Patches of
    class c are Gaussian around patch_mean_separation times the class's
    direction.

    Args:
        spec (SyntheticSpec): the corpus description

    Returns (list):
        DocumentInput objects grouped by class, deterministic in spec

    """
    if not isinstance(spec, SyntheticSpec):
        raise TypeError('spec must be of type: SyntheticSpec')
    permutation, directions = _layout(spec)
    rng = np.random.default_rng(spec.seed)
    size = spec.slice_size
    low, high = spec.seq_len_range
    corpus = []
    for label in range(spec.num_classes):
        vocab_slice = permutation[label * size:(label + 1) * size]
        mean = spec.patch_mean_separation * directions[:, label]
        for index in range(spec.docs_per_class):
            length = int(rng.integers(low, high + 1))
            num_patches = max(1, int(math.floor(PATCH_FRACTION * length + 0.5)))
            num_tokens = length - num_patches
            shared = rng.random(num_tokens) < spec.class_vocab_overlap
            tokens = np.where(
                shared,
                rng.integers(0, spec.text_vocab, size=num_tokens),
                vocab_slice[rng.integers(0, size, size=num_tokens)],
            )
            noise = rng.standard_normal((num_patches, spec.num_patch_features))
            corpus.append(DocumentInput(
                text_token_ids=tokens.tolist(),
                patch_vectors=mean + spec.patch_noise_std * noise,
                label=label,
                doc_id='{}-{:02d}-{:04d}'.format(spec.name, label, index),
            ))
    logger.info('generated %d documents in %d classes (%s)', len(corpus), spec.num_classes, spec.name)
    return corpus


def _check_ratios(ratios):
    ratios = tuple(float(ratio) for ratio in ratios)
    if len(ratios) != 3 or any(ratio <= 0 for ratio in ratios):
        raise ContractError('ratios must be three positive fractions, got {}'.format(ratios))
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ContractError('ratios must sum to 1, got {}'.format(sum(ratios)))
    return ratios


def split_counts(total, ratios):
    """
    Return the (train, eval, test) sizes of one class.

    Eval and test receive at least one document each; rounding leftovers
    go to train.

    """
    if total < 3:
        raise ContractError('a class needs >= 3 documents to fill every split, got {}'.format(total))
    train_ratio, eval_ratio, _ = ratios
    num_eval = max(1, int(math.floor(eval_ratio * total + 0.5)))
    num_train = max(1, int(math.floor(train_ratio * total + 0.5)))
    num_test = max(1, total - num_train - num_eval)
    num_train = total - num_eval - num_test
    return num_train, num_eval, num_test


def _stratified(documents, ratios, seed):
    """Return (train, eval_id, test_id) with each class split by ratios."""
    rng = np.random.default_rng(seed)
    by_label = OrderedDict()
    for document in documents:
        by_label.setdefault(document.label, []).append(document)
    parts = ([], [], [])
    for label in sorted(by_label, key=lambda value: (value is None, value)):
        members = by_label[label]
        order = rng.permutation(len(members))
        num_train, num_eval, _ = split_counts(len(members), ratios)
        bounds = (0, num_train, num_train + num_eval, len(members))
        for part, start, stop in zip(parts, bounds[:-1], bounds[1:]):
            part.extend(members[index] for index in order[start:stop])
    return parts


def make_intra_split(corpus, ood_class, ratios=DEFAULT_RATIOS, seed=0):
    """
    Hold one class out as OOD and split the rest into ID partitions.

    Args:
        corpus (list): labeled DocumentInput objects
        ood_class (int): the class id to hold out
        ratios (tuple): the train / eval_id / test_id fractions
        seed (int): the seed of the per-class shuffles

    Returns (DatasetSplit):
        the split; documents keep their original labels

    """
    ratios = _check_ratios(ratios)
    labels = {document.label for document in corpus}
    if ood_class not in labels:
        raise ContractError('unknown class {!r}; corpus has {}'.format(ood_class, sorted(labels)))
    in_dist = [document for document in corpus if document.label != ood_class]
    held_out = [document for document in corpus if document.label == ood_class]
    train, eval_id, test_id = _stratified(in_dist, ratios, seed)
    return DatasetSplit(
        train, eval_id, test_id, held_out,
        protocol='intra',
        ood_descriptor='class {} held out'.format(ood_class),
    )


def make_cross_split(corpus_a, corpus_b, ratios=DEFAULT_RATIOS, seed=0, ood_descriptor=None):
    """
    Use one corpus as ID data and every document of another as OOD.

    OOD documents lose their labels since they belong to a different label
    space.

    Args:
        corpus_a (list): the ID corpus
        corpus_b (list): the OOD corpus
        ratios (tuple): the train / eval_id / test_id fractions
        seed (int): the seed of the per-class shuffles
        ood_descriptor (str): a description of corpus_b

    Returns (DatasetSplit):
        the split with all of corpus_b in test_ood

    """
    ratios = _check_ratios(ratios)
    shared = {doc.doc_id for doc in corpus_a} & {doc.doc_id for doc in corpus_b}
    if shared:
        msg = '{} document ids appear in both corpora, e.g. {!r}'
        raise ContractError(msg.format(len(shared), sorted(shared)[0]))
    train, eval_id, test_id = _stratified(corpus_a, ratios, seed)
    test_ood = [document.with_label(None) for document in corpus_b]
    if ood_descriptor is None:
        ood_descriptor = 'all {} documents of a second corpus'.format(len(test_ood))
    return DatasetSplit(train, eval_id, test_id, test_ood, 'cross', ood_descriptor)


def relabel(split):
    """
    Map the ID labels of a split onto 0..C-1 for classifier training.

    Args:
        split (DatasetSplit): a split with original class ids

    Returns (tuple):
        the relabeled split (OOD labels cleared) and the mapping from
        original to contiguous class ids

    """
    mapping = OrderedDict((label, index) for index, label in enumerate(sorted(split.train_labels)))

    def convert(documents):
        converted = []
        for document in documents:
            if document.label not in mapping:
                raise ContractError('ID document {!r} has label {!r} unseen in train'.format(
                    document.doc_id, document.label))
            converted.append(document.with_label(mapping[document.label]))
        return converted

    relabeled = DatasetSplit(
        convert(split.train), convert(split.eval_id), convert(split.test_id),
        [document.with_label(None) for document in split.test_ood],
        split.protocol, split.ood_descriptor,
    )
    return relabeled, mapping


def _document_record(document, split_name):
    return OrderedDict([
        ('id', document.doc_id),
        ('split', split_name),
        ('label', document.label),
        ('text_token_ids', list(document.text_token_ids)),
        ('patch_vectors', document.patch_vectors.tolist()),
    ])


def _patch_width(documents):
    """Return the patch vector width shared by a collection of documents."""
    return max((document.patch_vectors.shape[1] for document in documents), default=0)


def _write_lines(path, header, records):
    with open(path, 'w') as handle:
        handle.write(json.dumps(header) + '\n')
        for record in records:
            handle.write(json.dumps(record) + '\n')


def save_split(split, path):
    """
    Write a split as JSON Lines: a header line, then one document per line.

    Args:
        split (DatasetSplit): the split to write
        path (str): the destination file

    Returns:
        None

    """
    header = OrderedDict([
        ('format', FILE_FORMAT),
        ('version', FILE_VERSION),
        ('protocol', split.protocol),
        ('ood_descriptor', split.ood_descriptor),
        ('patch_width', _patch_width([doc for part in split.splits().values() for doc in part])),
    ])
    records = (
        _document_record(document, name)
        for name, documents in split.splits().items()
        for document in documents
    )
    _write_lines(path, header, records)


def save_corpus(corpus, path):
    """Write an unsplit corpus as JSON Lines with null split names."""
    header = OrderedDict([
        ('format', FILE_FORMAT),
        ('version', FILE_VERSION),
        ('protocol', None),
        ('patch_width', _patch_width(corpus)),
    ])
    _write_lines(path, header, (_document_record(document, None) for document in corpus))


def _parse_document(path, line_number, record, patch_width=None):
    """Return (split name, DocumentInput) of one parsed line."""
    if not isinstance(record, dict):
        raise DatasetParseError(path, line_number, 'expected a JSON object')
    missing = [key for key in ('id', 'split', 'label', 'text_token_ids', 'patch_vectors') if key not in record]
    if missing:
        raise DatasetParseError(path, line_number, 'missing fields {}'.format(missing))
    label = record['label']
    if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
        raise DatasetParseError(path, line_number, 'label must be an integer or null')
    tokens = record['text_token_ids']
    if not isinstance(tokens, list) or any(isinstance(t, bool) or not isinstance(t, int) for t in tokens):
        raise DatasetParseError(path, line_number, 'text_token_ids must be a list of integers')
    patches = record['patch_vectors']
    if not isinstance(patches, list) or any(not isinstance(row, list) for row in patches):
        raise DatasetParseError(path, line_number, 'patch_vectors must be a list of lists')
    if len({len(row) for row in patches}) > 1:
        raise DatasetParseError(path, line_number, 'patch_vectors rows differ in length')
    if not patches and patch_width:
        # an empty list carries no width, the header does
        patches = np.zeros((0, patch_width))
    try:
        document = DocumentInput(tokens, patches, label, str(record['id']))
    except (TypeError, ValueError) as error:
        raise DatasetParseError(path, line_number, str(error))
    return record['split'], document


def _read_lines(path):
    """Return the header and the (split, document) pairs of a dataset file."""
    header = None
    documents = []
    with open(path) as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as error:
                raise DatasetParseError(path, line_number, 'invalid JSON ({})'.format(error.msg))
            if header is None:
                if not isinstance(record, dict) or record.get('format') != FILE_FORMAT:
                    raise DatasetParseError(path, line_number, 'missing {} header'.format(FILE_FORMAT))
                if record.get('version') != FILE_VERSION:
                    msg = 'unsupported version {!r}'.format(record.get('version'))
                    raise DatasetParseError(path, line_number, msg)
                width = record.get('patch_width')
                if width is not None and (isinstance(width, bool) or not isinstance(width, int) or width < 0):
                    raise DatasetParseError(path, line_number, 'patch_width must be a non-negative integer')
                header = record
                continue
            documents.append((line_number, ) + _parse_document(path, line_number, record, width))
    if header is None:
        raise DatasetParseError(path, 1, 'empty dataset file')
    return header, documents


def load_split(path):
    """
    Read a split written by save_split.

    Args:
        path (str): the dataset file

    Returns (DatasetSplit):
        the split, equal to the one saved

    """
    header, documents = _read_lines(path)
    parts = OrderedDict((name, []) for name in SPLIT_NAMES)
    for line_number, name, document in documents:
        if name not in parts:
            raise DatasetParseError(path, line_number, 'unknown split {!r}'.format(name))
        parts[name].append(document)
    try:
        return DatasetSplit(protocol=header.get('protocol'), ood_descriptor=header.get('ood_descriptor', ''),
                            **parts)
    except ContractError as error:
        raise DatasetParseError(path, 1, str(error))


def load_corpus(path):
    """Read a corpus written by save_corpus."""
    _, documents = _read_lines(path)
    return [document for _, _, document in documents]


# explicitly define the outward facing API of this module
__all__ = [
    SyntheticSpec.__name__,
    DatasetSplit.__name__,
    generate.__name__,
    split_counts.__name__,
    make_intra_split.__name__,
    make_cross_split.__name__,
    relabel.__name__,
    save_split.__name__,
    save_corpus.__name__,
    load_split.__name__,
    load_corpus.__name__,
]
