"""Randomized attention head mask search and embedding ensembling."""
from dataclasses import asdict
from dataclasses import dataclass
import json
import logging
import numpy as np
from tqdm import tqdm
from .errors import ConfigurationError
from .errors import ContractError
from .linalg import KNN_METRICS
from .linalg import knn_distances
from .model.config import AttentionHeadMask
from .model.embed import EmbeddingSet
from .model.embed import extract_embeddings


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AhmConfig:
    """Hyperparameters of the mask search."""

    # the number of masks sampled and scored (T)
    budget: int = 25
    # the fractions of heads masked per layer, assigned round-robin (p)
    mask_percentages: tuple = (0.1, 0.2)
    # the nearest train neighbors averaged per eval document (K)
    neighbors: int = 10
    # the number of top masks ensembled (F)
    top_f: int = 5
    # 'cosine' (higher is more similar) or 'euclidean' (negated distance)
    similarity_metric: str = 'cosine'
    # the seed of the per-trial random streams
    seed: int = 0
    # score the all-ones mask as trial 0, inside the budget
    include_identity: bool = False
    # the number of documents per forward pass
    batch_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, 'mask_percentages', tuple(float(p) for p in self.mask_percentages))
        if not self.budget >= self.top_f >= 1:
            raise ConfigurationError('need budget >= top_f >= 1, got {} and {}'.format(
                self.budget, self.top_f))
        if self.neighbors < 1:
            raise ConfigurationError('neighbors must be >= 1')
        if not self.mask_percentages:
            raise ConfigurationError('mask_percentages must not be empty')
        if any(not 0 < p < 1 for p in self.mask_percentages):
            raise ConfigurationError('mask percentages must be in (0, 1)')
        if self.similarity_metric not in KNN_METRICS:
            raise ConfigurationError('similarity_metric must be one of {}'.format(KNN_METRICS))


@dataclass(frozen=True)
class MaskTrialResult:
    """A sampled mask and how similar it keeps eval and train embeddings."""

    trial: int
    mask: AttentionHeadMask
    mask_percentage: float
    # the mean of per_eval_scores
    mean_similarity: float
    # (Q,) mean similarity of each eval document to its K train neighbors
    per_eval_scores: np.ndarray


@dataclass(frozen=True)
class AhmEnsemble:
    """The outcome of a mask search."""

    # the top_f masks, best first
    selected_masks: tuple
    # every trial, sorted by mean_similarity descending then trial index
    trial_log: tuple
    config: AhmConfig = None

    @property
    def selected_trials(self):
        """Return the trial indices of the selected masks."""
        return [result.trial for result in self.trial_log[:len(self.selected_masks)]]

    def to_json(self):
        """Return the ensemble as a JSON document."""
        document = dict(
            config=asdict(self.config) if self.config is not None else None,
            trials=[
                dict(
                    trial=result.trial,
                    mask_percentage=result.mask_percentage,
                    mask=result.mask.to_bitmap(),
                    mean_similarity=result.mean_similarity,
                )
                for result in self.trial_log
            ],
            selected=self.selected_trials,
            selected_masks=[mask.to_bitmap() for mask in self.selected_masks],
        )
        return json.dumps(document, indent=2)

    @classmethod
    def from_json(cls, text):
        """Return an ensemble from a document written by to_json."""
        document = json.loads(text)
        config = AhmConfig(**document['config']) if document.get('config') else None
        trials = tuple(
            MaskTrialResult(
                trial=entry['trial'],
                mask=AttentionHeadMask.from_bitmap(entry['mask']),
                mask_percentage=entry['mask_percentage'],
                mean_similarity=entry['mean_similarity'],
                per_eval_scores=np.zeros(0),
            )
            for entry in document['trials']
        )
        masks = tuple(AttentionHeadMask.from_bitmap(rows) for rows in document['selected_masks'])
        return cls(selected_masks=masks, trial_log=trials, config=config)


def masked_head_count(num_heads, p):
    """Return max(1, round(p * H)) with halves rounded up."""
    return max(1, int(np.floor(p * num_heads + 0.5)))


def sample_mask(config, p, rng):
    """
    Sample a mask that zeroes the same number of heads in every layer.

    Args:
        config (ModelConfig): the model shape
        p (float): the fraction of heads to mask per layer, in (0, 1)
        rng (np.random.Generator): the random stream

    Returns (AttentionHeadMask):
        a mask with exactly max(1, round(p * H)) zeros per layer

    """
    if not 0 < p < 1:
        raise ContractError('p must be in (0, 1), got {}'.format(p))
    heads = config.num_heads
    count = masked_head_count(heads, p)
    if count >= heads:
        msg = 'masking {} of {} heads would silence a whole layer'.format(count, heads)
        raise ContractError(msg)
    mask = np.ones((config.num_layers, heads))
    for layer in range(config.num_layers):
        mask[layer, rng.choice(heads, size=count, replace=False)] = 0.0
    return AttentionHeadMask(mask)


def similarity_scores(embed_train, embed_eval, neighbors, metric='cosine'):
    """
    Return each eval row's mean similarity to its nearest train rows.

    Cosine similarity is 1 - cosine distance; the euclidean similarity is
    the negated distance, so higher always means closer.

    Args:
        embed_train (np.ndarray): (O, Hid) train embeddings
        embed_eval (np.ndarray): (Q, Hid) eval embeddings
        neighbors (int): the number of neighbors K
        metric (str): 'cosine' or 'euclidean'

    Returns (np.ndarray):
        the (Q,) similarity scores S_i

    """
    if len(embed_train) == 0 or len(embed_eval) == 0:
        raise ContractError('train and eval embeddings must not be empty')
    if neighbors > len(embed_train):
        msg = 'K = {} exceeds the {} train documents'.format(neighbors, len(embed_train))
        raise ContractError(msg)
    distances = knn_distances(embed_eval, embed_train, neighbors, metric)
    similarities = 1.0 - distances if metric == 'cosine' else -distances
    return similarities.mean(axis=1)


def score_mask(params, mask, train_set, eval_set, neighbors, metric='cosine',
               batch_size=64, trial=0, mask_percentage=float('nan')):
    """
    Score a mask by the similarity of eval embeddings to train embeddings.

    Args:
        params (ModelParams): the fine-tuned parameters
        mask (AttentionHeadMask): the mask to score
        train_set (list): ID training documents
        eval_set (list): ID validation documents
        neighbors (int): the number of neighbors K
        metric (str): 'cosine' or 'euclidean'
        batch_size (int): the number of documents per forward pass
        trial (int): the trial index recorded in the result
        mask_percentage (float): the p the mask was sampled with

    Returns (MaskTrialResult):
        the mask with its per-document and mean similarity

    """
    if not train_set or not eval_set:
        raise ContractError('train and eval sets must not be empty')
    if neighbors > len(train_set):
        msg = 'K = {} exceeds the {} train documents'.format(neighbors, len(train_set))
        raise ContractError(msg)
    embed_train = extract_embeddings(params, train_set, mask, 'cls_last', batch_size).features
    embed_eval = extract_embeddings(params, eval_set, mask, 'cls_last', batch_size).features
    scores = similarity_scores(embed_train, embed_eval, neighbors, metric)
    return MaskTrialResult(
        trial=trial,
        mask=mask,
        mask_percentage=mask_percentage,
        mean_similarity=float(scores.mean()),
        per_eval_scores=scores,
    )


def select_top(trials, top_f):
    """
    Return the trials sorted best first and the masks of the top_f of them.

    Ties on mean similarity are broken by the earlier trial index.

    """
    ranked = tuple(sorted(trials, key=lambda result: (-result.mean_similarity, result.trial)))
    return ranked, tuple(result.mask for result in ranked[:top_f])


def run_search(params, train_set, eval_set, config, progress=False):
    """
    Sample, score and rank masks, then keep the most similarity-preserving.

    Args:
        params (ModelParams): the fine-tuned parameters
        train_set (list): ID training documents
        eval_set (list): ID validation documents, never OOD data
        config (AhmConfig): the search hyperparameters
        progress (bool): whether to show a progress bar over trials

    Returns (AhmEnsemble):
        the sorted trial log and the top_f masks

    """
    model_config = params.config
    streams = np.random.SeedSequence(config.seed).spawn(config.budget)
    trials = []
    for trial in tqdm(range(config.budget), desc='mask search', disable=not progress):
        p = config.mask_percentages[trial % len(config.mask_percentages)]
        if config.include_identity and trial == 0:
            mask = AttentionHeadMask.all_ones(model_config.num_layers, model_config.num_heads)
        else:
            mask = sample_mask(model_config, p, np.random.default_rng(streams[trial]))
        result = score_mask(params, mask, train_set, eval_set, config.neighbors,
                            config.similarity_metric, config.batch_size, trial, p)
        logger.debug('trial %d p=%.2f mask=%r similarity=%.6f',
                     trial, p, mask, result.mean_similarity)
        trials.append(result)
    ranked, masks = select_top(trials, config.top_f)
    logger.info('selected trials %s (best similarity %.6f)',
                [result.trial for result in ranked[:config.top_f]], ranked[0].mean_similarity)
    return AhmEnsemble(selected_masks=masks, trial_log=ranked, config=config)


def ensemble_embed(params, dataset, ensemble, pooling='cls_last', batch_size=64):
    """
    Return the per-document mean of the embeddings under every selected mask.

    Args:
        params (ModelParams): the fine-tuned parameters
        dataset (list): the DocumentInput objects
        ensemble (AhmEnsemble): the search outcome
        pooling (str): 'cls_last' or 'avg_avg'
        batch_size (int): the number of documents per forward pass

    Returns (EmbeddingSet):
        the ensembled embeddings (logits are averaged the same way)

    """
    if not ensemble.selected_masks:
        raise ContractError('the ensemble has no selected masks')
    members = [
        extract_embeddings(params, dataset, mask, pooling, batch_size)
        for mask in ensemble.selected_masks
    ]
    return EmbeddingSet(
        features=np.mean([member.features for member in members], axis=0),
        logits=np.mean([member.logits for member in members], axis=0),
        labels=members[0].labels,
        doc_ids=members[0].doc_ids,
    )


# explicitly define the outward facing API of this module
__all__ = [
    AhmConfig.__name__,
    MaskTrialResult.__name__,
    AhmEnsemble.__name__,
    masked_head_count.__name__,
    sample_mask.__name__,
    similarity_scores.__name__,
    score_mask.__name__,
    select_top.__name__,
    run_search.__name__,
    ensemble_embed.__name__,
]
