"""Mini-batch Adam fine-tuning with per-epoch checkpoints."""
from dataclasses import dataclass
import logging
import numpy as np
from tqdm import tqdm
from ..errors import ConfigurationError
from ..errors import ContractError
from ..errors import TrainingFailureError
from .backward import backward_batch
from .forward import forward_batch
from .params import ModelParams


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters for fine-tuning."""

    epochs: int = 30
    # 5e-5 is tuned for a 125M parameter encoder and undertrains a toy one
    learning_rate: float = 1e-3
    batch_size: int = 32
    eval_batch_size: int = 64
    grad_accumulation_steps: int = 1
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_grad_norm: float = 1.0
    # checkpoints are recorded from this epoch on
    eval_delay: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ('epochs', 'batch_size', 'eval_batch_size', 'grad_accumulation_steps'):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError('{} must be >= 1'.format(name))
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigurationError('learning_rate and weight_decay must be >= 0')
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigurationError('adam betas must be in [0, 1)')
        if self.adam_epsilon <= 0 or self.max_grad_norm <= 0:
            raise ConfigurationError('adam_epsilon and max_grad_norm must be > 0')
        if self.eval_delay < 0:
            raise ConfigurationError('eval_delay must be >= 0')


@dataclass(frozen=True)
class Checkpoint:
    """The parameters and accuracies recorded at the end of an epoch."""

    epoch: int
    params: ModelParams
    train_loss: float
    train_accuracy: float
    eval_accuracy: float

    def summary(self):
        """Return a JSON-serializable description without the tensors."""
        return dict(
            epoch=self.epoch,
            train_loss=self.train_loss,
            train_accuracy=self.train_accuracy,
            eval_accuracy=self.eval_accuracy,
        )


def predict_logits(params, documents, batch_size=64, mask=None):
    """Return the (n, num_classes) logits of a list of documents."""
    chunks = [
        forward_batch(params, documents[start:start + batch_size], mask).logits
        for start in range(0, len(documents), batch_size)
    ]
    if not chunks:
        return np.zeros((0, params.config.num_classes))
    return np.concatenate(chunks, axis=0)


def accuracy(params, documents, batch_size=64):
    """Return the fraction of labeled documents classified correctly."""
    if not documents:
        return float('nan')
    labels = np.array([document.label for document in documents])
    predictions = predict_logits(params, documents, batch_size).argmax(axis=1)
    return float(np.mean(predictions == labels))


class _AdamState:
    """First and second moment estimates of the Adam optimizer."""

    def __init__(self, tensors):
        self.step = 0
        self.first = {name: np.zeros_like(value) for name, value in tensors.items()}
        self.second = {name: np.zeros_like(value) for name, value in tensors.items()}

    def update(self, tensors, grads, config):
        """Apply one bias-corrected Adam step in place."""
        self.step += 1
        beta1, beta2 = config.adam_beta1, config.adam_beta2
        correction1 = 1.0 - beta1 ** self.step
        correction2 = 1.0 - beta2 ** self.step
        for name, value in tensors.items():
            grad = grads[name]
            self.first[name] = beta1 * self.first[name] + (1.0 - beta1) * grad
            self.second[name] = beta2 * self.second[name] + (1.0 - beta2) * grad * grad
            step = self.first[name] / correction1
            step = step / (np.sqrt(self.second[name] / correction2) + config.adam_epsilon)
            if config.weight_decay:
                value -= config.learning_rate * config.weight_decay * value
            value -= config.learning_rate * step


def clip_grad_norm(grads, max_norm):
    """
    Scale gradients in place so their global L2 norm is at most max_norm.

    Returns (float):
        the global norm before clipping

    """
    total = float(np.sqrt(sum(float(np.sum(grad * grad)) for grad in grads.values())))
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for grad in grads.values():
            grad *= factor
    return total


def fine_tune(params, train_set, config, eval_set=None, progress=False):
    """
    Fine-tune parameters on labeled documents with mini-batch Adam.

    Args:
        params (ModelParams): the starting parameters, left untouched
        train_set (list): labeled DocumentInput objects
        config (TrainConfig): the optimization hyperparameters
        eval_set (list): optional labeled documents for eval accuracy
        progress (bool): whether to show a progress bar over epochs

    Returns (tuple):
        - the fine-tuned ModelParams after the last epoch
        - the list of Checkpoint objects, one per epoch from eval_delay on

    """
    if not train_set:
        raise ContractError('train_set must not be empty')
    if any(document.label is None for document in train_set):
        raise ContractError('every training document needs a label')
    model_config = params.config
    tensors = params.to_dict()
    adam = _AdamState(tensors)
    rng = np.random.default_rng(config.seed)
    labels = np.array([document.label for document in train_set], dtype=np.int64)
    checkpoints = []
    epochs = tqdm(range(1, config.epochs + 1), desc='fine-tune', disable=not progress)
    for epoch in epochs:
        order = rng.permutation(len(train_set))
        batches = [order[start:start + config.batch_size]
                   for start in range(0, len(order), config.batch_size)]
        losses = []
        for first in range(0, len(batches), config.grad_accumulation_steps):
            group = batches[first:first + config.grad_accumulation_steps]
            current = ModelParams(model_config, tensors)
            total = None
            for batch in group:
                documents = [train_set[index] for index in batch]
                loss, grads, _ = backward_batch(current, documents, labels[batch])
                if not np.isfinite(loss):
                    raise TrainingFailureError(epoch, 'loss is {}'.format(loss))
                losses.append(loss)
                if total is None:
                    total = grads
                else:
                    for name in total:
                        total[name] += grads[name]
            for name in total:
                total[name] /= len(group)
            clip_grad_norm(total, config.max_grad_norm)
            adam.update(tensors, total, config)
            if not all(np.all(np.isfinite(value)) for value in tensors.values()):
                raise TrainingFailureError(epoch, 'parameters became non-finite')
        snapshot = ModelParams(model_config, tensors)
        mean_loss = float(np.mean(losses))
        if epoch < config.eval_delay:
            logger.debug('epoch %d loss %.4f (before eval delay)', epoch, mean_loss)
            continue
        train_accuracy = accuracy(snapshot, train_set, config.eval_batch_size)
        eval_accuracy = accuracy(snapshot, eval_set or [], config.eval_batch_size)
        checkpoints.append(Checkpoint(epoch, snapshot, mean_loss, train_accuracy, eval_accuracy))
        logger.debug('epoch %d loss %.4f train acc %.3f eval acc %.3f',
                     epoch, mean_loss, train_accuracy, eval_accuracy)
    return ModelParams(model_config, tensors), checkpoints


# explicitly define the outward facing API of this module
__all__ = [
    TrainConfig.__name__,
    Checkpoint.__name__,
    predict_logits.__name__,
    accuracy.__name__,
    clip_grad_norm.__name__,
    fine_tune.__name__,
]
