"""Parameter containers, initialization and checkpoint files."""
from collections import OrderedDict
from dataclasses import asdict
import json
import logging
import numpy as np
from ..errors import ShapeError
from .config import ModelConfig


logger = logging.getLogger(__name__)


# the standard deviation of the embedding tables at initialization
_EMBEDDING_STD = 0.02


# the per-layer tensor names, in storage order
LAYER_TENSORS = (
    'ln1_scale', 'ln1_offset',
    'w_q', 'w_k', 'w_v', 'w_o',
    'ln2_scale', 'ln2_offset',
    'w_ff1', 'b_ff1', 'w_ff2', 'b_ff2',
)


# the archive key holding the JSON encoded configuration
_CONFIG_KEY = '__config__'


def layer_key(layer, name):
    """Return the storage name of a per-layer tensor."""
    return 'layers.{}.{}'.format(layer, name)


def tensor_shapes(config):
    """
    Return the expected shape of every parameter tensor.

    Args:
        config (ModelConfig): the model shape

    Returns (OrderedDict):
        a mapping of tensor names to shape tuples in storage order

    """
    hid, ffn = config.hidden, config.ffn_width
    shapes = OrderedDict()
    shapes['cls_embedding'] = (hid,)
    shapes['token_embedding'] = (config.text_vocab, hid)
    shapes['patch_projection'] = (config.num_patch_features, hid)
    shapes['position_embedding'] = (config.max_seq_len, hid)
    per_layer = {
        'ln1_scale': (hid,), 'ln1_offset': (hid,),
        'w_q': (hid, hid), 'w_k': (hid, hid), 'w_v': (hid, hid), 'w_o': (hid, hid),
        'ln2_scale': (hid,), 'ln2_offset': (hid,),
        'w_ff1': (hid, ffn), 'b_ff1': (ffn,), 'w_ff2': (ffn, hid), 'b_ff2': (hid,),
    }
    for layer in range(config.num_layers):
        for name in LAYER_TENSORS:
            shapes[layer_key(layer, name)] = per_layer[name]
    shapes['classifier_weight'] = (hid, config.num_classes)
    shapes['classifier_bias'] = (config.num_classes,)
    return shapes


class ModelParams:
    """An immutable set of named float64 parameter tensors."""

    def __init__(self, config, tensors):
        """
        Initialize a new parameter set.

        Args:
            config (ModelConfig): the model shape the tensors belong to
            tensors (dict): a mapping of tensor name to array, copied on entry

        """
        if not isinstance(config, ModelConfig):
            raise TypeError('config must be of type: ModelConfig')
        shapes = tensor_shapes(config)
        missing = set(shapes) - set(tensors)
        extra = set(tensors) - set(shapes)
        if missing or extra:
            msg = 'tensor names do not match config (missing={}, extra={})'
            raise ShapeError(msg.format(sorted(missing), sorted(extra)))
        self._config = config
        self._tensors = OrderedDict()
        for name, shape in shapes.items():
            tensor = np.array(tensors[name], dtype=np.float64)
            if tensor.shape != shape:
                msg = 'tensor {} has shape {}, expected {}'
                raise ShapeError(msg.format(name, tensor.shape, shape))
            if not np.all(np.isfinite(tensor)):
                raise ShapeError('tensor {} has non-finite entries'.format(name))
            tensor.setflags(write=False)
            self._tensors[name] = tensor

    @property
    def config(self):
        """Return the model configuration."""
        return self._config

    @property
    def names(self):
        """Return the tensor names in storage order."""
        return list(self._tensors)

    def __getitem__(self, name):
        return self._tensors[name]

    def layer(self, index, name):
        """Return a per-layer tensor."""
        return self._tensors[layer_key(index, name)]

    def items(self):
        """Return (name, tensor) pairs in storage order."""
        return self._tensors.items()

    def to_dict(self):
        """Return writable copies of every tensor."""
        return OrderedDict((name, tensor.copy()) for name, tensor in self._tensors.items())

    def num_parameters(self):
        """Return the total number of scalar parameters."""
        return sum(tensor.size for tensor in self._tensors.values())

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self._config == other._config and all(
            np.array_equal(tensor, other._tensors[name])
            for name, tensor in self._tensors.items()
        )

    __hash__ = None


def init_params(config, seed):
    """
    Return randomly initialized parameters for a configuration.

    Args:
        config (ModelConfig): the model shape
        seed (int): the seed of the initialization stream

    Returns (ModelParams):
        embeddings ~ N(0, 0.02), linear maps ~ N(0, 1/fan_in), layer norms at
        identity, biases at zero

    """
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    for name, shape in tensor_shapes(config).items():
        short = name.rsplit('.', 1)[-1]
        if short in ('ln1_scale', 'ln2_scale'):
            tensors[name] = np.ones(shape)
        elif short.startswith('b_') or short.endswith('_offset') or short == 'classifier_bias':
            tensors[name] = np.zeros(shape)
        elif short in ('cls_embedding', 'token_embedding', 'position_embedding'):
            tensors[name] = rng.normal(0.0, _EMBEDDING_STD, size=shape)
        else:
            tensors[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
    return ModelParams(config, tensors)


def snapshot_pretrained(params):
    """Return a frozen copy of parameters taken before fine-tuning."""
    return ModelParams(params.config, params.to_dict())


def save_params(params, path):
    """
    Write parameters and their configuration to a compressed .npz file.

    Args:
        params (ModelParams): the parameters to save
        path (str): the destination path

    Returns:
        None

    """
    arrays = dict(params.items())
    arrays[_CONFIG_KEY] = np.array(json.dumps(asdict(params.config), sort_keys=True))
    with open(path, 'wb') as handle:
        np.savez_compressed(handle, **arrays)
    logger.debug('saved %d tensors to %s', len(arrays) - 1, path)


def load_params(path):
    """Return the parameters stored in a file written by save_params."""
    with np.load(path, allow_pickle=False) as archive:
        config = ModelConfig(**json.loads(str(archive[_CONFIG_KEY])))
        tensors = {name: archive[name] for name in archive.files if name != _CONFIG_KEY}
    return ModelParams(config, tensors)


# explicitly define the outward facing API of this module
__all__ = [
    ModelParams.__name__,
    tensor_shapes.__name__,
    layer_key.__name__,
    init_params.__name__,
    snapshot_pretrained.__name__,
    save_params.__name__,
    load_params.__name__,
]
