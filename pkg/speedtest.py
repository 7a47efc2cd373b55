from ahm_ood.ahm import AhmConfig, sample_mask
from ahm_ood.data import SyntheticSpec, generate
from ahm_ood.model import ModelConfig, forward_batch, init_params
import numpy as np
import tqdm
spec = SyntheticSpec()
config = ModelConfig(text_vocab=spec.text_vocab, num_patch_features=spec.num_patch_features)
params = init_params(config, 0)
documents = generate(spec)
rng = np.random.default_rng(0)
p = AhmConfig().mask_percentages[0]

try:
    for _ in tqdm.tqdm(range(200), unit='batch'):
        batch = [documents[i] for i in rng.choice(len(documents), size=32, replace=False)]
        forward_batch(params, batch, sample_mask(config, p, rng))
except KeyboardInterrupt:
    pass
