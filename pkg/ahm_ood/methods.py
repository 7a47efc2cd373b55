"""Static method-name sets for the OOD scorers."""


# scorers that read only the classifier logits (plus the pooled embedding)
LOGIT_METHODS = [
    'energy',
    'gradNorm',
    'kl',
    'maxLogit',
    'msp',
]


# scorers that read embedding geometry of the plain fine-tuned model
FEATURE_METHODS = [
    'knn',
    'Mahalanobis',
    'mah_AvgAvg',
    'mah_Gnome',
    'neco',
    'residual',
    'vim',
]


# scorers fed with attention-head-masked ensemble embeddings
AHM_METHODS = [
    'knn_AHM',
    'mah_AHM',
    'mah_AvgAvg_AHM',
]


# every baseline, in report order
BASELINE_METHODS = [
    'energy',
    'gradNorm',
    'kl',
    'knn',
    'Mahalanobis',
    'mah_AvgAvg',
    'mah_Gnome',
    'maxLogit',
    'msp',
    'neco',
    'residual',
    'vim',
]


# every supported scorer, in report order
ALL_METHODS = BASELINE_METHODS + AHM_METHODS


# each masked variant and the baseline it is compared against
AHM_BASELINES = {
    'knn_AHM': 'knn',
    'mah_AHM': 'Mahalanobis',
    'mah_AvgAvg_AHM': 'mah_AvgAvg',
}


# the evaluation protocols
PROTOCOLS = ['intra', 'cross']
