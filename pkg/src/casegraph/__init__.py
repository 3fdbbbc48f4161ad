"""Case knowledge graphs from traffic-accident judgments.

Subpackages and modules:

- ``numeric``: PCA, Mean-Shift, circular statistics, Adam, finite differences
- ``crf``: linear-chain CRF with BIO transition constraints
- ``ner``: convolutional encoder plus CRF or softmax tagger
- ``relation``: relation classifier trained jointly with a translation loss
- ``kge``: RotatE/TransE training, multi-semantic components, link prediction
- ``pipeline``: segmentation, extraction, fusion and graph export
- ``cli``: the ``casegraph`` command
"""

__version__ = "0.1.0"
