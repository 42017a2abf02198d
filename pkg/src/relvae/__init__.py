"""Semi-supervised VAE engine for sentence-level relation extraction.

Three networks share one objective: a convolutional classifier q(y|x), a
bidirectional-LSTM encoder producing a Gaussian latent posterior over the
entity-surrounding window, and a convolutional decoder reconstructing that
window from the latent code and a label.  Training mixes labeled batches
(classification + reconstruction + KL) with unlabeled batches whose label is
marginalized under the classifier's own prediction, so unlabeled sentences
sharpen the classifier.
"""

__version__ = "0.1.0"

from .backend import active_backend

__all__ = ["active_backend", "__version__"]
