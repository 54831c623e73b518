"""Augmented reconstruction loss for text-to-spectrogram models trained on
articulation-impaired speech, with a synthetic corpus generator to test it."""

from .types import HyperParams, LossBreakdown, PhonemeInventory, Utterance, expand_labels
from .loss import (consistency_loss, impairment_log_density, loss_gradient, reconstruction_loss,
                   regularization_loss, severity_weights, total_loss)

__version__ = "0.1.0"
