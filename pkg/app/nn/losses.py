"""Masked softmax cross-entropy and log-likelihood gradients"""
from typing import Optional, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from core.errors import DimensionError
from numerics.rng import Rng


def masked_logits(logits: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    """
    Set logits outside the allowed class set to -inf

    Args:
        logits: [batch, C]
        mask: None, bool [C] (one class set for the batch) or bool [batch, C]

    Returns:
        np.ndarray: masked copy, or the input itself when mask is None
    """
    if mask is None:
        return logits
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-1] != logits.shape[1]:
        raise DimensionError(f"mask width {mask.shape[-1]} does not match {logits.shape[1]} logits")
    return np.where(mask, logits, -np.inf)


def _check(logits: np.ndarray, labels: np.ndarray) -> None:
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(
            f"logits {list(logits.shape)} and labels {list(labels.shape)} do not line up"
        )


def log_likelihood_grad(logits: np.ndarray, labels: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-sample d log p(label | x) / d logits = onehot - softmax, zero on masked classes"""
    _check(logits, labels)
    probs = softmax(masked_logits(logits, mask), axis=1)
    grad = -probs
    grad[np.arange(len(labels)), labels] += 1.0
    return grad


def cross_entropy(
    logits: np.ndarray, labels: np.ndarray, mask: Optional[np.ndarray] = None
) -> Tuple[float, np.ndarray]:
    """
    Mean negative log-likelihood over the batch

    Returns:
        (loss, dlogits): dlogits is the gradient of the mean loss
    """
    _check(logits, labels)
    logp = log_softmax(masked_logits(logits, mask), axis=1)
    picked = logp[np.arange(len(labels)), labels]
    loss = float(-picked.mean())
    dlogits = -log_likelihood_grad(logits, labels, mask) / len(labels)
    return loss, dlogits


def predict(logits: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    return np.argmax(masked_logits(logits, mask), axis=1)


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    _check(logits, labels)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict(logits, mask) == labels))


def sample_model_labels(logits: np.ndarray, rng: Rng, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Draw y ~ p(y | x) per sample by inverse-CDF on the masked softmax"""
    probs = softmax(masked_logits(logits, mask), axis=1)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(size=(logits.shape[0], 1)) * cdf[:, -1:]
    return np.minimum((cdf < u).sum(axis=1), logits.shape[1] - 1)
