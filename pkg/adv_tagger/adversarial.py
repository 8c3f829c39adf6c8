"""
Fast-gradient adversarial examples on the normalized input embeddings.

The perturbation is eta = epsilon * g / ||g|| with epsilon = alpha * sqrt(D),
where g is the gradient of the sentence NLL with respect to the concatenated
word and character embeddings s and D is their total dimension.

Example usage:
    >>> tape = Tape()
    >>> result = adversarial_loss(model.bind(tape), sentence.forms, tag_ids, AdvConfig(alpha=0.05))
    >>> grads = tape.backward(result.loss)
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .crf import nll
from .exceptions import TaggerError
from .network import BoundModel, DropoutMasks, Encoding, TaggerModel, Words, encode_sentence

logger = logging.getLogger(__name__)

ZERO_GRADIENT_NORM = 1e-12


@dataclass(frozen=True)
class AdvConfig:
    alpha: float = 0.05
    gamma: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise TaggerError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise TaggerError(f"gamma must lie in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class Perturbation:
    """eta in the [words..., chars...] layout of s, with the gradient it was built from."""
    eta: np.ndarray
    gradient: np.ndarray
    epsilon: float
    dim: int
    zero_gradient: bool = False

    @property
    def is_zero(self) -> bool:
        return self.zero_gradient or self.epsilon == 0.0


@dataclass
class AdversarialLoss:
    loss: ad.Tensor
    clean: ad.Tensor
    adversarial: Optional[ad.Tensor]
    perturbation: Perturbation
    encoding: Encoding


def fgm_perturbation(gradient: np.ndarray, alpha: float, dim: Optional[int] = None) -> Perturbation:
    """
    Scales the gradient direction to norm alpha * sqrt(D).

    Args:
        gradient (np.ndarray): Flat input gradient g.
        alpha (float): Perturbation scale, at least 0.
        dim (Optional[int]): D; defaults to the length of the gradient.

    Returns:
        Perturbation: eta = 0 with zero_gradient set when ||g|| < 1e-12.
    """
    g = np.asarray(gradient, dtype=np.float64).ravel()
    dim = g.size if dim is None else dim
    if alpha < 0:
        raise TaggerError(f"alpha must be >= 0, got {alpha}")
    if dim < 1:
        raise TaggerError(f"input dimension must be >= 1, got {dim}")
    epsilon = float(alpha * np.sqrt(dim))
    norm = float(np.linalg.norm(g))
    if norm < ZERO_GRADIENT_NORM:
        return Perturbation(np.zeros_like(g), g, epsilon, dim, zero_gradient=True)
    return Perturbation(epsilon * g / norm, g, epsilon, dim)


def input_gradient(
    model: TaggerModel,
    words: Words,
    tag_ids: Sequence[int],
    masks: Optional[DropoutMasks] = None,
) -> np.ndarray:
    """
    Gradient of the NLL with respect to s, holding the parameters fixed.

    Returns:
        np.ndarray: Flat vector of dimension D in the [words..., chars...] layout.
    """
    tape = ad.Tape()
    bound = model.bind(tape)
    encoding = encode_sentence(bound, words, masks)
    loss = nll(encoding.emissions, bound.crf, tag_ids)
    return encoding.flatten(tape.backward(loss))


def adversarial_loss(
    bound: BoundModel,
    words: Words,
    tag_ids: Sequence[int],
    cfg: AdvConfig,
    masks: Optional[DropoutMasks] = None,
) -> AdversarialLoss:
    """
    gamma * L(s) + (1 - gamma) * L(s + eta), recorded on the bound model's tape.

    eta enters the tape as a constant, so parameter gradients of the mixture are
    gamma * dL(s) + (1 - gamma) * dL(s_adv) with s_adv held fixed. Both passes
    use the same dropout masks. When eta is zero (alpha = 0, a vanishing
    gradient) or gamma = 1 the clean loss node itself is returned.

    Args:
        bound (BoundModel): Model parameters bound to the tape to record on.
        words: Sentence or surface forms.
        tag_ids (Sequence[int]): Gold tag ids.
        cfg (AdvConfig): alpha, gamma and the enabled flag.
        masks (Optional[DropoutMasks]): Dropout masks shared by both passes.
    """
    tape = bound.tape
    encoding = encode_sentence(bound, words, masks)
    clean = nll(encoding.emissions, bound.crf, tag_ids)
    gradient = encoding.flatten(tape.backward(clean))
    perturbation = fgm_perturbation(gradient, cfg.alpha if cfg.enabled else 0.0, encoding.input_dim)
    if perturbation.zero_gradient:
        logger.debug("Zero input gradient, training this sentence on the clean loss")
    if perturbation.is_zero or cfg.gamma == 1.0:
        return AdversarialLoss(clean, clean, None, perturbation, encoding)

    perturbed = encode_sentence(bound, words, masks, perturbation=perturbation.eta)
    adversarial = nll(perturbed.emissions, bound.crf, tag_ids)
    loss = ad.add(ad.scale(clean, cfg.gamma), ad.scale(adversarial, 1.0 - cfg.gamma))
    return AdversarialLoss(loss, clean, adversarial, perturbation, encoding)
