"""Augmented reconstruction loss.

Three terms over the frames of a (reference, generated) spectrogram pair:

* reconstruction, sum of squared frame distances;
* regularisation, ``-sum_t w_t * ln r_t`` with severity weights
  ``w_t = exp(-lambda * p*_t)`` from the classifier's truth-label posterior
  on the reference, which rewards *distance* from reference frames the
  classifier doubts;
* consistency, ``-sum_t ln p_t`` with ``p_t`` the truth-label posterior on
  the generated frames.

All functions accept numpy arrays or torch tensors.  Given numpy they
return python floats / numpy arrays; given tensors they return tensors and
stay differentiable.  Losses are plain sums over frames, callers normalise.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
import torch

from .errors import ContractError, ShapeMismatchError
from .types import HyperParams, LossBreakdown


def _tensor(x, dtype=torch.float64):
    if isinstance(x, torch.Tensor):
        return x, False
    return torch.as_tensor(np.asarray(x), dtype=dtype), True


def _out(t: torch.Tensor, as_numpy: bool):
    if not as_numpy:
        return t
    t = t.detach()
    return float(t) if t.ndim == 0 else t.numpy()


def _check_prob(p: torch.Tensor, name: str):
    if p.numel() and (bool((p < 0).any()) or bool((p > 1).any()) or not bool(torch.isfinite(p).all())):
        raise ContractError(f"{name} must lie in [0, 1]")


def _check_pair(y_star: torch.Tensor, y: torch.Tensor):
    if y_star.shape != y.shape:
        raise ShapeMismatchError(f"reference {tuple(y_star.shape)} vs generated {tuple(y.shape)}")
    if y.ndim != 2:
        raise ShapeMismatchError("spectrograms must be (T, M)")


def _masked_sum(per_frame: torch.Tensor, frame_mask) -> torch.Tensor:
    if frame_mask is None:
        return per_frame.sum()
    mask = frame_mask if isinstance(frame_mask, torch.Tensor) else torch.as_tensor(np.asarray(frame_mask))
    return (per_frame * mask.to(per_frame.dtype)).sum()


def severity_weights(p_star, lambda_: float):
    """Per-frame impairment severity ``exp(-lambda_ * p_star)``, in (0, 1]."""
    if not lambda_ > 0:
        raise ContractError("lambda_ must be > 0")
    p, as_np = _tensor(p_star)
    _check_prob(p, "p_star")
    return _out(torch.exp(-lambda_ * p), as_np)


def frame_distance(y_star, y, eps_floor: Optional[float] = None):
    """Euclidean distance per frame, optionally floored at ``eps_floor``.

    The floor is applied inside the square root so the gradient stays finite
    (and zero) for frames that coincide.
    """
    sq = ((y_star - y) ** 2).sum(dim=-1)
    if eps_floor is not None:
        sq = torch.clamp(sq, min=eps_floor**2)
    return torch.sqrt(sq)


def reconstruction_loss(y_star, y, frame_mask=None):
    ys, as_np = _tensor(y_star)
    yy, _ = _tensor(y)
    _check_pair(ys, yy)
    per_frame = ((ys - yy) ** 2).sum(dim=-1)
    return _out(_masked_sum(per_frame, frame_mask), as_np)


def regularization_loss(y_star, y, w, eps_floor: float = 1e-8, frame_mask=None):
    if not eps_floor > 0:
        raise ContractError("eps_floor must be > 0")
    ys, as_np = _tensor(y_star)
    yy, _ = _tensor(y)
    ww, _ = _tensor(w)
    _check_pair(ys, yy)
    if ww.shape != (ys.shape[0],):
        raise ShapeMismatchError(f"weights of shape {tuple(ww.shape)} for {ys.shape[0]} frames")
    r = frame_distance(ys, yy, eps_floor)
    return _out(_masked_sum(-ww * torch.log(r), frame_mask), as_np)


def consistency_loss(p_gen, eps_floor: float = 1e-8, frame_mask=None):
    """``-sum ln max(p_t, eps_floor)``: KL from a point mass on the input labels."""
    if not eps_floor > 0:
        raise ContractError("eps_floor must be > 0")
    p, as_np = _tensor(p_gen)
    _check_prob(p, "p_gen")
    return _out(_masked_sum(-torch.log(torch.clamp(p, min=eps_floor)), frame_mask), as_np)


def consistency_loss_from_log(log_p_gen, frame_mask=None):
    """Same quantity from log-posteriors; no floor is needed for finite logits.

    Used on the training path, where a floor on ``p`` would zero the
    gradient on exactly the frames the classifier rejects hardest.
    """
    lp, as_np = _tensor(log_p_gen)
    return _out(_masked_sum(-lp, frame_mask), as_np)


def loss_terms(y_star, y, p_star, p_gen=None, hp: HyperParams = HyperParams(), *,
               log_p_gen=None, frame_mask=None) -> dict:
    """Tensor-valued components and total; ``p_gen`` or ``log_p_gen`` required."""
    w = severity_weights(p_star, hp.lambda_)
    l_rec = reconstruction_loss(y_star, y, frame_mask)
    l_reg = regularization_loss(y_star, y, w, hp.eps_floor, frame_mask)
    if log_p_gen is not None:
        l_consis = consistency_loss_from_log(log_p_gen, frame_mask)
    elif p_gen is not None:
        l_consis = consistency_loss(p_gen, hp.eps_floor, frame_mask)
    else:
        raise ContractError("one of p_gen / log_p_gen is required")
    return {
        "l_rec": l_rec,
        "l_reg": l_reg,
        "l_consis": l_consis,
        "l_total": l_rec + hp.beta * l_reg + hp.gamma * l_consis,
    }


def breakdown(terms: dict, frame_count: int, hp: HyperParams) -> LossBreakdown:
    vals = {k: float(v.detach()) if isinstance(v, torch.Tensor) else float(v) for k, v in terms.items()}
    return LossBreakdown(frame_count=int(frame_count), beta=hp.beta, gamma=hp.gamma, **vals)


def total_loss(y_star, y, p_star, p_gen, hp: HyperParams = HyperParams(), frame_mask=None) -> LossBreakdown:
    y_star = np.asarray(y_star, dtype=np.float64) if not isinstance(y_star, torch.Tensor) else y_star
    terms = loss_terms(y_star, y, p_star, p_gen, hp, frame_mask=frame_mask)
    n = len(y_star) if frame_mask is None else int(np.asarray(frame_mask).sum())
    return breakdown(terms, n, hp)


def impairment_log_density(y_star_frame, y_frame, alpha: float, sigma2: float) -> float:
    """Unnormalised log-density of an impaired frame around a clean one.

    ``alpha * ln r - r**2 / (2 * sigma2)``; ``-inf`` at ``r = 0`` when
    ``alpha > 0``.
    """
    if alpha < 0 or not sigma2 > 0:
        raise ContractError("need alpha >= 0 and sigma2 > 0")
    a = np.asarray(y_star_frame, dtype=np.float64)
    b = np.asarray(y_frame, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError("frames differ in length")
    r = float(np.linalg.norm(a - b))
    if alpha == 0:
        return -r * r / (2 * sigma2)
    if r == 0:
        return -math.inf
    return alpha * math.log(r) - r * r / (2 * sigma2)


def loss_gradient(y_star, y, p_star, p_gen_fn: Callable, hp: HyperParams = HyperParams(),
                  frame_mask=None) -> np.ndarray:
    """d l_total / d y by autograd in float64.

    ``p_gen_fn`` maps a ``(T, M)`` tensor to the length-T truth-label
    posterior (or log-posterior when it sets ``returns_log = True``); its
    own parameters are treated as constants.
    """
    ys = torch.as_tensor(np.asarray(y_star), dtype=torch.float64)
    yy = torch.as_tensor(np.asarray(y), dtype=torch.float64).clone().requires_grad_(True)
    ps = torch.as_tensor(np.asarray(p_star), dtype=torch.float64)
    out = p_gen_fn(yy)
    if getattr(p_gen_fn, "returns_log", False):
        terms = loss_terms(ys, yy, ps, hp=hp, log_p_gen=out, frame_mask=frame_mask)
    else:
        terms = loss_terms(ys, yy, ps, out, hp, frame_mask=frame_mask)
    (grad,) = torch.autograd.grad(terms["l_total"], yy)
    return grad.numpy()
