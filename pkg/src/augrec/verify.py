"""Numerical self-checks for the loss and the impairment sampler.

Each check returns :class:`CheckResult` records so both the test-suite and
the ``verify-losses`` command can report them.  The reference sides are
hand-derived gradients, central finite differences and the Gamma law of the
squared radius; none of them go through autograd.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy import stats

from .loss import loss_terms, regularization_loss, reconstruction_loss, severity_weights
from .toyworld import sample_impaired_frames
from .types import HyperParams


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}) {self.detail}".rstrip()


def neg_log_density_grad(y_star, y, alpha, sigma2):
    """Hand-derived d/dy of ``-(alpha ln r - r^2 / (2 sigma2))`` per frame."""
    diff = y_star - y
    r2 = (diff**2).sum(axis=-1, keepdims=True)
    return -diff / sigma2 + np.asarray(alpha)[..., None] * diff / r2


def rec_grad(y_star, y):
    return -2.0 * (y_star - y)


def reg_grad(y_star, y, w):
    diff = y_star - y
    return np.asarray(w)[:, None] * diff / (diff**2).sum(axis=-1, keepdims=True)


def _autograd(fn, y):
    yy = torch.as_tensor(y, dtype=torch.float64).clone().requires_grad_(True)
    (g,) = torch.autograd.grad(fn(yy), yy)
    return g.numpy()


def _random_pair(rng, t, m, min_r=0.3):
    y_star = rng.normal(size=(t, m))
    step = rng.normal(size=(t, m))
    step *= (min_r + rng.uniform(0, 2, size=(t, 1))) / np.linalg.norm(step, axis=1, keepdims=True)
    return y_star, y_star + step


def check_mle_equivalence(n: int = 100, seed: int = 0, tol: float = 1e-9) -> list[CheckResult]:
    """The impairment-density NLL gradient equals the reconstruction+regulariser gradient.

    General identity (any sigma2): grad NLL = grad L_rec / (2 sigma2) + grad L_reg.
    At sigma2 = 1 / (2 beta) that is ``beta grad L_rec + grad L_reg``; at
    sigma2 = beta / 2 it is ``grad(L_rec + beta L_reg) / beta``.
    """
    rng = np.random.default_rng(seed)
    worst = {"general": 0.0, "sigma2=1/(2beta)": 0.0, "sigma2=beta/2": 0.0}
    for _ in range(n):
        t, m = int(rng.integers(1, 8)), int(rng.integers(1, 24))
        y_star, y = _random_pair(rng, t, m)
        p_star = rng.uniform(0, 1, size=t)
        lam = rng.uniform(0.5, 30)
        beta = rng.uniform(0.01, 2)
        w = np.exp(-lam * p_star)
        ys = torch.as_tensor(y_star)
        g_rec = _autograd(lambda v: reconstruction_loss(ys, v), y)
        g_reg = _autograd(lambda v: regularization_loss(ys, v, torch.as_tensor(w), 1e-8), y)
        sigma2 = rng.uniform(0.1, 5)
        lhs = neg_log_density_grad(y_star, y, w, sigma2)
        worst["general"] = max(worst["general"], np.abs(lhs - (g_rec / (2 * sigma2) + g_reg)).max())
        lhs = neg_log_density_grad(y_star, y, w, 1 / (2 * beta))
        worst["sigma2=1/(2beta)"] = max(worst["sigma2=1/(2beta)"], np.abs(lhs - (beta * g_rec + g_reg)).max())
        lhs = neg_log_density_grad(y_star, y, w, beta / 2)
        g_aug = _autograd(lambda v: reconstruction_loss(ys, v) + beta * regularization_loss(ys, v, torch.as_tensor(w)), y)
        worst["sigma2=beta/2"] = max(worst["sigma2=beta/2"], np.abs(lhs - g_aug / beta).max())
    return [CheckResult(f"mle-equivalence[{k}]", v <= tol, v, tol) for k, v in worst.items()]


class SmoothCritic:
    """Fixed random tanh network + softmax, a smooth stand-in for the classifier."""

    def __init__(self, m: int, k: int, rng, hidden: int = 16):
        self.w1 = torch.as_tensor(rng.normal(size=(m, hidden)) / np.sqrt(m))
        self.w2 = torch.as_tensor(rng.normal(size=(hidden, k)) * 1.5)

    def log_probs(self, y):
        return torch.log_softmax(torch.tanh(y @ self.w1) @ self.w2, dim=-1)


def central_difference(f, y, h=1e-4):
    g = np.zeros_like(y)
    flat = g.reshape(-1)
    base = y.reshape(-1)
    for i in range(base.size):
        up = base.copy()
        dn = base.copy()
        up[i] += h
        dn[i] -= h
        flat[i] = (f(up.reshape(y.shape)) - f(dn.reshape(y.shape))) / (2 * h)
    return g


def rel_err(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def check_gradients(n: int = 100, seed: int = 1, tol: float = 1e-4, step: float = 1e-4) -> list[CheckResult]:
    """Autograd and hand-derived gradients against central finite differences."""
    rng = np.random.default_rng(seed)
    worst = {"L_rec": 0.0, "L_reg": 0.0, "L_consis": 0.0, "L_total": 0.0, "analytic-vs-autograd": 0.0}
    for _ in range(n):
        t, m, k = int(rng.integers(1, 5)), int(rng.integers(2, 8)), int(rng.integers(2, 6))
        y_star, y = _random_pair(rng, t, m)
        labels = torch.as_tensor(rng.integers(0, k, size=t))
        p_star = rng.uniform(0, 1, size=t)
        critic = SmoothCritic(m, k, rng)
        hp = HyperParams(beta=rng.uniform(0.01, 1), gamma=rng.uniform(0.01, 1), lambda_=rng.uniform(1, 30))
        ys = torch.as_tensor(y_star)
        w = severity_weights(torch.as_tensor(p_star), hp.lambda_)

        def log_p(v):
            return critic.log_probs(v).gather(-1, labels[:, None])[:, 0]

        fns = {
            "L_rec": lambda v: reconstruction_loss(ys, v),
            "L_reg": lambda v: regularization_loss(ys, v, w, hp.eps_floor),
            "L_consis": lambda v: -log_p(v).sum(),
            "L_total": lambda v: loss_terms(ys, v, torch.as_tensor(p_star), hp=hp, log_p_gen=log_p(v))["l_total"],
        }
        for name, fn in fns.items():
            auto = _autograd(fn, y)
            fd = central_difference(lambda v: float(fn(torch.as_tensor(v))), y, step)
            worst[name] = max(worst[name], rel_err(auto, fd))
        by_hand = rec_grad(y_star, y) + hp.beta * reg_grad(y_star, y, w.numpy())
        auto = _autograd(lambda v: reconstruction_loss(ys, v) + hp.beta * regularization_loss(ys, v, w), y)
        worst["analytic-vs-autograd"] = max(worst["analytic-vs-autograd"], rel_err(by_hand, auto))
    return [CheckResult(f"gradient[{k}]", v < tol, v, tol) for k, v in worst.items()]


def check_sampler(alphas=(0.0, 1.0, 5.0, 25.0), m: int = 20, sigma2: float = 1.0, n: int = 100_000,
                  seed: int = 2, mean_tol: float = 0.02, significance: float = 0.01) -> list[CheckResult]:
    """Radial second moment and a KS test of r^2 against its Gamma law."""
    out = []
    for i, alpha in enumerate(alphas):
        rng = np.random.default_rng([seed, i])
        frames = sample_impaired_frames(np.zeros(m), alpha, sigma2, n, rng)
        r2 = (frames**2).sum(axis=1)
        expected = (alpha + m) * sigma2
        rel = abs(r2.mean() - expected) / expected
        out.append(CheckResult(f"sampler-moment[alpha={alpha:g}]", rel <= mean_tol, rel, mean_tol,
                               f"E[r^2]={r2.mean():.4f} vs {expected:g}"))
        p = stats.kstest(r2, stats.gamma(a=(alpha + m) / 2, scale=2 * sigma2).cdf).pvalue
        out.append(CheckResult(f"sampler-ks[alpha={alpha:g}]", p > significance, p, significance, "p-value"))
    return out


def run_all(quick: bool = False) -> list[CheckResult]:
    n = 20 if quick else 100
    return check_mle_equivalence(n) + check_gradients(n) + check_sampler(n=20_000 if quick else 100_000)
