"""No-U-Turn sampler with dual-averaging step size and windowed mass adaptation.

Multinomial trajectory sampling over a doubling binary tree with the
generalized U-turn criterion, a diagonal mass matrix estimated in expanding
slow windows during warm-up (three-phase schedule: fast initial buffer,
doubling slow windows, fast terminal buffer), and dual averaging of the step
size toward a target acceptance statistic.  Leaves whose energy error
exceeds the divergence threshold, including -inf log densities at stability
boundaries, terminate the trajectory and are counted as divergences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from .exceptions import SamplerError

__all__ = ["NutsOptions", "nuts_chain"]

LogpGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass(frozen=True)
class NutsOptions:
    target_accept: float = 0.8
    max_tree_depth: int = 10
    divergence_threshold: float = 1000.0
    init_buffer: int = 75
    term_buffer: int = 50
    base_window: int = 25

    def __post_init__(self):
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


class _DualAveraging:
    """Nesterov dual averaging of log(step size) toward a target acceptance."""

    GAMMA = 0.05
    T0 = 10.0
    KAPPA = 0.75

    def __init__(self, eps0: float, target: float):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_prob: float):
        self.count += 1
        t = self.count
        eta = 1.0 / (t + self.T0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(t) / self.GAMMA * self.h_bar
        pow_t = t ** (-self.KAPPA)
        self.log_eps_bar = pow_t * self.log_eps + (1.0 - pow_t) * self.log_eps_bar

    @property
    def eps(self) -> float:
        return math.exp(self.log_eps)

    @property
    def eps_final(self) -> float:
        return math.exp(self.log_eps_bar)


def _warmup_windows(n_warmup: int, opts: NutsOptions) -> List[int]:
    """Iteration indices (exclusive ends) at which the mass matrix updates."""
    init_b, term_b, base = opts.init_buffer, opts.term_buffer, opts.base_window
    if n_warmup < 20:
        return []
    if init_b + term_b + base > n_warmup:
        init_b = max(1, int(0.15 * n_warmup))
        term_b = max(1, int(0.10 * n_warmup))
        base = max(1, n_warmup - init_b - term_b)
    ends = []
    start = init_b
    width = base
    while True:
        end = start + width
        # if the next doubling cannot fit, absorb the remainder now
        if end + 2 * width > n_warmup - term_b:
            ends.append(n_warmup - term_b)
            break
        ends.append(end)
        start = end
        width *= 2
    return ends


class _Tree:
    """End points, proposal and running statistics of a trajectory segment."""

    __slots__ = (
        "x_m", "r_m", "g_m", "x_p", "r_p", "g_p",
        "x", "logp", "g", "log_w", "r_sum",
        "alpha_sum", "n_alpha", "diverging", "turning",
    )

    def __init__(self, x, r, g, logp, log_w, alpha, diverging):
        self.x_m = x
        self.r_m = r
        self.g_m = g
        self.x_p = x
        self.r_p = r
        self.g_p = g
        self.x = x
        self.logp = logp
        self.g = g
        self.log_w = log_w
        self.r_sum = r.copy()
        self.alpha_sum = alpha
        self.n_alpha = 1
        self.diverging = diverging
        self.turning = False


def _kinetic(r, inv_mass):
    return 0.5 * float(np.dot(r, inv_mass * r))


def _leapfrog(f: LogpGrad, x, g, r, eps, inv_mass):
    r1 = r + 0.5 * eps * g
    x1 = x + eps * inv_mass * r1
    logp1, g1 = f(x1)
    r1 = r1 + 0.5 * eps * g1
    return x1, r1, g1, logp1


def _turning(r_sum, r_m, r_p, inv_mass) -> bool:
    return (
        float(np.dot(r_sum, inv_mass * r_m)) <= 0.0
        or float(np.dot(r_sum, inv_mass * r_p)) <= 0.0
    )


def _merge(tree: _Tree, other: _Tree, direction: int, inv_mass, rng, biased: bool):
    """Fold ``other`` (the new subtree in ``direction``) into ``tree``."""
    if direction == -1:
        inner_new = other.r_p  # other's seam-side momentum
        inner_old = tree.r_m  # old tree's seam-side momentum
        tree.x_m, tree.r_m, tree.g_m = other.x_m, other.r_m, other.g_m
    else:
        inner_new = other.r_m
        inner_old = tree.r_p
        tree.x_p, tree.r_p, tree.g_p = other.x_p, other.r_p, other.g_p
    far_other = tree.r_m if direction == -1 else tree.r_p
    far_old = tree.r_p if direction == -1 else tree.r_m

    tree.alpha_sum += other.alpha_sum
    tree.n_alpha += other.n_alpha
    tree.diverging = tree.diverging or other.diverging

    if not np.isfinite(other.log_w):
        log_p = -math.inf
    elif biased:
        # progressive sampling favoring the newer half of the trajectory
        log_p = other.log_w - tree.log_w
    else:
        log_p = other.log_w - np.logaddexp(tree.log_w, other.log_w)
    if log_p >= 0.0 or math.log(rng.uniform()) < log_p:
        tree.x, tree.logp, tree.g = other.x, other.logp, other.g
    tree.log_w = float(np.logaddexp(tree.log_w, other.log_w))

    old_r_sum = tree.r_sum
    tree.r_sum = tree.r_sum + other.r_sum
    # merged-tree U-turn plus the sub-trajectory checks across the seam
    if _turning(tree.r_sum, tree.r_m, tree.r_p, inv_mass):
        tree.turning = True
    elif _turning(other.r_sum + inner_old, far_other, inner_old, inv_mass):
        tree.turning = True
    elif _turning(old_r_sum + inner_new, inner_new, far_old, inv_mass):
        tree.turning = True


def _leaf(f, x, g, r, v_eps, inv_mass, h0, opts):
    x1, r1, g1, logp1 = _leapfrog(f, x, g, r, v_eps, inv_mass)
    if np.isfinite(logp1):
        h1 = logp1 - _kinetic(r1, inv_mass)
    else:
        h1 = -math.inf
    delta = h1 - h0 if np.isfinite(h1) else -math.inf
    diverging = (not np.isfinite(delta)) or (-delta > opts.divergence_threshold)
    alpha = min(1.0, math.exp(min(delta, 0.0))) if np.isfinite(delta) else 0.0
    return _Tree(x1, r1, g1, logp1, delta if np.isfinite(delta) else -math.inf,
                 alpha, diverging)


def _build_tree(f, tree_end, depth, v, eps, inv_mass, h0, rng, opts):
    """Build a depth-j subtree starting from (x, g, r) in direction v."""
    x, g, r = tree_end
    if depth == 0:
        return _leaf(f, x, g, r, v * eps, inv_mass, h0, opts)
    first = _build_tree(f, tree_end, depth - 1, v, eps, inv_mass, h0, rng, opts)
    if first.diverging or first.turning:
        return first
    if v == -1:
        next_end = (first.x_m, first.g_m, first.r_m)
    else:
        next_end = (first.x_p, first.g_p, first.r_p)
    second = _build_tree(f, next_end, depth - 1, v, eps, inv_mass, h0, rng, opts)
    _merge(first, second, v, inv_mass, rng, biased=False)
    return first


def _nuts_step(f, x, logp, g, eps, inv_mass, rng, opts):
    mass_sd = 1.0 / np.sqrt(inv_mass)
    r0 = rng.standard_normal(x.size) * mass_sd
    h0 = logp - _kinetic(r0, inv_mass)
    tree = _Tree(x, r0, g, logp, 0.0, 1.0, False)
    tree.n_alpha = 0
    tree.alpha_sum = 0.0
    depth = 0
    divergent = False
    n_leapfrog = 0
    while depth < opts.max_tree_depth:
        v = -1 if rng.uniform() < 0.5 else 1
        end = (tree.x_m, tree.g_m, tree.r_m) if v == -1 else (tree.x_p, tree.g_p, tree.r_p)
        subtree = _build_tree(f, end, depth, v, eps, inv_mass, h0, rng, opts)
        n_leapfrog += 2**depth
        if subtree.diverging:
            divergent = True
            tree.alpha_sum += subtree.alpha_sum
            tree.n_alpha += subtree.n_alpha
            break
        if subtree.turning:
            tree.alpha_sum += subtree.alpha_sum
            tree.n_alpha += subtree.n_alpha
            break
        _merge(tree, subtree, v, inv_mass, rng, biased=True)
        if tree.turning:
            break
        depth += 1
    accept_stat = tree.alpha_sum / max(tree.n_alpha, 1)
    return tree.x, tree.logp, tree.g, accept_stat, divergent, depth, n_leapfrog


def _find_reasonable_epsilon(f, x, logp, g, inv_mass, rng) -> float:
    """Double/halve the step size until the one-step acceptance crosses 1/2."""
    eps = 1.0
    mass_sd = 1.0 / np.sqrt(inv_mass)
    r = rng.standard_normal(x.size) * mass_sd
    h0 = logp - _kinetic(r, inv_mass)
    _, r1, _, logp1 = _leapfrog(f, x, g, r, eps, inv_mass)
    delta = (logp1 - _kinetic(r1, inv_mass)) - h0 if np.isfinite(logp1) else -math.inf
    direction = 1 if delta > math.log(0.5) else -1
    for _ in range(60):
        eps_try = eps * (2.0**direction)
        _, r1, _, logp1 = _leapfrog(f, x, g, r, eps_try, inv_mass)
        delta = (logp1 - _kinetic(r1, inv_mass)) - h0 if np.isfinite(logp1) else -math.inf
        crossed = delta <= math.log(0.5) if direction == 1 else delta > math.log(0.5)
        if crossed:
            return eps_try if direction == -1 else eps
        eps = eps_try
        if eps < 1e-10 or eps > 1e7:
            break
    return eps


def nuts_chain(
    f: LogpGrad,
    x0: np.ndarray,
    n_steps: int,
    n_warmup: int,
    rng: np.random.Generator,
    options: NutsOptions = NutsOptions(),
) -> dict:
    """Run one NUTS chain; returns kept draws and adaptation byproducts.

    ``f`` maps a position to (log density, gradient) and must return -inf
    (with an arbitrary gradient) outside the support.  Keeps the draws after
    ``n_warmup`` adaptation steps.
    """
    if n_warmup >= n_steps:
        raise ValueError("n_warmup must be smaller than n_steps")
    x = np.asarray(x0, dtype=float).copy()
    logp, g = f(x)
    if not np.isfinite(logp):
        raise SamplerError("initial point has non-finite log density")
    dim = x.size
    inv_mass = np.ones(dim)

    eps0 = _find_reasonable_epsilon(f, x, logp, g, inv_mass, rng)
    da = _DualAveraging(eps0, options.target_accept)
    window_ends = _warmup_windows(n_warmup, options)
    window_buf: List[np.ndarray] = []

    n_kept = n_steps - n_warmup
    draws = np.empty((n_kept, dim))
    logps = np.empty(n_kept)
    divergent = np.zeros(n_kept, dtype=bool)
    depths = np.zeros(n_kept, dtype=np.int16)
    warmup_divergences = 0

    eps = eps0
    for it in range(n_steps):
        warming = it < n_warmup
        x, logp, g, accept_stat, div, depth, _ = _nuts_step(
            f, x, logp, g, eps, inv_mass, rng, options
        )
        if warming:
            warmup_divergences += int(div)
            da.update(accept_stat)
            eps = da.eps
            if window_ends:
                window_buf.append(x.copy())
                if it + 1 == window_ends[0]:
                    window_ends.pop(0)
                    n = len(window_buf)
                    if n >= 10:
                        var = np.var(np.asarray(window_buf), axis=0, ddof=1)
                        inv_mass = (n / (n + 5.0)) * var + (5.0 / (n + 5.0)) * 1e-3
                        inv_mass = np.maximum(inv_mass, 1e-10)
                    window_buf.clear()
                    eps0 = _find_reasonable_epsilon(f, x, logp, g, inv_mass, rng)
                    da = _DualAveraging(eps0, options.target_accept)
                    eps = eps0
            if it + 1 == n_warmup:
                eps = da.eps_final
                if warmup_divergences >= n_warmup:
                    raise SamplerError(
                        f"all {n_warmup} warm-up iterations diverged "
                        f"(step size {eps:.3g}); the posterior may be improper "
                        "or the initialization invalid"
                    )
        else:
            k = it - n_warmup
            draws[k] = x
            logps[k] = logp
            divergent[k] = div
            depths[k] = depth
    return {
        "draws": draws,
        "log_post": logps,
        "divergent": divergent,
        "depths": depths,
        "step_size": eps,
        "inv_mass": inv_mass,
        "warmup_divergences": warmup_divergences,
    }
