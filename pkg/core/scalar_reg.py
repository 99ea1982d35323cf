# core/scalar_reg.py

import os
import sys
from dataclasses import dataclass

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.utils.errors import ConfigError

ROOT_MAX_ITER = 200


@dataclass(frozen=True)
class RegParams:
    """Parameters of the smoothed L^q penalty and the control box"""
    q: float = 0.5
    gamma: float = 16000.0
    alpha: float = 0.24
    beta: float = 0.0002
    u_a: float = -0.8
    u_b: float = 0.55

    def __post_init__(self):
        for name in ("q", "gamma", "alpha", "beta", "u_a", "u_b"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be a real number, got {value!r}")
            if not np.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not 0.0 < self.q < 1.0:
            raise ConfigError(f"invalid q={self.q}: requires 0 < q < 1")
        if self.gamma < 1.0:
            raise ConfigError(f"invalid gamma={self.gamma}: requires gamma >= 1")
        if self.alpha <= 0.0:
            raise ConfigError(f"invalid alpha={self.alpha}: requires alpha > 0")
        if self.beta < 0.0:
            raise ConfigError(f"invalid beta={self.beta}: requires beta >= 0")
        if not self.u_a < 0.0 < self.u_b:
            raise ConfigError(f"invalid box [{self.u_a}, {self.u_b}]: requires u_a < 0 < u_b")

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in ("q", "gamma", "alpha", "beta", "u_a", "u_b")}
        values.update(changes)
        return RegParams(**values)

    @property
    def delta_gamma(self):
        """Slope of the convex L1 part: q^q gamma^(1-q)"""
        return self.q ** self.q * self.gamma ** (1.0 - self.q)

    @property
    def lipschitz_j(self):
        return 2.0 * self.gamma * self.delta_gamma / self.q

    @property
    def core_radius(self):
        return 1.0 / self.gamma

    @property
    def shift(self):
        """(1-q)/gamma, the offset of the outer branch of huber"""
        return (1.0 - self.q) / self.gamma

    @property
    def s_star(self):
        return (self.beta / self.alpha * self.q * (1.0 - self.q)) ** (1.0 / (2.0 - self.q))

    @property
    def jump_threshold(self):
        """Smallest magnitude of a nonzero interior minimiser"""
        return self.s_star + self.shift

    @property
    def eta_min(self):
        """Minimum of alpha*u + beta*q*(u - shift)^(q-1) over the outer branch"""
        return self.alpha * self.s_star * (1.0 + 1.0 / (1.0 - self.q)) + self.alpha * self.shift


# --- helpers ---

def _checked(t, name="t"):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)):
        raise ValueError(f"{name} contains NaN")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _outer_gap(a, p):
    """|t| - shift, clamped so powers stay defined inside the core"""
    return np.maximum(a, p.core_radius) - p.shift


# --- pointwise functions ---

def huber(t, p):
    """Huber-like smoothing of |t|: q gamma^((1-q)/q) |t|^(1/q) on the core, |t| - (1-q)/gamma outside"""
    arr = _checked(t)
    a = np.abs(arr)
    inside = a <= p.core_radius
    core = p.q * p.gamma ** ((1.0 - p.q) / p.q) * np.minimum(a, p.core_radius) ** (1.0 / p.q)
    return _out(np.where(inside, core, a - p.shift), t)


def penalty_density(t, p):
    """huber(t)^q; equals delta_gamma |t| on the core"""
    return _out(np.asarray(huber(t, p)) ** p.q, t)


def j_func(t, p):
    """Derivative of the concave part: delta_gamma |t| - huber(t)^q = H(t), j = H'"""
    arr = _checked(t)
    a = np.abs(arr)
    outer = (p.delta_gamma - p.q * _outer_gap(a, p) ** (p.q - 1.0)) * np.sign(arr)
    return _out(np.where(a > p.core_radius, outer, 0.0), t)


def penalty_derivative(t, p):
    """d/dt huber(t)^q; zero at t = 0"""
    arr = _checked(t)
    a = np.abs(arr)
    outer = p.q * _outer_gap(a, p) ** (p.q - 1.0)
    return _out(np.sign(arr) * np.where(a > p.core_radius, outer, p.delta_gamma), t)


def penalty_second_derivative(t, p):
    arr = _checked(t)
    a = np.abs(arr)
    outer = p.q * (p.q - 1.0) * _outer_gap(a, p) ** (p.q - 2.0)
    return _out(np.where(a > p.core_radius, outer, 0.0), t)


def soft_threshold(y, tau):
    """Proximal map of tau |.|"""
    arr = _checked(y, "y")
    if tau < 0 or np.isnan(tau):
        raise ValueError(f"tau must be nonnegative, got {tau}")
    return _out(np.sign(arr) * np.maximum(np.abs(arr) - tau, 0.0), y)


def psi(u, phi_val, p):
    """Pointwise DC objective phi u + alpha/2 u^2 + beta huber(u)^q"""
    u = np.asarray(u, dtype=float)
    phi_val = np.asarray(phi_val, dtype=float)
    value = phi_val * u + 0.5 * p.alpha * u ** 2 + p.beta * np.asarray(penalty_density(u, p))
    return _out(value, u if np.ndim(u) else phi_val)


def _eta(u, p):
    return p.alpha * u + p.beta * p.q * (u - p.shift) ** (p.q - 1.0)


def _eta_prime(u, p):
    return p.alpha + p.beta * p.q * (p.q - 1.0) * (u - p.shift) ** (p.q - 2.0)


def _positive_roots(target, p):
    """Solve eta(u) = target on the increasing branch; NaN where no root exists"""
    lo0 = max(p.jump_threshold, p.core_radius)
    target = np.asarray(target, dtype=float)
    roots = np.full(target.shape, np.nan)
    has_root = target > _eta(lo0, p)
    if not np.any(has_root):
        return roots

    tau = target[has_root]
    lo = np.full(tau.shape, lo0)
    hi = np.maximum(10.0, 2.0 * (np.abs(tau) + 1.0) / p.alpha)
    x = np.clip(tau / p.alpha, lo, hi)
    tol = 1e-12 * max(1.0, p.alpha)

    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(ROOT_MAX_ITER):
            f = _eta(x, p) - tau
            if np.all(np.abs(f) <= tol):
                break
            lo = np.where(f < 0, x, lo)
            hi = np.where(f > 0, x, hi)
            newton = x - f / _eta_prime(x, p)
            inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
            x = np.where(np.abs(f) <= tol, x, np.where(inside, newton, 0.5 * (lo + hi)))

    roots[has_root] = x
    return roots


def critical_roots(phi, p):
    """Roots of alpha u + beta pen'(u) = -phi on the positive and negative outer branches.

    Returns (positive, negative) arrays with NaN where the branch has no root.
    """
    phi = _checked(phi, "phi")
    return _positive_roots(-phi, p), -_positive_roots(phi, p)


def critical_root(phi_val, p):
    """Scalar critical root, or None when neither branch admits one"""
    pos, neg = critical_roots(np.array([phi_val], dtype=float), p)
    if np.isfinite(pos[0]):
        return float(pos[0])
    if np.isfinite(neg[0]):
        return float(neg[0])
    return None


def dc_argmin(phi, p):
    """Global minimiser of psi(., phi) over [u_a, u_b], elementwise.

    Candidates are 0, the bounds, the clamped critical roots and the clamped
    stationary points of the linear core. Ties go to 0, then to the smaller |u|.
    """
    phi = np.atleast_1d(_checked(phi, "phi"))
    pos, neg = critical_roots(phi, p)
    r = p.core_radius
    core_pos = np.clip(-(phi + p.beta * p.delta_gamma) / p.alpha, 0.0, r)
    core_neg = np.clip(-(phi - p.beta * p.delta_gamma) / p.alpha, -r, 0.0)

    n = phi.shape[0]
    cands = np.column_stack([
        np.zeros(n),
        np.full(n, p.u_a),
        np.full(n, p.u_b),
        np.where(np.isnan(pos), 0.0, pos),
        np.where(np.isnan(neg), 0.0, neg),
        core_pos,
        core_neg,
    ])
    cands = np.clip(cands, p.u_a, p.u_b)
    values = psi(cands, phi[:, None], p)

    best = values.min(axis=1, keepdims=True)
    slack = 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(best))
    tied = values <= best + slack
    magnitude = np.where(tied, np.abs(cands), np.inf)
    pick = np.argmin(magnitude, axis=1)
    return cands[np.arange(n), pick]


def scalar_dc_argmin(phi_val, p):
    return float(dc_argmin(np.array([phi_val], dtype=float), p)[0])


def _interior_nonzero(u, p):
    u = np.asarray(u, dtype=float)
    return (u != 0) & (u > p.u_a) & (u < p.u_b), np.abs(u)


def core_support_mask(u, p):
    """Nonzero values strictly inside the box with |u| <= 1/gamma"""
    interior, a = _interior_nonzero(u, p)
    return interior & (a <= p.core_radius)


def jump_band_mask(u, p):
    """Nonzero values strictly inside the box with 1/gamma < |u| < s* + (1-q)/gamma.

    Minimisers of psi never land here: interior candidates are either critical
    roots with |u| >= jump_threshold or stationary points of the smoothing core.
    """
    interior, a = _interior_nonzero(u, p)
    return interior & (a > p.core_radius) & (a < p.jump_threshold)


if __name__ == "__main__":
    params = RegParams()
    print("delta_gamma", params.delta_gamma, "s*", params.s_star, "threshold", params.jump_threshold)
    print("root(-0.5)", critical_root(-0.5, params), "argmin(-0.5)", scalar_dc_argmin(-0.5, params))
