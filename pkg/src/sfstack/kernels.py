"""Hot numeric kernels, numba-jitted with a pure-numpy fallback.

The jitted path is used when numba imports cleanly; set ``SFSTACK_NO_NUMBA=1``
before import to force the numpy fallback (the benchmark under ``benchmarks/``
compares both). Both paths implement identical arithmetic; elementwise kernels
(adam, polyak, relu) are bit-identical, transcendental ones agree to ~1 ulp.

All kernels take contiguous float64 arrays. Anything matmul-shaped stays on
numpy/BLAS, which numba cannot beat; only fusible elementwise chains and the
per-step point-cloud scan live here.
"""

from __future__ import annotations

import math
import os

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


# ---------------------------------------------------------------------------
# numpy reference implementations


def adam_update_np(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    """In-place Adam step on flat arrays. c1, c2 are the bias corrections 1-beta^t."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def polyak_np(target, online, rho):
    """In-place target <- (1-rho)*target + rho*online on flat arrays."""
    target *= 1.0 - rho
    target += rho * online


def relu(x):
    """Rectifier; stays on numpy, which is already memory-bound here."""
    return np.maximum(x, 0.0)


def relu_bwd(dout, out):
    """Grad through relu given the cached post-activation output."""
    return dout * (out > 0.0)


def tanh_gauss_np(mu, log_std, eps):
    """Squashed-Gaussian sample and per-row log-density.

    u = mu + exp(log_std)*eps, a = tanh(u); the log-density includes the
    tanh change-of-variables term in the numerically stable softplus form
    log(1 - tanh(u)^2) = 2*(log 2 - u - softplus(-2u)).
    """
    sigma = np.exp(log_std)
    u = mu + sigma * eps
    a = np.tanh(u)
    m2u = -2.0 * u
    softplus = np.where(m2u > 0.0, m2u, 0.0) + np.log1p(np.exp(-np.abs(m2u)))
    logp_el = -0.5 * eps * eps - log_std - 0.5 * LOG_2PI - 2.0 * (LOG_2 - u - softplus)
    return a, logp_el.sum(axis=-1)


def tanh_gauss_bwd_np(dl_da, dl_dlogp, a, eps, sigma):
    """Grads of (action, log-prob) w.r.t. mean and log-std outputs.

    dl_dlogp is per-row; returns (d_mu, d_log_std) before any clamp mask.
    """
    g_u = dl_da * (1.0 - a * a) + dl_dlogp[:, None] * (2.0 * a)
    d_mu = g_u
    d_ls = g_u * sigma * eps - dl_dlogp[:, None]
    return d_mu, d_ls


def inspect_points_np(mask, units, rhat, shat, cos_cone):
    """One inspection pass over the point cloud.

    Marks points whose unit normal faces the deputy (u . rhat > cos_cone) and
    the sun (u . shat > 0). Returns (newly_inspected_count, mean-direction of
    the still-uninspected normals, zero vector if none or degenerate).
    """
    visible = (units @ rhat > cos_cone) & (units @ shat > 0.0)
    newly = int(np.count_nonzero(visible & ~mask))
    mask |= visible
    rem = units[~mask]
    out = np.zeros(3)
    if rem.shape[0] > 0:
        s = rem.sum(axis=0)
        norm = np.sqrt(s @ s)
        if norm > 1e-12:
            out = s / norm
    return newly, out


# ---------------------------------------------------------------------------
# numba implementations

_NUMBA_OK = False
if not os.environ.get("SFSTACK_NO_NUMBA"):
    try:
        from numba import njit

        _NUMBA_OK = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _NUMBA_OK = False

if _NUMBA_OK:

    @njit(cache=True)
    def adam_update_nb(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
        for i in range(p.size):
            mi = beta1 * m[i] + (1.0 - beta1) * g[i]
            vi = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)

    @njit(cache=True)
    def polyak_nb(target, online, rho):
        for i in range(target.size):
            target[i] = (1.0 - rho) * target[i] + rho * online[i]

    @njit(cache=True)
    def _tanh_gauss_nb(mu, log_std, eps):
        n, d = mu.shape
        a = np.empty_like(mu)
        logp = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                sigma = np.exp(log_std[i, j])
                u = mu[i, j] + sigma * eps[i, j]
                ai = np.tanh(u)
                a[i, j] = ai
                m2u = -2.0 * u
                sp = (m2u if m2u > 0.0 else 0.0) + np.log1p(np.exp(-abs(m2u)))
                acc += (
                    -0.5 * eps[i, j] * eps[i, j]
                    - log_std[i, j]
                    - 0.5 * LOG_2PI
                    - 2.0 * (LOG_2 - u - sp)
                )
            logp[i] = acc
        return a, logp

    def tanh_gauss_nb(mu, log_std, eps):
        return _tanh_gauss_nb(
            np.ascontiguousarray(mu), np.ascontiguousarray(log_std), np.ascontiguousarray(eps)
        )

    @njit(cache=True)
    def _tanh_gauss_bwd_nb(dl_da, dl_dlogp, a, eps, sigma):
        n, d = a.shape
        d_mu = np.empty_like(a)
        d_ls = np.empty_like(a)
        for i in range(n):
            for j in range(d):
                g_u = dl_da[i, j] * (1.0 - a[i, j] * a[i, j]) + dl_dlogp[i] * 2.0 * a[i, j]
                d_mu[i, j] = g_u
                d_ls[i, j] = g_u * sigma[i, j] * eps[i, j] - dl_dlogp[i]
        return d_mu, d_ls

    def tanh_gauss_bwd_nb(dl_da, dl_dlogp, a, eps, sigma):
        return _tanh_gauss_bwd_nb(
            np.ascontiguousarray(dl_da), np.ascontiguousarray(dl_dlogp),
            np.ascontiguousarray(a), np.ascontiguousarray(eps), np.ascontiguousarray(sigma),
        )

    @njit(cache=True)
    def _inspect_points_nb(mask, units, rhat, shat, cos_cone):
        n = units.shape[0]
        newly = 0
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for i in range(n):
            ux = units[i, 0]
            uy = units[i, 1]
            uz = units[i, 2]
            if not mask[i]:
                dr = ux * rhat[0] + uy * rhat[1] + uz * rhat[2]
                ds = ux * shat[0] + uy * shat[1] + uz * shat[2]
                if dr > cos_cone and ds > 0.0:
                    mask[i] = True
                    newly += 1
            if not mask[i]:
                sx += ux
                sy += uy
                sz += uz
        return newly, sx, sy, sz

    def inspect_points_nb(mask, units, rhat, shat, cos_cone):
        newly, sx, sy, sz = _inspect_points_nb(mask, units, rhat, shat, cos_cone)
        out = np.zeros(3)
        norm = math.sqrt(sx * sx + sy * sy + sz * sz)
        if norm > 1e-12:
            out[0] = sx / norm
            out[1] = sy / norm
            out[2] = sz / norm
        return newly, out


NUMBA_ENABLED = _NUMBA_OK

if NUMBA_ENABLED:
    adam_update = adam_update_nb
    polyak = polyak_nb
    tanh_gauss = tanh_gauss_nb
    tanh_gauss_bwd = tanh_gauss_bwd_nb
    inspect_points = inspect_points_nb
else:
    adam_update = adam_update_np
    polyak = polyak_np
    tanh_gauss = tanh_gauss_np
    tanh_gauss_bwd = tanh_gauss_bwd_np
    inspect_points = inspect_points_np
