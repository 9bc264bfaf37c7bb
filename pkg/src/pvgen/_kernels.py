"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import from ``PVGEN_BACKEND`` (``numba`` or
``numpy``).  When the variable is unset numba is used if it imports.  Both
paths implement identical arithmetic; the z-buffer kernel is bit-identical
across backends, the mixture kernel agrees to rounding.
"""

from __future__ import annotations

import logging
import math
import os

import numpy as np

log = logging.getLogger(__name__)

DEPTH_TIE_TOL = 1e-9

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------


def _zbuffer_numpy(px, py, z, height, width, offsets):
    n = px.shape[0]
    npix = height * width
    winner = np.full(npix, -1, dtype=np.int64)
    if n == 0:
        return winner
    idx = np.repeat(np.arange(n, dtype=np.int64), offsets.shape[0])
    u = (px[:, None] + offsets[None, :, 0]).ravel()
    v = (py[:, None] + offsets[None, :, 1]).ravel()
    zz = np.repeat(z, offsets.shape[0])
    ok = (u >= 0) & (u < width) & (v >= 0) & (v < height)
    idx, u, v, zz = idx[ok], u[ok], v[ok], zz[ok]
    if idx.size == 0:
        return winner
    pid = v * width + u
    zmin = np.full(npix, np.inf)
    np.minimum.at(zmin, pid, zz)
    cand = zz <= zmin[pid] + DEPTH_TIE_TOL
    first = np.full(npix, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(first, pid[cand], idx[cand])
    hit = first != np.iinfo(np.int64).max
    winner[hit] = first[hit]
    return winner


def _gmm_numpy(x, sqrt_ab, means, var, logw):
    ab = sqrt_ab * sqrt_ab
    v = ab * var + (1.0 - ab)
    resid = x[None, :] - sqrt_ab * means
    with np.errstate(over="ignore"):  # overflow is detected below as a non-finite max
        logits = logw - 0.5 * np.sum(resid * resid / v + np.log(2.0 * math.pi * v), axis=1)
    top = np.max(logits)
    if not np.isfinite(top):
        resp = np.full(logits.shape[0], 1.0 / logits.shape[0])
        underflow = True
    else:
        e = np.exp(logits - top)
        resp = e / np.sum(e)
        underflow = False
    gain = sqrt_ab * var / v
    comp = means + gain * resid
    return resp @ comp, resp, underflow


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @numba.njit(cache=True)
    def _zbuffer_numba(px, py, z, height, width, offsets):
        npix = height * width
        zmin = np.full(npix, np.inf)
        winner = np.full(npix, -1, dtype=np.int64)
        n = px.shape[0]
        m = offsets.shape[0]
        for i in range(n):
            for j in range(m):
                u = px[i] + offsets[j, 0]
                v = py[i] + offsets[j, 1]
                if u < 0 or u >= width or v < 0 or v >= height:
                    continue
                p = v * width + u
                if z[i] < zmin[p]:
                    zmin[p] = z[i]
        for i in range(n):
            for j in range(m):
                u = px[i] + offsets[j, 0]
                v = py[i] + offsets[j, 1]
                if u < 0 or u >= width or v < 0 or v >= height:
                    continue
                p = v * width + u
                if winner[p] < 0 and z[i] <= zmin[p] + DEPTH_TIE_TOL:
                    winner[p] = i
        return winner

    @numba.njit(cache=True)
    def _gmm_numba(x, sqrt_ab, means, var, logw):
        k_count, d = means.shape
        ab = sqrt_ab * sqrt_ab
        logits = np.empty(k_count)
        for k in range(k_count):
            acc = 0.0
            for i in range(d):
                vi = ab * var[k, i] + (1.0 - ab)
                r = x[i] - sqrt_ab * means[k, i]
                acc += r * r / vi + math.log(2.0 * math.pi * vi)
            logits[k] = logw[k] - 0.5 * acc
        top = np.max(logits)
        resp = np.empty(k_count)
        underflow = False
        if not np.isfinite(top):
            resp[:] = 1.0 / k_count
            underflow = True
        else:
            e = np.exp(logits - top)
            resp[:] = e / np.sum(e)
        out = np.zeros(d)
        for k in range(k_count):
            rk = resp[k]
            if rk == 0.0:
                continue
            for i in range(d):
                vi = ab * var[k, i] + (1.0 - ab)
                r = x[i] - sqrt_ab * means[k, i]
                out[i] += rk * (means[k, i] + sqrt_ab * var[k, i] / vi * r)
        return out, resp, underflow


_IMPLS = {"numpy": {"zbuffer": _zbuffer_numpy, "gmm": _gmm_numpy}}
if HAS_NUMBA:
    _IMPLS["numba"] = {"zbuffer": _zbuffer_numba, "gmm": _gmm_numba}


def _initial_backend() -> str:
    want = os.environ.get("PVGEN_BACKEND", "").strip().lower()
    if want == "numpy":
        return "numpy"
    if want == "numba" and not HAS_NUMBA:
        log.warning("PVGEN_BACKEND=numba but numba is not importable; using numpy")
        return "numpy"
    if want not in ("", "numba"):
        raise ValueError(f"PVGEN_BACKEND must be 'numba' or 'numpy', got {want!r}")
    return "numba" if HAS_NUMBA else "numpy"


BACKEND = _initial_backend()


def available_backends() -> list[str]:
    return sorted(_IMPLS)


def set_backend(name: str) -> str:
    """Switch the active backend; returns the previous one."""
    global BACKEND
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    prev, BACKEND = BACKEND, name
    return prev


def disc_offsets(radius: int) -> np.ndarray:
    """Integer pixel offsets inside a disc; radius 0 is the single nearest pixel."""
    if radius < 0:
        raise ValueError("splat radius must be >= 0")
    r = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(r, r, indexing="xy")
    keep = dx * dx + dy * dy <= radius * radius
    return np.stack([dx[keep], dy[keep]], axis=1).astype(np.int64)


def zbuffer(px, py, z, height: int, width: int, offsets) -> np.ndarray:
    """Per-pixel winning point index (``-1`` where uncovered).

    A pixel goes to the lowest-index point among those within
    ``DEPTH_TIE_TOL`` of the pixel's minimum depth.
    """
    fn = _IMPLS[BACKEND]["zbuffer"]
    return fn(
        np.ascontiguousarray(px, dtype=np.int64),
        np.ascontiguousarray(py, dtype=np.int64),
        np.ascontiguousarray(z, dtype=np.float64),
        int(height),
        int(width),
        np.ascontiguousarray(offsets, dtype=np.int64),
    )


def gmm_posterior(x, sqrt_ab: float, means, var, logw):
    """Posterior mean of x0 under a diagonal Gaussian mixture given x_t.

    Args:
        x: flattened noisy sample, shape (D,).
        sqrt_ab: sqrt of the cumulative signal coefficient at t.
        means: component means, shape (K, D).
        var: per-element prior variances, shape (K, D).
        logw: log mixture weights, shape (K,).

    Returns:
        (posterior mean (D,), responsibilities (K,), underflow flag)
    """
    fn = _IMPLS[BACKEND]["gmm"]
    mean, resp, underflow = fn(
        np.ascontiguousarray(x, dtype=np.float64),
        float(sqrt_ab),
        np.ascontiguousarray(means, dtype=np.float64),
        np.ascontiguousarray(var, dtype=np.float64),
        np.ascontiguousarray(logw, dtype=np.float64),
    )
    return mean, resp, bool(underflow)
