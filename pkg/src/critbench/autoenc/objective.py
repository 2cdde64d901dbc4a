"""Wrap the autoencoder loss on a data set as an :class:`ObjectiveHandle`."""
from __future__ import annotations

import numpy as np

from ..core import ObjectiveHandle, ObjectiveMeta
from .data import MinibatchSampler
from .model import Shape, batch_loss, batch_loss_and_grad, flatten, glorot_init, pearlmutter_hvp


def estimate_meta(shape: Shape, Z: np.ndarray, rng: np.random.Generator, n_probes: int = 8,
                  power_iters: int = 20, max_rows: int = 512) -> ObjectiveMeta:
    """Probe-based ``sigma`` and ``L`` for a network loss.

    ``sigma`` is the largest gradient norm over Glorot-initialised probes and
    ``L`` the largest Hessian spectral radius found by power iteration on the
    same probes, both on at most ``max_rows`` randomly chosen examples.
    Neither is a certified bound, hence the ``estimated`` flag.
    """
    if Z.shape[0] > max_rows:
        Z = Z[np.sort(rng.choice(Z.shape[0], max_rows, replace=False))]
    sigma, L = 0.0, 0.0
    for _ in range(n_probes):
        x = flatten(glorot_init(rng, shape.ell, shape.d, shape.h))
        _, g = batch_loss_and_grad(shape, Z, x)
        sigma = max(sigma, float(np.linalg.norm(g)))
        v = rng.standard_normal(x.size)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(power_iters):
            w = pearlmutter_hvp(shape, Z, v, x)
            lam = float(np.linalg.norm(w))
            if lam == 0:
                break
            v = w / lam
        L = max(L, lam)
    return ObjectiveMeta(L=max(L, 1e-12), sigma=max(sigma, 1e-12), f_star=0.0, B_l=0.0,
                         sigma_estimated=True, note=f"sigma and L estimated over {n_probes} probes")


def autoencoder_objective(shape: Shape, Z: np.ndarray, meta: ObjectiveMeta = None,
                          rng: np.random.Generator = None) -> ObjectiveHandle:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != shape.d:
        raise ValueError(f"data has {Z.shape[1]} columns, network expects d={shape.d}")
    if meta is None:
        meta = estimate_meta(shape, Z, rng if rng is not None else np.random.default_rng(0))
    return ObjectiveHandle(
        dim=shape.size,
        value_fn=lambda x: batch_loss(shape, x, Z),
        grad_fn=lambda x: batch_loss_and_grad(shape, Z, x)[1],
        hvp_fn=lambda x, v: pearlmutter_hvp(shape, Z, v, x),
        meta=meta,
        name=f"autoencoder(l={shape.ell},d={shape.d},h={shape.h})",
    )


def minibatch_oracle(shape: Shape, Z: np.ndarray, batch_size: int, rng: np.random.Generator):
    sampler = MinibatchSampler(Z.shape[0], batch_size, rng)

    def oracle(x):
        return batch_loss_and_grad(shape, Z[sampler.next()], x)[1]

    return oracle
