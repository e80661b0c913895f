"""Shared fixtures and independent reference implementations.

The helpers here deliberately do not call into cdtrain internals: they
re-derive forward passes, Jacobians, reachability ranks and Riccati
solutions from the documented contracts so that tests compare two
independent routes.
"""

import numpy as np
import pytest


def ref_layer_dims(widths):
    """(n_in, n_out) per layer, first layer first."""
    return list(zip(widths[:-1], widths[1:]))


def ref_unpack(widths, theta, use_bias=True):
    """Split a flat parameter vector per the documented layout.

    Layers are stored last to first, each as the row-major weight matrix
    followed by the bias. Returned first layer first.
    """
    layers = []
    offset = 0
    for n_in, n_out in reversed(ref_layer_dims(widths)):
        w = np.asarray(theta[offset:offset + n_in * n_out]).reshape(n_in, n_out)
        offset += n_in * n_out
        b = None
        if use_bias:
            b = np.asarray(theta[offset:offset + n_out])
            offset += n_out
        layers.append((w, b))
    if offset != len(theta):
        raise AssertionError("parameter vector length mismatch in reference unpack")
    layers.reverse()
    return layers


def ref_forward(widths, theta, x, activation="relu", use_bias=True):
    """Reference forward pass; returns (outputs, hidden_masks).

    hidden_masks holds one (r, width) boolean array per hidden layer with
    the strict pre-activation sign pattern, used to detect relu kink
    crossings under finite-difference perturbations.
    """
    layers = ref_unpack(widths, theta, use_bias)
    z = np.asarray(x, dtype=float)
    masks = []
    for i, (w, b) in enumerate(layers):
        h = z @ w
        if b is not None:
            h = h + b
        if i < len(layers) - 1:
            if activation == "relu":
                masks.append(h > 0.0)
                h = np.maximum(h, 0.0)
            elif activation != "identity":
                raise AssertionError(f"reference forward has no activation {activation!r}")
        z = h
    return z, masks


def fd_jacobian(widths, theta, x, activation="relu", use_bias=True, step=1e-5):
    """Central-difference Jacobian plus a kink-free validity mask.

    Returns (jac, valid) with jac of shape (r*n_out, P) stacked data-major
    and valid marking entries where no hidden unit changed sign between the
    two perturbed evaluations, so the difference quotient is trustworthy.
    """
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    r = x.shape[0]
    n_out = widths[-1]
    n_params = len(theta)
    jac = np.zeros((r * n_out, n_params))
    valid = np.ones((r * n_out, n_params), dtype=bool)
    for j in range(n_params):
        bumped = theta.copy()
        bumped[j] += step
        out_plus, masks_plus = ref_forward(widths, bumped, x, activation, use_bias)
        bumped[j] -= 2.0 * step
        out_minus, masks_minus = ref_forward(widths, bumped, x, activation, use_bias)
        diff = (out_plus - out_minus) / (2.0 * step)
        jac[:, j] = diff.reshape(r * n_out)
        if masks_plus:
            ok = np.ones(r, dtype=bool)
            for mp, mm in zip(masks_plus, masks_minus):
                ok &= np.all(mp == mm, axis=1)
            valid[:, j] = np.repeat(ok, n_out)
    return jac, valid


def reachability_matrix_rank(a, b):
    """Rank of [B, AB, ..., A^(n-1)B], the brute-force reachability route."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n = a.shape[0]
    blocks = []
    power = b.copy()
    for _ in range(n):
        blocks.append(power)
        power = a @ power
    return np.linalg.matrix_rank(np.hstack(blocks))


def scalar_dare_root(a, b, q, r):
    """Positive root of b^2 P^2 + (r - a^2 r - q b^2) P - q r = 0.

    This is the stationary point of the scalar Riccati recursion written as
    a quadratic, so it gives the fixed point without iterating.
    """
    c2 = b * b
    c1 = r - a * a * r - q * b * b
    c0 = -q * r
    return (-c1 + np.sqrt(c1 * c1 - 4.0 * c2 * c0)) / (2.0 * c2)


def random_spd_kernel(rng, n, cond_lo=1e-2, cond_hi=1.0):
    """SPD matrix with eigenvalues log-uniform in [cond_lo, cond_hi]."""
    qmat, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.exp(rng.uniform(np.log(cond_lo), np.log(cond_hi), n))
    return (qmat * eigs) @ qmat.T, eigs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
