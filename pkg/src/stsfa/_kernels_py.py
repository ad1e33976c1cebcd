"""NumPy implementation of the likelihood kernels (fallback for ``_kernels``)."""

import numpy as np
from scipy.special import log_ndtr

LN2 = np.log(2.0)


def panel_loglik(y, X, beta, decay, delta, sigma2_v, sigma2_u, s):
    n, t_len = y.shape
    eps = y - X @ beta
    a = eps @ decay
    ee = np.einsum("it,it->i", eps, eps)
    bb = decay @ decay
    d2 = sigma2_u / (delta * delta)
    den = sigma2_v + bb * d2
    if sigma2_u > 0.0:
        z = -s * a * np.sqrt(d2) / (np.sqrt(den) * np.sqrt(sigma2_v))
    else:
        z = np.zeros(n)
    terms = -0.5 * np.log(den) + log_ndtr(z) - 0.5 * ee / sigma2_v + 0.5 * z * z
    return float(
        n * LN2 - 0.5 * n * t_len * np.log(2.0 * np.pi)
        - 0.5 * n * (t_len - 1) * np.log(sigma2_v) + terms.sum()
    )


def posterior_moments(eps, decay, delta, sigma2_v, sigma2_u, s):
    a = eps @ decay
    bb = decay @ decay
    d2 = sigma2_u / (delta * delta)
    den = sigma2_v + bb * d2
    return -s * a * d2 / den, d2 * sigma2_v / den
