"""Pure numpy implementations of the pair-sum kernels (fallback path)."""
import numpy as np

_CHUNK = 1 << 22  # pair entries per block


def _block(targets, sources, power, cap, coincident):
    diff = targets[:, None, :] - sources[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    zero = r2 == 0.0
    with np.errstate(divide="ignore"):
        out = np.power(r2, 0.5 * power)
    out = np.minimum(out, cap)
    out[zero] = coincident
    return out


def kernel_matrix(targets, sources, power, cap, coincident):
    m, k = targets.shape[0], sources.shape[0]
    out = np.empty((m, k))
    step = max(1, _CHUNK // max(k, 1))
    for i in range(0, m, step):
        out[i:i + step] = _block(targets[i:i + step], sources, power, cap, coincident)
    return out


def kernel_sum(targets, sources, weights, power, cap, coincident):
    m, k = targets.shape[0], sources.shape[0]
    out = np.empty(m)
    step = max(1, _CHUNK // max(k, 1))
    for i in range(0, m, step):
        out[i:i + step] = _block(targets[i:i + step], sources, power, cap, coincident) @ weights
    return out
