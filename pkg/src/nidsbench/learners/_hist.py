"""Jitted kernels for histogram gradient boosting."""

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is too old for numba; avoid the warning it triggers
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(cache=True, parallel=True, nogil=True)
def build_histograms(binned, sample_idx, gradients, hessians, n_bins):
    """Per-feature (sum_g, sum_h, count) histograms over ``sample_idx``."""
    n_features = binned.shape[1]
    hist = np.zeros((n_features, n_bins, 3), dtype=np.float64)
    for f in prange(n_features):
        col = binned[:, f]
        for i in range(sample_idx.shape[0]):
            s = sample_idx[i]
            b = col[s]
            hist[f, b, 0] += gradients[s]
            hist[f, b, 1] += hessians[s]
            hist[f, b, 2] += 1.0
    return hist


@njit(cache=True)
def find_best_split(hist, n_bins_per_feature, sum_g, sum_h, count, l2, min_samples_leaf, min_hessian):
    """Best (gain, feature, bin) split; left child holds bins ``<= bin``."""
    best_gain = 0.0
    best_f = -1
    best_b = -1
    parent = sum_g * sum_g / (sum_h + l2)
    for f in range(hist.shape[0]):
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(n_bins_per_feature[f] - 1):
            gl += hist[f, b, 0]
            hl += hist[f, b, 1]
            cl += hist[f, b, 2]
            cr = count - cl
            if cl < min_samples_leaf:
                continue
            if cr < min_samples_leaf:
                break
            hr = sum_h - hl
            if hl < min_hessian or hr < min_hessian:
                continue
            gr = sum_g - gl
            gain = gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
    return best_gain, best_f, best_b


@njit(cache=True)
def partition(binned, sample_idx, feature, bin_threshold):
    left = np.empty(sample_idx.shape[0], dtype=sample_idx.dtype)
    right = np.empty(sample_idx.shape[0], dtype=sample_idx.dtype)
    nl = 0
    nr = 0
    for i in range(sample_idx.shape[0]):
        s = sample_idx[i]
        if binned[s, feature] <= bin_threshold:
            left[nl] = s
            nl += 1
        else:
            right[nr] = s
            nr += 1
    return left[:nl], right[:nr]


@njit(cache=True, nogil=True)
def predict_binned(binned, feature, bin_threshold, left, right, leaf_value):
    n = binned.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if binned[i, feature[node]] <= bin_threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf_value[node]
    return out
