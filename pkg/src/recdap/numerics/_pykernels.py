"""Pure-numpy implementations of the segment kernels.

These are the reference versions; the compiled module ``_ckernels`` must agree
with them to rounding.
"""

import numpy as np


def scatter_add_rows(values, index, num_rows):
    """out[index[i]] += values[i] for 2-D ``values``."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    out = np.zeros((num_rows, values.shape[1]), dtype=np.float64)
    np.add.at(out, np.asarray(index, dtype=np.int64), values)
    return out


def segment_softmax(scores, segment, num_segments):
    scores = np.asarray(scores, dtype=np.float64)
    segment = np.asarray(segment, dtype=np.int64)
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, segment, scores)
    ex = np.exp(scores - seg_max[segment])
    seg_sum = np.zeros(num_segments)
    np.add.at(seg_sum, segment, ex)
    return ex / seg_sum[segment]


def segment_softmax_backward(probs, grad, segment, num_segments):
    probs = np.asarray(probs, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    segment = np.asarray(segment, dtype=np.int64)
    dot = np.zeros(num_segments)
    np.add.at(dot, segment, probs * grad)
    return probs * (grad - dot[segment])
