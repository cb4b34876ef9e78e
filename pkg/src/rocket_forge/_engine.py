"""Compiled core of the batched kernel transform.

Parallelism is over examples only: each example's feature row is produced by
exactly one worker, with a fixed inner summation order (channels, then taps,
then positions). Products and accumulators are float64 and each pooled value
is rounded to float32 once, so results are bit-identical for any worker
count. fastmath stays off: it could reassociate the sums.
"""

import math

import numpy as np
from numba import njit, prange

MODE_HARD = 0
MODE_SOFT = 1


@njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    t = math.exp(z)
    return t / (1.0 + t)


@njit(cache=True, parallel=True)
def run_transform(data, lengths, biases, dilations, paddings,
                  weights_flat, weight_offsets, channels_flat, channel_offsets,
                  mode, lam, shift, features_per_kernel):
    n_examples, _, n_timesteps = data.shape
    num_kernels = lengths.shape[0]
    out = np.empty((n_examples, num_kernels * features_per_kernel), np.float32)
    for i in prange(n_examples):
        for k in range(num_kernels):
            length = lengths[k]
            dilation = dilations[k]
            padding = paddings[k]
            bias = np.float64(biases[k])
            out_len = n_timesteps + 2 * padding - (length - 1) * dilation
            ch_start = channel_offsets[k]
            ch_end = channel_offsets[k + 1]
            w_start = weight_offsets[k]

            positive = 0
            soft_sum = 0.0
            running_max = np.float32(-np.inf)
            for p in range(out_len):
                acc = bias
                w_index = w_start
                for c in range(ch_start, ch_end):
                    channel = channels_flat[c]
                    pos = p - padding
                    for _ in range(length):
                        if 0 <= pos < n_timesteps:
                            acc += (np.float64(weights_flat[w_index])
                                    * np.float64(data[i, channel, pos]))
                        pos += dilation
                        w_index += 1
                value = np.float32(acc)
                if mode == MODE_HARD:
                    if value > 0.0:
                        positive += 1
                else:
                    soft_sum += _sigmoid(lam * np.float64(value) - shift)
                if value > running_max:
                    running_max = value

            column = k * features_per_kernel
            if mode == MODE_HARD:
                out[i, column] = np.float32(positive / out_len)
            else:
                out[i, column] = np.float32(soft_sum / out_len)
            if features_per_kernel == 2:
                out[i, column + 1] = running_max
    return out
