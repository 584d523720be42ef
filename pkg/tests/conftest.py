import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_conv(y, w, b=0.0):
    """Zero-padded 'same' correlation of one channel, written out by hand."""
    M, K = len(y), len(w)
    pad = (K - 1) // 2
    out = []
    for m in range(M):
        acc = b
        for r in range(K):
            j = m + r - pad
            if 0 <= j < M:
                acc += w[r] * y[j]
        out.append(acc)
    return np.array(out)


def generative_oracle(weights, biases, inputs):
    """Scalar evaluation of sum_i sum_r sum_q w[k,i,r,q] * y_i(m + r - pad)**(q+1) + b_k."""
    out_c, in_c, K, Q = weights.shape
    M = inputs.shape[1]
    pad = (K - 1) // 2
    out = np.zeros((out_c, M))
    for k in range(out_c):
        for m in range(M):
            acc = float(biases[k])
            for i in range(in_c):
                for r in range(K):
                    j = m + r - pad
                    if 0 <= j < M:
                        y = float(inputs[i, j])
                        for q in range(Q):
                            acc += float(weights[k, i, r, q]) * y ** (q + 1)
            out[k, m] = acc
    return out
