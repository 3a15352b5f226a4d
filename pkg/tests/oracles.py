"""Independent reference implementations used only by tests.

Deliberately written with plain Python loops and math calls so they share
no code path with the library; tolerance comparisons against them are
meaningful.
"""

import math

import numpy as np


def affine_oracle(x, w, b):
    """y[i, j] = sum_k x[i, k] w[k, j] + b[j], via explicit loops."""
    m, d_in = x.shape
    d_out = w.shape[1]
    y = np.zeros((m, d_out))
    for i in range(m):
        for j in range(d_out):
            acc = 0.0 if b is None else b[j]
            for k in range(d_in):
                acc += x[i, k] * w[k, j]
            y[i, j] = acc
    return y


def directional_attention_oracle(s_hat, v_hat, t_hat, w_query, w_keys, w_values,
                                 query_modality):
    """Loop-based scaled dot-product attention over the three modality slots.

    Returns (fused (M, d_val), weights (M, 3)) with slots ordered s, v, t.
    """
    embeds = {"s": s_hat, "v": v_hat, "t": t_hat}
    m = s_hat.shape[0]
    d_k = w_keys["s"].shape[1]
    d_val = w_values["s"].shape[1]
    fused = np.zeros((m, d_val))
    weights = np.zeros((m, 3))
    for i in range(m):
        q = [sum(embeds[query_modality][i][r] * w_query[r][c]
                 for r in range(w_query.shape[0])) for c in range(d_k)]
        logits = []
        vals = []
        for mod in ("s", "v", "t"):
            key = [sum(embeds[mod][i][r] * w_keys[mod][r][c]
                       for r in range(w_keys[mod].shape[0])) for c in range(d_k)]
            logits.append(sum(q[c] * key[c] for c in range(d_k)) / math.sqrt(d_k))
            vals.append([sum(embeds[mod][i][r] * w_values[mod][r][c]
                             for r in range(w_values[mod].shape[0]))
                         for c in range(d_val)])
        mx = max(logits)
        exps = [math.exp(l - mx) for l in logits]
        z = sum(exps)
        w3 = [e / z for e in exps]
        weights[i] = w3
        for c in range(d_val):
            fused[i, c] = sum(w3[j] * vals[j][c] for j in range(3))
    return fused, weights


def lstm_step_oracle(x, h_prev, c_prev, w_input, w_hidden, bias):
    """Gate-by-gate scalar LSTM step; gate order input, forget, cand, output."""

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))

    hsz = h_prev.shape[0]
    h_new = np.zeros(hsz)
    c_new = np.zeros(hsz)
    for j in range(hsz):
        acc = [bias[g * hsz + j] for g in range(4)]
        for g in range(4):
            for k in range(x.shape[0]):
                acc[g] += w_input[g * hsz + j, k] * x[k]
            for k in range(hsz):
                acc[g] += w_hidden[g * hsz + j, k] * h_prev[k]
        i, f, g_, o = sig(acc[0]), sig(acc[1]), math.tanh(acc[2]), sig(acc[3])
        c_new[j] = f * c_prev[j] + i * g_
        h_new[j] = o * math.tanh(c_new[j])
    return h_new, c_new


def confusion_counts_oracle(true_labels, predicted, n_classes):
    counts = [[0] * n_classes for _ in range(n_classes)]
    for t, p in zip(true_labels, predicted):
        counts[t][p] += 1
    return counts
