# cython: language_level=3
"""Compiled scoring kernels. Mirrors medal._scorekern_py exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

BACKEND = "c"


def score_rows(object logits_in, double gamma, double epsilon,
               bint use_entropy_penalty=True):
    """See medal._scorekern_py.score_rows."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] logits = np.ascontiguousarray(
        logits_in, dtype=np.float64)
    cdef Py_ssize_t n_rows = logits.shape[0]
    cdef Py_ssize_t width = logits.shape[1]
    if width < 1:
        raise ValueError("logits must have at least one column")

    cdef cnp.ndarray[cnp.float64_t, ndim=2] probs = np.empty((n_rows, width))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] entropy = np.empty(n_rows)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ent_penalty = np.empty(n_rows)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] margin = np.empty(n_rows)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] margin_factor = np.empty(n_rows)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] scores = np.empty((n_rows, width))

    cdef double ln_v = log(<double>width)
    cdef Py_ssize_t i, j
    cdef double mx, total, p, h, top1, top2, pen, mf

    for i in range(n_rows):
        mx = logits[i, 0]
        for j in range(1, width):
            if logits[i, j] > mx:
                mx = logits[i, j]
        total = 0.0
        for j in range(width):
            p = exp(logits[i, j] - mx)
            probs[i, j] = p
            total += p
        h = 0.0
        top1 = -1.0
        top2 = -1.0
        for j in range(width):
            p = probs[i, j] / total
            probs[i, j] = p
            h -= p * log(p + epsilon)
            if p > top1:
                top2 = top1
                top1 = p
            elif p > top2:
                top2 = p
        if h < 0.0:
            h = 0.0
        elif h > ln_v:
            h = ln_v
        entropy[i] = h
        pen = exp(-h) if use_entropy_penalty else 1.0
        ent_penalty[i] = pen
        if width >= 2:
            margin[i] = top1 - top2
        else:
            margin[i] = top1
        mf = 1.0 / (1.0 + exp(-gamma * margin[i]))
        margin_factor[i] = mf
        for j in range(width):
            scores[i, j] = probs[i, j] * pen * mf

    return probs, entropy, ent_penalty, margin, margin_factor, scores


def entropy_rows(object probs_in):
    """See medal._scorekern_py.entropy_rows."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] probs = np.ascontiguousarray(
        probs_in, dtype=np.float64)
    cdef Py_ssize_t n_rows = probs.shape[0]
    cdef Py_ssize_t width = probs.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ent = np.empty(n_rows)
    cdef double ln_v = log(<double>width)
    cdef Py_ssize_t i, j
    cdef double h, p

    for i in range(n_rows):
        h = 0.0
        for j in range(width):
            p = probs[i, j]
            if p > 0.0:
                h -= p * log(p)
        if h < 0.0:
            h = 0.0
        elif h > ln_v:
            h = ln_v
        ent[i] = h

    return ent
