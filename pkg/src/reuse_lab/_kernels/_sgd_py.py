"""Pure-numpy SGD chain kernels.

Fallback used when the compiled extension is unavailable.  Semantics match
`_sgd_cy` exactly: each function advances theta = w - w_star in place through
the visit sequence `order` and returns -1 on success or the 0-based step
index at which the squared norm of theta first exceeded `limit_sq` (or went
non-finite).  The tracked variants co-evolve the noise-free companion
process `theta_bias` and the noise-only process `theta_var` on the same
example stream.
"""

from __future__ import annotations

import numpy as np


def dense_chain(x, xi, order, eta, theta, limit_sq):
    for t in range(order.size):
        j = order[t]
        row = x[j]
        g = row @ theta - xi[j]
        theta -= (eta * g) * row
        nrm = theta @ theta
        if not nrm <= limit_sq:
            return t
    return -1


def dense_chain_tracked(x, xi, order, eta, theta, theta_bias, theta_var, limit_sq):
    for t in range(order.size):
        j = order[t]
        row = x[j]
        g = row @ theta - xi[j]
        theta -= (eta * g) * row
        g_bias = row @ theta_bias
        theta_bias -= (eta * g_bias) * row
        g_var = row @ theta_var - xi[j]
        theta_var -= (eta * g_var) * row
        nrm = theta @ theta
        if not nrm <= limit_sq:
            return t
    return -1


def onehot_chain(idx, mu, xi, order, eta, theta, limit_sq):
    nrm = float(theta @ theta)
    for t in range(order.size):
        j = order[t]
        i = idx[j]
        m = mu[i]
        old = theta[i]
        new = old - eta * (m * old - xi[j]) * m
        theta[i] = new
        nrm += new * new - old * old
        if not nrm <= limit_sq:
            return t
    return -1


def onehot_chain_tracked(idx, mu, xi, order, eta, theta, theta_bias, theta_var, limit_sq):
    nrm = float(theta @ theta)
    for t in range(order.size):
        j = order[t]
        i = idx[j]
        m = mu[i]
        old = theta[i]
        new = old - eta * (m * old - xi[j]) * m
        theta[i] = new
        theta_bias[i] -= eta * (m * theta_bias[i]) * m
        theta_var[i] -= eta * (m * theta_var[i] - xi[j]) * m
        nrm += new * new - old * old
        if not nrm <= limit_sq:
            return t
    return -1
