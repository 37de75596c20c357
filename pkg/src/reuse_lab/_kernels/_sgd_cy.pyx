# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGD chain kernels.

Hot inner loops for the simulation engine; see `_sgd_py` for the reference
semantics.  All functions release the GIL while iterating.
"""

def dense_chain(double[:, ::1] x, double[::1] xi, long long[::1] order,
                double eta, double[::1] theta, double limit_sq):
    cdef Py_ssize_t steps = order.shape[0]
    cdef Py_ssize_t d = theta.shape[0]
    cdef Py_ssize_t t, j, l
    cdef double g, coef, v, nrm
    cdef long long bad = -1
    with nogil:
        for t in range(steps):
            j = <Py_ssize_t> order[t]
            g = -xi[j]
            for l in range(d):
                g += x[j, l] * theta[l]
            coef = eta * g
            nrm = 0.0
            for l in range(d):
                v = theta[l] - coef * x[j, l]
                theta[l] = v
                nrm += v * v
            if not nrm <= limit_sq:
                bad = t
                break
    return bad


def dense_chain_tracked(double[:, ::1] x, double[::1] xi, long long[::1] order,
                        double eta, double[::1] theta,
                        double[::1] theta_bias, double[::1] theta_var,
                        double limit_sq):
    cdef Py_ssize_t steps = order.shape[0]
    cdef Py_ssize_t d = theta.shape[0]
    cdef Py_ssize_t t, j, l
    cdef double g, gb, gv, coef, v, nrm, xl
    cdef long long bad = -1
    with nogil:
        for t in range(steps):
            j = <Py_ssize_t> order[t]
            g = -xi[j]
            gb = 0.0
            gv = -xi[j]
            for l in range(d):
                xl = x[j, l]
                g += xl * theta[l]
                gb += xl * theta_bias[l]
                gv += xl * theta_var[l]
            g *= eta
            gb *= eta
            gv *= eta
            nrm = 0.0
            for l in range(d):
                xl = x[j, l]
                v = theta[l] - g * xl
                theta[l] = v
                nrm += v * v
                theta_bias[l] -= gb * xl
                theta_var[l] -= gv * xl
            if not nrm <= limit_sq:
                bad = t
                break
    return bad


def onehot_chain(long long[::1] idx, double[::1] mu, double[::1] xi,
                 long long[::1] order, double eta, double[::1] theta,
                 double limit_sq):
    cdef Py_ssize_t steps = order.shape[0]
    cdef Py_ssize_t d = theta.shape[0]
    cdef Py_ssize_t t, j, i, l
    cdef double m, old, new, nrm
    cdef long long bad = -1
    nrm = 0.0
    for l in range(d):
        nrm += theta[l] * theta[l]
    with nogil:
        for t in range(steps):
            j = <Py_ssize_t> order[t]
            i = <Py_ssize_t> idx[j]
            m = mu[i]
            old = theta[i]
            new = old - eta * (m * old - xi[j]) * m
            theta[i] = new
            nrm += new * new - old * old
            if not nrm <= limit_sq:
                bad = t
                break
    return bad


def onehot_chain_tracked(long long[::1] idx, double[::1] mu, double[::1] xi,
                         long long[::1] order, double eta, double[::1] theta,
                         double[::1] theta_bias, double[::1] theta_var,
                         double limit_sq):
    cdef Py_ssize_t steps = order.shape[0]
    cdef Py_ssize_t d = theta.shape[0]
    cdef Py_ssize_t t, j, i, l
    cdef double m, old, new, nrm
    cdef long long bad = -1
    nrm = 0.0
    for l in range(d):
        nrm += theta[l] * theta[l]
    with nogil:
        for t in range(steps):
            j = <Py_ssize_t> order[t]
            i = <Py_ssize_t> idx[j]
            m = mu[i]
            old = theta[i]
            new = old - eta * (m * old - xi[j]) * m
            theta[i] = new
            theta_bias[i] -= eta * (m * theta_bias[i]) * m
            theta_var[i] -= eta * (m * theta_var[i] - xi[j]) * m
            nrm += new * new - old * old
            if not nrm <= limit_sq:
                bad = t
                break
    return bad
