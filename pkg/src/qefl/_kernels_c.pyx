# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels, drop-in for ``qefl._kernels_py``.

Works one example at a time. Every inner loop runs over a contiguous axis
without reassociating sums (forward uses transposed weights so the product
becomes a sequence of axpy updates), so gcc vectorizes them under plain
-O3 and results stay bitwise reproducible. They are not bitwise equal to
the numpy fallback: summation order differs.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, log, isfinite
from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t

cnp.import_array()


cdef struct Net:
    int nl            # number of affine layers, head included
    int *d            # widths, nl + 1 entries
    Py_ssize_t *woff  # offset of each layer's weights in the flat vector
    Py_ssize_t *aoff  # offset of each sine layer's [cos(a), sin(a)] block in act
    int widest
    double *wt        # transposed weights, same offsets as woff
    double *act
    double *logits
    double *g
    double *gprev


cdef int _net_init(Net *net, dims) except -1:
    cdef int k
    cdef Py_ssize_t off = 0, aoff = 0
    net.nl = len(dims) - 1
    net.d = <int *> malloc((net.nl + 1) * sizeof(int))
    net.woff = <Py_ssize_t *> malloc(net.nl * sizeof(Py_ssize_t))
    net.aoff = <Py_ssize_t *> malloc(net.nl * sizeof(Py_ssize_t))
    for k in range(net.nl + 1):
        net.d[k] = dims[k]
    net.widest = 0
    for k in range(net.nl):
        net.woff[k] = off
        net.aoff[k] = aoff
        off += net.d[k + 1] * net.d[k] + net.d[k + 1]
        if k < net.nl - 1:
            aoff += 2 * net.d[k + 1]
        if net.d[k + 1] > net.widest:
            net.widest = net.d[k + 1]
    net.wt = <double *> malloc((off + 1) * sizeof(double))
    net.act = <double *> malloc((aoff + 1) * sizeof(double))
    net.logits = <double *> malloc(net.d[net.nl] * sizeof(double))
    net.g = <double *> malloc(net.widest * sizeof(double))
    net.gprev = <double *> malloc(net.widest * sizeof(double))
    return 0


cdef void _net_free(Net *net) noexcept nogil:
    free(net.d)
    free(net.woff)
    free(net.aoff)
    free(net.wt)
    free(net.act)
    free(net.logits)
    free(net.g)
    free(net.gprev)


cdef void _transpose(Net *net, const double *p) noexcept nogil:
    cdef int l, i, j, din, dout
    cdef Py_ssize_t off
    for l in range(net.nl):
        din = net.d[l]
        dout = net.d[l + 1]
        off = net.woff[l]
        for i in range(dout):
            for j in range(din):
                net.wt[off + j * dout + i] = p[off + i * din + j]


cdef void _forward(Net *net, const double *p, const double *x, double *out, bint want_cos) noexcept nogil:
    # act per sine layer: [a, or cos(a) when want_cos][sin(a)]
    cdef int l, i, j, din, dout
    cdef Py_ssize_t off
    cdef const double *zin = x
    cdef const double *wt
    cdef double *dst
    cdef double *zout
    cdef double zj, a
    for l in range(net.nl):
        din = net.d[l]
        dout = net.d[l + 1]
        off = net.woff[l]
        dst = out if l == net.nl - 1 else net.act + net.aoff[l]
        for i in range(dout):
            dst[i] = 0.0
        for j in range(din):
            zj = zin[j]
            wt = net.wt + off + j * dout
            for i in range(dout):
                dst[i] += wt[i] * zj
        for i in range(dout):
            dst[i] += p[off + dout * din + i]
        if l < net.nl - 1:
            zout = dst + dout
            if want_cos:
                for i in range(dout):
                    a = dst[i]
                    zout[i] = sin(a)
                    dst[i] = cos(a)
            else:
                for i in range(dout):
                    zout[i] = sin(dst[i])
            zin = zout


cdef double _accumulate(Net *net, const double *p, const double *x, int64_t label,
                        double scale, double *grad) noexcept nogil:
    # adds scale * (this example's loss gradient) into grad and returns its loss
    cdef int nl = net.nl, c = net.d[nl], l, i, j, din, dout
    cdef double m, s, gi, loss
    cdef double *lg = net.logits
    cdef double *g = net.g
    cdef double *gp = net.gprev
    cdef double *tmp
    cdef double *row
    cdef const double *zin
    cdef Py_ssize_t off

    _forward(net, p, x, lg, True)
    m = lg[0]
    for i in range(1, c):
        if lg[i] > m:
            m = lg[i]
    loss = m - lg[label]
    s = 0.0
    for i in range(c):
        lg[i] = exp(lg[i] - m)
        s += lg[i]
    loss += log(s)
    for i in range(c):
        g[i] = lg[i] / s * scale
    g[label] -= scale

    for l in range(nl - 1, -1, -1):
        din = net.d[l]
        dout = net.d[l + 1]
        if l < nl - 1:
            row = net.act + net.aoff[l]
            for i in range(dout):
                g[i] = g[i] * row[i]
        zin = x if l == 0 else net.act + net.aoff[l - 1] + din
        off = net.woff[l]
        for i in range(dout):
            gi = g[i]
            row = grad + off + i * din
            for j in range(din):
                row[j] += gi * zin[j]
            grad[off + dout * din + i] += gi
        if l > 0:
            for j in range(din):
                gp[j] = 0.0
            for i in range(dout):
                gi = g[i]
                for j in range(din):
                    gp[j] += p[off + i * din + j] * gi
            tmp = g
            g = gp
            gp = tmp
    # net.g / net.gprev may have swapped roles; both are scratch, sizes match
    net.g = g
    net.gprev = gp
    return loss


def batch_logits(const double[::1] params, dims, const double[:, ::1] X):
    cdef Net net
    _net_init(&net, dims)
    cdef Py_ssize_t n = X.shape[0], r
    out = np.empty((n, net.d[net.nl]), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        _transpose(&net, &params[0])
        for r in range(n):
            _forward(&net, &params[0], &X[r, 0], &o[r, 0], False)
        _net_free(&net)
    return out


def batch_mean_loss(const double[::1] params, dims, const double[:, ::1] X,
                    const int64_t[::1] y):
    logits = batch_logits(params, dims, X)
    cdef double[:, ::1] lg = logits
    cdef Py_ssize_t n = lg.shape[0], r
    cdef int c = lg.shape[1], i
    cdef double m, s, total = 0.0
    with nogil:
        for r in range(n):
            m = lg[r, 0]
            for i in range(1, c):
                if lg[r, i] > m:
                    m = lg[r, i]
            s = 0.0
            for i in range(c):
                s += exp(lg[r, i] - m)
            total += log(s) + m - lg[r, y[r]]
    return total / n


def loss_and_grad(const double[::1] params, dims, const double[:, ::1] X,
                  const int64_t[::1] y):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``params``."""
    cdef Net net
    _net_init(&net, dims)
    cdef Py_ssize_t n = X.shape[0], r
    grad = np.zeros(params.shape[0], dtype=np.float64)
    cdef double[::1] gv = grad
    cdef double total = 0.0, inv_n = 1.0 / n
    with nogil:
        _transpose(&net, &params[0])
        for r in range(n):
            total += _accumulate(&net, &params[0], &X[r, 0], y[r], inv_n, &gv[0])
        _net_free(&net)
    return total * inv_n, grad


def sgd_epoch(double[::1] params, dims, const double[:, ::1] X, const int64_t[::1] y,
              const int64_t[::1] order, Py_ssize_t batch_size, double eta):
    """One epoch of mini-batch SGD over ``X[order]``, updating ``params`` in place.

    Each step subtracts ``eta`` times the mean batch gradient, as the Python
    loop does. Raises ``FloatingPointError`` on a non-finite gradient.
    """
    cdef Net net
    _net_init(&net, dims)
    cdef Py_ssize_t n = order.shape[0], p = params.shape[0], start, stop, r, q
    grad = np.empty(p, dtype=np.float64)
    cdef double[::1] gv = grad
    cdef double inv_b
    cdef bint bad = False
    with nogil:
        start = 0
        while start < n:
            stop = start + batch_size
            if stop > n:
                stop = n
            inv_b = 1.0 / (stop - start)
            for q in range(p):
                gv[q] = 0.0
            _transpose(&net, &params[0])
            for r in range(start, stop):
                _accumulate(&net, &params[0], &X[order[r], 0], y[order[r]], inv_b, &gv[0])
            for q in range(p):
                if not isfinite(gv[q]):
                    bad = True
            if bad:
                break
            for q in range(p):
                params[q] = params[q] - eta * gv[q]
            start = stop
        _net_free(&net)
    if bad:
        raise FloatingPointError("non-finite gradient")
