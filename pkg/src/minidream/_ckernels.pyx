# Hot correlation kernels shared by conv2d and deconv2d (NCHW, valid padding).
# Same contracts as the numpy fallbacks in kernels.py.
import numpy as np
cimport numpy as cnp

cnp.import_array()


def corr_fwd(double[:, :, :, ::1] x, double[:, :, :, ::1] w, int stride):
    """y[n,o,i,j] = sum_{c,u,v} x[n,c,i*s+u,j*s+v] * w[o,c,u,v]"""
    cdef Py_ssize_t N = x.shape[0], CI = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t CO = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t HO = (H - K) // stride + 1
    cdef Py_ssize_t WO = (W - K) // stride + 1
    out = np.zeros((N, CO, HO, WO), dtype=np.float64)
    cdef double[:, :, :, ::1] y = out
    cdef Py_ssize_t n, o, c, i, j, u, v
    cdef double acc
    with nogil:
        for n in range(N):
            for o in range(CO):
                for i in range(HO):
                    for j in range(WO):
                        acc = 0.0
                        for c in range(CI):
                            for u in range(K):
                                for v in range(K):
                                    acc += x[n, c, i * stride + u, j * stride + v] * w[o, c, u, v]
                        y[n, o, i, j] = acc
    return out


def corr_grad_x(double[:, :, :, ::1] gy, double[:, :, :, ::1] w, int stride,
                Py_ssize_t H, Py_ssize_t W):
    """gx[n,c,i*s+u,j*s+v] += gy[n,o,i,j] * w[o,c,u,v]  (scatter / transposed conv)"""
    cdef Py_ssize_t N = gy.shape[0], CO = gy.shape[1], HO = gy.shape[2], WO = gy.shape[3]
    cdef Py_ssize_t CI = w.shape[1], K = w.shape[2]
    out = np.zeros((N, CI, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = out
    cdef Py_ssize_t n, o, c, i, j, u, v
    cdef double g
    with nogil:
        for n in range(N):
            for o in range(CO):
                for i in range(HO):
                    for j in range(WO):
                        g = gy[n, o, i, j]
                        for c in range(CI):
                            for u in range(K):
                                for v in range(K):
                                    gx[n, c, i * stride + u, j * stride + v] += g * w[o, c, u, v]
    return out


def corr_grad_w(double[:, :, :, ::1] x, double[:, :, :, ::1] gy, int stride,
                Py_ssize_t K):
    """gw[o,c,u,v] = sum_{n,i,j} gy[n,o,i,j] * x[n,c,i*s+u,j*s+v]"""
    cdef Py_ssize_t N = x.shape[0], CI = x.shape[1]
    cdef Py_ssize_t CO = gy.shape[1], HO = gy.shape[2], WO = gy.shape[3]
    out = np.zeros((CO, CI, K, K), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = out
    cdef Py_ssize_t n, o, c, i, j, u, v
    cdef double g
    with nogil:
        for n in range(N):
            for o in range(CO):
                for i in range(HO):
                    for j in range(WO):
                        g = gy[n, o, i, j]
                        for c in range(CI):
                            for u in range(K):
                                for v in range(K):
                                    gw[o, c, u, v] += g * x[n, c, i * stride + u, j * stride + v]
    return out
