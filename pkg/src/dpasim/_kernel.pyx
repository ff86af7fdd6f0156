# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled slot loop for the DPA and EDF policies.

Mirrors ``engine._simulate_python`` operation for operation; every float is
produced by the same sequence of IEEE operations so both backends agree bit
for bit. Packets are held as absolute expiry slots in per-user ring buffers:
a packet with expiry ``e`` has ``e - t`` slots left in slot ``t``.
"""
from libc.math cimport INFINITY

import numpy as np

cdef enum:
    POLICY_DPA = 0
    POLICY_EDF = 1


def simulate(int policy_code, double V, double p_low, double p_high,
             const long long[:] deadline, const double[:] gamma,
             const unsigned char[:, :] bad, const unsigned char[:, :] arrive,
             const long long[:, :] init_queue, const long long[:] init_len,
             long long stride,
             long long[:] rec_t, unsigned char[:, :] rec_bad,
             long long[:, :] rec_head, long long[:, :] rec_qlen,
             double[:, :] rec_power, unsigned char[:, :] rec_served,
             unsigned char[:, :] rec_dropped, unsigned char[:, :] rec_arrived,
             double[:, :] rec_cost, double[:, :] rec_x,
             double[:, :] rec_psum, long long[:, :] rec_dsum, double[:, :] rec_fsum,
             long long[:, :] counts, double[:, :] sums, double[:] diag):
    cdef Py_ssize_t n = deadline.shape[0]
    cdef long long T = bad.shape[0]
    cdef Py_ssize_t cap = 1
    cdef Py_ssize_t i, j, k, r = 0
    cdef long long t, h
    cdef int best
    cdef double best_obj, obj, cost_sum, drift, p, f, tmp, excess
    cdef double max_excess = -INFINITY
    cdef long long conservation_failures = 0

    for i in range(n):
        if deadline[i] + 1 > cap:
            cap = deadline[i] + 1

    buf_np = np.zeros((n, cap), dtype=np.int64)
    cdef long long[:, :] buf = buf_np
    qhead_np = np.zeros(n, dtype=np.int64)
    qlen_np = np.zeros(n, dtype=np.int64)
    head_np = np.zeros(n, dtype=np.int64)
    power_np = np.zeros(n, dtype=np.float64)
    cost_np = np.zeros(n, dtype=np.float64)
    x_np = np.zeros(n, dtype=np.float64)
    served_np = np.zeros(n, dtype=np.uint8)
    dropped_np = np.zeros(n, dtype=np.uint8)
    cdef long long[:] qhead = qhead_np
    cdef long long[:] qlen = qlen_np
    cdef long long[:] head = head_np
    cdef double[:] power = power_np
    cdef double[:] cost = cost_np
    cdef double[:] X = x_np
    cdef unsigned char[:] served = served_np
    cdef unsigned char[:] dropped = dropped_np

    # counts columns: arrivals, served, dropped, backlog, transmissions
    # sums columns: power_sum, cost_sum, X
    for i in range(n):
        for k in range(init_len[i]):
            buf[i, k] = init_queue[i, k] + 1
        qlen[i] = init_len[i]
        counts[i, 0] = init_len[i]

    for t in range(1, T + 1):
        for i in range(n):
            if qlen[i] > 0:
                head[i] = buf[i, qhead[i]] - t
            else:
                head[i] = 0

        best = -1
        if policy_code == POLICY_DPA:
            best_obj = INFINITY
            for k in range(-1, n):
                if k >= 0 and qlen[k] == 0:
                    continue
                cost_sum = 0.0
                drift = 0.0
                for j in range(n):
                    if j == k:
                        p = p_high if bad[t - 1, j] else p_low
                        f = 0.0
                    else:
                        p = 0.0
                        if qlen[j] > 0:
                            f = <double>(deadline[j] - (head[j] - 1)) / <double>deadline[j]
                        else:
                            f = 0.0
                    cost_sum += f
                    drift += X[j] * (p - gamma[j])
                obj = V * cost_sum + drift
                if best_obj > obj:
                    best = <int>k
                    best_obj = obj
        elif policy_code == POLICY_EDF:
            for i in range(n):
                if qlen[i] > 0 and (best < 0 or head[i] < head[best]):
                    best = <int>i
        else:
            raise ValueError(f"unknown policy code {policy_code}")

        for i in range(n):
            if i == best:
                power[i] = p_high if bad[t - 1, i] else p_low
            else:
                power[i] = 0.0
            served[i] = 0
            dropped[i] = 0
            if i == best and qlen[i] > 0:
                served[i] = 1
                cost[i] = 0.0
                qhead[i] = (qhead[i] + 1) % cap
                qlen[i] -= 1
            elif qlen[i] > 0:
                cost[i] = <double>(deadline[i] - (head[i] - 1)) / <double>deadline[i]
                if head[i] == 1:
                    dropped[i] = 1
                    qhead[i] = (qhead[i] + 1) % cap
                    qlen[i] -= 1
            else:
                cost[i] = 0.0
            if arrive[t - 1, i]:
                buf[i, (qhead[i] + qlen[i]) % cap] = t + 1 + deadline[i]
                qlen[i] += 1
                counts[i, 0] += 1

            tmp = X[i] - gamma[i]
            if tmp < 0.0:
                tmp = 0.0
            X[i] = tmp + power[i]

            counts[i, 1] += served[i]
            counts[i, 2] += dropped[i]
            if power[i] > 0.0:
                counts[i, 4] += 1
            sums[i, 0] += power[i]
            sums[i, 1] += cost[i]

            excess = (sums[i, 0] / t - gamma[i]) - X[i] / t
            if excess > max_excess:
                max_excess = excess
            if counts[i, 0] != counts[i, 1] + counts[i, 2] + qlen[i]:
                conservation_failures += 1

        if t % stride == 0 or t == T:
            rec_t[r] = t
            for i in range(n):
                rec_bad[r, i] = bad[t - 1, i]
                rec_head[r, i] = head[i]
                rec_qlen[r, i] = qlen[i] + served[i] + dropped[i] - arrive[t - 1, i]
                rec_power[r, i] = power[i]
                rec_served[r, i] = served[i]
                rec_dropped[r, i] = dropped[i]
                rec_arrived[r, i] = arrive[t - 1, i]
                rec_cost[r, i] = cost[i]
                rec_x[r, i] = X[i]
                rec_psum[r, i] = sums[i, 0]
                rec_dsum[r, i] = counts[i, 2]
                rec_fsum[r, i] = sums[i, 1]
            r += 1

    for i in range(n):
        counts[i, 3] = qlen[i]
        sums[i, 2] = X[i]
    diag[0] = max_excess
    diag[1] = <double>conservation_failures
