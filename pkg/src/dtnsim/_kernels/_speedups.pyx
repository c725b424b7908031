# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernels mirroring fallback.py operation for operation.

The arithmetic must stay textually identical to the fallback so both
paths produce bit-identical doubles; the build disables FP contraction
for the same reason.  Change fallback.py first, then this file.
"""

from libc.math cimport sqrt


def move_step(double[::1] px, double[::1] py, signed char[::1] kind,
              double[::1] wait_until, double[::1] speed,
              double[:, ::1] route_x, double[:, ::1] route_y,
              int[::1] route_next, int[::1] route_len,
              double now, double dt,
              int[::1] plan_out, int[::1] arrive_out):
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t i
    cdef int rn, rl
    cdef int n_plan = 0, n_arr = 0
    cdef double remaining, x, y, tx, ty, dx, dy, d
    for i in range(n):
        if kind[i] == 0:
            continue
        if wait_until[i] > now:
            continue
        rn = route_next[i]
        rl = route_len[i]
        if rn >= rl:
            plan_out[n_plan] = i
            n_plan += 1
            continue
        remaining = speed[i] * dt
        x = px[i]
        y = py[i]
        while remaining > 0.0 and rn < rl:
            tx = route_x[i, rn]
            ty = route_y[i, rn]
            dx = tx - x
            dy = ty - y
            d = sqrt(dx * dx + dy * dy)
            if d <= remaining:
                x = tx
                y = ty
                remaining = remaining - d
                rn += 1
            else:
                x = x + dx / d * remaining
                y = y + dy / d * remaining
                remaining = 0.0
        px[i] = x
        py[i] = y
        route_next[i] = rn
        if rn >= rl:
            arrive_out[n_arr] = i
            n_arr += 1
    return n_plan, n_arr


def contact_delta(double[::1] px, double[::1] py, double[::1] radio_range,
                  unsigned char[::1] adj, bint rule_min,
                  int[::1] ups_out, int[::1] downs_out):
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t i, j
    cdef int k = 0
    cdef int n_up = 0, n_down = 0
    cdef double dx, dy, d2, r
    cdef unsigned char up
    for i in range(n):
        for j in range(i + 1, n):
            dx = px[i] - px[j]
            dy = py[i] - py[j]
            d2 = dx * dx + dy * dy
            if rule_min:
                r = radio_range[i] if radio_range[i] < radio_range[j] else radio_range[j]
            else:
                r = radio_range[i] if radio_range[i] > radio_range[j] else radio_range[j]
            up = 1 if d2 <= r * r else 0
            if up != adj[k]:
                if up:
                    ups_out[n_up] = k
                    n_up += 1
                else:
                    downs_out[n_down] = k
                    n_down += 1
                adj[k] = up
            k += 1
    return n_up, n_down


def check_pairs(double[::1] px, double[::1] py, double[::1] radio_range,
                unsigned char[::1] adj, bint rule_min,
                int[::1] ks, int[::1] pair_i, int[::1] pair_j,
                int[::1] ups_out, int[::1] downs_out):
    cdef Py_ssize_t m = ks.shape[0]
    cdef Py_ssize_t idx
    cdef int k, i, j
    cdef int n_up = 0, n_down = 0
    cdef double dx, dy, d2, r
    cdef unsigned char up
    for idx in range(m):
        k = ks[idx]
        i = pair_i[k]
        j = pair_j[k]
        dx = px[i] - px[j]
        dy = py[i] - py[j]
        d2 = dx * dx + dy * dy
        if rule_min:
            r = radio_range[i] if radio_range[i] < radio_range[j] else radio_range[j]
        else:
            r = radio_range[i] if radio_range[i] > radio_range[j] else radio_range[j]
        up = 1 if d2 <= r * r else 0
        if up != adj[k]:
            if up:
                ups_out[n_up] = k
                n_up += 1
            else:
                downs_out[n_down] = k
                n_down += 1
            adj[k] = up
    return n_up, n_down
