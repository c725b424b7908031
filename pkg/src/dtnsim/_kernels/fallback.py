"""Pure-Python reference kernels.

These are the semantics of record: the compiled module in _speedups.pyx
mirrors them operation for operation so both produce bit-identical doubles
(same IEEE-754 operations in the same order, sqrt is correctly rounded).
Keep the arithmetic expressions in the two files textually in sync.
"""

from __future__ import annotations

import math

import numpy as np


def move_step(px, py, kind, wait_until, speed, route_x, route_y,
              route_next, route_len, now, dt, plan_out, arrive_out):
    """Advance every mobile, non-waiting node along its remaining waypoints
    by speed*dt.  Nodes with an exhausted route are reported in plan_out;
    nodes that reach their final waypoint this step in arrive_out.
    Returns (n_plan, n_arrived).  No RNG here; planning happens outside."""
    n = px.shape[0]
    n_plan = 0
    n_arr = 0
    kind_l = kind.tolist()
    wait_l = wait_until.tolist()
    next_l = route_next.tolist()
    len_l = route_len.tolist()
    for i in range(n):
        if kind_l[i] == 0:
            continue
        if wait_l[i] > now:
            continue
        rn = next_l[i]
        rl = len_l[i]
        if rn >= rl:
            plan_out[n_plan] = i
            n_plan += 1
            continue
        remaining = float(speed[i]) * dt
        x = float(px[i])
        y = float(py[i])
        row_x = route_x[i]
        row_y = route_y[i]
        while remaining > 0.0 and rn < rl:
            tx = float(row_x[rn])
            ty = float(row_y[rn])
            dx = tx - x
            dy = ty - y
            d = math.sqrt(dx * dx + dy * dy)
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


def contact_delta(px, py, radio_range, adj, rule_min, ups_out, downs_out):
    """Full pairwise contact check over packed upper-triangle pair indices.

    adj is uint8 over pairs k = 0..n(n-1)/2-1 in row-major (i, j) order.
    Fills ups_out/downs_out with pair indices whose state flipped, in
    ascending k order, and updates adj in place."""
    n = px.shape[0]
    dx = px[:, None] - px[None, :]
    dy = py[:, None] - py[None, :]
    d2 = dx * dx + dy * dy
    if rule_min:
        r = np.minimum.outer(radio_range, radio_range)
    else:
        r = np.maximum.outer(radio_range, radio_range)
    up_mat = d2 <= r * r
    iu, ju = np.triu_indices(n, k=1)
    cur = up_mat[iu, ju]
    prev = adj != 0
    changed = cur != prev
    k_changed = np.nonzero(changed)[0]
    n_up = 0
    n_down = 0
    for k in k_changed.tolist():
        if cur[k]:
            ups_out[n_up] = k
            n_up += 1
        else:
            downs_out[n_down] = k
            n_down += 1
    adj[k_changed] = cur[k_changed]
    return n_up, n_down


def check_pairs(px, py, radio_range, adj, rule_min, ks, pair_i, pair_j,
                ups_out, downs_out):
    """Contact check restricted to candidate pair indices `ks` (ascending).
    Used by the uniform-grid path; same predicate as contact_delta."""
    n_up = 0
    n_down = 0
    px_l = px.tolist()
    py_l = py.tolist()
    r_l = radio_range.tolist()
    for k in ks.tolist():
        i = pair_i[k]
        j = pair_j[k]
        dx = px_l[i] - px_l[j]
        dy = py_l[i] - py_l[j]
        d2 = dx * dx + dy * dy
        if rule_min:
            r = r_l[i] if r_l[i] < r_l[j] else r_l[j]
        else:
            r = r_l[i] if r_l[i] > r_l[j] else r_l[j]
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
