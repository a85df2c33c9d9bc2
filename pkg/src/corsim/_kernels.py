"""Numerical kernels, JIT-compiled when numba is available.

Everything here is written against plain numpy arrays and scalars so the
same code runs (slowly) as pure Python when numba is absent.  All planner
arithmetic is integer, so jitted and interpreted paths produce bit-identical
results.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


INF = np.int64(1) << np.int64(60)

# RING_PHASES[group, ring, 0] = left phase index, [.., 1] = through phase
# index (phase number - 1).  Group 0 is the arterial barrier group.
RING_PHASES = np.array(
    [[[0, 1], [4, 5]],   # group A: (ph1, ph2), (ph5, ph6)
     [[2, 3], [6, 7]]],  # group B: (ph3, ph4), (ph7, ph8)
    dtype=np.int64,
)


@njit(cache=True)
def phase_queue_sim(arrivals, q0, green_start, green_end, length, h):
    """Queue recursion for one phase over ``length`` 1 s steps.

    Service discharges one vehicle per ``h``-th busy green second; outside
    [green_start, green_end) the queue only accumulates.  Returns
    (delay, final queue).
    """
    q = q0
    delay = np.int64(0)
    clock = 0
    for n in range(length):
        work = q + arrivals[n]
        d = 0
        if green_start <= n < green_end and work > 0:
            clock += 1
            if clock % h == 0:
                d = 1
        q = work - d
        delay += q
    return delay, q


@njit(cache=True)
def _prefix_sim(arrivals, q0, green_start, green_end, length, h, remaining, delay_out, q_out):
    """As phase_queue_sim but recording running delay and queue after each
    step, so one pass serves every window length up to ``length``.

    ``remaining`` is the total arrival count in the window; once the queue
    and the remaining arrivals are both zero the suffix is constant and is
    filled without stepping."""
    q = q0
    delay = np.int64(0)
    clock = 0
    for n in range(length):
        a = arrivals[n]
        work = q + a
        remaining -= a
        d = 0
        if green_start <= n < green_end and work > 0:
            clock += 1
            if clock % h == 0:
                d = 1
        q = work - d
        delay += q
        delay_out[n] = delay
        q_out[n] = q
        if q == 0 and remaining == 0:
            for m in range(n + 1, length):
                delay_out[m] = delay
                q_out[m] = 0
            return
    return


@njit(cache=True)
def _ring_candidates(
    arr_left,
    arr_thr,
    q_left,
    q_thr,
    gmin_l,
    gmax_l,
    gmin_t,
    gmax_t,
    r_l,
    r_t,
    x_lo,
    x_hi,
    h,
    prio_lo,
    prio_hi,
    best_delay,
    best_order,
    best_split,
    best_q_first_is_left,
    best_qa,
    best_qb,
):
    """Fill per-x best (delay, order, split) for one ring over a stage.

    Orders: 0 = through leads, 1 = left leads (ties prefer through leading,
    then the smaller split).  ``prio_lo/prio_hi[x]`` give the merged
    must-be-green interval for the ring's through phase at stage length x
    (lo > hi means inactive).  Outputs indexed by x in [0, x_hi].
    """
    n_max = x_hi
    tot_left = arr_left[:n_max].sum()
    tot_thr = arr_thr[:n_max].sum()
    if tot_left == 0 and tot_thr == 0 and q_left == 0 and q_thr == 0:
        # nothing to serve: any feasible layout has zero delay; emit the
        # tie-break winner (through leads, smallest split) directly
        for x in range(x_lo, x_hi + 1):
            plo = prio_lo[x]
            phi = prio_hi[x]
            # through leading: green [0, d - r_t) must reach phi
            d = gmin_t + r_t
            if d < x - r_l - gmax_l:
                d = x - r_l - gmax_l
            if plo < phi and d < phi + r_t:
                d = phi + r_t
            if d <= gmax_t + r_t and d <= x - r_l - gmin_l:
                best_delay[x] = 0
                best_order[x] = 0
                best_split[x] = d
                best_q_first_is_left[x] = 0
                best_qa[x] = 0
                best_qb[x] = 0
                continue
            if plo >= phi:
                continue
            # left leading: through green [d, x - r_t) must contain the window
            d = gmin_l + r_l
            if d < x - r_t - gmax_t:
                d = x - r_t - gmax_t
            if (
                d <= gmax_l + r_l
                and d <= x - r_t - gmin_t
                and d <= plo
                and phi <= x - r_t
            ):
                best_delay[x] = 0
                best_order[x] = 1
                best_split[x] = d
                best_q_first_is_left[x] = 1
                best_qa[x] = 0
                best_qb[x] = 0
        return
    d1 = np.empty(n_max, dtype=np.int64)
    qq1 = np.empty(n_max, dtype=np.int64)
    d2 = np.empty(n_max, dtype=np.int64)
    qq2 = np.empty(n_max, dtype=np.int64)
    for order in range(2):
        if order == 0:
            arr_f, arr_s = arr_thr, arr_left
            q_f, q_s = q_thr, q_left
            tot_f, tot_s = tot_thr, tot_left
            gmin_f, gmax_f, r_f = gmin_t, gmax_t, r_t
            gmin_s, gmax_s, r_s = gmin_l, gmax_l, r_l
        else:
            arr_f, arr_s = arr_left, arr_thr
            q_f, q_s = q_left, q_thr
            tot_f, tot_s = tot_left, tot_thr
            gmin_f, gmax_f, r_f = gmin_l, gmax_l, r_l
            gmin_s, gmax_s, r_s = gmin_t, gmax_t, r_t
        d_hi = min(gmax_f + r_f, x_hi - r_s - gmin_s)
        for d in range(gmin_f + r_f, d_hi + 1):
            _prefix_sim(arr_f, q_f, 0, d - r_f, n_max, h, tot_f, d1, qq1)
            _prefix_sim(arr_s, q_s, d, n_max, n_max, h, tot_s, d2, qq2)
            xa = max(x_lo, d + r_s + gmin_s)
            xb = min(x_hi, d + r_s + gmax_s)
            for x in range(xa, xb + 1):
                e = x - r_s  # second-phase green end
                # priority cover for the through phase of this ring
                plo = prio_lo[x]
                phi = prio_hi[x]
                if plo < phi:
                    if order == 0:  # through green [0, d - r_f) from stage start
                        if not phi <= d - r_f:
                            continue
                    else:  # through green [d, e)
                        if not (d <= plo and phi <= e):
                            continue
                # second phase: green prefix to e-1, then red clearance tail
                qe = qq2[e - 1]
                delay = d1[x - 1] + d2[e - 1]
                cum = np.int64(0)
                qtail = qe
                for n in range(e, x):
                    qtail = qtail + arr_s[n]
                    delay += qtail
                cand = delay
                if cand < best_delay[x] or (
                    cand == best_delay[x]
                    and (
                        order < best_order[x]
                        or (order == best_order[x] and d < best_split[x])
                    )
                ):
                    best_delay[x] = cand
                    best_order[x] = order
                    best_split[x] = d
                    best_q_first_is_left[x] = 1 if order == 1 else 0
                    best_qa[x] = qq1[x - 1]  # first phase queue at window end
                    best_qb[x] = qtail       # second phase queue at window end
    return


@njit(cache=True)
def _passive_prefix(arr4, q4, x_hi, out):
    """Accumulated delay of four never-served phases for every window
    length; out[x] = total delay over the first x steps."""
    total = np.int64(0)
    q0 = q4[0]
    q1 = q4[1]
    q2 = q4[2]
    q3 = q4[3]
    for n in range(x_hi):
        q0 += arr4[0, n]
        q1 += arr4[1, n]
        q2 += arr4[2, n]
        q3 += arr4[3, n]
        total += q0 + q1 + q2 + q3
        out[n + 1] = total
    return


@njit(cache=True)
def _frontier_insert(vt, qt, xs, o1, d1, o2, d2, par, nf, j, s, cap,
                     cv, cq, cx, co1, cd1, co2, cd2, cpar):
    """Insert a (value, queue-vector) candidate into the Pareto frontier at
    state (j, s).  Dominated candidates are dropped, entries the candidate
    dominates are evicted; on exact (v, q) ties the incumbent wins.  When
    full, the candidate replaces the worst-value entry only if better."""
    n = nf[j, s]
    for e in range(n):
        if vt[j, s, e] <= cv:
            dom = True
            for kk in range(8):
                if qt[j, s, e, kk] > cq[kk]:
                    dom = False
                    break
            if dom:
                return
    w = 0
    for e in range(n):
        dominated = cv <= vt[j, s, e]
        if dominated:
            for kk in range(8):
                if cq[kk] > qt[j, s, e, kk]:
                    dominated = False
                    break
        if not dominated:
            if w != e:
                vt[j, s, w] = vt[j, s, e]
                xs[j, s, w] = xs[j, s, e]
                o1[j, s, w] = o1[j, s, e]
                d1[j, s, w] = d1[j, s, e]
                o2[j, s, w] = o2[j, s, e]
                d2[j, s, w] = d2[j, s, e]
                par[j, s, w] = par[j, s, e]
                for kk in range(8):
                    qt[j, s, w, kk] = qt[j, s, e, kk]
            w += 1
    n = w
    slot = n
    if n >= cap:
        worst = 0
        for e in range(1, n):
            if vt[j, s, e] > vt[j, s, worst]:
                worst = e
        if cv >= vt[j, s, worst]:
            nf[j, s] = n
            return
        slot = worst
    else:
        n += 1
    vt[j, s, slot] = cv
    xs[j, s, slot] = cx
    o1[j, s, slot] = co1
    d1[j, s, slot] = cd1
    o2[j, s, slot] = co2
    d2[j, s, slot] = cd2
    par[j, s, slot] = cpar
    for kk in range(8):
        qt[j, s, slot, kk] = cq[kk]
    nf[j, s] = n


@njit(cache=True)
def forward_recursion_kernel(
    arr,          # int64[8, T] arrivals per phase index per second
    q0,           # int64[8] initial queues
    T,
    start_group,  # 0 = arterial group first
    xmin,         # int64[2] per group
    xmax,         # int64[2]
    gmin,         # int64[8]
    gmax,         # int64[8]
    rr,           # int64[8] clearance per phase
    h,
    stage_cap,
    pw_phase,     # int64[W] phase index of each priority window
    pw_lo,        # int64[W] inclusive start (plan seconds)
    pw_hi,        # int64[W] exclusive end
    cap,          # frontier entries kept per (stage, state)
):
    """Upper-level DP over (stage, allocated time) with a Pareto frontier of
    (value, queue-vector) pairs per state: future delay is monotone in the
    queue vector, so dominance pruning preserves exact optima while the
    stored state stays one-dimensional in time.

    Returns (vt, nf, xs, o1, d1, o2, d2, par, qt, j_last, j_stop): j_stop is
    the stage where two consecutive stages first agreed on the best value at
    the horizon (0 if the stage cap was hit first).
    """
    W = pw_phase.shape[0]
    J = stage_cap
    vt = np.full((J + 1, T + 1, cap), INF, dtype=np.int64)
    nf = np.zeros((J + 1, T + 1), dtype=np.int64)
    qt = np.zeros((J + 1, T + 1, cap, 8), dtype=np.int64)
    xs = np.zeros((J + 1, T + 1, cap), dtype=np.int64)
    o1 = np.zeros((J + 1, T + 1, cap), dtype=np.int64)
    d1 = np.zeros((J + 1, T + 1, cap), dtype=np.int64)
    o2 = np.zeros((J + 1, T + 1, cap), dtype=np.int64)
    d2 = np.zeros((J + 1, T + 1, cap), dtype=np.int64)
    par = np.zeros((J + 1, T + 1, cap), dtype=np.int64)
    vt[0, 0, 0] = 0
    nf[0, 0] = 1
    for kk in range(8):
        qt[0, 0, 0, kk] = q0[kk]

    r1_delay = np.empty(T + 1, dtype=np.int64)
    r1_order = np.empty(T + 1, dtype=np.int64)
    r1_split = np.empty(T + 1, dtype=np.int64)
    r1_fl = np.empty(T + 1, dtype=np.int64)
    r1_qa = np.empty(T + 1, dtype=np.int64)
    r1_qb = np.empty(T + 1, dtype=np.int64)
    r2_delay = np.empty(T + 1, dtype=np.int64)
    r2_order = np.empty(T + 1, dtype=np.int64)
    r2_split = np.empty(T + 1, dtype=np.int64)
    r2_fl = np.empty(T + 1, dtype=np.int64)
    r2_qa = np.empty(T + 1, dtype=np.int64)
    r2_qb = np.empty(T + 1, dtype=np.int64)
    passive = np.empty(T + 1, dtype=np.int64)
    plo1 = np.empty(T + 1, dtype=np.int64)
    phi1 = np.empty(T + 1, dtype=np.int64)
    plo2 = np.empty(T + 1, dtype=np.int64)
    phi2 = np.empty(T + 1, dtype=np.int64)
    cq = np.empty(8, dtype=np.int64)

    j_stop = 0
    j_last = 0
    for j in range(1, J + 1):
        g = (start_group + j - 1) % 2
        og = 1 - g
        xmin_g = xmin[g]
        xmax_g = xmax[g]
        lp = RING_PHASES[g, 0, 0]
        tp = RING_PHASES[g, 0, 1]
        lp2 = RING_PHASES[g, 1, 0]
        tp2 = RING_PHASES[g, 1, 1]
        op0 = RING_PHASES[og, 0, 0]
        op1 = RING_PHASES[og, 0, 1]
        op2 = RING_PHASES[og, 1, 0]
        op3 = RING_PHASES[og, 1, 1]
        # states below x_min cannot host this stage (the {0} control):
        # they stay infeasible, keeping barrier alternation strict
        for sp in range(0, T - xmin_g + 1):
            if nf[j - 1, sp] == 0:
                continue
            x_hi = min(xmax_g, T - sp)
            if x_hi < xmin_g:
                continue
            # a group-B stage may not overlap an arterial priority window
            b_block_from = T + 1
            if g == 1 and W > 0:
                for w in range(W):
                    lo = pw_lo[w] - sp
                    if pw_hi[w] > sp and lo < b_block_from:
                        b_block_from = lo if lo > 0 else 0
            # merged per-x priority cover for each ring's through phase
            for x in range(x_hi + 1):
                plo1[x] = 1
                phi1[x] = 0
                plo2[x] = 1
                phi2[x] = 0
            if g == 0 and W > 0:
                for x in range(1, x_hi + 1):
                    for w in range(W):
                        lo = pw_lo[w] - sp
                        hi = pw_hi[w] - sp
                        if hi <= 0 or lo >= x:
                            continue
                        if lo < 0:
                            lo = 0
                        if hi > x:
                            hi = x
                        if pw_phase[w] == tp:
                            if plo1[x] > phi1[x]:
                                plo1[x] = lo
                                phi1[x] = hi
                            else:
                                plo1[x] = min(plo1[x], lo)
                                phi1[x] = max(phi1[x], hi)
                        elif pw_phase[w] == tp2:
                            if plo2[x] > phi2[x]:
                                plo2[x] = lo
                                phi2[x] = hi
                            else:
                                plo2[x] = min(plo2[x], lo)
                                phi2[x] = max(phi2[x], hi)

            for k in range(nf[j - 1, sp]):
                for x in range(x_hi + 1):
                    r1_delay[x] = INF
                    r2_delay[x] = INF
                    r1_order[x] = 9
                    r2_order[x] = 9
                    r1_split[x] = 1 << 30
                    r2_split[x] = 1 << 30
                q8 = qt[j - 1, sp, k]
                _ring_candidates(
                    arr[lp, sp : sp + x_hi],
                    arr[tp, sp : sp + x_hi],
                    q8[lp],
                    q8[tp],
                    gmin[lp], gmax[lp], gmin[tp], gmax[tp], rr[lp], rr[tp],
                    xmin_g, x_hi, h, plo1, phi1,
                    r1_delay, r1_order, r1_split, r1_fl, r1_qa, r1_qb,
                )
                _ring_candidates(
                    arr[lp2, sp : sp + x_hi],
                    arr[tp2, sp : sp + x_hi],
                    q8[lp2],
                    q8[tp2],
                    gmin[lp2], gmax[lp2], gmin[tp2], gmax[tp2], rr[lp2], rr[tp2],
                    xmin_g, x_hi, h, plo2, phi2,
                    r2_delay, r2_order, r2_split, r2_fl, r2_qa, r2_qb,
                )
                arr4 = np.empty((4, x_hi), dtype=np.int64)
                arr4[0] = arr[op0, sp : sp + x_hi]
                arr4[1] = arr[op1, sp : sp + x_hi]
                arr4[2] = arr[op2, sp : sp + x_hi]
                arr4[3] = arr[op3, sp : sp + x_hi]
                q4 = np.empty(4, dtype=np.int64)
                q4[0] = q8[op0]
                q4[1] = q8[op1]
                q4[2] = q8[op2]
                q4[3] = q8[op3]
                passive[0] = 0
                _passive_prefix(arr4, q4, x_hi, passive)

                for x in range(xmin_g, x_hi + 1):
                    if x > b_block_from:
                        continue
                    if r1_delay[x] >= INF or r2_delay[x] >= INF:
                        continue
                    s = sp + x
                    cv = vt[j - 1, sp, k] + r1_delay[x] + r2_delay[x] + passive[x]
                    if r1_fl[x] == 1:
                        cq[lp] = r1_qa[x]
                        cq[tp] = r1_qb[x]
                    else:
                        cq[tp] = r1_qa[x]
                        cq[lp] = r1_qb[x]
                    if r2_fl[x] == 1:
                        cq[lp2] = r2_qa[x]
                        cq[tp2] = r2_qb[x]
                    else:
                        cq[tp2] = r2_qa[x]
                        cq[lp2] = r2_qb[x]
                    cq[op0] = q4[0] + arr4[0, :x].sum()
                    cq[op1] = q4[1] + arr4[1, :x].sum()
                    cq[op2] = q4[2] + arr4[2, :x].sum()
                    cq[op3] = q4[3] + arr4[3, :x].sum()
                    _frontier_insert(
                        vt, qt, xs, o1, d1, o2, d2, par, nf, j, s, cap,
                        cv, cq, x, r1_order[x], r1_split[x],
                        r2_order[x], r2_split[x], k,
                    )
        j_last = j
        best_j = INF
        best_jm1 = INF
        for e in range(nf[j, T]):
            if vt[j, T, e] < best_j:
                best_j = vt[j, T, e]
        for e in range(nf[j - 1, T]):
            if vt[j - 1, T, e] < best_jm1:
                best_jm1 = vt[j - 1, T, e]
        if j >= 3 and best_j < INF and best_j == best_jm1:
            j_stop = j
            break
    return vt, nf, xs, o1, d1, o2, d2, par, qt, j_last, j_stop


# ---------------------------------------------------------------------------
# microsimulation vehicle kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def vehicle_step_kernel(
    t,
    dt,
    # vehicle arrays
    pos,
    speed,
    turn_code,
    committed,
    stopped_flag,
    ever_fast,
    seg_stopped,
    seg_stops,
    route_links,
    route_turns,
    route_pos,
    route_len,
    # lane arrays (head = index 0 = closest to the bar)
    lane_order,
    members,
    count,
    link_len,
    lane_int,
    lane_phase,
    lane_is_left,
    opp_phase,
    opp_lanes,
    adv_lane,
    gate_free,
    last_cross,
    # signal state
    green,
    # scalar params
    v_ff,
    v_right,
    right_zone,
    veh_len,
    min_gap,
    k_follow,
    h_sat,
    move_headway,
    perm_eta,
    perm_clear,
    stopbar_len,
    adv_offset,
    adv_len,
    eta_floor,
    # outputs
    det_sb,
    det_adv,
    cross_out,
):
    """Advance every vehicle one tick of ``dt`` seconds.

    Motion is safe-speed following against the (new) position of the leader,
    with the stop bar acting as a virtual leader whenever the head vehicle
    may not cross (signal, discharge gate, permitted-left gap, or downstream
    space).  Through continuations transfer between links in-kernel with
    positional continuity; turns and network exits are emitted for the
    caller.  Returns the number of crossings written to ``cross_out`` rows
    (vehicle, lane, seg_stopped_ticks, seg_stops, transferred).
    """
    det_sb[:] = 0
    det_adv[:] = 0
    n_cross = 0
    spacing = veh_len + min_gap
    for oi in range(lane_order.shape[0]):
        l = lane_order[oi]
        L = link_len[l]
        ii = lane_int[l]
        ph = lane_phase[l]
        prev_front = 1.0e18
        i = 0
        while i < count[l]:
            v = members[l, i]
            p = pos[v]
            transferred_target = -1
            vdes = v_ff
            if turn_code[v] == 2 and (L - p) <= right_zone:
                vdes = v_right
            target = p + vdes * dt
            cap = (prev_front - spacing + k_follow * p) / (1.0 + k_follow)
            if cap < target:
                target = cap
            may = False
            if i == 0:
                is_green = green[ii, ph] == 1
                perm_ok = False
                if (not is_green) and lane_is_left[l] == 1 and green[ii, opp_phase[l]] == 1:
                    threat = False
                    for k in range(2):
                        ol = opp_lanes[l, k]
                        if ol < 0:
                            continue
                        if t - last_cross[ol] < perm_clear:
                            threat = True
                            break
                        horizon_ft = perm_eta * v_ff
                        for m in range(count[ol]):
                            ov = members[ol, m]
                            od = link_len[ol] - pos[ov]
                            if od > horizon_ft and od > 150.0:
                                break
                            osp = speed[ov]
                            if osp < 5.0:
                                if od <= 150.0:
                                    threat = True
                                    break
                            elif od / max(osp, eta_floor) < perm_eta:
                                threat = True
                                break
                        if threat:
                            break
                    perm_ok = not threat
                may = is_green or perm_ok or committed[v] == 1
                if may and committed[v] == 0 and t < gate_free[l] - 1e-9:
                    may = False
                if may and route_pos[v] + 1 < route_len[v] and turn_code[v] == 0:
                    # through continuation: must fit on the next link
                    nl = route_links[v, route_pos[v] + 1]
                    nt = route_turns[v, route_pos[v] + 1]
                    base = nl * 3
                    if nt == 1:
                        tl = base
                    elif nt == 2:
                        tl = base + 2
                    else:
                        tl = base + 1 if count[base + 1] <= count[base + 2] else base + 2
                    if count[tl] >= members.shape[1]:
                        may = False
                    elif count[tl] > 0 and pos[members[tl, count[tl] - 1]] < spacing:
                        may = False
                    else:
                        transferred_target = tl
                if not may:
                    c2 = (L + k_follow * p) / (1.0 + k_follow)
                    if c2 < target:
                        target = c2
            if target < p:
                target = p
            new_speed = (target - p) / dt
            pos[v] = target
            speed[v] = new_speed
            if new_speed > 15.0:
                ever_fast[v] = 1
            if new_speed < 5.0:
                seg_stopped[v] += 1
                stopped_flag[v] = 1
                if ever_fast[v] == 1:
                    seg_stops[v] += 1
                    ever_fast[v] = 0
            d = L - target
            if d <= stopbar_len and d >= -veh_len:
                det_sb[ii, ph] = 1
            if adv_lane[l] == 1 and adv_offset - veh_len <= d <= adv_offset + adv_len:
                det_adv[ii, ph] = 1
            if i == 0 and target >= L:
                # stop-bar crossing
                transferred = 1 if transferred_target >= 0 else 0
                cross_out[n_cross, 0] = v
                cross_out[n_cross, 1] = l
                cross_out[n_cross, 2] = seg_stopped[v]
                cross_out[n_cross, 3] = seg_stops[v]
                cross_out[n_cross, 4] = transferred
                n_cross += 1
                gate_free[l] = t + (h_sat if stopped_flag[v] == 1 else move_headway)
                last_cross[l] = t
                for m in range(i, count[l] - 1):
                    members[l, m] = members[l, m + 1]
                count[l] -= 1
                if transferred == 1:
                    tl = transferred_target
                    route_pos[v] += 1
                    turn_code[v] = route_turns[v, route_pos[v]]
                    pos[v] = target - L
                    members[tl, count[tl]] = v
                    count[tl] += 1
                    seg_stopped[v] = 0
                    seg_stops[v] = 0
                    stopped_flag[v] = 0
                    committed[v] = 0
                    prev_front = L + pos[v]
                else:
                    prev_front = 1.0e18
                continue
            prev_front = target
            i += 1
    return n_cross
