"""Compiled inner loops shared by the model and the three latent samplers.

All kernels take a model context tuple ``ctx`` built by
:func:`rippler.model.make_context`::

    (hh, n_hh, mult, season, beta_G, beta_H, gamma, p0, dt, hh_ptr, hh_mem)

``hh`` maps individuals to dense household ids (members of household ``h``
are ``hh_mem[hh_ptr[h]:hh_ptr[h + 1]]``), ``mult`` holds the covariate
multipliers ``exp(delta . c_j)`` and ``season[t]`` is the seasonal modifier at
step ``t``; pressure at step ``t`` uses ``season[t - 1]``.

Lattices are ``int8`` arrays of shape ``(T + 1, N)``.  Observations use ``1``
(positive), ``0`` (negative) and ``-1`` (not tested).  ``lf[y, x]`` is the log
observation factor of result ``y`` given state ``x``.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf

# status codes returned by the step kernels
OK = 0
NO_PERTURBABLE = 1
DEGENERATE = 2
INFEASIBLE = 3


@njit(cache=True)
def p_colonise(lam, dt):
    return -math.expm1(-lam * dt)


@njit(cache=True)
def row_counts(xrow, hh, hcount):
    for h in range(hcount.shape[0]):
        hcount[h] = 0
    total = 0
    for i in range(xrow.shape[0]):
        if xrow[i]:
            hcount[hh[i]] += 1
            total += 1
    return total


@njit(cache=True)
def pressure_row(xprev, t, ctx, out):
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    n = xprev.shape[0]
    hcount = np.zeros(n_hh, np.int64)
    total = row_counts(xprev, hh, hcount)
    g = bG * season[t - 1] * total / n
    for j in range(n):
        out[j] = mult[j] * (g + bG * bH * (hcount[hh[j]] - xprev[j]))


@njit(cache=True)
def realise(u, ctx):
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    T1, n = u.shape
    x = np.zeros((T1, n), np.int8)
    for j in range(n):
        x[0, j] = 1 if u[0, j] < p0 else 0
    p_cu = p_colonise(gamma, dt)
    hcount = np.zeros(n_hh, np.int64)
    for t in range(1, T1):
        total = row_counts(x[t - 1], hh, hcount)
        g = bG * season[t - 1] * total / n
        for j in range(n):
            if x[t - 1, j] == 0:
                lam = mult[j] * (g + bG * bH * hcount[hh[j]])
                x[t, j] = 1 if u[t, j] < p_colonise(lam, dt) else 0
            else:
                x[t, j] = 0 if u[t, j] < p_cu else 1
    return x


@njit(cache=True)
def _cell_bounds(prev, cur, p, p_cu):
    # (a, b) for one transition; p is the colonisation probability
    if prev == 0:
        if cur == 1:
            return 0.0, p
        return p, 1.0
    if cur == 0:
        return 0.0, p_cu
    return p_cu, 1.0


@njit(cache=True)
def bounds(x, ctx, a, b, rowmass):
    """Fill the proposal bounds of ``x``; return 1 if ``x`` has zero density."""
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    T1, n = x.shape
    status = OK
    m = 0.0
    for j in range(n):
        if x[0, j] == 1:
            a[0, j] = 0.0
            b[0, j] = p0
        else:
            a[0, j] = p0
            b[0, j] = 1.0
        m += 1.0 + a[0, j] - b[0, j]
    rowmass[0] = m
    p_cu = p_colonise(gamma, dt)
    hcount = np.zeros(n_hh, np.int64)
    for t in range(1, T1):
        total = row_counts(x[t - 1], hh, hcount)
        g = bG * season[t - 1] * total / n
        m = 0.0
        for j in range(n):
            p = 0.0
            if x[t - 1, j] == 0:
                lam = mult[j] * (g + bG * bH * hcount[hh[j]])
                p = p_colonise(lam, dt)
                if x[t, j] == 1 and p <= 0.0:
                    status = 1
            lo, hi = _cell_bounds(x[t - 1, j], x[t, j], p, p_cu)
            a[t, j] = lo
            b[t, j] = hi
            m += 1.0 + lo - hi
        rowmass[t] = m
    return status


@njit(cache=True)
def _transition_log(prev, cur, lam, log_cu, log_cc, dt):
    if prev == 0:
        if cur == 0:
            return -lam * dt
        p = p_colonise(lam, dt)
        if p <= 0.0:
            return NEG_INF
        return math.log(p)
    if cur == 0:
        return log_cu
    return log_cc


@njit(cache=True)
def initial_logdens(xrow, p0):
    s = 0.0
    lp1 = math.log(p0) if p0 > 0.0 else NEG_INF
    lp0 = math.log1p(-p0) if p0 < 1.0 else NEG_INF
    for j in range(xrow.shape[0]):
        s += lp1 if xrow[j] == 1 else lp0
    return s


@njit(cache=True)
def rows_logdens(x, t_from, t_to, ctx, hcount):
    """Sum of transition log-terms of all individuals for steps ``t_from..t_to``."""
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    n = x.shape[1]
    log_cu = math.log(p_colonise(gamma, dt))
    log_cc = -gamma * dt
    s = 0.0
    for t in range(max(t_from, 1), t_to + 1):
        total = row_counts(x[t - 1], hh, hcount)
        g = bG * season[t - 1] * total / n
        for j in range(n):
            lam = 0.0
            if x[t - 1, j] == 0:
                lam = mult[j] * (g + bG * bH * hcount[hh[j]])
            s += _transition_log(x[t - 1, j], x[t, j], lam, log_cu, log_cc, dt)
    return s


@njit(cache=True)
def transmission_logdens(x, ctx):
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    hcount = np.zeros(n_hh, np.int64)
    return initial_logdens(x[0], p0) + rows_logdens(x, 1, x.shape[0] - 1, ctx, hcount)


@njit(cache=True)
def obs_logdens(y, x, lf):
    s = 0.0
    T1, n = x.shape
    for t in range(T1):
        for j in range(n):
            if y[t, j] >= 0:
                s += lf[y[t, j], x[t, j]]
    return s


# ---------------------------------------------------------------------------
# Rippler


@njit(cache=True)
def _select_cell(a, b, rowmass, total, r):
    T1, n = a.shape
    t_sel = -1
    for t in range(T1):
        if rowmass[t] > 0.0:
            t_sel = t
            if r < rowmass[t]:
                break
            r -= rowmass[t]
    j_sel = -1
    for j in range(n):
        m = 1.0 + a[t_sel, j] - b[t_sel, j]
        if m > 0.0:
            j_sel = j
            if r < m:
                break
            r -= m
    return t_sel, j_sel


@njit(cache=True)
def complement_draw(a, b, r):
    """Map ``r`` in [0, 1) onto the two-piece set [0, a) U [b, 1)."""
    width = b - a
    v = r * (1.0 - width)
    if v < a:
        return v
    u = v + width
    if u < b:
        u = b
    if u >= 1.0:
        u = np.nextafter(1.0, 0.0)
    return u


@njit(cache=True)
def ripple_tables(ctx, T1, A, Ainv, amin, tcount, x):
    """Per-parameter tables used by :func:`ripple_step`.

    ``A[t, j]`` is the factor by which one extra colonised individual at
    ``t - 1`` multiplies ``j``'s probability of staying uncolonised at ``t``;
    ``Ainv`` is its reciprocal and ``amin[t]`` its row minimum.  ``tcount[t]`` holds the row totals of ``x``.
    """
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    n = mult.shape[0]
    for t in range(T1):
        c = 0
        for j in range(n):
            c += x[t, j]
        tcount[t] = c
    for t in range(1, T1):
        k = bG * season[t - 1] / n
        mn = 1.0
        for j in range(n):
            v = math.exp(-dt * mult[j] * k)
            A[t, j] = v
            Ainv[t, j] = 1.0 / v
            if v < mn:
                mn = v
        amin[t] = mn


@njit(cache=True, fastmath={"reassoc"})
def _bulk_shift(prev, stamp, cur, xrow, arow, brow, erow, asr, bsr):
    # rescale survival of eligible uncolonised-before cells; return the mass change
    md = 0.0
    for j in range(xrow.shape[0]):
        ok = (prev[j] == 0) & (stamp[j] != cur)
        xv = xrow[j]
        p_old = brow[j] if xv else arow[j]
        p_new = 1.0 - (1.0 - p_old) * erow[j]
        d = p_new - p_old
        if ok:
            if xv:
                md -= d
                bsr[j] = p_new
            else:
                md += d
                asr[j] = p_new
    return md


@njit(cache=True)
def _geometric(rng, log_q):
    # failures before the first success of a Bernoulli(1 - exp(log_q)) sequence
    if log_q >= 0.0:
        return np.inf
    return math.floor(math.log(1.0 - rng.random()) / log_q)


@njit(cache=True)
def _lazy_event(lo, hi, p, rng):
    # does u ~ Unif[lo, hi) fall below p?  draws only when it matters
    if hi <= p:
        return True
    if lo >= p:
        return False
    return lo + (hi - lo) * rng.random() < p


@njit(cache=True)
def ripple_step(x, a, b, rowmass, tcount, A, Ainv, amin, y, lf, ctx, k_elements, rng,
                xs, as_, bs, rowmass_s, tcount_s, dprev, dnext, stamp, special, epow,
                origins_t, origins_j, origins_u, out):
    """One Rippler latent update, in place on ``(x, a, b, rowmass, tcount)``.

    ``out`` receives ``[accepted, t0, t_stop, n_changed, log_ratio, status]``.
    The proposal occupies rows ``t0..t_stop`` of the scratch arrays; later
    rows equal the current lattice.

    Replay works row by row.  Cells whose previous state and household are
    unchanged only see the global pressure shift by the change in the
    previous row's total; their survival probability is rescaled by a power of
    ``A`` and their (rare) new colonisations are found by geometric skipping.
    Changed cells, their household members and origin cells are evaluated
    exactly.  ``stamp`` has length ``N + 1``; its last entry is a counter.
    """
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    T1, n = x.shape
    out[0] = 0.0
    out[1] = -1.0
    out[2] = -1.0
    out[3] = 0.0
    out[4] = NEG_INF
    out[5] = OK
    total = 0.0
    for t in range(T1):
        total += rowmass[t]
    if total <= 0.0:
        out[5] = NO_PERTURBABLE
        return

    t0 = T1
    t_last = -1
    for k in range(k_elements):
        ts, js = _select_cell(a, b, rowmass, total, rng.random() * total)
        origins_t[k] = ts
        origins_j[k] = js
        origins_u[k] = complement_draw(a[ts, js], b[ts, js], rng.random())
        if ts < t0:
            t0 = ts
        if ts > t_last:
            t_last = ts

    p_cu = p_colonise(gamma, dt)
    n_changed = 0
    obs_new = 0.0
    obs_old = 0.0
    n_dprev = 0
    t_stop = T1 - 1
    for t in range(t0, T1):
        for j in range(n):
            xs[t, j] = x[t, j]
            as_[t, j] = a[t, j]
            bs[t, j] = b[t, j]
        m_delta = 0.0
        stamp[n] += 1
        cur = stamp[n]
        n_special = 0
        if t <= t_last:
            for k in range(k_elements):
                if origins_t[k] == t and stamp[origins_j[k]] != cur:
                    stamp[origins_j[k]] = cur
                    special[n_special] = origins_j[k]
                    n_special += 1
        n_dnext = 0
        d_next_total = 0

        if t == 0:
            for s in range(n_special):
                j = special[s]
                u = 0.0
                for k in range(k_elements):
                    if origins_t[k] == 0 and origins_j[k] == j:
                        u = origins_u[k]
                c = 1 if u < p0 else 0
                xs[0, j] = c
                lo = 0.0 if c == 1 else p0
                hi = p0 if c == 1 else 1.0
                m_delta += (lo - hi) - (a[0, j] - b[0, j])
                as_[0, j] = lo
                bs[0, j] = hi
                if c != x[0, j]:
                    dnext[n_dnext] = j
                    n_dnext += 1
                    d_next_total += c - x[0, j]
        else:
            if t - 1 >= t0:
                prev = xs[t - 1]
                tot_prev = tcount_s[t - 1]
            else:
                prev = x[t - 1]
                tot_prev = tcount[t - 1]
            d_tot = tot_prev - tcount[t - 1]
            for s in range(n_dprev):
                h = hh[dprev[s]]
                for q in range(hh_ptr[h], hh_ptr[h + 1]):
                    i = hh_mem[q]
                    if stamp[i] != cur:
                        stamp[i] = cur
                        special[n_special] = i
                        n_special += 1

            if d_tot != 0:
                # bulk: unchanged previous state and household, shifted global term
                if d_tot == 1:
                    erow = A[t]
                elif d_tot == -1:
                    erow = Ainv[t]
                else:
                    erow = epow
                    base = A[t] if d_tot > 0 else Ainv[t]
                    for j in range(n):
                        epow[j] = base[j]
                    for _ in range(1, abs(d_tot)):
                        for j in range(n):
                            epow[j] *= base[j]
                m_delta += _bulk_shift(prev, stamp, cur, x[t], a[t], b[t], erow,
                                       as_[t], bs[t])
                if d_tot < 0:
                    # colonisations that may no longer happen
                    for j in range(n):
                        if x[t, j] == 1 and prev[j] == 0 and stamp[j] != cur:
                            p_new = bs[t, j]
                            if not (b[t, j] * rng.random() < p_new):
                                xs[t, j] = 0
                                as_[t, j] = p_new
                                bs[t, j] = 1.0
                                m_delta += 2.0 * p_new - 1.0
                                dnext[n_dnext] = j
                                n_dnext += 1
                                d_next_total -= 1
                if d_tot > 0:
                    # thinning: every index is a candidate w.p. q_bar, kept w.p. q_j / q_bar
                    log_q = d_tot * math.log(amin[t])
                    q_bar = -math.expm1(log_q)
                    pos = _geometric(rng, log_q)
                    while pos < n:
                        j = int(pos)
                        if prev[j] == 0 and stamp[j] != cur and x[t, j] == 0:
                            if rng.random() * q_bar < 1.0 - erow[j]:
                                p_new = as_[t, j]
                                xs[t, j] = 1
                                as_[t, j] = 0.0
                                bs[t, j] = p_new
                                m_delta += 1.0 - 2.0 * p_new
                                dnext[n_dnext] = j
                                n_dnext += 1
                                d_next_total += 1
                        pos += 1.0 + _geometric(rng, log_q)

            g = bG * season[t - 1] * tot_prev / n
            for s in range(n_special):
                j = special[s]
                pv = prev[j]
                if pv == 0:
                    hcnt = 0
                    h = hh[j]
                    for q in range(hh_ptr[h], hh_ptr[h + 1]):
                        hcnt += prev[hh_mem[q]]
                    lam = mult[j] * (g + bG * bH * hcnt)
                    p = p_colonise(lam, dt)
                else:
                    p = p_cu
                u = -1.0
                if t <= t_last:
                    for k in range(k_elements):
                        if origins_t[k] == t and origins_j[k] == j:
                            u = origins_u[k]
                if u >= 0.0:
                    event = u < p
                else:
                    event = _lazy_event(a[t, j], b[t, j], p, rng)
                if pv == 0:
                    c = 1 if event else 0
                else:
                    c = 0 if event else 1
                lo, hi = _cell_bounds(pv, c, p, p_cu)
                m_delta += (lo - hi) - (a[t, j] - b[t, j])
                xs[t, j] = c
                as_[t, j] = lo
                bs[t, j] = hi
                if c != x[t, j]:
                    dnext[n_dnext] = j
                    n_dnext += 1
                    d_next_total += c - x[t, j]

        rowmass_s[t] = rowmass[t] + m_delta
        tcount_s[t] = tcount[t] + d_next_total
        for s in range(n_dnext):
            j = dnext[s]
            dprev[s] = j
            if y[t, j] >= 0:
                obs_new += lf[y[t, j], xs[t, j]]
                obs_old += lf[y[t, j], x[t, j]]
        n_dprev = n_dnext
        n_changed += n_dnext
        if n_dnext == 0 and t >= t_last:
            t_stop = t
            break

    total_s = total
    for t in range(t0, t_stop + 1):
        total_s += rowmass_s[t] - rowmass[t]
    out[1] = t0
    out[2] = t_stop
    out[3] = n_changed
    if total_s <= 0.0:
        out[5] = DEGENERATE
        return
    log_ratio = _log_diff(obs_new, obs_old) + k_elements * (math.log(total) - math.log(total_s))
    out[4] = log_ratio
    if _accept(log_ratio, rng):
        out[0] = 1.0
        for t in range(t0, t_stop + 1):
            rowmass[t] = rowmass_s[t]
            tcount[t] = tcount_s[t]
            for j in range(n):
                x[t, j] = xs[t, j]
                a[t, j] = as_[t, j]
                b[t, j] = bs[t, j]


@njit(cache=True)
def lattice_code(x):
    code = 0
    T1, n = x.shape
    for t in range(T1):
        for j in range(n):
            if x[t, j]:
                code |= np.int64(1) << (t * n + j)
    return code


@njit(cache=True)
def ripple_sweep(x, a, b, rowmass, tcount, A, Ainv, amin, y, lf, ctx, k_elements, n_updates, rng,
                 origin_props, origin_accs, trace):
    """Run ``n_updates`` Rippler updates; return (accepted, proposed, changed_cells).

    ``origin_props``/``origin_accs`` are histograms over the ripple start time.
    If ``trace`` is non-empty the lattice code after each update is stored.
    """
    T1, n = x.shape
    xs = np.empty_like(x)
    as_ = np.empty_like(a)
    bs = np.empty_like(b)
    rowmass_s = np.empty_like(rowmass)
    tcount_s = np.empty_like(tcount)
    dprev = np.empty(n, np.int64)
    dnext = np.empty(n, np.int64)
    stamp = np.zeros(n + 1, np.int64)
    special = np.empty(n, np.int64)
    epow = np.empty(n, np.float64)
    ot = np.empty(k_elements, np.int64)
    oj = np.empty(k_elements, np.int64)
    ou = np.empty(k_elements, np.float64)
    out = np.empty(6, np.float64)
    n_acc = 0
    n_prop = 0
    n_cells = 0
    for i in range(n_updates):
        ripple_step(x, a, b, rowmass, tcount, A, Ainv, amin, y, lf, ctx, k_elements, rng,
                    xs, as_, bs, rowmass_s, tcount_s, dprev, dnext, stamp, special, epow,
                    ot, oj, ou, out)
        if out[5] != NO_PERTURBABLE:
            n_prop += 1
            t0 = int(out[1])
            origin_props[t0] += 1
            if out[0] > 0.0:
                n_acc += 1
                origin_accs[t0] += 1
                n_cells += int(out[3])
        if trace.shape[0] > 0:
            trace[i] = lattice_code(x)
    return n_acc, n_prop, n_cells


# ---------------------------------------------------------------------------
# reversible jump


@njit(cache=True)
def column_events(x, j, times):
    """Write event times of column ``j`` (steps where the state changes)."""
    E = 0
    for t in range(1, x.shape[0]):
        if x[t, j] != x[t - 1, j]:
            times[E] = t
            E += 1
    return E


@njit(cache=True)
def count_addable(x, j, open_end):
    """Size of the add set: steps inside a run of three equal states.

    With ``open_end`` the last step also qualifies when it equals its
    predecessor (its partner event then falls past the horizon).
    """
    T = x.shape[0] - 1
    c = 0
    for t in range(1, T):
        if x[t - 1, j] == x[t, j] and x[t, j] == x[t + 1, j]:
            c += 1
    if open_end and x[T - 1, j] == x[T, j]:
        c += 1
    return c


@njit(cache=True)
def _addable_at(x, j, k, open_end):
    T = x.shape[0] - 1
    for t in range(1, T):
        if x[t - 1, j] == x[t, j] and x[t, j] == x[t + 1, j]:
            if k == 0:
                return t
            k -= 1
    return T


@njit(cache=True)
def _partner(times, E, e, T, open_end):
    # time of the event paired with e for removal, or -1
    if e < E - 1:
        return times[e + 1]
    if open_end:
        return T + 1
    return -1


@njit(cache=True)
def count_removable(times, E, m, T, open_end):
    c = 0
    for e in range(E):
        p = _partner(times, E, e, T, open_end)
        if p >= 0 and times[e] + m >= p:
            c += 1
    return c


@njit(cache=True)
def _next_event_after(times, E, t, end):
    for e in range(E):
        if times[e] > t:
            return times[e]
    return end


@njit(cache=True)
def _flip(x, j, lo, hi):
    for t in range(lo, hi + 1):
        x[t, j] = 1 - x[t, j]


@njit(cache=True)
def rj_propose_col(x, j, kind, m, open_end, rng, times, span):
    """Propose a move (0), add (1) or remove (2) on column ``j`` in place.

    Returns ``(status, log_q)``; the flipped steps are ``span[0]..span[1]``.
    On ``INFEASIBLE`` the lattice is untouched.
    """
    T = x.shape[0] - 1
    end = T + 2 if open_end else T + 1
    E = column_events(x, j, times)
    if kind == 0:
        if E == 0:
            return INFEASIBLE, 0.0
        e = rng.integers(0, E)
        te = times[e]
        prev = times[e - 1] if e > 0 else 0
        nxt = times[e + 1] if e < E - 1 else T + 1
        lo = max(prev + 1, te - m)
        hi = min(nxt - 1, te + m)
        size_h = hi - lo
        if size_h <= 0:
            return INFEASIBLE, 0.0
        t_new = lo + rng.integers(0, size_h)
        if t_new >= te:
            t_new += 1
        if t_new > te:
            span[0] = te
            span[1] = t_new - 1
        else:
            span[0] = t_new
            span[1] = te - 1
        lo2 = max(prev + 1, t_new - m)
        hi2 = min(nxt - 1, t_new + m)
        log_q = math.log(size_h) - math.log(hi2 - lo2)
    elif kind == 1:
        size_a = count_addable(x, j, open_end)
        if size_a == 0:
            return INFEASIBLE, 0.0
        ta = _addable_at(x, j, rng.integers(0, size_a), open_end)
        t_next = _next_event_after(times, E, ta, end)
        size_b = min(t_next - 1, ta + m) - ta
        tb = ta + 1 + rng.integers(0, size_b)
        span[0] = ta
        span[1] = tb - 1
        _flip(x, j, ta, tb - 1)
        size_r = count_removable(times, column_events(x, j, times), m, T, open_end)
        _flip(x, j, ta, tb - 1)
        log_q = math.log(size_a) + math.log(size_b) - math.log(size_r)
    else:
        size_r = count_removable(times, E, m, T, open_end)
        if size_r == 0:
            return INFEASIBLE, 0.0
        k = rng.integers(0, size_r)
        r = -1
        for e in range(E):
            p = _partner(times, E, e, T, open_end)
            if p >= 0 and times[e] + m >= p:
                if k == 0:
                    r = e
                    break
                k -= 1
        tr = times[r]
        span[0] = tr
        span[1] = _partner(times, E, r, T, open_end) - 1
        _flip(x, j, span[0], span[1])
        size_a = count_addable(x, j, open_end)
        t_next = _next_event_after(times, column_events(x, j, times), tr, end)
        size_b = min(t_next - 1, tr + m) - tr
        _flip(x, j, span[0], span[1])
        log_q = math.log(size_r) - math.log(size_a) - math.log(size_b)
    _flip(x, j, span[0], span[1])
    return OK, log_q


@njit(cache=True)
def _column_obs(y, x, j, t_from, t_to, lf):
    s = 0.0
    for t in range(t_from, t_to + 1):
        if y[t, j] >= 0:
            s += lf[y[t, j], x[t, j]]
    return s


@njit(cache=True)
def _accept(log_ratio, rng):
    if log_ratio >= 0.0:
        return True
    if log_ratio == NEG_INF or np.isnan(log_ratio):
        return False
    return math.log(rng.random()) < log_ratio


@njit(cache=True)
def _log_diff(new, old):
    if old == NEG_INF:
        return np.inf if new > NEG_INF else NEG_INF
    return new - old


@njit(cache=True)
def rj_step(x, y, lf, ctx, m, open_end, rng, times, span, hcount, out):
    """One reversible-jump update of rows ``1..T``.

    ``out`` receives ``[accepted, kind, j, lo, hi, log_ratio, status]``.
    """
    T1, n = x.shape
    T = T1 - 1
    j = rng.integers(0, n)
    kind = rng.integers(0, 3)
    out[0] = 0.0
    out[1] = kind
    out[2] = j
    out[5] = NEG_INF
    status, log_q = rj_propose_col(x, j, kind, m, open_end, rng, times, span)
    out[6] = status
    if status != OK:
        return
    lo = span[0]
    hi = span[1]
    out[3] = lo
    out[4] = hi
    t_hi = min(hi + 1, T)
    new = rows_logdens(x, lo, t_hi, ctx, hcount) + _column_obs(y, x, j, lo, hi, lf)
    for t in range(lo, hi + 1):
        x[t, j] = 1 - x[t, j]
    old = rows_logdens(x, lo, t_hi, ctx, hcount) + _column_obs(y, x, j, lo, hi, lf)
    log_ratio = _log_diff(new, old) + log_q
    out[5] = log_ratio
    if _accept(log_ratio, rng):
        out[0] = 1.0
        for t in range(lo, hi + 1):
            x[t, j] = 1 - x[t, j]


@njit(cache=True)
def rj_flip_initial_step(x, y, lf, ctx, rng, hcount):
    """Flip one initial state and accept against the rows 0..1 target."""
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    n = x.shape[1]
    j = rng.integers(0, n)
    t_hi = min(1, x.shape[0] - 1)
    old = initial_logdens(x[0], p0) + rows_logdens(x, 1, t_hi, ctx, hcount)
    old += _column_obs(y, x, j, 0, 0, lf)
    x[0, j] = 1 - x[0, j]
    new = initial_logdens(x[0], p0) + rows_logdens(x, 1, t_hi, ctx, hcount)
    new += _column_obs(y, x, j, 0, 0, lf)
    if _accept(_log_diff(new, old), rng):
        return True
    x[0, j] = 1 - x[0, j]
    return False


@njit(cache=True)
def rj_sweep(x, y, lf, ctx, m, open_end, n_updates, flip_every, rng, trace):
    """``n_updates`` RJ moves, preceded every ``flip_every`` moves by an initial-state flip.

    ``flip_every = 0`` disables the flips.  Returns
    ``(accepted, proposed, infeasible, initial_accepted, changed_cells)``.
    """
    T1, n = x.shape
    times = np.empty(T1, np.int64)
    span = np.zeros(2, np.int64)
    hcount = np.zeros(ctx[1], np.int64)
    out = np.empty(7, np.float64)
    init_acc = 0
    n_acc = 0
    n_inf = 0
    n_cells = 0
    for i in range(n_updates):
        if flip_every > 0 and i % flip_every == 0:
            if rj_flip_initial_step(x, y, lf, ctx, rng, hcount):
                init_acc += 1
                n_cells += 1
        rj_step(x, y, lf, ctx, m, open_end, rng, times, span, hcount, out)
        if out[6] == INFEASIBLE:
            n_inf += 1
        elif out[0] > 0.0:
            n_acc += 1
            n_cells += int(out[4] - out[3] + 1)
        if trace.shape[0] > 0:
            trace[i] = lattice_code(x)
    return n_acc, n_updates, n_inf, init_acc, n_cells


# ---------------------------------------------------------------------------
# iFFBS


@njit(cache=True)
def _others_factor(x, j, t, ctx, uc, out2):
    """Log factor of the others' step ``t + 1`` transitions at x[t, j] = 0 and 1.

    Only the difference between the two entries matters.  Others who stay
    uncolonised contribute ``-lambda dt``, which is linear in ``x[t, j]``, so
    they enter through two sums; those newly colonised are scored exactly.
    Returns the colonised count of row ``t`` excluding ``j``.
    """
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    n = x.shape[1]
    total = 0
    s_uu = 0.0
    n_uc = 0
    for i in range(n):
        xi = x[t, i]
        total += xi
        if xi == 0:
            if x[t + 1, i] == 0:
                s_uu += mult[i]
            elif i != j:
                uc[n_uc] = i
                n_uc += 1
    if x[t, j] == 1:
        total -= 1
    elif x[t + 1, j] == 0:
        s_uu -= mult[j]
    hj = hh[j]
    s_uu_h = 0.0
    for q in range(hh_ptr[hj], hh_ptr[hj + 1]):
        i = hh_mem[q]
        if i != j and x[t, i] == 0 and x[t + 1, i] == 0:
            s_uu_h += mult[i]
    gb = bG * season[t] / n
    hb = bG * bH
    s0 = 0.0
    s1 = -dt * (gb * s_uu + hb * s_uu_h)
    for k in range(n_uc):
        i = uc[k]
        h = hh[i]
        hc = 0
        for q in range(hh_ptr[h], hh_ptr[h + 1]):
            if hh_mem[q] != j:
                hc += x[t, hh_mem[q]]
        same = 1 if h == hj else 0
        lam0 = mult[i] * (gb * total + hb * hc)
        lam1 = mult[i] * (gb * (total + 1) + hb * (hc + same))
        p = p_colonise(lam0, dt)
        s0 += math.log(p) if p > 0.0 else NEG_INF
        p = p_colonise(lam1, dt)
        s1 += math.log(p) if p > 0.0 else NEG_INF
    out2[0] = s0
    out2[1] = s1
    return total


@njit(cache=True)
def _others_factor_full(x, j, t, ctx, out2):
    """Unreduced product over every ``i != j`` (reference path)."""
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    n = x.shape[1]
    log_cu = math.log(p_colonise(gamma, dt))
    log_cc = -gamma * dt
    xrow = x[t].copy()
    for c in range(2):
        xrow[j] = c
        total = 0
        for i in range(n):
            total += xrow[i]
        s = 0.0
        for i in range(n):
            if i == j:
                continue
            hc = 0
            for q in range(n):
                if q != i and hh[q] == hh[i]:
                    hc += xrow[q]
            lam = mult[i] * (bG * season[t] * total / n + bG * bH * hc)
            s += _transition_log(xrow[i], x[t + 1, i], lam, log_cu, log_cc, dt)
        out2[c] = s


@njit(cache=True)
def _own_lambda(x, j, t, total_excl, ctx):
    """Pressure on ``j`` at step ``t``; ``total_excl`` counts row ``t - 1`` without ``j``."""
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    n = x.shape[1]
    h = hh[j]
    hc = 0
    for q in range(hh_ptr[h], hh_ptr[h + 1]):
        if hh_mem[q] != j:
            hc += x[t - 1, hh_mem[q]]
    return mult[j] * (bG * season[t - 1] * total_excl / n + bG * bH * hc)


@njit(cache=True)
def _normalise2(l0, l1):
    mx = max(l0, l1)
    if mx == NEG_INF:
        return NEG_INF, NEG_INF
    z = mx + math.log(math.exp(l0 - mx) + math.exp(l1 - mx))
    return l0 - z, l1 - z


@njit(cache=True)
def _logaddexp(a, b):
    mx = max(a, b)
    if mx == NEG_INF:
        return NEG_INF
    return mx + math.log(math.exp(a - mx) + math.exp(b - mx))


@njit(cache=True)
def iffbs_forward(x, y, lf, j, ctx, logf, lam_own, full):
    """Normalised log forward table ``logf[t, c]`` for individual ``j``.

    ``lam_own[t]`` receives the pressure on ``j`` at step ``t`` (t >= 1).
    ``full`` selects the unreduced others' factor (slow reference path).
    """
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    T1, n = x.shape
    T = T1 - 1
    oth = np.zeros(2, np.float64)
    uc = np.empty(n, np.int64)
    log_cu = math.log(p_colonise(gamma, dt))
    log_cc = -gamma * dt
    total_excl = 0
    for t in range(T1):
        if t == 0:
            l0 = math.log1p(-p0)
            l1 = math.log(p0)
        else:
            lam = _own_lambda(x, j, t, total_excl, ctx)
            lam_own[t] = lam
            l0 = _logaddexp(logf[t - 1, 0] + _transition_log(0, 0, lam, log_cu, log_cc, dt),
                            logf[t - 1, 1] + log_cu)
            l1 = _logaddexp(logf[t - 1, 0] + _transition_log(0, 1, lam, log_cu, log_cc, dt),
                            logf[t - 1, 1] + log_cc)
        if y[t, j] >= 0:
            l0 += lf[y[t, j], 0]
            l1 += lf[y[t, j], 1]
        if t < T:
            if full:
                _others_factor_full(x, j, t, ctx, oth)
                total_excl = 0
                for i in range(n):
                    if i != j:
                        total_excl += x[t, i]
            else:
                total_excl = _others_factor(x, j, t, ctx, uc, oth)
            l0 += oth[0]
            l1 += oth[1]
        logf[t, 0], logf[t, 1] = _normalise2(l0, l1)


@njit(cache=True)
def iffbs_backward(x, j, ctx, logf, lam_own, rng):
    hh, n_hh, mult, season, bG, bH, gamma, p0, dt, hh_ptr, hh_mem = ctx
    T1 = x.shape[0]
    T = T1 - 1
    log_cu = math.log(p_colonise(gamma, dt))
    log_cc = -gamma * dt
    cur = 1 if rng.random() < math.exp(logf[T, 1]) else 0
    x[T, j] = cur
    for t in range(T - 1, -1, -1):
        lam = lam_own[t + 1]
        l0 = logf[t, 0] + _transition_log(0, cur, lam, log_cu, log_cc, dt)
        l1 = logf[t, 1] + _transition_log(1, cur, lam, log_cu, log_cc, dt)
        l0, l1 = _normalise2(l0, l1)
        cur = 1 if rng.random() < math.exp(l1) else 0
        x[t, j] = cur


@njit(cache=True)
def iffbs_sweep(x, y, lf, ctx, n_updates, rng, trace):
    """Run ``n_updates`` iFFBS updates on uniformly chosen individuals.

    Returns the number of lattice cells changed.
    """
    T1, n = x.shape
    logf = np.empty((T1, 2), np.float64)
    lam_own = np.zeros(T1, np.float64)
    old = np.empty(T1, np.int8)
    n_cells = 0
    for i in range(n_updates):
        j = rng.integers(0, n)
        for t in range(T1):
            old[t] = x[t, j]
        iffbs_forward(x, y, lf, j, ctx, logf, lam_own, False)
        iffbs_backward(x, j, ctx, logf, lam_own, rng)
        for t in range(T1):
            if old[t] != x[t, j]:
                n_cells += 1
        if trace.shape[0] > 0:
            trace[i] = lattice_code(x)
    return n_cells


# ---------------------------------------------------------------------------
# enumeration


@njit(cache=True)
def enumerate_logweights(T1, n, y, lf, ctx):
    n_cells = T1 * n
    n_states = np.int64(1) << n_cells
    out = np.empty(n_states, np.float64)
    x = np.zeros((T1, n), np.int8)
    for code in range(n_states):
        for t in range(T1):
            for j in range(n):
                x[t, j] = (code >> (t * n + j)) & 1
        out[code] = transmission_logdens(x, ctx) + obs_logdens(y, x, lf)
    return out
