"""Jitted batch kernels shared by the walk, rwrs and layered modules.

Walker ``w`` of a batch draws from the stream ``derive(run_key, first + w)``;
outputs are written at index ``w``, so a batch split into pieces reproduces
the unsplit batch exactly.
"""

import math

import numpy as np
from numba import njit

from .rng import derive, uniform
from .scenery import pack_site, site_value
from .bessel import log_ive_scalar, _U


@njit(cache=True)
def _step(pos, d, u):
    dirn = int(u * 2 * d)
    if dirn >= 2 * d:
        dirn = 2 * d - 1
    axis = dirn >> 1
    if dirn & 1:
        pos[axis] += 1
    else:
        pos[axis] -= 1
    return axis


@njit(cache=True)
def walk_path(d, t, key, start, max_jumps):
    """One continuous-time SRW path on Z^d up to time t (rate 1 per neighbour)."""
    times = np.empty(max_jumps)
    sites = np.empty((max_jumps + 1, d), dtype=np.int64)
    pos = start.copy()
    sites[0] = pos
    rate = 2.0 * d
    time = 0.0
    ctr = np.uint64(0)
    n = 0
    while True:
        time -= math.log(uniform(key, ctr)) / rate
        ctr += np.uint64(1)
        if time > t:
            break
        if n == max_jumps:
            return times[:0], sites[:0], -1
        _step(pos, d, uniform(key, ctr))
        ctr += np.uint64(1)
        times[n] = time
        n += 1
        sites[n] = pos
    return times[:n], sites[: n + 1], n


@njit(cache=True)
def walk_batch(d, law, alpha, param, k1, k2, run_key, first, start, cps, kill,
               a_out, pos_out, max_out, alive_out, jumps_out):
    """Simulate walkers and record, at each checkpoint, the clock A, the
    position, the running maximum of z over visited sites, survival inside
    the cube of radius ``kill`` (ignored when kill < 0) and the jump count."""
    n = a_out.shape[0]
    ncp = cps.size
    pos = np.empty(d, dtype=np.int64)
    rate = 2.0 * d
    for w in range(n):
        key = derive(run_key, first + w)
        ctr = np.uint64(0)
        for i in range(d):
            pos[i] = start[i]
        z = site_value(pos, d, law, alpha, param, k1, k2)
        zmax = z
        time = 0.0
        acc = 0.0
        comp = 0.0
        njump = 0
        k = 0
        alive = True
        if kill >= 0:
            for i in range(d):
                if abs(pos[i]) > kill:
                    alive = False
        while k < ncp:
            if not alive:
                while k < ncp:
                    a_out[w, k] = acc - comp
                    for i in range(d):
                        pos_out[w, k, i] = pos[i]
                    max_out[w, k] = zmax
                    alive_out[w, k] = False
                    jumps_out[w, k] = njump
                    k += 1
                break
            nxt = time - math.log(uniform(key, ctr)) / rate
            ctr += np.uint64(1)
            while k < ncp and cps[k] <= nxt:
                a_out[w, k] = (acc - comp) + z * (cps[k] - time)
                for i in range(d):
                    pos_out[w, k, i] = pos[i]
                max_out[w, k] = zmax
                alive_out[w, k] = True
                jumps_out[w, k] = njump
                k += 1
            if k >= ncp:
                break
            # compensated accumulation of z * holding time
            y = z * (nxt - time) - comp
            tot = acc + y
            comp = (tot - acc) - y
            acc = tot
            time = nxt
            axis = _step(pos, d, uniform(key, ctr))
            ctr += np.uint64(1)
            njump += 1
            if kill >= 0 and abs(pos[axis]) > kill:
                alive = False
            z = site_value(pos, d, law, alpha, param, k1, k2)
            if z > zmax:
                zmax = z


@njit(cache=True)
def poisson(lam, key, ctr):
    """Poisson(lam) draw from the counter stream; returns (value, next counter)."""
    if lam <= 0.0:
        return 0, ctr
    if lam < 10.0:
        lim = math.exp(-lam)
        p = 1.0
        k = 0
        while True:
            p *= uniform(key, ctr)
            ctr += np.uint64(1)
            if p <= lim:
                return k, ctr
            k += 1
    # transformed rejection with squeeze (Hormann 1993, PTRS)
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        uu = uniform(key, ctr) - 0.5
        v = uniform(key, ctr + np.uint64(1))
        ctr += np.uint64(2)
        us = 0.5 - abs(uu)
        k = math.floor((2.0 * a / us + b) * uu + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k), ctr
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return int(k), ctr


@njit(cache=True)
def _free_displacement(x1, d1, elapsed, key, ctr):
    # each coordinate of a rate-1-per-direction walk at time s is Poisson(s) - Poisson(s)
    for i in range(d1):
        up, ctr = poisson(elapsed, key, ctr)
        down, ctr = poisson(elapsed, key, ctr)
        x1[i] = up - down
    return ctr


@njit(cache=True)
def timechange_batch(d1, d2, law, alpha, param, k1, k2, run_key, first, t, x1_out, x2_out, a_out):
    """X_t = (S1 at time A2(t), S2_t): simulate S2 with its clock, then place S1."""
    n = a_out.size
    pos = np.empty(d2, dtype=np.int64)
    x1 = np.empty(d1, dtype=np.int64)
    rate = 2.0 * d2
    for w in range(n):
        key = derive(run_key, first + w)
        ctr = np.uint64(0)
        for i in range(d2):
            pos[i] = 0
        z = site_value(pos, d2, law, alpha, param, k1, k2)
        time = 0.0
        acc = 0.0
        comp = 0.0
        while True:
            nxt = time - math.log(uniform(key, ctr)) / rate
            ctr += np.uint64(1)
            if nxt > t:
                y = z * (t - time) - comp
                acc = acc + y
                break
            y = z * (nxt - time) - comp
            tot = acc + y
            comp = (tot - acc) - y
            acc = tot
            time = nxt
            _step(pos, d2, uniform(key, ctr))
            ctr += np.uint64(1)
            z = site_value(pos, d2, law, alpha, param, k1, k2)
        a_out[w] = acc
        ctr = _free_displacement(x1, d1, acc, key, ctr)
        for i in range(d1):
            x1_out[w, i] = x1[i]
        for i in range(d2):
            x2_out[w, i] = pos[i]


@njit(cache=True)
def gillespie_batch(d1, d2, law, alpha, param, k1, k2, run_key, first, t, x1_out, x2_out, ev_out):
    """Event-driven simulation of the variable-speed walk in the layered field."""
    n = ev_out.size
    p1 = np.empty(d1, dtype=np.int64)
    p2 = np.empty(d2, dtype=np.int64)
    for w in range(n):
        key = derive(run_key, first + w)
        ctr = np.uint64(0)
        for i in range(d1):
            p1[i] = 0
        for i in range(d2):
            p2[i] = 0
        time = 0.0
        events = 0
        while True:
            z = site_value(p2, d2, law, alpha, param, k1, k2)
            w1 = 2.0 * d1 * z
            rate = w1 + 2.0 * d2
            time -= math.log(uniform(key, ctr)) / rate
            ctr += np.uint64(1)
            if time > t:
                break
            v = uniform(key, ctr) * rate
            ctr += np.uint64(1)
            if v < w1:
                dirn = int(v / z)
                if dirn >= 2 * d1:
                    dirn = 2 * d1 - 1
                if dirn & 1:
                    p1[dirn >> 1] += 1
                else:
                    p1[dirn >> 1] -= 1
            else:
                dirn = int(v - w1)
                if dirn >= 2 * d2:
                    dirn = 2 * d2 - 1
                if dirn & 1:
                    p2[dirn >> 1] += 1
                else:
                    p2[dirn >> 1] -= 1
            events += 1
        ev_out[w] = events
        for i in range(d1):
            x1_out[w, i] = p1[i]
        for i in range(d2):
            x2_out[w, i] = p2[i]


@njit(cache=True)
def csrw_batch(d1, d2, law, alpha, param, k1, k2, run_key, first, t, x1_out, x2_out, binv_out, a_out):
    """Constant-speed walk via the inverse of B(s) = 2 d1 A2(s) + 2 d2 s."""
    n = a_out.size
    pos = np.empty(d2, dtype=np.int64)
    x1 = np.empty(d1, dtype=np.int64)
    rate = 2.0 * d2
    for w in range(n):
        key = derive(run_key, first + w)
        ctr = np.uint64(0)
        for i in range(d2):
            pos[i] = 0
        z = site_value(pos, d2, law, alpha, param, k1, k2)
        s = 0.0
        a = 0.0
        b = 0.0
        while True:
            hold = -math.log(uniform(key, ctr)) / rate
            ctr += np.uint64(1)
            slope = 2.0 * d1 * z + 2.0 * d2
            if b + slope * hold > t:
                ds = (t - b) / slope
                s += ds
                a += z * ds
                break
            s += hold
            a += z * hold
            b += slope * hold
            _step(pos, d2, uniform(key, ctr))
            ctr += np.uint64(1)
            z = site_value(pos, d2, law, alpha, param, k1, k2)
        binv_out[w] = s
        a_out[w] = a
        ctr = _free_displacement(x1, d1, a, key, ctr)
        for i in range(d1):
            x1_out[w, i] = x1[i]
        for i in range(d2):
            x2_out[w, i] = pos[i]


@njit(cache=True)
def pack_rows(pos, d):
    out = np.empty(pos.shape[0], dtype=np.int64)
    for i in range(pos.shape[0]):
        out[i] = np.int64(pack_site(pos[i], d))
    return out


@njit(cache=True)
def _pair_value(a, mode, thr, x1, kill_lam, kill_coef, table):
    if mode == 0:
        return 1.0 if a >= thr else 0.0
    if mode == 1:
        s = 0.0
        for c in range(x1.size):
            s += log_ive_scalar(x1[c], 2.0 * a, table)
        return math.exp(s)
    q = 0.0
    for k in range(kill_lam.size):
        q += kill_coef[k] * math.exp(kill_lam[k] * a)
    return q if q > 0.0 else 0.0


@njit(cache=True)
def splice_join(key_x, a_x, key_y, a_y, mode, thr, x1, kill_lam, kill_coef, h1, h2):
    """Sum h(i, j) over pairs whose endpoints coincide.

    h depends on a_x[i] + a_y[j]: an indicator of exceeding ``thr`` (mode 0),
    the free first-coordinate kernel at ``x1`` (mode 1) or the killed
    one-dimensional kernel given by its eigen-expansion (mode 2).  Row and
    column sums are accumulated into h1 and h2.  Returns (total, nonzero pairs).
    """
    table = _U
    ox = np.argsort(key_x, kind="mergesort")
    oy = np.argsort(key_y, kind="mergesort")
    nx = key_x.size
    ny = key_y.size
    i = 0
    j = 0
    total = 0.0
    hits = 0
    while i < nx and j < ny:
        kx = key_x[ox[i]]
        ky = key_y[oy[j]]
        if kx < ky:
            i += 1
            continue
        if ky < kx:
            j += 1
            continue
        i_end = i
        while i_end < nx and key_x[ox[i_end]] == kx:
            i_end += 1
        j_end = j
        while j_end < ny and key_y[oy[j_end]] == kx:
            j_end += 1
        if mode == 0:
            ax = np.sort(a_x[ox[i:i_end]])
            ay = np.sort(a_y[oy[j:j_end]])
            gx = i_end - i
            gy = j_end - j
            for ii in range(i, i_end):
                c = gy - np.searchsorted(ay, thr - a_x[ox[ii]], side="left")
                h1[ox[ii]] += c
                total += c
                hits += c
            for jj in range(j, j_end):
                c = gx - np.searchsorted(ax, thr - a_y[oy[jj]], side="left")
                h2[oy[jj]] += c
        else:
            for ii in range(i, i_end):
                xi = ox[ii]
                for jj in range(j, j_end):
                    yj = oy[jj]
                    h = _pair_value(a_x[xi] + a_y[yj], mode, thr, x1, kill_lam, kill_coef, table)
                    if h > 0.0:
                        h1[xi] += h
                        h2[yj] += h
                        total += h
                        hits += 1
        i = i_end
        j = j_end
    return total, hits
