# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled CPN kernels: PCG32, excitation fixed point, walks, ACK learning.

Mirror of cpn_py.py with identical operation order; compiled with
-ffp-contract=off so results are bit-identical to the pure twin.
"""
from libc.stdint cimport int32_t, int64_t, uint32_t, uint64_t

cdef double Q_CLIP = 1.0 - 1e-9
cdef double DENOM_FLOOR = 1e-12
cdef uint64_t _PCG_MULT = 6364136223846793005ULL
cdef uint64_t _PCG_DEFAULT_SEQ = 0x853C49E6748FEA9BULL
cdef int MAX_DEGREE = 64


# -- PCG32 ---------------------------------------------------------------

cdef inline uint32_t _pcg_next(uint64_t* rng) nogil:
    cdef uint64_t old = rng[0]
    rng[0] = old * _PCG_MULT + rng[1]
    cdef uint32_t xorshifted = <uint32_t>(((old >> 18) ^ old) >> 27)
    cdef uint32_t rot = <uint32_t>(old >> 59)
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31))


cdef inline double _pcg_uniform(uint64_t* rng) nogil:
    return _pcg_next(rng) * (1.0 / 4294967296.0)


cdef inline uint32_t _pcg_bounded(uint64_t* rng, uint32_t bound) nogil:
    return _pcg_next(rng) % bound


def pcg_seed(uint64_t[:] rng, seed, seq=None):
    cdef uint64_t sq = _PCG_DEFAULT_SEQ if seq is None else <uint64_t>(int(seq) & ((1 << 64) - 1))
    cdef uint64_t sd = <uint64_t>(int(seed) & ((1 << 64) - 1))
    rng[0] = 0
    rng[1] = (sq << 1) | 1
    _pcg_next(&rng[0])
    rng[0] = rng[0] + sd
    _pcg_next(&rng[0])


def pcg_next(uint64_t[:] rng):
    return _pcg_next(&rng[0])


def pcg_uniform(uint64_t[:] rng):
    return _pcg_uniform(&rng[0])


def pcg_bounded(uint64_t[:] rng, bound):
    return _pcg_bounded(&rng[0], <uint32_t>bound)


# -- neuron excitation fixed point ----------------------------------------

cdef int _solve(double* wp, double* wm, double* q, int d,
                double ext_exc, double ext_inh, double damping,
                double tol, int max_iter) nogil:
    cdef double rate[64]
    cdef double q_next[64]
    cdef int i, j, k, iters
    cdef double s, num, den, val, diff, delta, qi
    if d == 1:
        q[0] = 0.5
        return 0
    for j in range(d):
        s = 0.0
        for k in range(d):
            s += wp[j * d + k] + wm[j * d + k]
        rate[j] = s
    iters = 0
    while iters < max_iter:
        iters += 1
        delta = 0.0
        for j in range(d):
            num = ext_exc
            den = rate[j] + ext_inh
            for i in range(d):
                qi = q[i]
                num += qi * wp[i * d + j]
                den += qi * wm[i * d + j]
            if den < DENOM_FLOOR:
                den = DENOM_FLOOR
            val = num / den
            if val > Q_CLIP:
                val = Q_CLIP
            elif val < 0.0:
                val = 0.0
            val = damping * q[j] + (1.0 - damping) * val
            diff = val - q[j]
            if diff < 0.0:
                diff = -diff
            if diff > delta:
                delta = diff
            q_next[j] = val
        for j in range(d):
            q[j] = q_next[j]
        if delta < tol:
            break
    return iters


cdef void _reinforce(double* wp, double* wm, double* q, double* threshold,
                     int d, int chosen, double reward, double smoothing,
                     double learning_rate, double ext_exc, double ext_inh,
                     double damping, double tol, int max_iter) nogil:
    cdef double t_prev = threshold[0]
    threshold[0] = smoothing * t_prev + (1.0 - smoothing) * reward
    cdef int i, k
    cdef double ratio, delta, share, s, f
    if d == 1:
        return
    if reward >= t_prev:
        if t_prev <= 0.0:
            ratio = 1.0
        else:
            ratio = reward / (reward + t_prev)
        delta = learning_rate * ratio
        share = delta / (d - 1)
        for i in range(d):
            if i != chosen:
                wp[i * d + chosen] += delta
            for k in range(d):
                if k != i and k != chosen:
                    wm[i * d + k] += share
    else:
        ratio = 1.0 - reward / (reward + t_prev)
        delta = learning_rate * ratio
        share = delta / (d - 1)
        for i in range(d):
            if i != chosen:
                wm[i * d + chosen] += delta
            for k in range(d):
                if k != i and k != chosen:
                    wp[i * d + k] += share
    for i in range(d):
        s = 0.0
        for k in range(d):
            s += wp[i * d + k] + wm[i * d + k]
        if s > 0.0:
            f = 1.0 / s
            for k in range(d):
                wp[i * d + k] *= f
                wm[i * d + k] *= f
    _solve(wp, wm, q, d, ext_exc, ext_inh, damping, tol, max_iter)


def solve_node(double[:, ::1] w_plus, double[:, ::1] w_minus, double[:] q,
               double ext_exc, double ext_inh, double damping,
               double tol, int max_iter):
    cdef int d = q.shape[0]
    if d > MAX_DEGREE:
        raise ValueError("node degree exceeds kernel limit")
    return _solve(&w_plus[0, 0], &w_minus[0, 0], &q[0], d,
                  ext_exc, ext_inh, damping, tol, max_iter)


def reinforce_node(double[:, ::1] w_plus, double[:, ::1] w_minus, double[:] q,
                   double[:] threshold, int chosen, double reward,
                   double smoothing, double learning_rate, double ext_exc,
                   double ext_inh, double damping, double tol, int max_iter):
    cdef int d = q.shape[0]
    if d > MAX_DEGREE:
        raise ValueError("node degree exceeds kernel limit")
    _reinforce(&w_plus[0, 0], &w_minus[0, 0], &q[0], &threshold[0], d,
               chosen, reward, smoothing, learning_rate, ext_exc, ext_inh,
               damping, tol, max_iter)


# -- smart-packet walk -----------------------------------------------------

def walk(int32_t[:] indptr, int32_t[:] indices, unsigned char[:] is_exit,
         double[:] q_flat, int source, double exploration, int hop_budget,
         uint64_t[:] rng, int64_t[:] visited_stamp, int64_t stamp,
         int32_t[:] path_out, int32_t[:] slot_out, int32_t[:] cand_buf):
    cdef int cur = source
    cdef int n = 1
    cdef int lo, hi, ncand, nties, s, j, slot, nxt
    cdef double u, best, v
    cdef uint64_t* rp = &rng[0]
    visited_stamp[source] = stamp
    path_out[0] = source
    while True:
        if is_exit[cur]:
            return n
        if n - 1 >= hop_budget:
            return 0
        lo = indptr[cur]
        hi = indptr[cur + 1]
        ncand = 0
        for s in range(lo, hi):
            if visited_stamp[indices[s]] != stamp:
                cand_buf[ncand] = s
                ncand += 1
        if ncand == 0:
            return 0
        if ncand == 1:
            slot = cand_buf[0]
        else:
            u = _pcg_uniform(rp)
            if u < exploration:
                slot = cand_buf[_pcg_bounded(rp, <uint32_t>ncand)]
            else:
                best = q_flat[cand_buf[0]]
                for j in range(1, ncand):
                    v = q_flat[cand_buf[j]]
                    if v > best:
                        best = v
                nties = 0
                for j in range(ncand):
                    if q_flat[cand_buf[j]] == best:
                        cand_buf[nties] = cand_buf[j]
                        nties += 1
                if nties > 1:
                    slot = cand_buf[_pcg_bounded(rp, <uint32_t>nties)]
                else:
                    slot = cand_buf[0]
        nxt = indices[slot]
        slot_out[n - 1] = slot
        path_out[n] = nxt
        visited_stamp[nxt] = stamp
        cur = nxt
        n += 1


# -- ACK processing --------------------------------------------------------

def process_ack(int32_t[:] indptr, int32_t[:] indices, int64_t[:] w_off,
                double[:] w_plus_flat, double[:] w_minus_flat,
                double[:] q_flat, double[:] thresholds,
                double[:] eff_len, double[:] t_haz, double[:] growth,
                double[:] queue_len, double[:] arrival,
                int metric_kind, double speed,
                int32_t[:] path, int32_t[:] slots, int n,
                double ext_exc, double ext_inh, double damping,
                double tol, int max_iter, double smoothing,
                double learning_rate,
                double[:] goal_out, double[:] cong_out):
    cdef int i, j, p, u, lo, d
    cdef int64_t off
    cdef double t, g, cg, e, trav, a, delay, late, lateness
    for i in range(n - 2, -1, -1):
        t = 0.0
        g = 0.0
        cg = 0.0
        for j in range(i, n - 1):
            p = path[j]
            e = eff_len[slots[j]]
            trav = e / speed
            a = arrival[p]
            if a > 0.0:
                delay = (queue_len[p] + t * (a - 1.0)) / a
                if delay < 0.0:
                    delay = 0.0
            else:
                delay = 0.0
            if metric_kind == 0:
                g += trav + delay
            else:
                late = t - t_haz[p]
                if late > 0.0:
                    lateness = late * growth[p]
                else:
                    lateness = 0.0
                g += lateness + e
            cg += delay
            t += trav + delay
        goal_out[i] = g
        cong_out[i] = cg
        u = path[i]
        lo = indptr[u]
        d = indptr[u + 1] - lo
        off = w_off[u]
        _reinforce(&w_plus_flat[off], &w_minus_flat[off], &q_flat[lo],
                   &thresholds[u], d, slots[i] - lo, 1.0 / g, smoothing,
                   learning_rate, ext_exc, ext_inh, damping, tol, max_iter)
