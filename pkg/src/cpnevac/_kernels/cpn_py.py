"""Pure-Python twin of the compiled CPN kernels.

Selected when the extension module is unavailable (or forced through
``CPNEVAC_KERNEL=py``). Every function keeps the exact operation order of
the C implementation, and the shared PCG32 generator produces the same
stream, so simulation results are bit-identical across backends; only the
speed differs. The parity test suite asserts this.

Conventions shared by both backends:

* graphs are given in CSR form over vertex indices 0..nv-1
  (``indptr``/``indices``), one "slot" per directed half-edge;
* per-node neuron state lives in flat arrays: excitation ``q`` aligned
  with the CSR slots, square weight blocks at ``w_off[node]``;
* the RNG is a 2-element uint64 array ``[state, increment]``.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
MASK32 = 0xFFFFFFFF
_PCG_MULT = 6364136223846793005
_PCG_DEFAULT_SEQ = 0x853C49E6748FEA9B

Q_CLIP = 1.0 - 1e-9
DENOM_FLOOR = 1e-12


# -- deterministic RNG (PCG32) ------------------------------------------


def pcg_seed(rng: np.ndarray, seed: int, seq: int = _PCG_DEFAULT_SEQ) -> None:
    """Initialise a [state, inc] uint64 pair from a seed."""
    inc = ((seq << 1) | 1) & MASK64
    rng[0] = 0
    rng[1] = inc
    pcg_next(rng)
    rng[0] = (int(rng[0]) + (seed & MASK64)) & MASK64
    pcg_next(rng)


def pcg_next(rng: np.ndarray) -> int:
    old = int(rng[0])
    rng[0] = (old * _PCG_MULT + int(rng[1])) & MASK64
    xorshifted = (((old >> 18) ^ old) >> 27) & MASK32
    rot = old >> 59
    return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & MASK32


def pcg_uniform(rng: np.ndarray) -> float:
    """Uniform double in [0, 1)."""
    return pcg_next(rng) * (1.0 / 4294967296.0)


def pcg_bounded(rng: np.ndarray, bound: int) -> int:
    """Uniform integer in [0, bound)."""
    return pcg_next(rng) % bound


# -- neuron excitation fixed point --------------------------------------


def solve_node(
    w_plus: np.ndarray,
    w_minus: np.ndarray,
    q: np.ndarray,
    ext_exc: float,
    ext_inh: float,
    damping: float,
    tol: float,
    max_iter: int,
) -> int:
    """Damped fixed-point solve of the steady-state excitation vector.

    ``q`` is updated in place; returns the number of iterations used.
    """
    d = q.shape[0]
    if d == 1:
        q[0] = 0.5
        return 0
    rate = [0.0] * d
    for j in range(d):
        s = 0.0
        for k in range(d):
            s += w_plus[j, k] + w_minus[j, k]
        rate[j] = s
    q_next = [0.0] * d
    iters = 0
    for _ in range(max_iter):
        iters += 1
        delta = 0.0
        for j in range(d):
            num = ext_exc
            den = rate[j] + ext_inh
            for i in range(d):
                qi = q[i]
                num += qi * w_plus[i, j]
                den += qi * w_minus[i, j]
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


def reinforce_node(
    w_plus: np.ndarray,
    w_minus: np.ndarray,
    q: np.ndarray,
    threshold: np.ndarray,
    chosen: int,
    reward: float,
    smoothing: float,
    learning_rate: float,
    ext_exc: float,
    ext_inh: float,
    damping: float,
    tol: float,
    max_iter: int,
) -> None:
    """Reward/punish the neuron of the chosen neighbor and re-solve.

    Rewards at or above the previous smoothed threshold excite the chosen
    neuron and inhibit its rivals; lower rewards do the reverse, the
    rival share split (d-1) ways. The increment scales with the reward
    normalised by the running threshold (so learning works at any goal
    magnitude), and rows are renormalised to unit firing rate afterwards
    so the excitation stays well-defined.
    """
    t_prev = threshold[0]
    threshold[0] = smoothing * t_prev + (1.0 - smoothing) * reward
    d = q.shape[0]
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
                w_plus[i, chosen] += delta
            for k in range(d):
                if k != i and k != chosen:
                    w_minus[i, k] += share
    else:
        ratio = 1.0 - reward / (reward + t_prev)
        delta = learning_rate * ratio
        share = delta / (d - 1)
        for i in range(d):
            if i != chosen:
                w_minus[i, chosen] += delta
            for k in range(d):
                if k != i and k != chosen:
                    w_plus[i, k] += share
    for i in range(d):
        s = 0.0
        for k in range(d):
            s += w_plus[i, k] + w_minus[i, k]
        if s > 0.0:
            f = 1.0 / s
            for k in range(d):
                w_plus[i, k] *= f
                w_minus[i, k] *= f
    solve_node(w_plus, w_minus, q, ext_exc, ext_inh, damping, tol, max_iter)


# -- smart-packet walk ---------------------------------------------------


def walk(
    indptr: np.ndarray,
    indices: np.ndarray,
    is_exit: np.ndarray,
    q_flat: np.ndarray,
    source: int,
    exploration: float,
    hop_budget: int,
    rng: np.ndarray,
    visited_stamp: np.ndarray,
    stamp: int,
    path_out: np.ndarray,
    slot_out: np.ndarray,
    cand_buf: np.ndarray,
) -> int:
    """One loop-free exploratory walk from ``source`` toward any exit.

    Returns the delivered path length (>= 1) or 0 when the packet is
    dropped (budget exhausted or no unvisited neighbor). ``path_out``
    receives vertex indices, ``slot_out`` the CSR slot taken at each hop.
    """
    cur = source
    visited_stamp[source] = stamp
    path_out[0] = source
    n = 1
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
            u = pcg_uniform(rng)
            if u < exploration:
                slot = cand_buf[pcg_bounded(rng, ncand)]
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
                    slot = cand_buf[pcg_bounded(rng, nties)]
                else:
                    slot = cand_buf[0]
        nxt = indices[slot]
        slot_out[n - 1] = slot
        path_out[n] = nxt
        visited_stamp[nxt] = stamp
        cur = nxt
        n += 1


# -- ACK processing: goal values, congestion, learning -------------------


def process_ack(
    indptr: np.ndarray,
    indices: np.ndarray,
    w_off: np.ndarray,
    w_plus_flat: np.ndarray,
    w_minus_flat: np.ndarray,
    q_flat: np.ndarray,
    thresholds: np.ndarray,
    eff_len: np.ndarray,
    t_haz: np.ndarray,
    growth: np.ndarray,
    queue_len: np.ndarray,
    arrival: np.ndarray,
    metric_kind: int,
    speed: float,
    path: np.ndarray,
    slots: np.ndarray,
    n: int,
    ext_exc: float,
    ext_inh: float,
    damping: float,
    tol: float,
    max_iter: int,
    smoothing: float,
    learning_rate: float,
    goal_out: np.ndarray,
    cong_out: np.ndarray,
) -> None:
    """Evaluate every suffix of a delivered path and reinforce its nodes.

    ``metric_kind`` 0 evaluates traversal time with queueing delays,
    1 evaluates the hazard-lateness safety goal. For each start position
    i the suffix goal value and summed delay land in ``goal_out[i]`` /
    ``cong_out[i]``, and node path[i] is reinforced with reward 1/goal
    for having chosen path[i+1].
    """
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
        wp = w_plus_flat[off : off + d * d].reshape(d, d)
        wm = w_minus_flat[off : off + d * d].reshape(d, d)
        qv = q_flat[lo : lo + d]
        reinforce_node(
            wp,
            wm,
            qv,
            thresholds[u : u + 1],
            int(slots[i] - lo),
            1.0 / g,
            smoothing,
            learning_rate,
            ext_exc,
            ext_inh,
            damping,
            tol,
            max_iter,
        )
