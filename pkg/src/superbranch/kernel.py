"""Numba replica kernel for the backward-time branching diffusion.

One replica is a depth-first walk over the branching tree: each particle
carries (position, sign, derivative order), diffuses by exact Gaussian
increments between exponential event times, and is frozen at the horizon.
Randomness is a counter-based splitmix64 stream derived from
(master_seed, replica_index), so replica i is reproducible independently of
worker count or execution order.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

# status codes returned by the replica kernel
OK = 0
CAP_EXCEEDED = 1

# branching action codes
ACT_POWER = 0
ACT_RECIPROCAL = 1
ACT_DERIV_SHIFT = 2

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_MIX1 = uint64(0xBF58476D1CE4E5B9)
_MIX2 = uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(uint64(uint64), cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    return z ^ (z >> uint64(31))


@njit(cache=True, inline="always")
def _next_uniform(state):
    """splitmix64 step; returns a double in (0, 1)."""
    state[0] = state[0] + _GOLDEN
    z = _mix(state[0])
    return (float(z >> uint64(11)) + 0.5) * _INV53


@njit(cache=True, inline="always")
def _next_normal(state):
    u1 = _next_uniform(state)
    u2 = _next_uniform(state)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(6.283185307179586 * u2)


@njit(uint64(uint64, uint64), cache=True)
def stream_seed(master, index):
    """Initial stream state for replica `index` under `master`."""
    return _mix(_mix(master) ^ (_mix(index + uint64(1)) * _GOLDEN))


@njit(cache=True, nogil=True)
def run_replica_kernel(
    seed_state,
    rate,
    horizon,
    x0,
    cum_probs,  # float64[:] cumulative branch probabilities
    actions,  # int64[:]   action code per entry
    params,  # int64[:]   m for power, sign multiplier for deriv_shift
    mckean,  # bool: rate-1 binary splitting, ignore the branch table
    cap,  # population cap (total particles created)
    stack_pos,
    stack_sign,
    stack_order,
    stack_birth,
    out_pos,
    out_sign,
    out_order,
):
    """Simulate one replica; exits are written to the out buffers.

    Returns (n_exit, events, max_order, status).
    """
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed_state

    sp = 0
    stack_pos[0] = x0
    stack_sign[0] = 1
    stack_order[0] = 0
    stack_birth[0] = 0.0
    sp = 1

    births = 1
    n_exit = 0
    events = 0
    max_order = 0

    while sp > 0:
        sp -= 1
        x = stack_pos[sp]
        sg = stack_sign[sp]
        od = stack_order[sp]
        s = stack_birth[sp]
        alive = True
        while alive:
            life = -np.log(_next_uniform(state)) / rate
            if s + life >= horizon:
                x += _next_normal(state) * np.sqrt(horizon - s)
                out_pos[n_exit] = x
                out_sign[n_exit] = sg
                out_order[n_exit] = od
                n_exit += 1
                break
            x += _next_normal(state) * np.sqrt(life)
            s += life
            events += 1
            if mckean:
                births += 1
                if births > cap:
                    return n_exit, events, max_order, CAP_EXCEEDED
                if sp >= stack_pos.shape[0]:
                    return n_exit, events, max_order, CAP_EXCEEDED
                stack_pos[sp] = x
                stack_sign[sp] = sg
                stack_order[sp] = od
                stack_birth[sp] = s
                sp += 1
                continue
            u = _next_uniform(state)
            idx = 0
            while idx < cum_probs.shape[0] - 1 and u > cum_probs[idx]:
                idx += 1
            act = actions[idx]
            if act == ACT_RECIPROCAL:
                sg = -sg
            elif act == ACT_DERIV_SHIFT:
                sg *= params[idx]
                od += 1
                if od > max_order:
                    max_order = od
            else:  # power(m)
                m = params[idx]
                if m == 0:
                    alive = False
                    break
                extra = m - 1
                births += extra
                if births > cap:
                    return n_exit, events, max_order, CAP_EXCEEDED
                if sp + extra > stack_pos.shape[0]:
                    return n_exit, events, max_order, CAP_EXCEEDED
                for _ in range(extra):
                    stack_pos[sp] = x
                    stack_sign[sp] = sg
                    stack_order[sp] = od
                    stack_birth[sp] = s
                    sp += 1
    return n_exit, events, max_order, OK
