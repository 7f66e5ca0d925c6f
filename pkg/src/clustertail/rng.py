"""Counter-based splittable random streams.

Every random draw in the package is a pure function of a 64-bit key chain
(master_seed, lane, sample_index, ...position fields...), built by folding
fields into a SplitMix64-style state. Distinct chains give statistically
independent streams; nothing depends on scheduling or worker count, and a
tree draw at a fixed position can be replayed under different truncation
thresholds (exact coupling).

Two interchangeable implementations: plain Python ints (masked) and numba
uint64 (selected by the backend flag); they produce identical values.
A vectorized NumPy variant serves array-sized batches.
"""

from dataclasses import dataclass

import numpy as np

from .backend import USE_NUMBA, jit

GOLDEN = 0x9E3779B97F4A7C15
SALT = 0x632BE59BD9B4E019
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1
_INIT = 0x243F6A8885A308D3  # pi fractional bits

# lane numbers; decomposition stage k uses lane DECOMP0 + k
LANE_TREE = 0
LANE_DECOMP0 = 1
LANE_REGEN = 101
LANE_MEASURE = 201
LANE_CONC = 301


# ---------------------------------------------------------------- python ints
def _mix64_py(x):
    x &= _MASK
    x = ((x ^ (x >> 30)) * MIX1) & _MASK
    x = ((x ^ (x >> 27)) * MIX2) & _MASK
    return x ^ (x >> 31)


def _fold_py(s, x):
    return _mix64_py((int(s) ^ ((int(x) * GOLDEN + SALT) & _MASK)) & _MASK)


def _next_unit_py(s):
    s = (int(s) + GOLDEN) & _MASK
    z = _mix64_py(s)
    return s, ((z >> 11) + 0.5) * 2.0 ** -53


# ---------------------------------------------------------------- numba u64
_U = np.uint64
_CG = _U(GOLDEN)
_CS = _U(SALT)
_C1 = _U(MIX1)
_C2 = _U(MIX2)
_S30 = _U(30)
_S27 = _U(27)
_S31 = _U(31)
_S11 = _U(11)

if USE_NUMBA:

    @jit()
    def _mix64_nb(x):
        x = (x ^ (x >> _S30)) * _C1
        x = (x ^ (x >> _S27)) * _C2
        return x ^ (x >> _S31)

    @jit()
    def _fold_nb(s, x):
        return _mix64_nb(s ^ (_U(x) * _CG + _CS))

    @jit()
    def _next_unit_nb(s):
        s = s + _CG
        z = _mix64_nb(s)
        return s, (np.float64(z >> _S11) + 0.5) * 2.0 ** -53

    fold = _fold_nb
    next_unit = _next_unit_nb
else:
    fold = _fold_py
    next_unit = _next_unit_py


# ------------------------------------------------------------- numpy vectors
def _mix64_vec(x):
    x = (x ^ (x >> _S30)) * _C1
    x = (x ^ (x >> _S27)) * _C2
    return x ^ (x >> _S31)


def fold_vec(state, xs):
    """Fold an array of fields into `state`; returns uint64 array of states."""
    xs = np.asarray(xs, dtype=np.uint64)
    return _mix64_vec(_U(int(state) & _MASK) ^ (xs * _CG + _CS))


def unit_array(state, count, start=0):
    """`count` uniforms in (0,1), equal to sequential next_unit() calls
    number start+1 .. start+count from `state`."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = _mix64_vec(_U(int(state) & _MASK) + idx * _CG)
    return ((z >> _S11).astype(np.float64) + 0.5) * 2.0 ** -53


def derive(*fields):
    """Canonical key chain: fold fields left to right from the fixed init."""
    s = _INIT
    for f in fields:
        s = _fold_py(s, int(f) & _MASK)
    return s


@dataclass(frozen=True)
class StreamKey:
    """Addresses one sample's random stream: (master_seed, sample_index, lane)."""

    master_seed: int
    sample_index: int
    lane: int = LANE_TREE

    def state(self):
        return derive(self.master_seed, self.lane, self.sample_index)


def stream_prefix(master_seed, lane):
    """State after folding (master_seed, lane); kernels fold sample_index last."""
    return np.uint64(derive(master_seed, lane))
