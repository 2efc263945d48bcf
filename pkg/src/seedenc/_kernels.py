"""Compiled hot loops.

Every kernel here is a bit-exact twin of a pure-Python routine elsewhere in
the package (the tests enforce this), so correctness never depends on the
compiler: kernels only make the search and query paths fast enough for
million-key workloads. All integer state is uint64 with explicit numpy
constants; Python ints never leak into the jitted code.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .mixing import DIGEST_HI_SALT, DIGEST_LO_SALT, MIX_C1, MIX_C2, PHI

U64 = np.uint64
_PHI = U64(PHI)
_C1 = U64(MIX_C1)
_C2 = U64(MIX_C2)
_S30 = U64(30)
_S27 = U64(27)
_S31 = U64(31)
_S32 = U64(32)
_ONE = U64(1)
_ZERO = U64(0)
_M32 = U64(0xFFFFFFFF)
_FULL64 = U64(0xFFFFFFFFFFFFFFFF)
_DHI = U64(DIGEST_HI_SALT)
_DLO = U64(DIGEST_LO_SALT)
_TAG_SHIFT = U64(54)


@njit(cache=True, inline="always")
def fin64(z):
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def mix64(a, b, c):
    return fin64(fin64(fin64(a + _PHI) ^ b) ^ c)


# ---------------------------------------------------------------------------
# full search over a synthetic oracle


@njit(cache=True)
def solve_synthetic_full(master, pm1, ell, w, step_limit, sigma, trials):
    """Depth-first suffix-seed search where trial i passes iff
    mix64(master, i, seed) <= pm1[i-1].

    sigma (uint64, length n+1) and trials (int64, length n) are outputs.
    Returns (status, steps, deepest): status 0 on success, 1 on step limit,
    2 when the initial w-bit value wrapped around.
    """
    n = pm1.shape[0]
    seed = np.zeros(n + 1, dtype=np.uint64)
    if w == 64:
        mask = _FULL64
    else:
        mask = (_ONE << U64(w)) - _ONE
    steps = np.int64(0)
    deepest = np.int64(0)
    i = np.int64(1)
    while True:
        li = U64(ell[i - 1])
        seed[i] = ((seed[i - 1] << li) | sigma[i]) & mask
        if steps >= step_limit:
            return np.int64(1), steps, deepest
        steps += np.int64(1)
        trials[i - 1] += 1
        if i > deepest:
            deepest = i
        if mix64(master, U64(i), seed[i]) <= pm1[i - 1]:
            if i == n:
                return np.int64(0), steps, deepest
            i += np.int64(1)
            sigma[i] = _ZERO
            continue
        while i >= 1 and sigma[i] == (_ONE << U64(ell[i - 1])) - _ONE:
            i -= np.int64(1)
        if i == 0:
            sigma[0] = (sigma[0] + _ONE) & mask
            seed[0] = sigma[0]
            if sigma[0] == _ZERO:
                return np.int64(2), steps, deepest
            i = np.int64(1)
            sigma[1] = _ZERO
        else:
            sigma[i] = sigma[i] + _ONE


# ---------------------------------------------------------------------------
# key digests


@njit(cache=True)
def digest_blob(blob, offsets, seed, hi_out, lo_out):
    """Per-key 128-bit digests over a concatenated byte blob.

    Key t occupies blob[offsets[t] : offsets[t+1]]. The chained 64-bit hash
    is finalized twice with distinct salts to produce the (hi, lo) halves.
    """
    nkeys = offsets.shape[0] - 1
    for t in range(nkeys):
        start = offsets[t]
        end = offsets[t + 1]
        length = end - start
        h = mix64(seed, U64(length), _ZERO)
        idx = _ONE
        j = start
        while j + 8 <= end:
            chunk = (
                U64(blob[j])
                | (U64(blob[j + 1]) << U64(8))
                | (U64(blob[j + 2]) << U64(16))
                | (U64(blob[j + 3]) << U64(24))
                | (U64(blob[j + 4]) << U64(32))
                | (U64(blob[j + 5]) << U64(40))
                | (U64(blob[j + 6]) << U64(48))
                | (U64(blob[j + 7]) << U64(56))
            )
            h = mix64(h, chunk, idx)
            idx += _ONE
            j += 8
        if j < end:
            chunk = _ZERO
            shift = _ZERO
            while j < end:
                chunk |= U64(blob[j]) << shift
                shift += U64(8)
                j += 1
            h = mix64(h, chunk, idx)
        hi_out[t] = fin64(h ^ _DHI)
        lo_out[t] = fin64(h ^ _DLO)


# ---------------------------------------------------------------------------
# full search over one splitting layer


@njit(cache=True)
def solve_split_layer(hi, m, node_keys, ell, w, step_limit, sigma, trials):
    """Depth-first suffix-seed search where trial i passes iff the seed
    splits node i's digest slice exactly in half.

    Node i (1-based) owns hi[(i-1)*m : i*m]; a digest goes left when
    mix64(node_keys[i-1], digest, seed) has its low bit clear. The trial
    loop exits early once either side is over-full. sigma (uint64, length
    n+1) and trials (int64, length n) are outputs; returns
    (status, steps, deepest) with the same codes as solve_synthetic_full.
    """
    n = node_keys.shape[0]
    half = m >> 1
    seed = np.zeros(n + 1, dtype=np.uint64)
    if w == 64:
        mask = _FULL64
    else:
        mask = (_ONE << U64(w)) - _ONE
    steps = np.int64(0)
    deepest = np.int64(0)
    i = np.int64(1)
    while True:
        li = U64(ell[i - 1])
        seed[i] = ((seed[i - 1] << li) | sigma[i]) & mask
        if steps >= step_limit:
            return np.int64(1), steps, deepest
        steps += np.int64(1)
        trials[i - 1] += 1
        if i > deepest:
            deepest = i
        base = (i - 1) * m
        key = node_keys[i - 1]
        s = seed[i]
        left = np.int64(0)
        for t in range(m):
            if mix64(key, hi[base + t], s) & _ONE == _ZERO:
                left += 1
                if left > half:
                    break
            elif np.int64(t + 1) - left > m - half:
                break
        if left == half:
            if i == n:
                return np.int64(0), steps, deepest
            i += np.int64(1)
            sigma[i] = _ZERO
            continue
        while i >= 1 and sigma[i] == (_ONE << U64(ell[i - 1])) - _ONE:
            i -= np.int64(1)
        if i == 0:
            sigma[0] = (sigma[0] + _ONE) & mask
            seed[0] = sigma[0]
            if sigma[0] == _ZERO:
                return np.int64(2), steps, deepest
            i = np.int64(1)
            sigma[1] = _ZERO
        else:
            sigma[i] = sigma[i] + _ONE


# ---------------------------------------------------------------------------
# batched index queries


@njit(cache=True, inline="always")
def _mulhi(a, b):
    ah = a >> _S32
    al = a & _M32
    bh = b >> _S32
    bl = b & _M32
    mid = ah * bl + ((al * bl) >> _S32)
    mid2 = al * bh + (mid & _M32)
    return ah * bh + (mid >> _S32) + (mid2 >> _S32)


@njit(cache=True, inline="always")
def _bisect_left(arr, x):
    lo = np.int64(0)
    hi = np.int64(arr.shape[0])
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, inline="always")
def _bisect_right(arr, x):
    lo = np.int64(0)
    hi = np.int64(arr.shape[0])
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, inline="always")
def _read_window(words, off, w, mask):
    wi = np.int64(off >> 6)
    avail = np.int64(64) - np.int64(off & 63)
    w0 = words[wi]
    if avail >= w:
        return (w0 >> U64(avail - w)) & mask
    rest = w - avail
    high = (w0 & ((_ONE << U64(avail)) - _ONE)) << U64(rest)
    return high | (words[wi + 1] >> U64(64 - rest))


@njit(cache=True)
def query_batch(
    qhi,
    qlo,
    n,
    k,
    full_buckets,
    t_values,
    r_seed,
    r_width,
    r_block,
    r_cells,
    master,
    pers,
    bit_bases,
    words,
    w,
    fb_seeds,
    fb_count,
    out,
):
    """Map each query digest to its 1-based index value.

    Mirrors the pure-Python query path bit for bit: threshold rank over the
    raw sorted values, retrieval correction on ties, then one seed window
    and one split bit per layer. pers[l] is the per-process pointer step
    (cost_fp + eps_fp) of layer l and bit_bases[l] the bit offset of that
    layer's message inside the packed words array (always a multiple of 64).
    Keys in the leftover bucket walk the fallback tree over fb_seeds.
    """
    nq = qhi.shape[0]
    d = pers.shape[0]
    if w == 64:
        mask = _FULL64
    else:
        mask = (_ONE << U64(w)) - _ONE
    if r_width == 64:
        r_mask = _FULL64
    else:
        r_mask = (_ONE << U64(r_width)) - _ONE
    n_u = U64(n)
    fb_key = master ^ (U64(0xFB) << _TAG_SHIFT)
    for q in range(nq):
        hi = qhi[q]
        lo = qlo[q]
        v = _mulhi(lo, n_u)
        b = _bisect_left(t_values, v)
        if r_block > 0 and _bisect_right(t_values, v) > b:
            base = mix64(r_seed, hi, lo)
            corr = _ZERO
            for j in range(3):
                part = np.int64((base >> U64(21 * j)) & U64(0x1FFFFF))
                cell = j * r_block + part % r_block
                corr ^= _read_window(r_cells, U64(cell * r_width), r_width, r_mask)
            b += np.int64(corr)
        if b >= full_buckets:
            if fb_count > 0:
                size = fb_count
                node = np.int64(0)
                leaf = np.int64(0)
                while size > 1:
                    lhalf = (size + 1) >> 1
                    s = fb_seeds[node]
                    if mix64(fb_key ^ U64(node), hi, s) & _ONE == _ZERO:
                        size = lhalf
                        node += 1
                    else:
                        leaf += lhalf
                        node += lhalf
                        size -= lhalf
                out[q] = full_buckets * k + leaf + 1
                continue
            b = full_buckets - 1
        path = np.int64(0)
        for l in range(d):
            i0 = b * (np.int64(1) << l) + path
            key = master ^ (U64(l + 1) << _TAG_SHIFT) ^ U64(i0)
            off = (U64(i0 + 1) * pers[l] + _M32) >> _S32
            s = _read_window(words, U64(bit_bases[l]) + off, w, mask)
            bit = mix64(key, hi, s) & _ONE
            path = (path << 1) | np.int64(bit)
        out[q] = b * k + path + 1
