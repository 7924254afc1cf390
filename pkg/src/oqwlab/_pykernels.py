"""Pure numpy implementation of the simulation kernels.

Same contract as the compiled ``_ckernels`` module, vectorized across
walkers (trajectories) or across source sites (evolution) instead of looping.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from oqwlab import rng as _rng

NAME = "python"
CHUNK = 8192
PROB_TOL = 1e-9

OK, BAD_SUM, ALL_ZERO = 0, 1, 2


def field_codes(coords, kind, tile, period, cumulative, seed):
    if kind == 0:
        flat = np.zeros(coords.shape[0], dtype=np.int64)
        for a in range(coords.shape[1]):
            flat = flat * period[a] + np.mod(coords[:, a], period[a])
        return tile[flat]
    u = _rng.site_uniform_array(seed, coords)
    return np.searchsorted(cumulative, u, side="right").astype(np.int64)


def _walk_chunk(kraus, gram, disp, field, rho0, x0, n_steps, indices, seed):
    count = len(indices)
    X = np.tile(np.asarray(x0, dtype=np.int64), (count, 1))
    rho = np.tile(rho0, (count, 1, 1))
    keys = _rng.stream_keys(seed, indices)
    rows = np.arange(count)
    nb = kraus.shape[1]
    for t in range(n_steps):
        c = field_codes(X, *field)
        p = np.einsum("nbij,nji->nb", gram[c], rho).real
        total = p.sum(axis=1)
        bad = np.abs(total - 1.0) > PROB_TOL
        if bad.any():
            i = int(np.argmax(bad))
            return X, (ALL_ZERO if total[i] <= 0 else BAD_SUM, int(indices[i]))
        target = _rng.stream_uniform_array(keys, t) * total
        b = (np.cumsum(p, axis=1) <= target[:, None]).sum(axis=1)
        over = b >= nb
        if over.any():
            # rounding pushed the target past the last bucket: take the last live branch
            live = p[over] > 0
            b[over] = nb - 1 - np.argmax(live[:, ::-1], axis=1)
        K = kraus[c, b]
        M = K @ rho @ np.conj(np.swapaxes(K, 1, 2))
        M = (M + np.conj(np.swapaxes(M, 1, 2))) / 2
        tr = np.einsum("nii->n", M).real
        rho = M / tr[:, None, None]
        X += disp[c, b]
    return X, (OK, -1)


def run_walkers(kraus, gram, nbranch, disp, field_kind, tile, period, cumulative, field_seed,
                rho0, x0, n_steps, indices, seed, threads=1):
    """Endpoints of the trajectories ``indices``; returns ``(X, (status, index))``."""
    indices = np.asarray(indices, dtype=np.int64)
    field = (field_kind, tile, period, cumulative, field_seed)
    chunks = [indices[i:i + CHUNK] for i in range(0, len(indices), CHUNK)] or [indices]
    job = lambda idx: _walk_chunk(kraus, gram, disp, field, rho0, x0, n_steps, idx, seed)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = [job(idx) for idx in chunks]
    for _, status in results:
        if status[0] != OK:
            return None, status
    return np.concatenate([r[0] for r in results]).reshape(len(indices), len(x0)), (OK, -1)


def evolve_sites(rho_in, mass, codes, kraus, nbranch, disp, shape, box_lo, box_hi, threads=1):
    """One exact step of the lattice channel on a flat window buffer.

    Only sources inside ``[box_lo, box_hi)`` with non-zero mass contribute;
    contributions are accumulated per target in (class, branch) order.
    """
    shape = np.asarray(shape, dtype=np.int64)
    out = np.zeros_like(rho_in)
    axes = [np.arange(lo, hi) for lo, hi in zip(box_lo, box_hi)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    flat = np.ravel_multi_index(tuple(grid.T), tuple(shape))
    keep = mass[flat] > 0
    src, coords = flat[keep], grid[keep]
    src_codes = codes[src]
    for c in range(kraus.shape[0]):
        sel = src_codes == c
        if not sel.any():
            continue
        s, xc = src[sel], coords[sel]
        rho = rho_in[s]
        for b in range(nbranch[c]):
            tgt = xc + disp[c, b]
            inside = np.all((tgt >= 0) & (tgt < shape), axis=1)
            K = kraus[c, b]
            contrib = K @ rho[inside] @ K.conj().T
            out[np.ravel_multi_index(tuple(tgt[inside].T), tuple(shape))] += contrib
    return out
