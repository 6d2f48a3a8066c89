"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The end-to-end rows run a level-pool build in a subprocess with and without
PIECELAB_NO_NUMBA=1, so the module-level dispatch is exercised as in real use.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from piecelab import _kernels as K
from piecelab.disorder import sample_pieces
from piecelab.spectra import Potential, TwoPiece, _pair_nodes, _same_nodes

POOL_SNIPPET = """
import time
from piecelab import chains, disorder, optimizer, spectra
U = spectra.Potential.step(1.0, 1.0)
dec = chains.decompose(disorder.sample_pieces({L}, 1), chains.model_params(0.05, 1.0), 2)
t = time.perf_counter()
optimizer.build_level_pool(dec, U, 2)
print(time.perf_counter() - t)
"""


def cases():
    U = Potential.step(1.0, 1.0)
    us, ws = _same_nodes(20.0, U, 48)
    g = TwoPiece(20.0, 20.0, 0.25)
    pu, pw = _pair_nodes(g, U, 48)
    C_same = K.same_table_np(20.0, us, ws, 64)
    C_pair = K.pair_table_np(20.0, 20.0, 0.25, pu, pw, 64, 64)
    cfg = sample_pieces(2e5, 3)
    long_idx = np.flatnonzero(cfg.lengths >= 2.5)
    ls = cfg.lengths[long_idx]
    gaps = cfg.lefts[long_idx[1:]] - cfg.rights[long_idx[:-1]]
    lo, hi = np.array([2.5, 2.5]), np.array([6.0, 6.0])
    glo, ghi = np.array([0.0]), np.array([1.0])
    return {
        "same_table l=20 N=32": ("same_table", (20.0, us, ws, 64)),
        "pair_table l=20 N=32": ("pair_table", (20.0, 20.0, 0.25, pu, pw, 64, 64)),
        "assemble_same N=32": ("assemble_same", (C_same, 32, 20.0)),
        "assemble_pair N=32": ("assemble_pair", (C_pair, 32, 32, 20.0, 20.0)),
        "chain_breaks L=2e5": ("chain_breaks", (cfg.lefts, cfg.rights, long_idx, 1.0)),
        "pattern_count L=2e5": ("pattern_count", (ls, gaps, lo, hi, glo, ghi)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pool-L", type=float, default=1e4)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return
    print(f"{'kernel':28s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}  max|diff|")
    for name, (fn, a) in cases().items():
        f_np = getattr(K, fn + "_np")
        f_nb = getattr(K, fn + "_nb")
        r_nb = f_nb(*a)  # compile outside the timing
        r_np = f_np(*a)
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        diff = float(np.max(np.abs(np.asarray(r_np, dtype=float) - np.asarray(r_nb, dtype=float))))
        print(f"{name:28s} {t_np:12.3f} {t_nb:12.3f} {t_np / t_nb:8.1f}  {diff:.2e}")
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, PIECELAB_NO_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", POOL_SNIPPET.format(L=args.pool_L)], env=env,
                             capture_output=True, text=True, check=True)
        out[flag] = float(res.stdout.strip().splitlines()[-1])
    print(f"{'level pool L=%g' % args.pool_L:28s} {out['1'] * 1e3:12.1f} {out['0'] * 1e3:12.1f} "
          f"{out['1'] / out['0']:8.1f}")


if __name__ == "__main__":
    main()
