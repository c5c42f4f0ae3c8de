"""Benchmark the pure-Python engine against the compiled extension.

Runs the same configurations on both engines, asserts identical
fingerprints, and reports wall-clock times and speedups.

Usage: python3 benchmarks/bench_engines.py [--quick]
"""

from __future__ import annotations

import argparse
import time

from byzgather import harness
from byzgather.engine import available_engines, run_with


def bench_case(name: str, cfg_kwargs: dict) -> None:
    cfg = harness.RunConfig(**cfg_kwargs)
    sim_cfg, meta = harness.build_sim(cfg)
    results = {}
    times = {}
    for eng in ("python", "fast"):
        t0 = time.perf_counter()
        results[eng] = run_with(eng, sim_cfg)
        times[eng] = time.perf_counter() - t0
    fp_py = results["python"].fingerprint
    fp_fast = results["fast"].fingerprint
    match = "ok" if fp_py == fp_fast else "FINGERPRINT MISMATCH"
    speedup = times["python"] / max(times["fast"], 1e-9)
    print(f"{name:34s} rounds {results['fast'].rounds:>8d} "
          f"python {times['python']:7.2f}s fast {times['fast']:6.2f}s "
          f"speedup {speedup:6.1f}x {match}")
    if fp_py != fp_fast:
        raise SystemExit(1)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="skip the larger Byzantine configurations")
    args = parser.parse_args()
    if "fast" not in available_engines():
        raise SystemExit("compiled engine not built; install the package "
                         "with `pip install -e . --no-build-isolation`")
    cases = [
        ("ring-4 k=8 f=0 distributed",
         dict(corpus="tiny", graph="ring-4-1", k=8, f=0, seed=1, id_hi=256)),
        ("ring-4 k=8 f=0 oracle",
         dict(corpus="tiny", graph="ring-4-1", k=8, f=0, seed=1, id_hi=256,
              pbc_mode="oracle")),
    ]
    if not args.quick:
        cases.append(
            ("ring-4 k=17 f=1 equivocator",
             dict(corpus="tiny", graph="ring-4-1", k=17, f=1,
                  strategies=("equivocator",), seed=1, id_hi=256)))
        cases.append(
            ("random_connected-6 k=17 f=1 lure",
             dict(corpus="small-n6", graph="random_connected-6-1", k=17,
                  f=1, strategies=("lure",), seed=1, id_hi=256)))
    for name, kwargs in cases:
        bench_case(name, kwargs)


if __name__ == "__main__":
    main()
