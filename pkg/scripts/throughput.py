"""Time n independent regions for a number of steps at several worker counts."""
import argparse
import gc
import time

from membrane import run, systems
from membrane.parallel import available_cpus


def timed(spec, steps, workers, oversubscribe):
    gc.collect()
    gc.disable()
    try:
        t0 = time.perf_counter()
        tr = run(spec, seed=0, max_steps=steps, workers=workers, oversubscribe=oversubscribe)
        return time.perf_counter() - t0, tr
    finally:
        gc.enable()


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--regions", type=int, default=1024)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 8])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--oversubscribe", action="store_true", help="ignore the CPU cap")
    args = ap.parse_args()

    spec = systems.independent_regions(args.regions)
    print(f"{args.regions} regions, {args.steps} steps, {available_cpus()} cpu")
    ref = None
    for w in args.workers:
        best = float("inf")
        for _ in range(args.repeat):
            dt, tr = timed(spec, args.steps, w, args.oversubscribe)
            best = min(best, dt)
        text = tr.to_jsonl()
        ref = ref or text
        print(f"workers={w:<3d} best {best:6.2f}s  {args.steps / best:8.1f} steps/s  "
              f"trace {'same' if text == ref else 'DIFFERENT'}")


if __name__ == "__main__":
    main()
