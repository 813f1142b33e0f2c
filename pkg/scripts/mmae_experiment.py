"""Noise-injection experiment: adaptive model bank against the fixed filter
that assumes the smallest injected std, per measurement kind."""
import argparse
import time

import numpy as np

from insod.experiments import adapted_std_tracking, filter_for, reference_run
from insod.fusion import INJECTION_BANKS
from insod.odometry import MeasKind
from insod.trajsim import NoiseSchedule


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kinds", default="pa,pi,pv")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    for kind in args.kinds.split(","):
        k = MeasKind.parse(kind)
        sched = NoiseSchedule.reference_schedule(k)
        t0 = time.perf_counter()
        _, base, _ = reference_run(k, args.seed, filter_for(k, schedule=sched, baseline=True))
        out, ad, _ = reference_run(k, args.seed, filter_for(k, mmae=True, schedule=sched))
        cfg = filter_for(k, mmae=True, schedule=sched)
        shares = adapted_std_tracking(out, sched, INJECTION_BANKS[k], cfg.weight_floor)
        print(f"{kind}: fixed {base.herr:.2f} m, adaptive {ad.herr:.2f} m, "
              f"tracking shares {np.round(shares, 3)}  [{time.perf_counter() - t0:.1f} s]",
              flush=True)


if __name__ == "__main__":
    main()
