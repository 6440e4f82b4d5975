"""Leakage floor forced by label correlation, swept over rho.

With probability rho the sensitive label is ``y_p mod K``, so a representation
that still identifies y_p lets a probe reach ``rho + (1 - rho) / K`` on the
sensitive label.  The script prints that bound next to the probe accuracy of
the ground-truth debiased code (projection onto the primary factors).

    python3 scripts/leakage_floor.py --rhos 0 0.2 0.4 0.6
"""

import argparse

import numpy as np

from facebias.debias import adversary_probe, chance_level
from facebias.synth import SynthConfig, generate


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rhos", type=float, nargs="+", default=[0.0, 0.2, 0.4, 0.6, 0.8])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--n", type=int, default=5000)
    args = p.parse_args(argv)

    print("rho,attribute,K,chance,bound,truth_probe_mean,truth_probe_max")
    for rho in args.rhos:
        cfg0 = SynthConfig(rho=rho, n=args.n)
        for i, K in enumerate(cfg0.sensitive):
            probes, chances = [], []
            for seed in args.seeds:
                ds, gt = generate(SynthConfig(rho=rho, n=args.n, seed=seed))
                y = ds.y_sens[:, i]
                probes.append(adversary_probe(ds.Z @ gt.primary_projector(), y, seed))
                chances.append(chance_level(y))
            bound = rho + (1 - rho) / K
            print(f"{rho},{cfg0.names[i]},{K},{np.mean(chances):.3f},{bound:.3f},{np.mean(probes):.3f},{max(probes):.3f}")


if __name__ == "__main__":
    main()
