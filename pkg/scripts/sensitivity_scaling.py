"""Smooth sensitivity of the matching estimate against sample size on balanced synthetic data.

Prints mean local-sensitivity bound, smooth sensitivity of the estimate and of
its variance estimate for each N, averaged over several generated datasets.

    python3 scripts/sensitivity_scaling.py --sizes 1000 2000 4000 8000 16000
"""

import argparse

import numpy as np

from fedate.core import stratify
from fedate.matching import smooth_sensitivity_variance, tau_sensitivity
from fedate.mechanisms import RandomStream, beta_for
from fedate.sim import SynthParams, generate_synth


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[1000, 2000, 4000, 8000, 16000])
    p.add_argument("--domain-size", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--datasets", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    beta = beta_for(args.epsilon, args.delta)
    print(f"beta = {beta:.5f}")
    print(f"{'N':>7} {'LS bound':>10} {'S* tau':>10} {'S* var':>11} {'N * S* tau':>11}")
    for n in args.sizes:
        rows = []
        for r in range(args.datasets):
            ds = generate_synth(SynthParams(n=n, domain_size=args.domain_size, a=0.0),
                                RandomStream(args.seed, ("scaling", n, r)))
            counts = stratify(ds)
            tau = tau_sensitivity(counts, ds.B, beta)
            var = smooth_sensitivity_variance(counts, ds.B, beta)
            rows.append((tau.local_bound, tau.smooth.value, var.value))
        ls, s_tau, s_var = np.mean(rows, axis=0)
        print(f"{n:>7} {ls:>10.5f} {s_tau:>10.5f} {s_var:>11.3e} {n * s_tau:>11.2f}")


if __name__ == "__main__":
    main()
