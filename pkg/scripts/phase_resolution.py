"""Bootstrap phase resolution and the corresponding photon-number resolution.

    python scripts/phase_resolution.py --repetitions 50000 --seed 9
"""

import argparse

from ionphoton.model import IonCavityParams
from ionphoton.reconstruction import phase_resolution


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repetitions", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=9)
    ap.add_argument("--n-mean", type=float, default=1.0)
    ap.add_argument("--trials", type=int, default=250)
    args = ap.parse_args()

    base = IonCavityParams()
    print("transition,delta_phi_pi,sigma_phi_pi,delta_n_bar,repetitions,failures")
    for k, (label, p) in enumerate((("DP", base), ("D'P'", base.second_transition()))):
        res = phase_resolution(p, repetitions=args.repetitions, seed=args.seed + k, trials=args.trials, n_mean=args.n_mean)
        print(f"{label},{res.delta_phi:.5f},{res.sigma_phi:.5f},{res.delta_n_bar:.5f},{res.repetitions},{res.failures}")


if __name__ == "__main__":
    main()
