"""Strong-pull figure of merit (g^2/Delta)/kappa for a few atom-cavity systems.

The detuning is a fixed multiple of the atomic linewidth (default 10).

    python scripts/strong_pull.py --detuning-factor 10
"""

import argparse

from ionphoton.calibration import strong_pull_ratio
from ionphoton.model import IonCavityParams, khz, mhz

SYSTEMS = {
    # name: (g / 2pi MHz, gamma / 2pi MHz, kappa / 2pi kHz)
    "Ca+": (1.53, 11.5, 1.9),
    "Cs": (2.8, 2.6, 1.9),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--detuning-factor", type=float, default=10.0)
    args = ap.parse_args()

    print("system,g_MHz,gamma_MHz,kappa_kHz,ratio")
    for name, (g, gamma, kappa) in SYSTEMS.items():
        r = strong_pull_ratio(mhz(g), mhz(gamma), khz(kappa), detuning_factor=args.detuning_factor)
        print(f"{name},{g},{gamma},{kappa},{r:.4g}")
    p = IonCavityParams()
    r = strong_pull_ratio(p.g, 0.0, p.kappa, detuning=p.Delta_PL)
    print(f"this setup,{p.g / mhz(1):.4g},,{p.kappa / khz(1):.4g},{r:.4g}")


if __name__ == "__main__":
    main()
