"""
Resonance linewidth versus coupling depth. The weak-coupling limit is set by
spinwave decay alone, which the closed-form Airy linewidth predicts.
"""

import math

import numpy as np

from _common import outdir, parser, pyplot, write_csv
from spinwave import cavity, gem, protocol


def main():
    ap = parser(__doc__, "linewidth")
    args = ap.parse_args()
    out = outdir(args.out)
    period, gamma_s = 12e-6, 1 / 87e-6
    base = gem.GemConfig.from_beta(0.02, period=period, count=40, gamma_s=gamma_s,
                                   n_z=64 if args.quick else 128)
    betas = (0.0002, 0.005, 0.02, 0.04, 0.08)
    kappas = tuple(math.sqrt(b * base.eta0) for b in betas)
    scen = protocol.Scenario("spectrum", base, offsets=tuple(protocol.central_offsets(period)))
    sweep = protocol.linewidth_sweep(scen, kappas)
    lw, err = sweep.column("linewidth"), sweep.column("linewidth_err")
    write_csv(out / "linewidth.csv", ["beta [1]", "linewidth [Hz]", "linewidth_err [Hz]"],
              zip(betas, lw, err))
    floor = cavity.airy_linewidth(cavity.ResonatorParams(beta=0.0, gamma=gamma_s, tau=period))
    print(f"extrapolated floor {protocol.floor_linewidth(sweep) / 1e3:.3f} kHz, "
          f"decay-only Airy linewidth {floor / 1e3:.3f} kHz")

    if args.plot:
        plt = pyplot()
        plt.errorbar(betas, np.asarray(lw) / 1e3, np.asarray(err) / 1e3, fmt="o")
        plt.axhline(floor / 1e3, ls="--")
        plt.xlabel("beta")
        plt.ylabel("linewidth [kHz]")
        plt.savefig(out / "linewidth.png", dpi=120)


if __name__ == "__main__":
    main()
