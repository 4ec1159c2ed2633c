"""
Stored spinwave excitation during accumulation, relative to a single
absorption and to perfect absorption of one pulse.
"""

import numpy as np

from _common import outdir, parser, pyplot, write_csv
from spinwave import cavity, gem


def main():
    ap = parser(__doc__, "coherence")
    ap.add_argument("--transmission", type=float, default=0.7, help="single-pass T")
    args = ap.parse_args()
    out = outdir(args.out)
    beta = cavity.beta_from_transmission(args.transmission)
    cfg = gem.GemConfig.from_beta(beta, period=12e-6, count=20, gamma_s=1 / 87e-6,
                                  n_z=128 if args.quick else 256)
    series = gem.run_accumulation(cfg)
    stored = series.stored_excitation()
    t_end = np.asarray(series.t)[list(series.bounds[1:])]
    write_csv(out / "stored.csv", ["time [s]", "stored excitation [input energy]"],
              zip(t_end, stored / series.input_energy))
    print(f"beta {beta:.4f}: equilibrium/single {stored[-2] / stored[0]:.3f}, "
          f"equilibrium/perfect absorption {stored[-2] / series.input_energy:.3f}")

    if args.plot:
        plt = pyplot()
        plt.plot(t_end * 1e6, stored / series.input_energy, ".-")
        plt.axhline(1.0, ls="--", label="perfect absorption")
        plt.xlabel("time [us]")
        plt.ylabel("stored excitation / pulse energy")
        plt.legend()
        plt.savefig(out / "coherence.png", dpi=120)


if __name__ == "__main__":
    main()
