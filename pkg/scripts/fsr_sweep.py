"""FSR versus pulse period; the FSR should track 1/period with unit slope."""

import numpy as np

from _common import outdir, parser, pyplot, write_csv
from spinwave import gem, protocol


def main():
    ap = parser(__doc__, "fsr_sweep")
    args = ap.parse_args()
    out = outdir(args.out)
    periods = (8e-6, 10e-6, 12e-6, 14e-6, 16e-6)
    step = 6e3 if args.quick else 3e3
    base = gem.GemConfig.from_beta(0.05, period=12e-6, count=15, gamma_s=1 / 87e-6,
                                   n_z=128 if args.quick else 256)
    offsets = tuple(np.round(np.arange(-300e3, 300e3 + 1, step), 6))
    sweep = protocol.fsr_sweep(protocol.Scenario("spectrum", base, offsets=offsets), periods)
    fsr, err = sweep.column("fsr"), sweep.column("fsr_err")
    write_csv(out / "fsr_sweep.csv", ["period [s]", "fsr [Hz]", "fsr_err [Hz]", "1/period [Hz]"],
              zip(periods, fsr, err, 1 / np.asarray(periods)))
    slope = np.polyfit(1 / np.asarray(periods), fsr, 1)[0]
    print(f"slope of FSR vs 1/period: {slope:.4f}")

    if args.plot:
        plt = pyplot()
        inv = 1 / np.asarray(periods)
        plt.errorbar(inv / 1e3, fsr / 1e3, err / 1e3, fmt="o")
        plt.plot(inv / 1e3, inv / 1e3, "--")
        plt.xlabel("1/period [kHz]")
        plt.ylabel("FSR [kHz]")
        plt.savefig(out / "fsr_sweep.png", dpi=120)


if __name__ == "__main__":
    main()
