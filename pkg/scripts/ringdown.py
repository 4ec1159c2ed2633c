"""Fill the memory, stop the input, and fit the exponential decay of the echoes."""

import numpy as np

from _common import outdir, parser, pyplot, write_csv
from spinwave import gem, protocol


def main():
    ap = parser(__doc__, "ringdown")
    ap.add_argument("--lifetime", type=float, default=87e-6, help="target lifetime [s]")
    args = ap.parse_args()
    out = outdir(args.out)

    period, beta = 12e-6, 0.005
    g = protocol.gamma_for_lifetime(beta, period / 2, args.lifetime)
    cfg = gem.GemConfig.from_beta(beta, period=period, gamma_s=g, n_z=128 if args.quick else 256)
    res = protocol.run_scenario(protocol.Scenario("ringdown", cfg, n_fill=15, n_decay=15))
    ser, fit = res.series[0], res.fits["ringdown"]
    write_csv(out / "ringdown.csv", ["time [s]", "echo energy [arb]"],
              zip(ser.echo_times(), ser.echo_energies()))
    print(f"gamma_s {g:.1f} 1/s; fitted lifetime {fit['lifetime'] * 1e6:.2f} "
          f"+/- {fit.err('lifetime') * 1e6:.2f} us (target {args.lifetime * 1e6:.1f} us)")

    if args.plot:
        plt = pyplot()
        t, e = ser.echo_times(), ser.echo_energies()
        plt.semilogy(t * 1e6, e, "o")
        tail = t[15:]  # decay-only echoes
        plt.semilogy(tail * 1e6, fit["amplitude"] * np.exp(-tail / fit["lifetime"]), "-")
        plt.xlabel("time [us]")
        plt.ylabel("echo energy")
        plt.savefig(out / "ringdown.png", dpi=120)


if __name__ == "__main__":
    main()
