"""Single-pass transmission of a short probe across the broadened line."""

import math

import numpy as np

from _common import outdir, parser, pyplot, write_csv
from spinwave import gem, protocol


def main():
    ap = parser(__doc__, "absorption")
    args = ap.parse_args()
    out = outdir(args.out)
    beta = 0.5
    cfg = gem.GemConfig.from_beta(beta, period=12e-6, n_z=256)
    offsets = tuple(np.linspace(-1.5e6, 1.5e6, 31 if args.quick else 121))
    res = protocol.run_scenario(protocol.Scenario("absorption", cfg, offsets=offsets))
    write_csv(out / "absorption.csv", ["offset [Hz]", "transmission [1]"],
              zip(offsets, res.absorption))
    print(f"min transmission {res.summary['min_transmission']:.4f} "
          f"(exp(-2 pi beta) = {math.exp(-2 * math.pi * beta):.4f}); "
          f"dip width {res.summary['dip_width'] / 1e6:.3f} MHz")

    if args.plot:
        plt = pyplot()
        plt.plot(np.asarray(offsets) / 1e6, res.absorption)
        plt.xlabel("probe offset [MHz]")
        plt.ylabel("transmission")
        plt.savefig(out / "absorption.png", dpi=120)


if __name__ == "__main__":
    main()
