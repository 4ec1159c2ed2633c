"""Equilibrium echo amplitude versus carrier offset, with an Airy fit and Q/finesse."""

import numpy as np

from _common import outdir, parser, pyplot, write_csv
from spinwave import analysis, cavity, gem, protocol


def main():
    ap = parser(__doc__, "spectrum")
    args = ap.parse_args()
    out = outdir(args.out)
    step = 8e3 if args.quick else 2e3
    offsets = tuple(np.round(np.arange(-400e3, 400e3 + 1, step), 6))
    cfg = gem.GemConfig.from_beta(0.05, period=12e-6, count=15, gamma_s=1 / 87e-6,
                                  n_z=128 if args.quick else 256)
    scan = gem.run_spectrum_scan(cfg, offsets)
    write_csv(out / "spectrum.csv", ["offset [Hz]", "amplitude [arb]"],
              zip(scan.offsets, scan.amplitudes))

    fit = analysis.fit_airy(scan.offsets, scan.amplitudes, domain="amplitude", envelope_on=True)
    figs = analysis.q_and_finesse(fit, cavity.GROUND_SPLITTING)
    print(f"FSR {fit['fsr'] / 1e3:.3f} +/- {fit.err('fsr') / 1e3:.3f} kHz, linewidth "
          f"{fit['linewidth'] / 1e3:.3f} +/- {fit.err('linewidth') / 1e3:.3f} kHz")
    print(f"finesse {figs.finesse:.2f} +/- {figs.finesse_err:.2f}, spinwave Q {figs.q_factor:.3g}, "
          f"equivalent length {cavity.C_LIGHT / fit['fsr'] / 1e3:.3f} km")
    spacing = analysis.peak_spacing_fsr(scan.offsets, scan.amplitudes)
    print(f"peak-spacing FSR {spacing['fsr'] / 1e3:.3f} kHz")

    if args.plot:
        plt = pyplot()
        model = np.sqrt(np.maximum(analysis.model_from_fit(fit)(scan.offsets), 0))
        plt.plot(scan.offsets / 1e3, scan.amplitudes, ".", label="engine")
        plt.plot(scan.offsets / 1e3, model, "-", label="Airy fit")
        plt.xlabel("carrier offset [kHz]")
        plt.ylabel("echo amplitude")
        plt.legend()
        plt.savefig(out / "spectrum.png", dpi=120)


if __name__ == "__main__":
    main()
