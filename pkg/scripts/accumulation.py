"""
Echo build-up under a train of resonant input pulses, compared with the
closed-form recursion using resonator parameters measured from the engine.
Also sweeps the coupling depth to show the equilibrium echo growing with it.
"""

import numpy as np

from _common import outdir, parser, pyplot, write_csv
from spinwave import cavity, gem, protocol


def main():
    ap = parser(__doc__, "accumulation")
    args = ap.parse_args()
    out = outdir(args.out)
    n_z = 128 if args.quick else 256

    cfg = gem.GemConfig.from_beta(0.0568, period=12e-6, count=15, gamma_s=1 / 87e-6, n_z=n_z)
    series = gem.run_accumulation(cfg)
    sim = protocol.normalize(series, "first_echo")
    p = protocol.measure_resonator(cfg)
    model = np.abs(cavity.recursion_sequence(p, sim.size)) ** 2
    model /= model[0]
    rows = list(zip(range(1, sim.size + 1), series.echo_times(), sim, model))
    write_csv(out / "buildup.csv",
              ["echo [1]", "time [s]", "engine energy [first echo]", "recursion [first echo]"],
              rows)
    eq, flag = protocol.equilibrium(series)
    print(f"equilibrium / first echo: {eq / series.echo_energies()[0]:.3f}"
          f"  (spread flag {flag})")
    print(f"measured T_cycle {p.transmission:.4f}, gamma*tau {p.gamma * p.tau:.4f}, "
          f"phi {p.phi:+.4f} rad")

    betas = (0.01, 0.02, 0.04, 0.0568, 0.08) if not args.quick else (0.02, 0.0568)
    scen = protocol.Scenario("accumulate", cfg, sweep=protocol.SweepAxis("beta", betas),
                             normalization="input_energy")
    sweep = protocol.run_scenario(scen).sweep
    eq = sweep.column("equilibrium_echo") / series.input_energy
    write_csv(out / "depth_sweep.csv", ["beta [1]", "equilibrium echo [input energy]"],
              zip(betas, eq))

    if args.plot:
        plt = pyplot()
        fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
        a.plot(range(1, sim.size + 1), sim, "o", label="engine")
        a.plot(range(1, sim.size + 1), model, "-", label="recursion")
        a.set(xlabel="echo number", ylabel="echo energy / first echo")
        a.legend()
        b.plot(betas, eq, "o-")
        b.set(xlabel="beta", ylabel="equilibrium echo / input")
        fig.tight_layout()
        fig.savefig(out / "accumulation.png", dpi=120)


if __name__ == "__main__":
    main()
