"""Timing comparison of the compiled pair kernels and the numpy fallback.

Both backends implement the same four primitives (forces, collect_pairs,
trial_energies, particle_energy) behind one calling convention, so this
script times them head to head on identical WCA fluid configurations at
rho = 0.4 and reports the speedup, then runs a short Langevin MD segment
through the full engine under each backend (the backend is chosen at
import time from the OLV_PURE_PYTHON environment variable, so the
end-to-end pass re-executes itself in a subprocess).

Usage:  python3 benchmarks/bench_kernels.py [--skip-md]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from olv._kernels import pairs_py

try:
    from olv._kernels import _pairs_cy
except ImportError:
    _pairs_cy = None

RC = 2.0 ** (1.0 / 6.0)
SHIFT = 1.0  # WCA energy shift at the cutoff


def fluid_configuration(n, rho, rng):
    """Jittered cubic lattice at density rho, box lengths returned too."""
    edge = (n / rho) ** (1.0 / 3.0)
    per_side = int(np.ceil(n ** (1.0 / 3.0)))
    a = edge / per_side
    sites = np.stack(np.meshgrid(*[np.arange(per_side)] * 3,
                                 indexing="ij"), axis=-1).reshape(-1, 3)
    q = (sites[:n] + 0.5) * a + rng.uniform(-0.1 * a, 0.1 * a, (n, 3))
    box = np.full(3, edge)
    return np.ascontiguousarray(q), box


def best_of(fn, repeats=5, warmup=2):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_backend(impl, q, box):
    per = np.ones(3, dtype=np.uint8)
    out = np.zeros_like(q)
    trials = np.ascontiguousarray(
        np.random.default_rng(3).uniform(0, box[0], (512, 3)))
    return {
        "forces": best_of(lambda: impl.forces(q, box, per, RC, 1.0, 1.0,
                                              SHIFT, out)),
        "collect_pairs": best_of(lambda: impl.collect_pairs(q, box, per, RC)),
        "trial_energies (512)": best_of(
            lambda: impl.trial_energies(q, box, per, RC, 1.0, 1.0, SHIFT,
                                        0.0, trials)),
        "particle_energy": best_of(
            lambda: impl.particle_energy(q, box, per, RC, 1.0, 1.0, SHIFT,
                                         0.0, 0)),
    }


def kernel_table(sizes):
    rng = np.random.default_rng(7)
    for n in sizes:
        q, box = fluid_configuration(n, 0.4, rng)
        py = bench_backend(pairs_py, q, box)
        print(f"\nN = {n} (rho = 0.4, WCA cutoff)")
        header = f"  {'kernel':<22}{'python':>12}{'cython':>12}{'speedup':>10}"
        print(header)
        if _pairs_cy is None:
            for name, tp in py.items():
                print(f"  {name:<22}{1e3 * tp:>10.3f}ms{'-':>12}{'-':>10}")
            continue
        cy = bench_backend(_pairs_cy, q, box)
        for name, tp in py.items():
            tc = cy[name]
            print(f"  {name:<22}{1e3 * tp:>10.3f}ms{1e3 * tc:>10.3f}ms"
                  f"{tp / tc:>9.1f}x")


MD_SNIPPET = """
import time
import numpy as np
from olv._kernels import BACKEND
from olv.engine import (EngineConfig, ThermostatSpec, THERMOSTAT_LANGEVIN,
                        MASK_EVERYWHERE, initial_lattice, run)
from olv.geometry import UniverseSpec
from olv.potentials import PairPotentialSpec, WCA
from olv.rng import stream

universe = UniverseSpec((10.0, 10.0, 10.0), 400, temperature=1.0)
pot = PairPotentialSpec(kind=WCA)
config = EngineConfig(dt=0.004, steps=500,
                      thermostat=ThermostatSpec(THERMOSTAT_LANGEVIN, gamma=1.0),
                      thermostat_mask=MASK_EVERYWHERE, seed=9)
state = initial_lattice(universe, stream(9, "bench"))
run(universe, pot, EngineConfig(dt=0.004, steps=50), state)  # warm caches
t0 = time.perf_counter()
run(universe, pot, config, state)
dt = time.perf_counter() - t0
print(f"  {BACKEND:<10}{config.steps / dt:>10.0f} steps/s"
      f"  ({1e3 * dt / config.steps:.2f} ms/step)")
"""


def md_comparison():
    print("\nEnd-to-end engine, 400 WCA particles, Langevin, 500 steps:",
          flush=True)
    for env_value in ("", "1"):
        env = dict(os.environ)
        if env_value:
            env["OLV_PURE_PYTHON"] = env_value
        else:
            env.pop("OLV_PURE_PYTHON", None)
        subprocess.run([sys.executable, "-c", MD_SNIPPET], env=env,
                       check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--skip-md", action="store_true",
                        help="only time the raw kernels")
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[200, 1000, 4000])
    args = parser.parse_args()
    if _pairs_cy is None:
        print("compiled extension not importable; timing fallback only")
    kernel_table(args.sizes)
    if not args.skip_md:
        md_comparison()


if __name__ == "__main__":
    main()
