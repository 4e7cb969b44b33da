"""Forward-synthesized sample inputs for the fit-gain and modes commands.

Gain sweep: P_pdc = A sinh^2(B sqrt(P)) with B chosen so that G = B sqrt(35 mW)
equals 7.0. Schell data: Gaussian profile of standard deviation a and point-slit
visibility exp(-d^2 / (2 b^2)).
"""

import csv
import math
import pathlib

import numpy as np

HERE = pathlib.Path(__file__).parent


def write(name, header, rows):
    with open(HERE / name, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def gain_sweep():
    A = 2.0e-3
    B = 7.0 / math.sqrt(35.0)
    powers = np.arange(2.5, 35.01, 2.5)
    rows = [(p, A * math.sinh(B * math.sqrt(p)) ** 2) for p in powers]
    write("gain_g7.csv", ["pump_mw", "pdc_power"], rows)

    rng = np.random.default_rng(2021)
    noisy = []
    for p, y in rows:
        noisy.append((p, y * (1.0 + 0.05 * rng.standard_normal()), 0.05 * y))
    write("gain_g7_noisy.csv", ["pump_mw", "pdc_power", "pdc_power_err"], noisy)


def schell(axis, a, b, seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(-4.0 * a, 4.0 * a, 61)
    intensity = np.exp(-x**2 / (2.0 * a * a)) * (1.0 + 0.01 * rng.standard_normal(x.size))
    write(f"profile_{axis}.csv", ["x_mm", "intensity"], zip(x, intensity))
    d = np.arange(0.2, 6.01, 0.4)
    v = np.exp(-d**2 / (2.0 * b * b)) * (1.0 + 0.01 * rng.standard_normal(d.size))
    write(f"visibility_{axis}.csv", ["spacing_mm", "visibility"], zip(d, np.clip(v, 0.0, 1.0)))


if __name__ == "__main__":
    gain_sweep()
    schell("x", 1.0, 0.8, 1)
    schell("y", 1.2, 2.4, 2)
