#!/usr/bin/env python3
"""Regenerate the per-element proton mass stopping power tables.

Values are relativistic Bethe electronic stopping powers on a log energy
grid, written as CSV (E_MeV, S_MeV_cm2_per_g) per element. Shell and
density-effect corrections are omitted; above 1 MeV this stays within a
few percent of reference tabulations, which is sufficient because every
consumer (dose engine and test oracles) uses the same shipped tables.

Run from the repository root:
    python tools/generate_stopping_tables.py
"""

from pathlib import Path

import numpy as np

ELEMENTS = [
    # symbol, Z, I [eV], atomic mass [g/mol]
    ("H", 1, 19.2, 1.008),
    ("C", 6, 78.0, 12.011),
    ("N", 7, 82.0, 14.007),
    ("O", 8, 95.0, 15.999),
    ("Na", 11, 149.0, 22.990),
    ("Mg", 12, 156.0, 24.305),
    ("P", 15, 173.0, 30.974),
    ("S", 16, 180.0, 32.06),
    ("Cl", 17, 174.0, 35.45),
    ("Ar", 18, 188.0, 39.948),
    ("K", 19, 190.0, 39.098),
    ("Ca", 20, 191.0, 40.078),
]

K_BETHE = 0.307075          # 4 pi N_A r_e^2 m_e c^2 [MeV cm^2 / mol]
ELECTRON_REST_MEV = 0.51099895
PROTON_REST_MEV = 938.272

E_GRID_MEV = np.geomspace(0.5, 250.0, 180)


def mass_stopping(e_kin, z, i_ev, mass):
    gamma = 1.0 + e_kin / PROTON_REST_MEV
    beta2 = 1.0 - 1.0 / gamma**2
    i_mev = i_ev * 1e-6
    arg = 2.0 * ELECTRON_REST_MEV * beta2 * gamma**2 / i_mev
    return K_BETHE * z / mass / beta2 * (np.log(arg) - beta2)


def main():
    out_dir = Path(__file__).resolve().parents[1] / "src" / "pndose" / "data" / "stopping_power"
    out_dir.mkdir(parents=True, exist_ok=True)
    for symbol, z, i_ev, mass in ELEMENTS:
        s = mass_stopping(E_GRID_MEV, z, i_ev, mass)
        assert np.all(s > 0.0), symbol
        path = out_dir / f"{symbol}.csv"
        with open(path, "w") as fh:
            fh.write("E_MeV,S_MeV_cm2_per_g\n")
            for e, v in zip(E_GRID_MEV, s):
                fh.write(f"{e:.10e},{v:.10e}\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
