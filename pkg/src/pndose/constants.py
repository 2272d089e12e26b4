"""Physical constants and the 12-element base material set.

Internal unit system is (cm, MeV, g). Momenta are carried in MeV/c and
converted to inverse centimeters through hbar*c where a wave number is
needed. Constants are CODATA 2018 values.
"""

from dataclasses import dataclass

# CODATA 2018
PROTON_REST_MEV = 938.272      # proton rest energy [MeV]
ELECTRON_REST_MEV = 0.51099895  # electron rest energy [MeV]
FINE_STRUCTURE = 7.2973525693e-3
HBARC_MEV_CM = 1.9732698045930252e-11  # hbar*c [MeV cm]
AVOGADRO = 6.02214076e23       # [1/mol]
SPEED_OF_LIGHT_M_S = 2.99792458e8

# SI values used only by the straggling coefficient, which is specified
# term-by-term in SI and converted to MeV^2/cm on return.
ELEMENTARY_CHARGE_C = 1.602176634e-19
VACUUM_PERMITTIVITY_F_M = 8.8541878128e-12
ELECTRON_MASS_KG = 9.1093837015e-31
MEV_IN_JOULE = 1.602176634e-13


@dataclass(frozen=True)
class Element:
    """One of the 12 base elements tissue is mixed from.

    I values are ICRU-37 style mean ionization energies in eV; atomic
    masses in g/mol.
    """

    symbol: str
    z: int
    a: int
    i_ev: float
    atomic_mass: float


# The fixed 12-element set used for all tissue mixtures, in canonical order.
ELEMENTS = (
    Element("H", 1, 1, 19.2, 1.008),
    Element("C", 6, 12, 78.0, 12.011),
    Element("N", 7, 14, 82.0, 14.007),
    Element("O", 8, 16, 95.0, 15.999),
    Element("Na", 11, 23, 149.0, 22.990),
    Element("Mg", 12, 24, 156.0, 24.305),
    Element("P", 15, 31, 173.0, 30.974),
    Element("S", 16, 32, 180.0, 32.06),
    Element("Cl", 17, 35, 174.0, 35.45),
    Element("Ar", 18, 40, 188.0, 39.948),
    Element("K", 19, 39, 190.0, 39.098),
    Element("Ca", 20, 40, 191.0, 40.078),
)

ELEMENT_SYMBOLS = tuple(e.symbol for e in ELEMENTS)
ELEMENT_INDEX = {e.symbol: i for i, e in enumerate(ELEMENTS)}
N_ELEMENTS = len(ELEMENTS)
