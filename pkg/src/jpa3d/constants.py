"""Physical constants (CODATA 2018 exact or recommended values), SI units."""

#: Magnetic flux quantum h/2e [Wb]
PHI0 = 2.067833848e-15
#: Reduced Planck constant [J s]
HBAR = 1.054571817e-34
#: Boltzmann constant [J/K]
K_B = 1.380649e-23
#: Elementary charge [C]
E_CHARGE = 1.602176634e-19

TWO_PI = 6.283185307179586
