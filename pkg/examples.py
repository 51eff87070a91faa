import logging
import math

import numpy as np

from meanfieldpy import GridField, ProblemSpec, TranslationGroup, constants_table, minimize, thm3_certificate
from meanfieldpy.core.blowup import r_epsilon
from meanfieldpy.core.certificates import test_energy_numeric, thm2_margin_curve


def show_constants():
    for name, value in constants_table().items():
        print(f"{name:>18s} = {value: .7f}")


def show_certificate(h, group, title):
    report = thm3_certificate(h, group)
    print(f"\n{title}")
    print(f"  lower bound of J      {report.lower_bound_value: .6f}")
    print(f"  log int h > rhs       {report.cond_lhs: .6f} > {report.cond_rhs: .6f}: {report.cond_holds}")
    print(f"  second condition      {report.hy2_value: .6f} > 0: {report.hy2_holds}")


def show_solve(h, group, eps):
    spec = ProblemSpec(group, h, epsilon=eps, perturbation=0.5, seed=1)
    state = minimize(spec)
    print(f"\nminimizer at eps={eps} (rho={spec.rho:.4f}, {state.iterations} iterations)")
    print(f"  J={state.J:.3e}  residual={state.el_residual:.2e}  c_eps={state.c_eps:.3e}  "
          f"r_eps={r_epsilon(state, spec):.4f}")


logging.basicConfig(level=logging.WARNING)

# Half-shift group on the unit square
group = TranslationGroup.cyclic(2)

print("Series constants of the half-shift example")
show_constants()

# Constant weight: both existence conditions hold
h = GridField.constant(1.0, 64, 64)
show_certificate(h, group, "h = 1")

# Small perturbation h = 1 + 0.1 cos(4 pi x1), invariant under the half shift
phi = GridField.from_function(lambda x, y: np.cos(4.0 * math.pi * x), 64, 64)
show_certificate(1.0 + 0.1 * phi, group, "h = 1 + 0.1 cos(4 pi x1)")

print("\nmargin of the first condition along h = 1 + eps phi")
for row in thm2_margin_curve(1.0, phi, [0.0, 0.05, 0.1, 0.2], group):
    print(f"  eps={row['eps']:.2f}  margin={row['margin']: .6f}")

# Subcritical minimizer on a coarse grid
show_solve(GridField.constant(1.0, 32, 32), group, 0.3)

# Glued bubble energies approaching the critical level from below
print("\ntest function energies against C*")
for row in test_energy_numeric([0.08, 0.04], GridField.constant(1.0, 64, 64), group, grid=(256, 256)):
    print(f"  eps={row.eps:.2f}  R={row.R:.3f}  J-C*={row.gap_numeric: .4f}  "
          f"corrected={row.gap_corrected: .4f}  asymptotic={row.gap_asymptotic: .4f}")
