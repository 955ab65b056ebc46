"""Exact identities on small regions.

Runs every randomized identity check at a modest size, then compares the
log partition ratio across nested boxes with its tilt-integral form for one
Gaussian field.

    python demos/exact_identities.py
"""
import numpy as np

from rfimlab import CouplingParams, FieldRealization, RandomSource, box
from rfimlab.analysis import QuadratureSpec, surface_tension_integral
from rfimlab.checks import run_all
from rfimlab.exact import surface_tension_exact

src = RandomSource(7)

print(f"{'identity':<36}{'instances':>10}{'max abs err':>14}  pass")
for rep in run_all(src.child("checks"), instance_count=40, quick=True):
    print(f"{rep.identity:<36}{rep.instances:>10}{rep.max_abs_error:>14.2e}  {rep.passed}")

# one surface tension, two ways
inner, outer = box((0, 0), 0), box((0, 0), 2)
params = CouplingParams(beta=1.0, J=1.0, h=0.0, eps=2.0)
eta = src.child("field").generator().standard_normal(outer.n_vertices)
field = FieldRealization(outer, eta)

exact = surface_tension_exact(inner, outer, params, field)
res = surface_tension_integral(inner, outer, params, field, QuadratureSpec(None, 801, "simpson"))
print()
print(f"T exact     {exact:.15f}")
print(f"T integral  {res.value:.15f}  window [{res.t_lo:.2f}, {res.t_hi:.2f}]")
print(f"difference  {abs(exact - res.value):.2e}  (bound {res.error_bound:.2e})")
