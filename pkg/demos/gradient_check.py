"""Adjoint gradients against a finite-difference oracle.

The adjoint solve is an optimize-then-discretize method: it differentiates
the continuous loss, so it only matches the gradient of the discretized loss
up to the integration error.  With RK4 that error should fall about 16x each
time the substep count doubles.  The oracle differentiates the discretized
loss directly with a five-point stencil.

Run:  python3 demos/gradient_check.py
"""

from naed.dictionary import fourier, polynomial
from naed.gradients import gradcheck, random_problem

problems = [
    ("Poly(2,1)", polynomial(2, 1), 1, 2, 0),
    ("Poly(2,2)", polynomial(2, 2), 1, 2, 1),
    ("Fourier(2,1)", fourier(2, 1), 2, 3, 2),
]
for name, spec, n, C, seed in problems:
    params, batch = random_problem(spec, n, C, seed)
    for scheme in ("rk4", "trapezoid"):
        res = gradcheck(params, spec, batch, substeps=(4, 8, 16), scheme=scheme)
        errs = "  ".join(f"s={s}: {e:.2e}" for s, e in zip(res.substeps, res.max_errors))
        ratios = "  ".join(f"{r:.1f}" for r in res.ratios)
        print(f"{name:13s} {scheme:9s} {errs}   ratios {ratios}")

# The trapezoid scheme interpolates stage states linearly and is second
# order, so its ratios sit near 4; the default scheme keeps fourth order.
