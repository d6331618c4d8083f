"""Solve a small unbalanced-transport instance and sanity-check it three
ways: against the tau=0 closed form, against the brute-force oracle, and
against finite differences of the loss in the density.

Run:  python demos/02_solver_and_oracle.py
"""

import numpy as np

from groundot import UotParams, brute_force_solve, solve_uot, uot_objective

rng = np.random.default_rng(1)
n, m = 12, 3
C = rng.uniform(1.0, 5.0, size=(n, m))
a = rng.uniform(0.0, 1.0, size=n)
b = np.ones(m)

params = UotParams(epsilon=0.05, tau=1.0)
res = solve_uot(a, b, C, params)
print(f"scaling solve: loss {res.loss:.8f} in {res.iterations} sweeps "
      f"(converged={res.converged})")
print("row marginal sum", round(res.row_marginal.sum(), 6),
      "| col marginal", np.round(res.col_marginal, 4))

oracle = brute_force_solve(a, b, C, params)
gap = abs(res.loss - oracle.loss) / abs(oracle.loss)
print(f"brute-force oracle: loss {oracle.loss:.8f} (relative gap {gap:.2e})")

# With tau = 0 the marginal penalties vanish and the optimum is explicit.
free = solve_uot(a, b, C, UotParams(epsilon=0.05, tau=0.0))
K = np.exp(-C / 0.05)
print(f"tau=0 closed form: max |P - exp(-C/eps)| = {np.max(np.abs(free.plan.values - K)):.2e}")

# The loss gradient in the density is 2*tau*(a - P1); check one coordinate.
h = 1e-5
i = 4
ap, am = a.copy(), a.copy()
ap[i] += h
am[i] -= h
fd = (solve_uot(ap, b, C, params).loss - solve_uot(am, b, C, params).loss) / (2 * h)
print(f"gradient check at cell {i}: analytic {res.grad_density[i]:+.6f}, "
      f"central difference {fd:+.6f}")

# The reported loss is the primal objective at the returned plan.
print("objective at plan:", round(uot_objective(res.plan, a, b, C, params), 10),
      "== reported loss:", round(res.loss, 10))
