"""
AC power flow on the IEEE 14-bus system
=======================================

Load a bundled case, solve it, then open lines and watch what changes.
"""
import numpy as np

from gridswitch import check_connectivity, load_case, solve_newton_raphson

case = load_case("case14")
print(f"{case.n_bus} buses, {case.n_branch} branches, {case.n_gen} generators")

# all lines in service, warm start from the file voltages
base = solve_newton_raphson(case)
print(f"converged in {base.iterations} iterations, mismatch {base.max_mismatch:.1e} pu")
print("voltage magnitudes:", np.round(base.v_mag, 4))
print(f"total losses {base.total_loss:.3f} MW")

# power balance: what the generators put in is load plus losses
imbalance = base.p_gen.sum() - case.arrays.p_load.sum() - base.total_loss
print(f"generation - load - losses = {imbalance:.2e} MW")

# open one line at a time and compare losses against the base topology
for k in (0, 6, 9):
    status = np.ones(case.n_branch, dtype=int)
    status[k] = 0
    sol = solve_newton_raphson(case, status)
    print(f"line {k} open: losses {sol.total_loss:.3f} MW, lowest voltage {sol.v_mag.min():.4f} pu")

# branch 13 is the only link to the synchronous condenser at bus 8
status = np.ones(case.n_branch, dtype=int)
status[13] = 0
print("line 13 open keeps the grid connected?", check_connectivity(case, status).connected)
