"""
Drift checks for the two-regime Langevin system
===============================================

A Hamiltonian-type candidate H is checked against AH <= -alpha H + beta on a
box, and the sufficient conditions behind it are probed on growing spheres.
"""
from hamswitch import DriftGrid, check_theorem_conditions, get_system, verify_drift
from hamswitch.lyapunov import ErgodicityConditionSpec, hamiltonian_candidate, power_profile

spec = get_system("langevin-2regime")
U = power_profile(2)

cand = hamiltonian_candidate(spec, U, {1: 2.0, 2: 1.0}, float, c_ellipticity=1.0)
grid = DriftGrid((-10.0, -10.0), (10.0, 10.0), 81, (1, 2))
rep = verify_drift(spec, cand, grid)
print(f"drift: pass={rep.passed}, alpha*={rep.alpha:.4f}, beta*={rep.beta:.3f}")


def conditions(u):
    return ErgodicityConditionSpec(U=U, V_profile=power_profile(4), u=u, v={1: 1.0, 2: 1.2},
                                   kappa=1.0, R=2.0, gamma=0.0, beta1=1.0, beta2=3.0,
                                   phi=float, C1=3.0, C2=1.0, c_ellipticity=1.0, alpha=0.1)


# With u = (2, 1) the quantity |u_k U' - c_k x| grows like |x|, so gamma = 0
# is not attainable; u = (1, 1/2) cancels it exactly.
for u in ({1: 2.0, 2: 1.0}, {1: 1.0, 2: 0.5}):
    results = check_theorem_conditions(spec, conditions(u), [2, 5, 10, 20, 50, 100])
    print(f"u = {u}:")
    for r in results:
        print(f"  {r.name:<20} {r.status:<13} {r.note}")
