"""
Simulating a switching oscillator
=================================

A van der Pol oscillator whose damping and stiffness switch between two
regimes. Switching rates depend on the phase state, so switches are drawn by
thinning a constant-rate clock.
"""
import numpy as np

from hamswitch import HybridState, get_system, run_ensemble, simulate_trajectory

spec = get_system("vanderpol-2regime")
s0 = HybridState.of(spec, x=0.0, y=0.0, k=1)

# One path, recorded on the grid and at every proposal.
traj = simulate_trajectory(spec, s0, T=10.0, dt=1e-3, rng=7)
accepted = [e for e in traj.events if not e.phantom]
print(f"{len(traj.events)} proposals, {len(accepted)} accepted switches")
for e in accepted[:5]:
    print(f"  t={e.time:7.3f}  {e.source} -> {e.target}  (accept prob {e.accept_prob:.3f})")

# The same law, two ways: thinning, and dominating-clock jumps with a
# likelihood weight. The weight has mean one.
for mode in ("thinning", "weighted"):
    res = run_ensemble(spec, s0, 1.0, 1e-3, 20_000, mode=mode, rng=1)
    w = res.final.weight
    p2 = np.mean(w * (res.final.k == 2))
    print(f"{mode:>9}: P(k=2 at t=1) ~ {p2:.4f}, mean weight {w.mean():.4f}")
