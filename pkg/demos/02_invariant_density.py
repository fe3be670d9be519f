"""
Long-run occupation against an explicit invariant law
=====================================================

With the regime frozen at 2, the overdamped system is a one-dimensional
diffusion whose invariant density is explicit. The occupation histogram of a
long simulation should approach it.
"""
import numpy as np

from hamswitch import Binning, HybridState, OccupationMeasure, get_system, tv_distance
from hamswitch.ergodicity import long_run_occupation
from hamswitch.systems import speed_cdf_regime2

spec = get_system("overdamped-langevin").frozen(2)
binning = Binning.uniform(-4, 4, 0.1, 1, regimes=(2,))
reference = OccupationMeasure.from_cdf(binning, speed_cdf_regime2)

# total time grows with the number of pooled replicas of length 100
for replicas in (1, 10, 50):
    mu = long_run_occupation(spec, HybridState.of(spec, 0.0, k=2), 100.0, binning, dt=1e-3,
                             burn_in_fraction=0.1, n_replicas=replicas, rng=3)
    print(f"T = {100 * replicas:>5}: TV to the invariant law = {tv_distance(mu, reference):.4f}")

centers = binning.centers()[0][:, 0]
peak = np.argmax(mu.masses)
print(f"mode near x = {centers[peak]:.2f}, mass there {mu.masses[peak]:.4f} "
      f"vs {reference.masses[peak]:.4f}")
