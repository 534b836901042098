"""A short walk through the three geometries.

Points near the boundary of the ball are far apart even when their
Euclidean gap is small, and the Lorentz model agrees with the ball on every
distance once points are converted.
"""

import numpy as np

from hypgnn.manifolds import get_manifold, lorentz_to_poincare, poincare_to_lorentz

ball = get_manifold("poincare", 2)
flat = get_manifold("euclidean", 2, unit_ball=False)
hyperboloid = get_manifold("lorentz", 2)

# two pairs with the same Euclidean gap, one near the origin, one near the rim
near = np.array([[0.0, 0.0], [0.1, 0.0]])
rim = np.array([[0.85, 0.0], [0.95, 0.0]])
for name, pair in (("near origin", near), ("near rim", rim)):
    d_ball = ball.distance(pair[0], pair[1]).item()
    d_flat = flat.distance(pair[0], pair[1]).item()
    print(f"{name:<12} euclidean {d_flat:.3f}  poincare {d_ball:.3f}")

# exp and log undo each other
x = np.array([0.3, -0.2])
v = np.array([0.5, 0.4])
y = ball.expmap(x, v)
print("log(exp(v)) - v:", np.abs(ball.logmap(x, y).data - v).max())

# the same two points in the Lorentz model
a, b = poincare_to_lorentz(rim[0]), poincare_to_lorentz(rim[1])
print("lorentz constraint residual:", hyperboloid.residual(np.stack([a.data, b.data])).max())
print("lorentz distance:", round(hyperboloid.distance(a, b).item(), 6),
      " back to the ball:", np.round(lorentz_to_poincare(a).data, 6))
