"""Which scan points look like corners?

We render a notched cube, learn what tetrahedra around true corners look like
compared with tetrahedra elsewhere, and then rank every scan point by that
learned log-ratio (Φ).  The quadric curvature score (C) ranks the same points
for comparison.  A rank of 1 means "the most corner-like point in the scan".
"""
import numpy as np

from tprecog.config import Config, with_overrides
from tprecog.curvature import c_all
from tprecog.evaluation import single_object_scene, train_from_scans, true_feature_ranks
from tprecog.models import notched_cube
from tprecog.relation import phi_all

cfg = with_overrides(Config(), noise_sigma=1.0, outlier_fraction=0.2)
cube = notched_cube(1)

# Training views are labeled for free: the synthesizer knows where the corners are.
train = [single_object_scene(cube, cfg.synth_params(s), s) for s in range(100, 106)]
dm = train_from_scans(train, cfg, m=2, seed=0)
print("training samples per class:", [g.count for g in dm.grids])

# A fresh view, never seen in training.
scan = single_object_scene(cube, cfg.synth_params(7), 7)
print(f"test scan: {len(scan.points)} points, {len(scan.visible_features())} visible corners")

phi = phi_all(scan, dm, seed=7)
curv = c_all(scan, cfg.curvature_radius)
phi_ranks = true_feature_ranks(phi, scan, cfg.feature_radius)
c_ranks = true_feature_ranks(curv, scan, cfg.feature_radius)

print("\nnormalized rank of each true corner (1 = best)")
print("  phi:", np.round(np.sort(phi_ranks), 3))
print("  C:  ", np.round(np.sort(c_ranks), 3))
print(f"\nmedian rank  phi={np.median(phi_ranks):.3f}  C={np.median(c_ranks):.3f}")
