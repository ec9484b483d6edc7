"""How hypotheses are ordered and tested.

Strong corner candidates are grouped into triples.  Each triple is looked up
in a hash table of model corner triples, and each hit proposes a class and a
pose.  A hypothesis's score tp is its hash weight plus the three candidates'
Φ values.  Hypotheses are tested best-first: the data log-likelihood L is
computed one at a time until some L clears the acceptance threshold.
"""

from tprecog.config import Config
from tprecog.evaluation import pose_error, single_object_scene, train_from_scans
from tprecog.hashing import build_index
from tprecog.models import notched_cube, notched_half
from tprecog.search import recognize, select_candidates, symmetry_table

cfg = Config()
cube, half = notched_cube(1), notched_half(2)
models = [cube, half]

train = [single_object_scene(m, cfg.synth_params(s), s) for s in range(200, 208) for m in models]
dm = train_from_scans(train, cfg, m=2, seed=0)
index = build_index(models, cfg.q_d, cfg.gamma_init)
print(f"hash index: {len(index)} entries under {len(index.table)} keys")

scan = single_object_scene(cube, cfg.synth_params(3), 3)
cands = select_candidates(scan, dm, cfg.xi, seed=3)
print(f"scan: {len(scan.points)} points, {len(cands)} candidates with phi > {cfg.xi:g}")

lp = cfg.likelihood_params().with_normalizations(models, scan.gaze)
syms = symmetry_table(models)
res = recognize(scan, models, dm, index, lp, cfg.search_config(), seed=3, candidates=cands, symmetries=syms)

print("\nfirst evaluations (tp descending):")
for k, (tp, L, c) in enumerate(res.log[:10]):
    print(f"  #{k:<3d} class {c}  tp={tp:8.1f}  L={L:10.1f}")
print(f"... {res.evaluations} evaluations in total, outcome: {res.outcome}")
if res.found:
    rot, trans = pose_error(res.pose, scan.placements[0].pose, syms[res.c])
    print(f"accepted class {res.c}: pose error {rot:.2f} deg, {trans:.2f} mm")
