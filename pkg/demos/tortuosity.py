"""Crossing lengths of the disagreement set.

First the exponent estimator is calibrated on synthetic comb paths whose
length grows like l^1 and l^1.25. Then one plus/minus pair is drawn on a
box and its disagreement set is drawn, followed by crossing statistics of
the annuli between radius l and 2l.

    python demos/tortuosity.py
"""
import tempfile

from rfimlab import CouplingParams, RandomSource, box
from rfimlab.analysis import calibrate_tortuosity
from rfimlab.disagreement import DisagreementGeometry, annulus_crossing
from rfimlab.harness import merge_config, run_tortuosity
from rfimlab.lattice import boundary_indices
from rfimlab.sampler import gaussian_field, sample_pair

for target in (1.0, 1.25):
    est, _ = calibrate_tortuosity(target)
    print(f"synthetic exponent {target:.2f} -> estimated {est:.3f}")

# a single pair on box(12), drawn as text: '#' marks disagreeing vertices
params = CouplingParams(beta=0.5, J=1.0, h=0.0, eps=1.0)
src = RandomSource(3)
r = box((0, 0), 12)
pair = sample_pair(r, params, gaussian_field(r, src.child("field")), boundary_indices(r), "cftp", src.child("pair"))
geom = DisagreementGeometry.from_pair(pair)
print()
for y in range(12, -13, -1):
    line = ""
    for x in range(-12, 13):
        v = (x, y)
        line += ("#" if geom.mask[r.index(v)] else ".") if v in r else " "
    print(line)
rep = annulus_crossing(geom, (0, 0), 4, 8)
print(f"\nannulus 4..8: crossed={rep.crossed} shortest={rep.shortest_length} extended steps")

with tempfile.TemporaryDirectory() as out:
    cfg = merge_config("tortuosity", None, {
        "l_list": [2, 4, 8], "replicas": 100, "beta": 0.5, "eps": 1.0, "seed": 5, "out": out,
    })
    res = run_tortuosity(cfg)
print(f"\n{'l':>3}{'P(cross)':>10}{'q0.1':>8}{'q0.5':>8}{'lasso':>8}")
for row in res.rows:
    print(f"{row['scale']:>3}{row['crossing_probability']:>10.2f}{row['q0.1']:>8.1f}{row['q0.5']:>8.1f}"
          f"{row['lasso_frequency']:>8.3f}")
print("fitted exponent:", res.summary["exponent"])
