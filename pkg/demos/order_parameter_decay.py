"""Decay of the order parameter m(L) with the box size.

For each replica a Gaussian field is drawn once on the largest box and the
plus/minus pair is sampled exactly by coupling from the past on every
smaller box. m(L) is the frequency with which the center is joined to the
boundary inside the disagreement set; an exponential C exp(-c L) is fitted
to the estimates.

    python demos/order_parameter_decay.py [replicas]
"""
import sys
import tempfile

from rfimlab.harness import merge_config, run_mL

replicas = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

with tempfile.TemporaryDirectory() as out:
    cfg = merge_config("mL", None, {
        "L_list": [1, 2, 4, 6, 8], "replicas": replicas, "beta": 1.0, "J": 1.0, "eps": 4.0,
        "seed": 11, "out": out,
    })
    res = run_mL(cfg)

print(f"{'L':>3}{'m_hat':>10}{'stderr':>10}")
for row in res.rows:
    print(f"{row['L']:>3}{row['m_hat']:>10.4f}{row['stderr']:>10.4f}")

fit = res.summary.get("fit")
if fit:
    print(f"\nm(L) ~ {fit['C']:.3f} exp(-{fit['c']:.3f} L), r2 = {fit['r2']:.3f}")
for w in res.warnings:
    print("warning:", w)
