"""
What the combinatorial losses do to an embedding
================================================

Plain gradient descent on raw embeddings of four classes (two of them
"novel") under each loss, tracking how similar the base and novel
classes end up.
"""

import numpy as np

from smile import ClassPartition, LossConfig, l_comb
from smile.harness.metrics import cluster_stats

rng = np.random.default_rng(3)
labels = np.repeat(np.arange(4), 5)
centers = rng.standard_normal((4, 8))
z0 = centers[labels] + 0.8 * rng.standard_normal((20, 8))
part = ClassPartition.from_labels(labels, novel_ids=[2, 3])


def base_novel(z):
    return cluster_stats(z, labels, [0, 1], [2, 3]).base_novel_mean


print(f"start: base-novel cosine {base_novel(z0):+.3f}")
for name, cfg in [("intra only", LossConfig("flmi", eta=0.0)),
                  ("inter only", LossConfig("flmi", eta=1.0)),
                  ("flmi eta=.5", LossConfig("flmi", eta=0.5)),
                  ("gcmi eta=.5", LossConfig("gcmi", eta=0.5))]:
    z = z0.copy()
    for step in range(200):
        res = l_comb(z, part, cfg)
        z -= 0.5 * res.grad
    intra = np.mean(list(cluster_stats(z, labels).intra.values()))
    print(f"{name:12s} loss {res.value:+.3f}  base-novel cosine {base_novel(z):+.3f}  "
          f"mean within-class {intra:.3f}")
