"""Build a feature graph from correlated data and read it back.

Three blocks of 4 features each share a latent driver, so the
correlation structure is block-diagonal. The walk statistics should
pick fellow block members as every feature's nearest neighbors.
"""

import numpy as np

from walkconv import (
    correlation_from_data,
    expected_visits,
    select_neighbors,
    similarity_from_correlation,
    transition_from_similarity,
)

rng = np.random.default_rng(0)

# 500 observations of 12 features in 3 hidden blocks
z = rng.standard_normal((500, 3))
x = np.repeat(z, 4, axis=1) + 0.4 * rng.standard_normal((500, 12))

corr = correlation_from_data(x)
print("correlation of feature 0 with its block:",
      np.round(corr.corr[0, :4], 2))
print("...and with the next block:          ", np.round(corr.corr[0, 4:8], 2))

graph = similarity_from_correlation(corr)
transition = transition_from_similarity(graph)
visits = expected_visits(transition, k=2)
print("\nvisit row sums are k+1:", np.unique(np.round(visits.visits.sum(axis=1), 9)))

table = select_neighbors(visits, p=4)
print("\nneighbor table (p=4, closest first):")
for i in range(12):
    marker = "block", i // 4
    print(f"  feature {i:2d} -> {table.indices[i].tolist()}   ({marker[0]} {marker[1]})")

# every feature should choose itself plus its three block-mates
hits = sum(
    set(table.indices[i].tolist()) == set(range(4 * (i // 4), 4 * (i // 4) + 4))
    for i in range(12)
)
print(f"\n{hits}/12 features picked exactly their own block")
