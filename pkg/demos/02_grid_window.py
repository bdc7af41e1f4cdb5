"""On a pixel grid the walk-based neighborhood is the usual conv window.

Build the 8-connected adjacency graph of a 28x28 image, accumulate
expected visits over 3-step walks, and select the top 25 neighbors per
pixel: away from the border that set is exactly the pixel's 5x5 window.
"""

import numpy as np

from walkconv import expected_visits, grid_graph, select_neighbors, transition_from_similarity

H = W = 28

graph = grid_graph(H, W)
visits = expected_visits(transition_from_similarity(graph), k=3)
table = select_neighbors(visits, p=25)

matches = 0
for r in range(2, H - 2):
    for c in range(2, W - 2):
        window = {rr * W + cc for rr in range(r - 2, r + 3) for cc in range(c - 2, c + 3)}
        matches += set(table.indices[r * W + c].tolist()) == window
print(f"interior pixels whose 25 neighbors are the 5x5 window: {matches}/{(H-4)*(W-4)}")

# show one neighborhood as a picture
r0, c0 = 14, 14
mask = np.full((H, W), ".")
for j in table.indices[r0 * W + c0]:
    mask[j // W, j % W] = "#"
mask[r0, c0] = "O"
print(f"\nneighborhood of pixel ({r0},{c0}):")
for row in mask[r0 - 4:r0 + 5]:
    print("   ", " ".join(row[c0 - 4:c0 + 5]))

# at the corner there is no full window; unreachable slots are padded
# with the node itself and masked out of the convolution
real = table.indices[0][~table.pad_mask[0]].tolist()
print("\ncorner pixel (0,0) reaches only", len(real), "pixels in 3 steps:")
print("   ", sorted(real))
print("the remaining", int(table.pad_mask[0].sum()), "slots are self-padding")
