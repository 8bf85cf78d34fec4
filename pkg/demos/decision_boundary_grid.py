"""Export the accept/reject decision boundary over the (ASV, CM) LLR plane.

The Bayes policy rejects whenever either detector is confident enough in the
negative direction, producing an L-shaped accept region; this script writes
the region to CSV and sketches it as ASCII art.  Run with:

    python3 demos/decision_boundary_grid.py [out.csv]
"""

import sys

from sasv.core import DEFAULT_COST_MODEL
from sasv.decision import FusionConfig
from sasv.fileio import write_grid_csv
from sasv.sim import GridSpec, boundary_grid

spec = GridSpec(-8.0, 8.0, -8.0, 8.0, 33, 33)
rows = boundary_grid(FusionConfig("nonlinear", DEFAULT_COST_MODEL.rho),
                     DEFAULT_COST_MODEL, spec)

out = sys.argv[1] if len(sys.argv) > 1 else "boundary_grid.csv"
write_grid_csv(out, rows)
print(f"wrote {len(rows)} grid nodes to {out}")

# ASCII sketch: '#' = accept, '.' = reject; CM LLR increases upward
accept = {(a, c): ok for a, c, _, ok in rows}
a_axis = sorted({a for a, _, _, _ in rows})
c_axis = sorted({c for _, c, _, _ in rows})
print("\n  accept region (x: ASV LLR -8..8, y: CM LLR 8..-8)")
for c in reversed(c_axis):
    line = "".join("#" if accept[(a, c)] else "." for a in a_axis)
    print(f"  {line}")

n_accept = sum(accept.values())
print(f"\n{n_accept}/{len(rows)} nodes accepted under the default "
      f"cost model (rho={DEFAULT_COST_MODEL.rho:.2f}, "
      f"beta={DEFAULT_COST_MODEL.beta:.1f})")
