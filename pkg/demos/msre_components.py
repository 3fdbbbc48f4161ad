"""Split a two-meaning relation into semantic components.

Entities sit at fixed complex values. Half of the pairs of relation ``r``
rotate by +1 rad per coordinate, half by -1 rad. One phase vector cannot
serve both halves; two components can.

Run: python3 demos/msre_components.py
"""

import numpy as np

from casegraph.kge import MsreModel, SemanticComponentSet, collect_relation_angles, complete, derive_components, eval_link_prediction
from casegraph.kge.synthetic import planted_two_cluster
from casegraph.numeric import circular_mean

store, E = planted_two_cluster(seed=0)
angles = collect_relation_angles(store, E, "r")
comps = derive_components(angles)
print(f"{len(angles.angles)} training pairs -> {comps.k} components, sizes {comps.counts.tolist()}")
for i, ph in enumerate(comps.phases):
    print(f"  component {i}: mean phase {np.mean(ph):+.3f}, spread {np.std(ph):.3f}")

single = SemanticComponentSet.single("r", circular_mean(angles.angles, axis=0))
for name, c in [("single vector", single), ("components", comps)]:
    m = eval_link_prediction(store, MsreModel(E, {0: c}).score, "test")
    print(f"{name:>13}: MRR {m['mrr']:.3f}  Hits@1 {m['hits@1']:.3f}")

h = store.entities[int(store.test[0, 0])]
print(f"\ntop answers for ({h}, r, ?), known facts not filtered:")
for name, score, k in complete(store, MsreModel(E, {0: comps}), (h, "r", None), filtered=False, top=3):
    print(f"  {name:>6}  score {score:8.3f}  via component {k}")
print("gold:", store.entities[int(store.test[0, 2])])
