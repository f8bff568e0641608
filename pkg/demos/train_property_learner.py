"""Train the graph networks on a small corpus and report held-out accuracy.

    python demos/train_property_learner.py [n_sets]
"""
import sys

from physreason.gnn import TrainConfig, evaluate_ppl, train
from physreason.scene_gen import GenConfig, generate_video_set, set_seeds

n = int(sys.argv[1]) if len(sys.argv) > 1 else 60
sets = [generate_video_set(GenConfig(), s, f"set{k:05d}") for k, s in enumerate(set_seeds(8, n + 20))]
model, curves = train(sets[:n], TrainConfig(epochs=20, dyn_epochs=8))

print("epoch  ppl loss (smoothed)   dyn loss (smoothed)")
for k, (p, ps) in enumerate(zip(curves["ppl"], curves["ppl_smoothed"])):
    dyn = f"{curves['dyn'][k]:.4f} ({curves['dyn_smoothed'][k]:.4f})" if k < len(curves["dyn"]) else ""
    print(f"{k:5d}  {p:.4f} ({ps:.4f})      {dyn}")

acc = evaluate_ppl(model, sets[n:])
print(f"\nheld-out: mass accuracy {acc['mass_accuracy']:.3f}, charge-edge accuracy {acc['edge_accuracy']:.3f}"
      f" over {acc['n_sets']} sets")
