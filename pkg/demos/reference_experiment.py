"""
The reference experiment
========================

Base training on five classes, then K-shot adaptation to three novel
classes under six objectives.  Reports land in ``runs/reference``.
"""

from smile.harness.experiment import run_experiment
from smile.harness.reference import reference_config

result = run_experiment(reference_config())

print(f"{'arm':>8} {'base':>7} {'novel':>7} {'delta':>7} {'conv':>5} {'b-n cos':>8}")
for row in result.summary["arms"]:
    print(f"{row['arm']:>8} {row['base_accuracy']:7.3f} {row['novel_accuracy']:7.3f} "
          f"{row['forgetting_delta']:+7.3f} {row['convergence_iters']:5d} {row['base_novel_similarity']:+8.3f}")

# forgetting curve of the FLMI arm, one point per evaluation
curve = result.report("both").forgetting.points
print("FLMI base accuracy:", " ".join(f"{a:.3f}" for _, a in curve[::5]))
