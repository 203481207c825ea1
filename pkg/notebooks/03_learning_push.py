"""
Learning to push from one demonstration
=======================================

A time-varying linear-Gaussian policy is trained from a perturbed start.
Each iteration samples 8 rollouts, fits local linear dynamics, takes a
KL-limited LQR step on the graph cost and nudges the offsets towards the
cheaper rollouts.
"""

# %%
import numpy as np

from veg.demos import generate_demo, get_task
from veg.rollout import TrainConfig, task_optimizer, train

task = get_task("push-straight")
demo = generate_demo(task)
print(task_optimizer(task))

# %%
out = train(task, demo, TrainConfig(), seed=0)
for c in out.result.curve:
    print(f"iter {c.iteration:2d}  cost {c.mean_cost:9.4f}  success {c.success_rate:.2f}")

# %%
# The best batch's policy is executed without noise.
print("solved:", out.solved, " distance to target: %.4f m" % out.error)

# %%
# The imitator's hand path against the demonstrator's.
gap = np.linalg.norm(out.final.trace.positions("hand") - demo.positions("hand"), axis=1)
print(np.round(gap, 3))
