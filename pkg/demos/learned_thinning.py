"""Train a small learned thinner, distill it, and compare against the baselines.

Takes a few minutes on one core. The numbers are far from a full
training run; the point is the workflow.
"""

import logging

import numpy as np

from iterskel.bezier import GenParams, generate_many
from iterskel.classic import morph_skel
from iterskel.engine import run
from iterskel.metrics import evaluate, summarize
from iterskel.net import STUDENT, TEACHER, init_net
from iterskel.train import TrainConfig, distill, train_teacher

logging.basicConfig(level=logging.INFO, format="%(message)s")

train = generate_many(GenParams(dims=(48, 48), seed=100), 300)
test = generate_many(GenParams(dims=(48, 48), seed=999), 30)

teacher, hist = train_teacher(train, init_net(TEACHER, seed=0), TrainConfig(epochs=10, seed=0))
print("teacher loss per epoch:", np.round(hist.loss, 3))

student, dh = distill(teacher, init_net(STUDENT, seed=1), train,
                      TrainConfig(epochs=8, lr=3e-3, seed=0), val=test[:8])
print(f"student has {student.n_params} parameters (teacher {teacher.n_params})")
for epoch, losses in enumerate(dh.step_loss):
    print(f"  epoch {epoch}: held-out loss per step", np.round(losses, 3))

rows = {}
for name, fn in (("teacher", lambda g: run(teacher, g)),
                 ("student", lambda g: run(student, g)),
                 ("morph", morph_skel)):
    rows[name] = summarize([evaluate(fn(s.image), s.skeleton, i) for i, s in enumerate(test)])

cols = ("dice", "cldice", "b0_err", "b1_err", "avg_thickness", "max99_thickness")
print(f"\n{'':8s}" + "".join(f"{c:>16s}" for c in cols))
for name, r in rows.items():
    print(f"{name:8s}" + "".join(f"{r[c]:16.3f}" for c in cols))

# each step of the rollout can be inspected
skel, trace = run(student, test[0].image, record_trace=True)
for n, st in enumerate(trace.steps, 1):
    print(f"step {n}: boundary {int(st.boundary.sum()):4d}  deleted {int(st.delta.sum()):4d}  "
          f"left {int(st.skeleton_after.sum()):4d}")
