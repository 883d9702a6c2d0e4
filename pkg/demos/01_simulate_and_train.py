# %% [markdown]
# # Simulate a pipeline and train a scorer
#
# We generate three quarters of synthetic leads with a known ground truth,
# build the training set for 2014Q1 from the same quarter a year earlier plus
# the quarter just before it, and fit the logistic scorer.
#
# Run with `python demos/01_simulate_and_train.py`.

# %%
import numpy as np

from winprop import (
    CompositionPolicy,
    GeneratorConfig,
    Quarter,
    TrainConfig,
    build_design_matrix,
    compose_training_set,
    fit_vocabulary,
    generate,
    label_snapshots,
    predict_batch,
    roc_auc,
    scored_rows,
    train,
)
from winprop.simgen import bayes_optimal_scores

quarters = (Quarter(2013, 1), Quarter(2013, 4), Quarter(2014, 1))
sim = generate(GeneratorConfig(seed=42, leads_per_quarter=1500, quarters=quarters))
for q in quarters:
    won = sum(o.status == "won" for o in sim.outcomes[q])
    print(f"{q}: {len(sim.snapshots[q])} snapshots, {won}/{len(sim.outcomes[q])} leads won")

# %% [markdown]
# Each weekly snapshot of a lead becomes one training row. A won lead
# contributes only the weeks before its win was recorded.

# %%
target = Quarter(2014, 1)
ts = compose_training_set(target, CompositionPolicy(), sim.snapshots, sim.outcomes)
print(f"training set for {target}: {len(ts)} rows from {sorted(map(str, ts.source_quarters))}")
print(f"positives {ts.n_positive}, negatives {ts.n_negative}")

vocab = fit_vocabulary(ts)
matrix, labels = build_design_matrix(ts.rows, vocab)
model, report = train(matrix, labels, TrainConfig(), vocab=vocab)
print(f"{vocab.total_columns} columns, converged={report.converged} in {report.iterations} iterations")

# %% [markdown]
# The largest weights, by magnitude.

# %%
names = vocab.column_names()
for i in np.argsort(-np.abs(model.weights))[:8]:
    print(f"  {names[i]:28s} {model.weights[i]:+.3f}")

# %% [markdown]
# Score the target quarter and compare with the true probabilities, which no
# model trained on finite data can beat on average.

# %%
held = label_snapshots(sim.snapshots[target], sim.outcomes[target])
encoded, _ = build_design_matrix(held, vocab)
model_auc = roc_auc(scored_rows(held, predict_batch(model, encoded)))
bayes_auc = roc_auc(bayes_optimal_scores(sim.truth, sim.snapshots[target], sim.outcomes[target]))
print(f"held-out AUC: model {model_auc:.4f}, ground truth {bayes_auc:.4f}")
