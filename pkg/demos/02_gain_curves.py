# %% [markdown]
# # Gain curves: model against the seller's own rating
#
# Sellers attach a win rating to each lead. Here the rating is the true win
# probability plus Gaussian noise, so it is informative but imperfect. The
# cumulative gain curve shows what share of eventual wins is reached after
# contacting the top fraction of ranked leads.

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
    gain_curve,
    generate,
    label_snapshots,
    predict_batch,
    scored_rows,
    seller_baseline,
    train,
)

quarters = (Quarter(2013, 1), Quarter(2013, 4), Quarter(2014, 1))
sim = generate(GeneratorConfig(seed=7, leads_per_quarter=1500, quarters=quarters, seller_rating_noise=0.3))
target = Quarter(2014, 1)
ts = compose_training_set(target, CompositionPolicy(), sim.snapshots, sim.outcomes)
vocab = fit_vocabulary(ts)
matrix, labels = build_design_matrix(ts.rows, vocab)
model, _ = train(matrix, labels, TrainConfig(), vocab=vocab)

held = label_snapshots(sim.snapshots[target], sim.outcomes[target])
encoded, _ = build_design_matrix(held, vocab)
by_model = scored_rows(held, predict_batch(model, encoded))
by_seller = seller_baseline(sim.snapshots[target], sim.outcomes[target])

# %% [markdown]
# Week 6 snapshots only, so each lead appears once.

# %%
week = 6
curves = {
    "model": gain_curve([s for s in by_model if s.week == week]),
    "seller": gain_curve([s for s in by_seller if s.week == week]),
}
print("contacted  model  seller")
for frac in (0.1, 0.2, 0.3, 0.5, 0.8):
    row = []
    for curve in curves.values():
        xs, ys = np.array(curve.points).T
        row.append(np.interp(frac, xs, ys))
    print(f"  {frac:4.0%}    {row[0]:.3f}  {row[1]:.3f}")
print("gain score " + "  ".join(f"{k} {c.gain_score:.3f}" for k, c in curves.items()))
