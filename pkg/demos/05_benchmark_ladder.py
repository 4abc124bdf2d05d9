"""
The benchmark ladder, end to end
================================

Seven methods on one task, paired by seed: every method of a seed shares
the same source hypothesis and the same few-shot draw, so differences are
method differences, not data luck. The harness streams results as JSON
lines and aggregates them into a mean/std table.

  wa      apply the frozen source model as-is
  ft      refit the classifier on the few-shots (encoder frozen)
  shot    refit the encoder on the few-shots (classifier frozen)
  sfada   two-step adaptation, source-compatible generators
  tfada   two-step adaptation, target-proximal generators
  stfada  two-step adaptation, combined generators
  tohan   one-step: generation and adaptation interleaved
"""

import numpy as np

from fha import trainers
from fha.data import builtin_task, make_synthetic_task, sample_few_shot
from fha.harness import ExperimentConfig, dump_embedding, run_experiment, summarize

task = builtin_task("rot40")
seeds = [0, 1, 2]

results = run_experiment(task, trainers.METHODS, shots=[3], seeds=seeds,
                         cfg=ExperimentConfig())
failures = [r for r in results if r.error is not None]
print(f"{len(results)} runs, {len(failures)} failures\n")
print(summarize(results).render())

# per-seed pairing in action: subtract wa from each method within a seed
print("paired gains over wa (accuracy points, per seed):")
wa = {r.seed: r.accuracy for r in results if r.method == "wa"}
for method in ("ft", "shot", "stfada", "tohan"):
    gains = [100 * (r.accuracy - wa[r.seed]) for r in results if r.method == method]
    joined = ", ".join(f"{g:+.1f}" for g in gains)
    print(f"  {method:<7} {joined}")

# A 2-d embedding export shows where the adapted encoder puts each domain.
# (The CLI exposes the same thing as `fha dump-embed`.)
source, target, target_test = make_synthetic_task(task)
hypothesis = trainers.train_source(source, trainers.SourceTrainConfig(seed=0))
fewshot = sample_few_shot(target, 3, seed=0)
model = trainers.train_tohan(hypothesis, fewshot, trainers.TohanConfig(seed=0))

table = dump_embedding(model, [("source", source), ("target", target_test)])
print("\nembedding table (first rows):")
for line in table.to_csv().splitlines()[:5]:
    print(f"  {line}")
spread = {
    domain: float(np.mean([
        table.x[i] for i in range(table.x.size) if table.domains[i] == domain
    ]))
    for domain in ("source", "target")
}
print(f"mean first coordinate by domain: {spread}")
