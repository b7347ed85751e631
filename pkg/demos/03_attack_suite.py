"""Compare adversarial resistance of a benign-trained and a collapse-aware
adversarially trained model under the full attack suite.

Five attacks at a matched l-inf budget: candidate attacks push a gallery
sample toward (ca+) or away from (ca-) a query's neighborhood, query
attacks move the query itself (qa+/qa-), and the recall attack perturbs
queries to break R@1. The Adversarial Resistance Score is 100 when the
attack achieved nothing and 0 when it fully reached its goal.

Run:  python3 demos/03_attack_suite.py   (about a minute)
"""

from catride import data, evaluation, trainer
from catride.adversary import PerturbationConfig

dataset = data.generate_clusters(data.preset_spec("entangled", seed=7))
attack_cfg = PerturbationConfig(epsilon=8 / 255, alpha=1 / 255, max_steps=16)

models = {}
for mode in ("benign", "ca-tride"):
    cfg = trainer.TrainConfig(mode=mode, epochs=100, batch_size=32, seed=1)
    models[mode] = trainer.run_training(dataset, cfg).model
    r1 = evaluation.recall_at_k(models[mode], dataset.inputs, dataset.labels)
    print(f"trained {mode:9s}  benign R@1 {r1:.1f}%")

print()
print(f"{'attack':>8} {'benign ARS':>11} {'ca-tride ARS':>13}")
reports = {
    mode: evaluation.run_attack_suite(
        model, dataset.inputs, dataset.labels,
        evaluation.ATTACK_KINDS, trials=50, cfg=attack_cfg, seed=3)
    for mode, model in models.items()
}
for kind in evaluation.ATTACK_KINDS:
    print(f"{kind:>8} {reports['benign']['per_attack_ars'][kind]:11.1f} "
          f"{reports['ca-tride']['per_attack_ars'][kind]:13.1f}")
print(f"{'overall':>8} {reports['benign']['overall_ars']:11.1f} "
      f"{reports['ca-tride']['overall_ars']:13.1f}")
