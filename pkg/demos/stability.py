"""Empirical check of the input-perturbation bounds for a trained model.

For a perturbation eta of the forcing, the change of the class probabilities
is bounded by L ||eta||_L1 with L = ||A|| ||B|| exp(Lip(Xi) T ||beta||).  We
train a small oscillator model, perturb one test signal many times
(deterministic bumps and Wiener paths) and count violations.  L is usually
very loose, so the observed ratios sit far below 1.

Run:  python3 demos/stability.py
"""

from naed.datagen import GeneratorConfig, generate
from naed.dictionary import polynomial
from naed.stability import stability_check
from naed.trainer import TrainConfig, train

train_set, test_set = generate(GeneratorConfig("oscillator", N=400, seed=0))
spec = polynomial(2, 1)
params, rep = train(train_set, spec, TrainConfig(learning_rate=0.05, max_epochs=80, seed=0))
print(f"trained: train accuracy {rep.train_accuracy:.4f}")

report = stability_check(params, spec, test_set[0], n_perturbations=1000, n_paths=1000, seed=1)
print(report.summary())
print("bounds hold" if report.passed else "bound violated")
