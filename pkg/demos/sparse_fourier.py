"""Sparse Fourier dictionary learning on noisy oscillator data.

Fourier(2,2) has 25 basis functions per hidden coordinate.  Hard
thresholding after every ADAM step drives small coefficients to exactly
zero; the threshold is chosen by stratified 5-fold cross-validation.

Run:  python3 demos/sparse_fourier.py   (a few minutes on one core)
"""

from naed.datagen import GeneratorConfig, generate
from naed.dictionary import fourier
from naed.trainer import TrainConfig, cross_validate_lambda, train

train_set, test_set = generate(GeneratorConfig("oscillator", N=600, seed=0, noise_variance=1e-4))
spec = fourier(2, 2)
base = TrainConfig(learning_rate=0.05, max_epochs=60, seed=0)

cv = cross_validate_lambda(train_set, spec, base, [0.0, 0.01, 0.05, 0.1], k=5)
print(cv.table())
print("chosen lambda:", cv.chosen)

for lam in (0.0, cv.chosen):
    cfg = TrainConfig(learning_rate=0.05, max_epochs=120, seed=0, sparse_lambda=lam)
    _, rep = train(train_set, spec, cfg, test_set=test_set)
    print(f"lambda {lam:<5g} test accuracy {rep.test_accuracy:.4f}, "
          f"nonzero beta {rep.nonzero_beta_count}/{spec.m * spec.d}")
