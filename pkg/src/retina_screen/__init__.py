"""Desk-scale diabetic retinopathy screening pipeline.

Subpackages:
    autodiff    minimal dense-tensor engine with reverse-mode gradients
    enhance     CLAHE image enhancement with a brute-force reference
    data        manifests, augmentation, center-held-out fold plans
    blocks      partial attention, residual inception, encoder models
    training    losses, optimizers, pretraining and cross-validated runs
    evaluation  grading, confusion metrics, bootstrap/Wilson/McNemar stats
"""

__version__ = "0.1.0"
