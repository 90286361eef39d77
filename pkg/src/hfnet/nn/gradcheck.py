"""Central finite-difference verification of analytic gradients.

The scalar probe is loss = sum(forward(x) * R) for a fixed random R, so
dL/dy = R feeds straight into a layer's backward pass; every parameter
element and every input element is then perturbed with a relative step and
compared.  Run layers in float64 with dropout masks frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Dropout, softmax_cross_entropy

__all__ = ["GradCheckReport", "grad_check_layer", "grad_check_loss"]


@dataclass
class GradCheckReport:
    tolerance: float
    per_tensor: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max(self.per_tensor.values()) if self.per_tensor else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def __str__(self):
        worst = ", ".join(f"{k}={v:.3e}" for k, v in self.per_tensor.items())
        return f"grad check ({'pass' if self.passed else 'FAIL'} @ {self.tolerance:g}): {worst}"


def _rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-2)


def _fd_grad(loss_fn, array, h_rel=1e-5):
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = h_rel * max(1.0, abs(orig))
        flat[i] = orig + h
        hi = loss_fn()
        flat[i] = orig - h
        lo = loss_fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * h)
    return grad


def grad_check_layer(layer, x, tolerance=1e-6, seed=0, h_rel=1e-5, check_input=True):
    """Compare a layer's analytic gradients against central differences.

    x should be float64; the layer is run in train mode.  Returns a report
    with the worst relative error per tensor (input plus each parameter).
    """
    rng = np.random.default_rng(seed)
    if isinstance(layer, Dropout):
        layer.forward(x, train=True)  # materialize a mask, then freeze it
        layer.frozen = True

    y = layer.forward(x, train=True)
    probe = rng.standard_normal(y.shape)

    def loss_fn():
        return float(np.sum(layer.forward(x, train=True) * probe))

    for _, p in layer.params():
        p.zero_grad()
    layer.forward(x, train=True)
    dx = layer.backward(probe)

    report = GradCheckReport(tolerance=tolerance)
    if check_input:
        fd = _fd_grad(loss_fn, x, h_rel)
        report.per_tensor["input"] = max(
            (_rel_err(a, b) for a, b in zip(dx.ravel(), fd.ravel())), default=0.0
        )
    for name, p in layer.params():
        analytic = p.grad.copy()
        fd = _fd_grad(loss_fn, p.data, h_rel)
        report.per_tensor[name] = max(
            (_rel_err(a, b) for a, b in zip(analytic.ravel(), fd.ravel())), default=0.0
        )
    return report


def grad_check_loss(logits, labels, tolerance=1e-7, h_rel=1e-5):
    """Verify the softmax cross-entropy gradient with central differences."""
    _, analytic = softmax_cross_entropy(logits, labels)

    def loss_fn():
        return softmax_cross_entropy(logits, labels)[0]

    fd = _fd_grad(loss_fn, logits, h_rel)
    report = GradCheckReport(tolerance=tolerance)
    report.per_tensor["logits"] = max(
        (_rel_err(a, b) for a, b in zip(analytic.ravel(), fd.ravel())), default=0.0
    )
    return report
