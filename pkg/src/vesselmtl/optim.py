"""Adam and gradient bookkeeping."""
import numpy as np


def zero_grads(params):
    for p in _tensors(params):
        p.grad = None


def _tensors(params):
    return params.values() if isinstance(params, dict) else params


def adam_step(param, grad, m, v, t, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on ``param``, ``m`` and ``v``.

    ``t`` is the 1-based step count.
    """
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * (grad * grad)
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params) if isinstance(params, dict) else {str(i): p for i, p in enumerate(params)}
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        """Apply one update using each parameter's ``grad``; params without a grad see a zero gradient."""
        self.t += 1
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            adam_step(p.data, g, self.m[k], self.v[k], self.t, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        zero_grads(self.params)
