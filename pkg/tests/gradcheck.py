"""Finite-difference gradient checks shared by the unit and acceptance suites."""
import torch
from torch.func import functional_call


def fd_check(fn, inputs, eps=1e-7, rtol=1e-4, floor=1e-3):
    """Central differences of sum(fn * w) against autograd, all in float64.

    Returns the worst relative error over the inputs. Gradients that vanish
    identically (a bias feeding BatchNorm) are measured against ``floor``, well
    above float64 difference round-off and far below typical gradient norms.
    """
    inputs = [x.detach().double().requires_grad_(True) for x in inputs]
    out = fn(*inputs)
    w = torch.randn_like(out)
    grads = torch.autograd.grad((out * w).sum(), inputs)
    worst = 0.0
    for x, g in zip(inputs, grads):
        num = torch.zeros_like(x)
        flat = x.detach().view(-1)
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + eps
            up = (fn(*inputs) * w).sum().item()
            flat[i] = old - eps
            dn = (fn(*inputs) * w).sum().item()
            flat[i] = old
            num.view(-1)[i] = (up - dn) / (2 * eps)
        err = ((num - g).norm() / max(g.norm().item(), num.norm().item(), floor)).item()
        assert err <= rtol, f"relative error {err:.2e}"
        worst = max(worst, err)
    return worst


def fd_check_module(module, inputs, **kw):
    """Like ``fd_check`` but also differentiates every parameter of ``module``."""
    module = module.double()
    names = [n for n, _ in module.named_parameters()]
    params = [p for _, p in module.named_parameters()]
    k = len(inputs)

    def fn(*xs):
        return functional_call(module, dict(zip(names, xs[k:])), tuple(xs[:k]))
    return fd_check(fn, list(inputs) + params, **kw)
