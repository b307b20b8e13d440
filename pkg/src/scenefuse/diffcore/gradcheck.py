"""Autograd forward passes and central-difference gradient verification.

Training runs in float32; verification clones parameters and tensor inputs
to float64 before comparing analytic gradients against central finite
differences ``(f(x + eps) - f(x - eps)) / (2 eps)``.  Agreement is measured
per element by the relative error ``|a - b| / max(|a|, |b|, 1e-8)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import torch

from scenefuse.diffcore.params import ModelState
from scenefuse.errors import NumericError

DEFAULT_EPS = 1e-5  # suited to float64 central differences
DEFAULT_TOLERANCE = 1e-4
_REL_FLOOR = 1e-8

Computation = Callable[[dict[str, torch.Tensor], Any], torch.Tensor]


@dataclass
class GradReport:
    """Outcome of one gradient check."""

    computation: str
    eps: float
    tolerance: float
    per_param: dict[str, float] = field(default_factory=dict)
    elements_checked: dict[str, int] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_rel_error < self.tolerance

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"grad_check[{self.computation}] {status}: max_rel_error={self.max_rel_error:.3e} "
            f"(tolerance={self.tolerance:.1e}, eps={self.eps:.1e})"
        )


def _map_tensors(tree: Any, fn: Callable[[torch.Tensor], torch.Tensor]) -> Any:
    if isinstance(tree, torch.Tensor):
        return fn(tree)
    if isinstance(tree, Mapping):
        return {k: _map_tensors(v, fn) for k, v in tree.items()}
    if isinstance(tree, tuple):
        return tuple(_map_tensors(v, fn) for v in tree)
    if isinstance(tree, list):
        return [_map_tensors(v, fn) for v in tree]
    return tree


def _check_finite_inputs(name: str, inputs: Any) -> None:
    def check(t: torch.Tensor) -> torch.Tensor:
        if t.is_floating_point() and not torch.isfinite(t).all():
            raise NumericError(f"computation {name!r} received non-finite inputs")
        return t

    _map_tensors(inputs, check)


def _computation_name(computation: Computation) -> str:
    return getattr(computation, "__name__", type(computation).__name__)


def _split_loss(name: str, result: Any):
    aux = None
    loss = result
    if isinstance(result, tuple):
        loss, aux = result[0], result[1:]
    if not isinstance(loss, torch.Tensor) or loss.dim() != 0:
        raise NumericError(f"computation {name!r} must return a scalar loss tensor")
    return loss, aux


def forward_with_grads(
    computation: Computation,
    params: ModelState,
    inputs: Any,
) -> tuple[Any, dict[str, torch.Tensor]]:
    """Run ``computation(values, inputs)`` and return its output plus gradients.

    ``computation`` receives a name->tensor mapping covering every parameter
    in ``params`` and must return a scalar loss (optionally ``(loss, aux)``).
    Gradients are returned for every non-frozen parameter; parameters the
    loss does not depend on get zero gradients.  Non-finite inputs, loss, or
    gradients raise :class:`NumericError` naming the computation.
    """
    name = _computation_name(computation)
    _check_finite_inputs(name, inputs)

    values: dict[str, torch.Tensor] = {}
    leaves: dict[str, torch.Tensor] = {}
    for p in params:
        t = p.value.detach().clone()
        if not p.frozen:
            t.requires_grad_(True)
            leaves[p.name] = t
        values[p.name] = t

    result = computation(values, inputs)
    loss, aux = _split_loss(name, result)
    if not torch.isfinite(loss):
        raise NumericError(f"computation {name!r} produced a non-finite loss")

    grads: dict[str, torch.Tensor] = {}
    if leaves:
        grad_list = torch.autograd.grad(
            loss, list(leaves.values()), allow_unused=True, create_graph=False
        )
        for leaf_name, g in zip(leaves, grad_list):
            if g is None:
                g = torch.zeros_like(leaves[leaf_name])
            if not torch.isfinite(g).all():
                raise NumericError(
                    f"computation {name!r} produced non-finite gradients for {leaf_name!r}"
                )
            grads[leaf_name] = g.detach()
    output = result if aux else loss.detach()
    return output, grads


def _sample_indices(numel: int, limit: int | None, seed: int) -> list[int]:
    if limit is None or numel <= limit:
        return list(range(numel))
    g = torch.Generator().manual_seed(seed)
    return sorted(torch.randperm(numel, generator=g)[:limit].tolist())


def grad_check(
    computation: Computation,
    params: ModelState,
    inputs: Any,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    max_elements_per_param: int | None = None,
    seed: int = 0,
) -> GradReport:
    """Compare autograd gradients to float64 central finite differences.

    Every non-frozen parameter is checked element-wise; when a parameter has
    more elements than ``max_elements_per_param`` a deterministic seeded
    subset is checked instead.  Non-finite finite-difference probes are
    recorded as failures in the report rather than raised.
    """
    name = _computation_name(computation)
    state64 = ModelState()
    for p in params:
        q = p.clone()
        q.value = q.value.to(torch.float64)
        state64.add(q)
    inputs64 = _map_tensors(
        inputs, lambda t: t.to(torch.float64) if t.is_floating_point() else t
    )

    _, grads = forward_with_grads(computation, state64, inputs64)

    values = {p.name: p.value.detach().clone() for p in state64}

    def run() -> float:
        with torch.no_grad():
            loss, _ = _split_loss(name, computation(values, inputs64))
        return float(loss)

    report = GradReport(computation=name, eps=eps, tolerance=tolerance)
    for p in state64:
        if p.frozen:
            continue
        analytic = grads[p.name].reshape(-1)
        flat = values[p.name].reshape(-1)
        indices = _sample_indices(flat.numel(), max_elements_per_param, seed)
        worst = 0.0
        for idx in indices:
            orig = float(flat[idx])
            flat[idx] = orig + eps
            f_plus = run()
            flat[idx] = orig - eps
            f_minus = run()
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            if not (torch.isfinite(torch.tensor(numeric))):
                report.failures.append(
                    f"{p.name}[{idx}]: non-finite finite-difference probe"
                )
                continue
            a = float(analytic[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), _REL_FLOOR)
            worst = max(worst, rel)
        report.per_param[p.name] = worst
        report.elements_checked[p.name] = len(indices)
    return report


def module_computation(
    module: torch.nn.Module,
    loss_fn: Callable[[Any, Any], torch.Tensor],
    name: str | None = None,
) -> Computation:
    """Wrap a module as a computation over its named parameters.

    ``inputs`` must be a mapping with optional ``args`` (tuple) and
    ``kwargs`` (dict) entries passed to the module's forward; ``loss_fn``
    reduces the module output (given the same inputs) to a scalar.
    """

    def computation(values: dict[str, torch.Tensor], inputs: Mapping[str, Any]):
        args = inputs.get("args", ())
        kwargs = inputs.get("kwargs", {})
        out = torch.func.functional_call(module, values, args=args, kwargs=kwargs)
        return loss_fn(out, inputs)

    computation.__name__ = name or f"{type(module).__name__}_loss"
    return computation
