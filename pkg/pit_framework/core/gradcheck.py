"""
Central finite-difference checks of the analytic gradients
"""
import logging
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from . import tensor as T
from .config import Activation, LossKind, NetworkConfig, PitConvSpec
from .layers import build_network
from .losses import RegularizerConfig, performance_loss, size_regularizer, total_loss
from .masks import MaskSpec, build_constant_matrices, build_mask_tensor
from .seeding import Component, generator
from .tensor import NonFiniteError, Tensor

logger = logging.getLogger(__name__)

REL_FLOOR = 1e-5


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tol: float
    n_checked: int
    per_input: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def gradient_check(
    f: Callable[[], Tensor],
    inputs: Dict[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    name: str = "f",
    surrogate: bool = True,
) -> GradCheckReport:
    """
    Compare backward() against (f(x+h) - f(x-h)) / 2h for every element of
    every input. `f` recomputes a scalar from the (mutated in place) inputs.
    With `surrogate` both passes evaluate straight-through nodes as identity.
    """
    def evaluate(record: bool) -> Tensor:
        with T.ste_surrogate() if surrogate else nullcontext():
            return _recorded(f) if record else f()

    for tensor in inputs.values():
        tensor.set_requires_grad(True)
    evaluate(record=True)
    analytic = {key: tensor.grad.copy() for key, tensor in inputs.items()}

    per_input: Dict[str, float] = {}
    n_checked = 0
    for key, tensor in inputs.items():
        worst = 0.0
        for index in np.ndindex(tensor.shape):
            original = tensor.data[index]
            tensor.data[index] = original + h
            f_plus = evaluate(record=False).item()
            tensor.data[index] = original - h
            f_minus = evaluate(record=False).item()
            tensor.data[index] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError(f"Non-finite probe for {name}:{key}{index}")
            numeric = (f_plus - f_minus) / (2.0 * h)
            worst = max(worst, relative_error(float(analytic[key][index]), numeric))
            n_checked += 1
        per_input[key] = worst

    report = GradCheckReport(
        name=name,
        max_rel_error=max(per_input.values(), default=0.0),
        tol=tol,
        n_checked=n_checked,
        per_input=per_input,
    )
    logger.debug(f"gradcheck {name}: max rel error {report.max_rel_error:.3e} over {n_checked} entries")
    return report


def _recorded(f: Callable[[], Tensor]) -> Tensor:
    with T.Tape():
        loss = f()
        T.backward(loss)
    return loss


# ============== Suite ==============

def _away_from_zero(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Uniform in [-1, -0.1] U [0.1, 1], clear of the kinks of abs and relu"""
    magnitude = rng.uniform(0.1, 1.0, size=shape)
    return magnitude * rng.choice([-1.0, 1.0], size=shape)


def _cases(rng: np.random.Generator) -> List[Tuple[str, Callable[[], Tensor], Dict[str, Tensor]]]:
    def u(*shape):
        return Tensor(rng.uniform(-1.0, 1.0, size=shape))

    def project(out: Tensor, weights: Tensor) -> Tensor:
        return T.sum_(T.mul(out, weights))

    a, b, r = u(3, 4), u(3, 4), u(3, 4)
    k1, r1 = Tensor(_away_from_zero(rng, (3, 4))), u(3, 4)
    k2, r2 = Tensor(_away_from_zero(rng, (3, 4))), u(3, 4)
    s = u(5)
    ma, mb, mr = u(3, 4), u(4, 2), u(3, 2)
    cp, cpr = u(3, 5), u(5)
    rs, rsr = u(2, 6), u(3, 4)
    lx, lw, lb, lr = u(2, 3, 5), u(4, 3), u(4), u(2, 4, 5)
    logits = u(4, 3)
    labels = Tensor((rng.uniform(size=(4, 3)) > 0.5).astype(np.float64))
    ste_in, ste_r = u(4), u(4)
    cx, cw, cb, cr = u(2, 2, 9), u(3, 2, 3), u(3), u(2, 3, 9)
    px, pr = u(2, 3, 6), u(2, 3)

    spec = MaskSpec(9)
    mats = build_constant_matrices(spec)
    g_mask, mask_r = Tensor(np.array([1.0, 1.0, 0.0, 1.0])), u(9)

    return [
        ("add", lambda: project(T.add(a, b), r), {"a": a, "b": b}),
        ("sub", lambda: project(T.sub(a, b), r), {"a": a, "b": b}),
        ("mul", lambda: project(T.mul(a, b), r), {"a": a, "b": b}),
        ("scalar_mul", lambda: project(T.scalar_mul(a, -2.5), r), {"a": a}),
        ("abs", lambda: project(T.abs_(k1), r1), {"x": k1}),
        ("relu", lambda: project(T.relu(k2), r2), {"x": k2}),
        ("sum", lambda: T.sum_(s), {"x": s}),
        ("mean", lambda: T.mean(s), {"x": s}),
        ("matmul", lambda: project(T.matmul(ma, mb), mr), {"a": ma, "b": mb}),
        ("column_product", lambda: project(T.column_product(cp), cpr), {"x": cp}),
        ("reshape", lambda: project(T.reshape(rs, (3, 4)), rsr), {"x": rs}),
        ("linear", lambda: project(T.linear(lx, lw, lb), lr), {"x": lx, "weight": lw, "bias": lb}),
        ("bce_with_logits", lambda: T.bce_with_logits(logits, labels), {"logits": logits}),
        ("heaviside_ste", lambda: project(T.heaviside_ste(ste_in, 0.5), ste_r), {"g_hat": ste_in}),
        (
            "conv1d_causal",
            lambda: project(T.conv1d_causal(cx, cw, cb, 2), cr),
            {"x": cx, "weight": cw, "bias": cb},
        ),
        ("pool_time_mean", lambda: project(T.pool_time(px, "mean"), pr), {"x": px}),
        ("pool_time_last", lambda: project(T.pool_time(px, "last"), pr), {"x": px}),
        (
            "mask_transform",
            lambda: project(build_mask_tensor(T.heaviside_ste(g_mask, 0.5), mats), mask_r),
            {"gamma": g_mask},
        ),
        _composite_case(rng),
    ]


def _composite_case(rng: np.random.Generator) -> Tuple[str, Callable[[], Tensor], Dict[str, Tensor]]:
    """Masked conv forward, mse, size regularizer and their sum, w.r.t. W, bias and gamma"""
    config = NetworkConfig(
        name="gradcheck",
        layers=[PitConvSpec(c_in=2, c_out=2, rf_max=9, activation=Activation.NONE)],
    )
    net = build_network(config, rng_seed=int(rng.integers(2**31)))
    layer = net.pit_layers()[0]
    layer.gamma.g_hat.data[:] = [1.0, 1.0, 0.0, 1.0]
    x = rng.uniform(-1.0, 1.0, size=(2, 2, 12))
    target = rng.uniform(-1.0, 1.0, size=(2, 2, 12))
    reg_cfg = RegularizerConfig(lambda_=0.01)

    def f() -> Tensor:
        perf = performance_loss(net(Tensor(x)), target, LossKind.MSE)
        return total_loss(perf, size_regularizer(net, reg_cfg))

    inputs = {"weight": layer.weight, "bias": layer.bias, "gamma": layer.gamma.g_hat}
    return "pit_objective", f, inputs


def run_gradcheck_suite(seed: int = 0, h: float = 1e-5, tol: float = 1e-4) -> List[GradCheckReport]:
    """One report per differentiable op, the mask path and the full objective"""
    rng = generator(seed, Component.GRADCHECK)
    reports = [gradient_check(f, inputs, h=h, tol=tol, name=name) for name, f, inputs in _cases(rng)]
    failed = [report.name for report in reports if not report.passed]
    if failed:
        logger.warning(f"Gradient check failed for: {', '.join(failed)}")
    else:
        logger.info(f"Gradient check passed for all {len(reports)} cases")
    return reports
