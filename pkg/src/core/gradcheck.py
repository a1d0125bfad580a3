"""
Verificación de gradientes por diferencias finitas centrales

Compara el gradiente analítico del motor con
(f(x + eps) - f(x - eps)) / (2 eps) por cada escalar verificado.

Error relativo por escalar: |a - n| / max(|a|, |n|, floor); el floor evita
dividir por cero cuando ambos gradientes son (casi) nulos.
"""

from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..models.apformer_models import GradCheckReport, ParameterCheck
from .tensor import Tensor, no_grad


Params = Union[Mapping[str, Tensor], Sequence[Tensor]]


def grad_check(
    scalar_fn: Callable[[], Tensor],
    params: Params,
    eps: float = 1e-4,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    floor: float = 1e-4,
) -> GradCheckReport:
    """
    Comparar gradiente analítico vs diferencias finitas

    Args:
        scalar_fn: función determinista sin argumentos que devuelve un Tensor escalar
                   construido a partir de `params`
        params: tensores hoja (dict nombre -> Tensor o lista)
        eps: paso de las diferencias, en [1e-7, 1e-4]; con el valor por defecto una
             función lineal se verifica con error relativo <= 1e-9
        samples: si se indica, verificar solo esta cantidad de escalares
                 elegidos al azar entre todos los parámetros
        rng: generador para el muestreo (obligatorio si samples se indica)
        floor: denominador mínimo del error relativo

    Returns:
        GradCheckReport con los errores máximos y el desglose por parámetro
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"eps debe estar en [1e-7, 1e-4], recibido {eps}")

    named = _named_params(params)
    for _, tensor in named:
        tensor.requires_grad = True
        tensor.zero_grad()

    loss = scalar_fn()
    if loss.size != 1:
        raise ValueError(f"scalar_fn debe devolver un escalar, shape {loss.shape}")
    loss.backward()
    analytic = {name: tensor.grad.copy() for name, tensor in named}

    selection = _select_entries(named, samples, rng)
    report = GradCheckReport(max_abs_err=0.0, max_rel_err=0.0)

    for name, tensor in named:
        indices = selection.get(name, [])
        if not indices:
            continue
        check = ParameterCheck(name=name, max_abs_err=0.0, max_rel_err=0.0, checked=len(indices))
        flat = tensor.data.reshape(-1)
        flat_grad = analytic[name].reshape(-1)

        for index in indices:
            original = flat[index]
            with no_grad():
                flat[index] = original + eps
                f_plus = scalar_fn().item()
                flat[index] = original - eps
                f_minus = scalar_fn().item()
            flat[index] = original

            numeric = (f_plus - f_minus) / (2.0 * eps)
            exact = flat_grad[index]
            if not (np.isfinite(numeric) and np.isfinite(exact)):
                report.failures.append(f"{name}[{index}]: gradiente no finito")
                if check.failed_index is None:
                    check.failed_index = int(index)
                continue

            abs_err = abs(exact - numeric)
            rel_err = abs_err / max(abs(exact), abs(numeric), floor)
            check.max_abs_err = max(check.max_abs_err, abs_err)
            check.max_rel_err = max(check.max_rel_err, rel_err)

        report.per_parameter.append(check)
        report.max_abs_err = max(report.max_abs_err, check.max_abs_err)
        report.max_rel_err = max(report.max_rel_err, check.max_rel_err)

    return report


def _named_params(params: Params) -> List[Tuple[str, Tensor]]:
    if isinstance(params, Mapping):
        return list(params.items())
    return [(tensor.name or f"param_{i}", tensor) for i, tensor in enumerate(params)]


def _select_entries(
    named: List[Tuple[str, Tensor]],
    samples: Optional[int],
    rng: Optional[np.random.Generator],
) -> Dict[str, List[int]]:
    if samples is None:
        return {name: list(range(tensor.size)) for name, tensor in named}
    if rng is None:
        raise ValueError("rng es obligatorio cuando se indica samples")

    sizes = np.array([tensor.size for _, tensor in named])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    selection: Dict[str, List[int]] = {}
    for pick in np.sort(picks):
        owner = int(np.searchsorted(offsets, pick, side="right") - 1)
        name = named[owner][0]
        selection.setdefault(name, []).append(int(pick - offsets[owner]))
    return selection
