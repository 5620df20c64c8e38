from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch

# Below this magnitude the central difference is dominated by rounding
# (about 1e-10 for outputs of order ten at eps=1e-5), so errors there are
# measured against the floor instead of the vanishing gradient.
DENOM_FLOOR = 1e-5


def gradient_check(fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], eps: float = 1e-5,
                   max_coords: int = 200, seed: int = 0, floor: float = DENOM_FLOOR) -> float:
    """Largest relative error between autograd and central differences.

    ``fn`` must rebuild the scalar from ``params`` on every call.  At most
    ``max_coords`` coordinates are probed, sampled uniformly across all
    parameters.  Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    params = list(params)
    out = fn()
    if out.numel() != 1:
        raise ValueError("gradient_check needs a scalar-valued computation")
    grads = torch.autograd.grad(out, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g.detach() for p, g in zip(params, grads)]

    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    flat = np.arange(total) if total <= max_coords else np.sort(rng.choice(total, max_coords, replace=False))
    offsets = np.cumsum([0] + sizes)

    worst = 0.0
    with torch.no_grad():
        for k in flat:
            i = int(np.searchsorted(offsets, k, side="right") - 1)
            j = int(k - offsets[i])
            view = params[i].data.view(-1)
            orig = view[j].item()
            view[j] = orig + eps
            up = fn().item()
            view[j] = orig - eps
            down = fn().item()
            view[j] = orig
            numeric = (up - down) / (2 * eps)
            analytic = grads[i].view(-1)[j].item()
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
    return worst
