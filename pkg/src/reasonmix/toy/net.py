"""Numerical core of the toy decoder: batched forward pass and backprop.

Pre-norm blocks: x += attn(ln1(x)); x += mlp(ln2(x)); final layernorm feeds
the output head.  Everything runs in float64 on plain numpy arrays keyed by
parameter name, so analytic gradients can be checked against central
differences to tight tolerance.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-5
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def layer_prefix(index: int) -> str:
    # zero-padded so lexicographic archive order equals layer order
    return f"layers.{index:02d}"


def parameter_shapes(vocab_size: int, d_model: int, n_layers: int, max_seq_len: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (vocab_size, d_model),
        "pos_emb": (max_seq_len, d_model),
        "ln_f.gain": (d_model,),
        "ln_f.bias": (d_model,),
        "head.w": (d_model, vocab_size),
        "head.b": (vocab_size,),
    }
    for i in range(n_layers):
        p = layer_prefix(i)
        shapes[f"{p}.ln1.gain"] = (d_model,)
        shapes[f"{p}.ln1.bias"] = (d_model,)
        shapes[f"{p}.attn.wq"] = (d_model, d_model)
        shapes[f"{p}.attn.bq"] = (d_model,)
        shapes[f"{p}.attn.wk"] = (d_model, d_model)
        shapes[f"{p}.attn.bk"] = (d_model,)
        shapes[f"{p}.attn.wv"] = (d_model, d_model)
        shapes[f"{p}.attn.bv"] = (d_model,)
        shapes[f"{p}.attn.wo"] = (d_model, d_model)
        shapes[f"{p}.attn.bo"] = (d_model,)
        shapes[f"{p}.ln2.gain"] = (d_model,)
        shapes[f"{p}.ln2.bias"] = (d_model,)
        shapes[f"{p}.mlp.w1"] = (d_model, 4 * d_model)
        shapes[f"{p}.mlp.b1"] = (4 * d_model,)
        shapes[f"{p}.mlp.w2"] = (4 * d_model, d_model)
        shapes[f"{p}.mlp.b2"] = (d_model,)
    return shapes


def _gelu_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """GeLU activation and the tanh term its gradient reuses."""
    t = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    return 0.5 * x * (1.0 + t), t


def gelu(x: np.ndarray) -> np.ndarray:
    return _gelu_parts(x)[0]


def _gelu_grad(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return _gelu_grad(x, np.tanh(_GELU_C * (x + _GELU_A * x * x * x)))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _ln_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv_std
    return gain * xhat + bias, (xhat, inv_std, gain)


def _ln_backward(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, gain = cache
    axes = tuple(range(dy.ndim - 1))
    dgain = (dy * xhat).sum(axis=axes)
    dbias = dy.sum(axis=axes)
    dxhat = dy * gain
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, s, d = x.shape
    return np.ascontiguousarray(x.reshape(b, s, n_heads, d // n_heads).transpose(0, 2, 1, 3))


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, s, dh = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, s, h * dh)


def _flat_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[..., m] x [m, n] as a single 2D GEMM."""
    return (a.reshape(-1, a.shape[-1]) @ b).reshape(*a.shape[:-1], b.shape[-1])


def _outer_grad(inputs: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """d(loss)/dW for out = inputs @ W, summed over batch and sequence."""
    return inputs.reshape(-1, inputs.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])


def forward_core(
    params: dict[str, np.ndarray],
    n_layers: int,
    n_heads: int,
    tokens: np.ndarray,
    with_cache: bool = False,
):
    """Run the decoder over a [batch, seq] int token matrix.

    Returns (logits [B,S,V], hiddens: per-block residual streams, cache).
    """
    b, s = tokens.shape
    x = params["tok_emb"][tokens] + params["pos_emb"][np.arange(s)]
    d_head = x.shape[-1] // n_heads
    scale = 1.0 / np.sqrt(d_head)
    neg_inf_mask = np.triu(np.full((s, s), -np.inf), k=1)

    hiddens: list[np.ndarray] = []
    layer_caches = []
    for i in range(n_layers):
        p = layer_prefix(i)
        a, ln1_cache = _ln_forward(x, params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"])
        q = _split_heads(_flat_matmul(a, params[f"{p}.attn.wq"]) + params[f"{p}.attn.bq"], n_heads)
        k = _split_heads(_flat_matmul(a, params[f"{p}.attn.wk"]) + params[f"{p}.attn.bk"], n_heads)
        v = _split_heads(_flat_matmul(a, params[f"{p}.attn.wv"]) + params[f"{p}.attn.bv"], n_heads)
        scores = q @ k.swapaxes(-2, -1) * scale + neg_inf_mask
        attn = softmax(scores)
        ctx = _merge_heads(attn @ v)
        x_mid = x + (_flat_matmul(ctx, params[f"{p}.attn.wo"]) + params[f"{p}.attn.bo"])

        mb, ln2_cache = _ln_forward(x_mid, params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"])
        u = _flat_matmul(mb, params[f"{p}.mlp.w1"]) + params[f"{p}.mlp.b1"]
        h, tanh_u = _gelu_parts(u)
        x = x_mid + (_flat_matmul(h, params[f"{p}.mlp.w2"]) + params[f"{p}.mlp.b2"])

        hiddens.append(x)
        if with_cache:
            layer_caches.append(
                {"ln1": ln1_cache, "a": a, "q": q, "k": k, "v": v, "attn": attn,
                 "ctx": ctx, "ln2": ln2_cache, "mb": mb, "u": u, "tanh_u": tanh_u, "h": h}
            )

    f, lnf_cache = _ln_forward(x, params["ln_f.gain"], params["ln_f.bias"])
    logits = _flat_matmul(f, params["head.w"]) + params["head.b"]
    cache = None
    if with_cache:
        cache = {"tokens": tokens, "layers": layer_caches, "ln_f": lnf_cache,
                 "f": f, "scale": scale}
    return logits, hiddens, cache


def masked_cross_entropy(
    logits: np.ndarray, targets: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean CE over masked positions; returns (loss, dloss/dlogits)."""
    count = float(mask.sum())
    if count == 0:
        return 0.0, np.zeros_like(logits)
    z = logits - np.max(logits, axis=-1, keepdims=True)
    log_z = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    log_probs = z - log_z
    b_idx, s_idx = np.nonzero(mask)
    loss = -float(log_probs[b_idx, s_idx, targets[b_idx, s_idx]].sum()) / count
    dlogits = np.exp(log_probs)
    dlogits[b_idx, s_idx, targets[b_idx, s_idx]] -= 1.0
    dlogits *= mask[..., None] / count
    return loss, dlogits


def loss_and_grads(
    params: dict[str, np.ndarray],
    n_layers: int,
    n_heads: int,
    tokens: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Masked next-token cross-entropy and its gradient for every parameter."""
    logits, _, cache = forward_core(params, n_layers, n_heads, tokens, with_cache=True)
    loss, dlogits = masked_cross_entropy(logits, targets, mask)

    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    f = cache["f"]
    grads["head.w"] += _outer_grad(f, dlogits)
    grads["head.b"] += dlogits.sum(axis=(0, 1))
    df = _flat_matmul(dlogits, params["head.w"].T)
    dx, dgain, dbias = _ln_backward(df, cache["ln_f"])
    grads["ln_f.gain"] += dgain
    grads["ln_f.bias"] += dbias

    scale = cache["scale"]
    n = n_heads
    for i in reversed(range(n_layers)):
        p = layer_prefix(i)
        lc = cache["layers"][i]

        # MLP branch: x = x_mid + h @ w2 + b2
        dm = dx
        grads[f"{p}.mlp.w2"] += _outer_grad(lc["h"], dm)
        grads[f"{p}.mlp.b2"] += dm.sum(axis=(0, 1))
        dh = _flat_matmul(dm, params[f"{p}.mlp.w2"].T)
        du = dh * _gelu_grad(lc["u"], lc["tanh_u"])
        grads[f"{p}.mlp.w1"] += _outer_grad(lc["mb"], du)
        grads[f"{p}.mlp.b1"] += du.sum(axis=(0, 1))
        dmb = _flat_matmul(du, params[f"{p}.mlp.w1"].T)
        dx_ln2, dgain, dbias = _ln_backward(dmb, lc["ln2"])
        grads[f"{p}.ln2.gain"] += dgain
        grads[f"{p}.ln2.bias"] += dbias
        dx = dx + dx_ln2  # residual join at x_mid

        # attention branch: x_mid = x_in + ctx @ wo + bo
        dattn_out = dx
        grads[f"{p}.attn.wo"] += _outer_grad(lc["ctx"], dattn_out)
        grads[f"{p}.attn.bo"] += dattn_out.sum(axis=(0, 1))
        dctx = _split_heads(_flat_matmul(dattn_out, params[f"{p}.attn.wo"].T), n)
        dattn = dctx @ lc["v"].swapaxes(-2, -1)
        dv = lc["attn"].swapaxes(-2, -1) @ dctx
        dscores = lc["attn"] * (dattn - np.sum(dattn * lc["attn"], axis=-1, keepdims=True))
        dq = dscores @ lc["k"] * scale
        dk = dscores.swapaxes(-2, -1) @ lc["q"] * scale
        dq_m, dk_m, dv_m = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
        a = lc["a"]
        grads[f"{p}.attn.wq"] += _outer_grad(a, dq_m)
        grads[f"{p}.attn.bq"] += dq_m.sum(axis=(0, 1))
        grads[f"{p}.attn.wk"] += _outer_grad(a, dk_m)
        grads[f"{p}.attn.bk"] += dk_m.sum(axis=(0, 1))
        grads[f"{p}.attn.wv"] += _outer_grad(a, dv_m)
        grads[f"{p}.attn.bv"] += dv_m.sum(axis=(0, 1))
        da = (
            _flat_matmul(dq_m, params[f"{p}.attn.wq"].T)
            + _flat_matmul(dk_m, params[f"{p}.attn.wk"].T)
            + _flat_matmul(dv_m, params[f"{p}.attn.wv"].T)
        )
        dx_ln1, dgain, dbias = _ln_backward(da, lc["ln1"])
        grads[f"{p}.ln1.gain"] += dgain
        grads[f"{p}.ln1.bias"] += dbias
        dx = dx + dx_ln1  # residual join at block input

    np.add.at(grads["tok_emb"], cache["tokens"], dx)
    grads["pos_emb"][: tokens.shape[1]] += dx.sum(axis=0)
    return loss, grads


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm
