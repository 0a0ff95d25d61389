"""Independent reference implementations used as test oracles."""

import numpy as np

from warship_sr import losses as L
from warship_sr.model import PARAM_NAMES, backward, forward
from warship_sr.tensor_ops import ConvParams, conv2d_backward, conv2d_forward


def _activation_pattern(trace):
    pres = [trace.embed1_pre, trace.embed2_pre, trace.shrink_pre]
    pres += trace.recursive_pre + trace.expand_pre
    return [p > 0 for p in pres]


def _same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def full_model_fd_worst(model, shape, alpha, beta, eps, coords_per_entry, rng):
    """Worst relative FD error over sampled weight and bias coordinates.

    Central differences only make sense where the loss is smooth, so a
    coordinate whose +/-eps evaluations land on different ReLU
    activation patterns is redrawn (the kink makes the two-sided slope
    meaningless there, not wrong). A bias shifts a whole channel, so
    one pre-activation stuck within eps of zero can poison every bias
    coordinate of a layer for that input; the probe then redraws the
    input itself, which moves all the activations.
    """
    worst = 0.0

    def fresh_case():
        x = rng.random(shape)
        y = rng.random(shape)
        trace = forward(model, x)
        gf, gis = L.composite_grads(y, trace.final_image, trace.intermediate_images, alpha)
        grads = backward(model, trace, gf, gis)
        return x, y, grads

    dec = L.decay_grads(model, beta)

    def probe(tensor_of, analytic_of):
        nonlocal worst
        done = 0
        for _ in range(6):  # fresh inputs
            x, y, grads = fresh_case()

            def measure(m):
                t = forward(m, x)
                bd = L.composite_loss(
                    m, y, t.final_image, t.intermediate_images, alpha, beta
                )
                return bd.total, _activation_pattern(t)

            arr = tensor_of()
            analytic = analytic_of(grads)
            for _ in range(30):  # coordinates per input
                idx = tuple(int(rng.integers(0, s)) for s in arr.shape)
                orig = arr[idx]
                arr[idx] = orig + eps
                fp, pat_p = measure(model)
                arr[idx] = orig - eps
                fm, pat_m = measure(model)
                arr[idx] = orig
                if not _same_pattern(pat_p, pat_m):
                    continue
                num = (fp - fm) / (2 * eps)
                worst = max(worst, abs(num - analytic[idx]) / max(1.0, abs(num)))
                done += 1
                if done >= coords_per_entry:
                    return
        assert done >= coords_per_entry, "could not find kink-free coordinates"

    for name in PARAM_NAMES:
        probe(
            lambda n=name: model.params[n].weights,
            lambda g, n=name: g[n][0] + dec[n],
        )
        if model.params[name].bias is not None:
            probe(
                lambda n=name: model.params[n].bias,
                lambda g, n=name: g[n][1],
            )
    return worst


def unrolled_forward_backward(model, x, grad_final, grads_intermediate):
    """Weight-sharing oracle: one independent parameter copy per application.

    Rebuilds the graph with independent copies of the recursive,
    expand, and to-image entries for every recurrence, runs forward and
    backward with per-copy bookkeeping, then sums the per-copy
    gradients. A correct shared-weight implementation must reproduce
    both the outputs and these summed gradients.
    """
    cfg = model.config
    p = model.params
    big_r = cfg.recurrences

    def clone(entry):
        return ConvParams(
            entry.weights.copy(),
            None if entry.bias is None else entry.bias.copy(),
        )

    rec_copies = [clone(p["inet.recursive"]) for _ in range(big_r)]
    exp_copies = [clone(p["rnet.expand"]) for _ in range(big_r)]
    img_copies = [clone(p["rnet.to_image"]) for _ in range(big_r)]

    def relu(v):
        return np.maximum(v, 0.0)

    def drelu(v, g):
        return np.where(v > 0, g, 0.0)

    z1 = conv2d_forward(x, p["enet.conv1"])
    a1 = relu(z1)
    z2 = conv2d_forward(a1, p["enet.conv2"])
    a2 = relu(z2)
    z3 = conv2d_forward(a2, p["enet.shrink"])
    h = relu(z3)
    hs = [h]
    zs = []
    for r in range(big_r):
        z = conv2d_forward(hs[r], rec_copies[r])
        zs.append(z)
        hs.append(hs[r] + relu(z))
    ze_list, e_list, y_list = [], [], []
    for r in range(big_r):
        ze = conv2d_forward(hs[r + 1], exp_copies[r])
        ze_list.append(ze)
        e_list.append(relu(ze))
        y_list.append(conv2d_forward(e_list[r], img_copies[r]))
    stacked = np.concatenate(y_list, axis=1)
    final = conv2d_forward(stacked, p["rnet.merge"])

    d_stacked, gw_merge, _ = conv2d_backward(stacked, p["rnet.merge"], grad_final)
    d_h = [np.zeros_like(h) for h in hs]
    per_copy = {"rec": [], "exp": [], "img": []}
    for r in range(big_r):
        dy = d_stacked[:, r:r + 1] + grads_intermediate[r]
        de, gw_i, gb_i = conv2d_backward(e_list[r], img_copies[r], dy)
        dze = drelu(ze_list[r], de)
        dh, gw_e, gb_e = conv2d_backward(hs[r + 1], exp_copies[r], dze)
        per_copy["img"].append((gw_i, gb_i))
        per_copy["exp"].append((gw_e, gb_e))
        d_h[r + 1] += dh
    for r in range(big_r, 0, -1):
        dz = drelu(zs[r - 1], d_h[r])
        dh_in, gw_r, gb_r = conv2d_backward(hs[r - 1], rec_copies[r - 1], dz)
        per_copy["rec"].append((gw_r, gb_r))
        d_h[r - 1] += d_h[r] + dh_in

    dz3 = drelu(z3, d_h[0])
    da2, gw_s, gb_s = conv2d_backward(a2, p["enet.shrink"], dz3)
    dz2 = drelu(z2, da2)
    da1, gw_2, gb_2 = conv2d_backward(a1, p["enet.conv2"], dz2)
    dz1 = drelu(z1, da1)
    _, gw_1, gb_1 = conv2d_backward(x, p["enet.conv1"], dz1)

    def summed(copies):
        gw = sum(g for g, _ in copies)
        gb = sum(g for _, g in copies)
        return gw, gb

    grads = {
        "enet.conv1": (gw_1, gb_1),
        "enet.conv2": (gw_2, gb_2),
        "enet.shrink": (gw_s, gb_s),
        "inet.recursive": summed(per_copy["rec"]),
        "rnet.expand": summed(per_copy["exp"]),
        "rnet.to_image": summed(per_copy["img"]),
        "rnet.merge": (gw_merge, None),
    }
    return final, y_list, grads
