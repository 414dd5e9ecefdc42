"""Desk-scale trainer used by the test suite to produce trained weights.

Plain numpy backprop over the exact network structure (shared Block-2
weights, ReLU placement per the derived spec), adaptive-moment updates,
cross-entropy loss. Deliberately minimal: full-precision, no dropout,
seeded end to end.
"""

import numpy as np

from hsiaccel.hsi_io import extract_patch, split_dataset
from hsiaccel.model import WeightSet


def _windows(x, kh=3, kw=3):
    return np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))


def conv_fwd(x, w, b):
    # x: (n, H, W, C_in), w: (C_out, C_in, kh, kw)
    if w.shape[2] == 1:
        return np.einsum("nijc,fc->nijf", x, w[:, :, 0, 0]) + b
    return np.einsum("nijcab,fcab->nijf", _windows(x), w) + b


def conv_bwd(x, w, dy):
    if w.shape[2] == 1:
        dw = np.einsum("nijf,nijc->fc", dy, x)[:, :, None, None]
        db = dy.sum(axis=(0, 1, 2))
        dx = np.einsum("nijf,fc->nijc", dy, w[:, :, 0, 0])
        return dw, db, dx
    dw = np.einsum("nijf,nijcab->fcab", dy, _windows(x))
    db = dy.sum(axis=(0, 1, 2))
    pad = np.pad(dy, ((0, 0), (2, 2), (2, 2), (0, 0)))
    wf = w[:, :, ::-1, ::-1]
    dx = np.einsum("nuvfab,fcab->nuvc", _windows(pad), wf)
    return dw, db, dx


class DeskModel:
    """Parameters and forward/backward for one derived NetworkSpec."""

    def __init__(self, spec, seed):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.params = {}
        for layer in spec.weighted_layers():
            fan_in = int(np.prod(layer.weight_shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            self.params[layer.name + ".w"] = rng.uniform(-bound, bound, layer.weight_shape)
            self.params[layer.name + ".b"] = np.zeros(layer.bias_shape)

    def forward(self, x):
        """x: (n, p, p, N_c) -> logits (n, C); caches for backward."""
        spec, P = self.spec, self.params
        cache = {"x": x}
        a = conv_fwd(x, P["block1_conv.w"], P["block1_conv.b"])
        cache["block1_out"] = a
        n = x.shape[0]
        n_c = spec.n_c
        width = n_c // spec.n_b
        flat = a.reshape(n, 9, n_c)
        bands_out = []
        cache["bands"] = []
        for bi in range(spec.n_b):
            t = flat[:, :, bi * width : (bi + 1) * width].reshape(n, 9, width, 1)
            steps = [t]
            for li in range(1, 5):
                z = conv_fwd(t, P[f"block2_conv{li}.w"], P[f"block2_conv{li}.b"])
                t = np.maximum(z, 0.0)
                steps.append(z)
                steps.append(t)
            cache["bands"].append(steps)
            bands_out.append(t.reshape(n, -1))
        v = np.concatenate(bands_out, axis=1)
        cache["concat"] = v
        z1 = v @ P["fc1.w"].T + P["fc1.b"]
        h = np.maximum(z1, 0.0)
        cache["fc1_z"], cache["fc1_h"] = z1, h
        logits = h @ P["fc2.w"].T + P["fc2.b"]
        return logits, cache

    def backward(self, cache, dlogits):
        spec, P = self.spec, self.params
        g = {}
        h = cache["fc1_h"]
        g["fc2.w"] = dlogits.T @ h
        g["fc2.b"] = dlogits.sum(axis=0)
        dh = dlogits @ P["fc2.w"]
        dz1 = dh * (cache["fc1_z"] > 0)
        g["fc1.w"] = dz1.T @ cache["concat"]
        g["fc1.b"] = dz1.sum(axis=0)
        dv = dz1 @ P["fc1.w"]

        n = dv.shape[0]
        n_c = spec.n_c
        width = n_c // spec.n_b
        per_band = spec.concat_len // spec.n_b
        last = spec.layer("block2_conv4").out_shape
        dflat = np.zeros((n, 9, n_c))
        for li in range(1, 5):
            g[f"block2_conv{li}.w"] = np.zeros_like(P[f"block2_conv{li}.w"])
            g[f"block2_conv{li}.b"] = np.zeros_like(P[f"block2_conv{li}.b"])
        for bi in range(spec.n_b):
            steps = cache["bands"][bi]
            dt = dv[:, bi * per_band : (bi + 1) * per_band].reshape((n,) + last)
            for li in range(4, 0, -1):
                x_in = steps[(li - 1) * 2]
                z = steps[li * 2 - 1]
                dz = dt * (z > 0)
                dw, db, dt = conv_bwd(x_in, P[f"block2_conv{li}.w"], dz)
                g[f"block2_conv{li}.w"] += dw
                g[f"block2_conv{li}.b"] += db
            dflat[:, :, bi * width : (bi + 1) * width] = dt.reshape(n, 9, width)
        da = dflat.reshape(n, 3, 3, n_c)
        dw, db, _ = conv_bwd(cache["x"], P["block1_conv.w"], da)
        g["block1_conv.w"] = dw
        g["block1_conv.b"] = db
        return g

    def to_weight_set(self) -> WeightSet:
        weights = {}
        for layer in self.spec.weighted_layers():
            weights[layer.name] = (
                self.params[layer.name + ".w"].astype(np.float32),
                self.params[layer.name + ".b"].astype(np.float32),
            )
        return WeightSet(weights)


class Adam:
    def __init__(self, params, lr=0.0005, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        for k in params:
            gk = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * gk
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * gk * gk
            mh = self.m[k] / (1 - self.b1**self.t)
            vh = self.v[k] / (1 - self.b2**self.t)
            params[k] -= self.lr * mh / (np.sqrt(vh) + self.eps)


def softmax_ce(logits, y):
    """Returns (loss, dlogits); y is 0-based class indices."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -np.log(probs[np.arange(n), y] + 1e-300).mean()
    d = probs.copy()
    d[np.arange(n), y] -= 1.0
    return loss, d / n


def gather_patches(cube, labels, coords, p):
    xs = np.stack([extract_patch(cube, labels, x, y, p).data for x, y in coords])
    ys = np.array([labels.labels[y, x] - 1 for x, y in coords], dtype=np.int64)
    return xs.astype(np.float64), ys


def train_desk_model(
    spec,
    cube,
    labels,
    seed=0,
    epochs=30,
    batch_size=16,
    lr=0.0005,
):
    """Train on the 15/5/80 split; returns (model, metrics dict)."""
    split = split_dataset(labels, (0.15, 0.05), seed=seed, min_samples=10)
    x_train, y_train = gather_patches(cube, labels, split.train, spec.p)
    x_test, y_test = gather_patches(cube, labels, split.test, spec.p)

    model = DeskModel(spec, seed=seed + 1)
    opt = Adam(model.params, lr=lr)
    rng = np.random.default_rng(seed + 2)
    n = len(y_train)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            idx = order[i : i + batch_size]
            logits, cache = model.forward(x_train[idx])
            loss, dl = softmax_ce(logits, y_train[idx])
            grads = model.backward(cache, dl)
            opt.step(model.params, grads)
            losses.append(loss)

    logits, _ = model.forward(x_test)
    test_oa = float((logits.argmax(axis=1) == y_test).mean())
    return model, {
        "test_oa": test_oa,
        "final_loss": losses[-1],
        "split": split,
        "x_test": x_test,
        "y_test": y_test,
    }
