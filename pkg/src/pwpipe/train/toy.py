"""Desk-scale training runs on synthetic data.

Stage 1 trains the generator on paired blurred/sharp phantoms with L1 loss,
batch size 1, keeping the weights from the epoch with the lowest validation
loss.  Stage 2 runs the unpaired two-generator/two-discriminator loop on
speckled vs smoothed phantom domains with flip/crop augmentation and the
piecewise learning-rate schedule (boundaries compressed for short runs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..imgproc import gaussian_blur
from ..nn import ModelConfig, build_discriminator, build_generator, forward, save_weights
from ..nn.ops import weight_matrix
from . import logs
from .backprop import add_grads, backward_graph, forward_training
from .losses import LossWeights, l1_grad, l1_loss, mse_to_const, mse_to_const_grad
from .optim import AdamState, LrSchedule, adam_step, default_cyclegan_schedule


# ---------------------------------------------------------------------------
# Synthetic data


def _toy_phantom(rng: np.random.Generator, n: int) -> np.ndarray:
    """Sharp-edged test pattern: gradient background plus random boxes and
    ellipses, values in [0, 1]."""
    yy, xx = np.mgrid[0:n, 0:n] / (n - 1.0)
    gx, gy = rng.uniform(-0.3, 0.3, size=2)
    img = 0.35 + gx * (xx - 0.5) + gy * (yy - 0.5)
    for _ in range(rng.integers(3, 7)):
        level = rng.uniform(0.0, 1.0)
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        ry, rx = rng.uniform(0.06, 0.25, size=2)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        img = np.where(mask, level, img)
    return np.clip(img, 0.0, 1.0)


def make_paired_toy_dataset(
    count: int, resolution: int = 64, seed: int = 0, blur_sigma: float = 1.5
) -> list[tuple[np.ndarray, np.ndarray]]:
    """(blurred input, sharp target) pairs as float32 (res, res) arrays."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        sharp = _toy_phantom(rng, resolution)
        blurred = np.clip(gaussian_blur(sharp, blur_sigma), 0.0, 1.0)
        pairs.append((blurred.astype(np.float32), sharp.astype(np.float32)))
    return pairs


def make_unpaired_toy_domains(
    count: int, resolution: int = 64, seed: int = 0, margin: int = 8
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Two unpaired domains at (resolution+margin)^2 for random cropping.

    Domain X carries multiplicative speckle over the phantoms; domain Y is a
    blurred, clean rendering of independently drawn phantoms.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = resolution + margin
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for _ in range(count):
        base = _toy_phantom(rng, n)
        speckle = rng.rayleigh(scale=1.0, size=(n, n)) / np.sqrt(np.pi / 2.0)
        xs.append(np.clip(base * speckle, 0.0, 1.0).astype(np.float32))
    for _ in range(count):
        base = _toy_phantom(rng, n)
        ys.append(np.clip(gaussian_blur(base, 1.0), 0.0, 1.0).astype(np.float32))
    return xs, ys


def _augment(img: np.ndarray, out: int, rng: np.random.Generator) -> np.ndarray:
    """Random horizontal flip plus random crop to out x out."""
    if rng.random() < 0.5:
        img = img[:, ::-1]
    max_off = img.shape[0] - out
    r = int(rng.integers(0, max_off + 1)) if max_off > 0 else 0
    c = int(rng.integers(0, max_off + 1)) if max_off > 0 else 0
    return np.ascontiguousarray(img[r : r + out, c : c + out])


def _batch(img: np.ndarray) -> np.ndarray:
    return img[None, :, :, None]


# ---------------------------------------------------------------------------
# Stage 1: paired training


@dataclass
class Stage1Config:
    pair_count: int = 200
    resolution: int = 64
    base_filters: int = 8
    levels: int = 4
    epochs: int = 30
    lr: float = 2e-4
    seed: int = 0
    val_fraction: float = 0.2
    blur_sigma: float = 1.5
    weights_path: str | None = None
    log_path: str | None = None


@dataclass
class Stage1Result:
    graph: object
    best_epoch: int
    best_val: float
    first_val: float
    rows: list = field(default_factory=list)


def validation_l1(graph, pairs) -> float:
    total = 0.0
    for inp, tgt in pairs:
        pred = forward(graph, _batch(inp))
        total += l1_loss(pred, _batch(tgt))
    return total / len(pairs)


def train_stage1_toy(config: Stage1Config) -> Stage1Result:
    if config.pair_count < 2:
        raise ValueError("need at least 2 pairs to split train/validation")
    if config.epochs < 1:
        raise ValueError("epochs must be >= 1")
    pairs = make_paired_toy_dataset(
        config.pair_count, config.resolution, config.seed, config.blur_sigma
    )
    n_val = max(1, int(round(config.pair_count * config.val_fraction)))
    train_pairs, val_pairs = pairs[:-n_val], pairs[-n_val:]
    if not train_pairs:
        raise ValueError("validation split leaves no training pairs")

    model_cfg = ModelConfig(
        resolution=config.resolution,
        base_filters=config.base_filters,
        levels=config.levels,
    )
    graph = build_generator(model_cfg, role="stage1_unet")
    graph.init_weights(seed=config.seed)
    adam = AdamState()
    rng = np.random.default_rng(config.seed + 1)

    rows = []
    best_val = np.inf
    best_epoch = 0
    best_weights = {k: v.copy() for k, v in graph.weights.items()}
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_pairs))
        train_total = 0.0
        for idx in order:
            inp, tgt = train_pairs[idx]
            xb, tb = _batch(inp), _batch(tgt)
            pred, tape = forward_training(graph, xb)
            train_total += l1_loss(pred, tb)
            grads, _ = backward_graph(graph, tape, l1_grad(pred, tb))
            adam_step(adam, graph.weights, grads, config.lr)
        val = validation_l1(graph, val_pairs)
        rows.append((epoch, config.lr, train_total / len(train_pairs), val))
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_weights = {k: v.copy() for k, v in graph.weights.items()}

    graph.weights = best_weights
    meta = {
        "task": "stage1_paired_toy",
        "pair_count": config.pair_count,
        "resolution": config.resolution,
        "base_filters": config.base_filters,
        "levels": config.levels,
        "epochs": config.epochs,
        "lr": config.lr,
        "seed": config.seed,
        "val_fraction": config.val_fraction,
        "blur_sigma": config.blur_sigma,
        "best_epoch": best_epoch,
        "best_val_l1": format(best_val, ".10g"),
        "saved_weights": "lowest validation loss epoch",
    }
    if config.log_path:
        logs.write_training_log(
            config.log_path, meta, ["epoch", "lr", "train_l1", "val_l1"], rows
        )
    if config.weights_path:
        save_weights(graph.weights, config.weights_path)
    return Stage1Result(
        graph=graph,
        best_epoch=best_epoch,
        best_val=best_val,
        first_val=rows[0][3],
        rows=rows,
    )


# ---------------------------------------------------------------------------
# Stage 2: unpaired CycleGAN training


@dataclass
class CycleGANConfig:
    domain_size: int = 60
    resolution: int = 64
    base_filters: int = 8
    disc_base_filters: int = 8
    levels: int = 4
    steps: int = 500
    weights: LossWeights = field(default_factory=LossWeights)
    schedule: LrSchedule | None = None
    seed: int = 0
    val_fraction: float = 0.1
    eval_interval: int = 100
    crop_margin: int = 8
    log_path: str | None = None
    weights_g_path: str | None = None
    weights_f_path: str | None = None
    weights_dx_path: str | None = None
    weights_dy_path: str | None = None


@dataclass
class CycleGANResult:
    G: object
    F: object
    D_X: object
    D_Y: object
    rows: list
    columns: list


_CG_COLUMNS = [
    "step", "lr",
    "gen_G", "gen_G_gan", "gen_G_cyc", "gen_G_id",
    "gen_F", "gen_F_gan", "gen_F_cyc", "gen_F_id",
    "disc_X", "disc_Y",
]


def _update_spectral_u(graph) -> None:
    """One power-iteration step per spectrally normalized layer, in place."""
    for spec in graph.layers:
        if spec.kind == "conv2d" and spec.spectral_norm:
            w = graph.weights[f"{spec.name}.w"]
            mat = weight_matrix(w)
            u = np.asarray(graph.weights[f"{spec.name}.u"], dtype=np.float64)
            v = mat.T @ u
            nv = np.linalg.norm(v)
            if nv == 0.0:
                continue
            u = mat @ (v / nv)
            nu = np.linalg.norm(u)
            if nu == 0.0:
                continue
            graph.weights[f"{spec.name}.u"] = (u / nu).astype(np.float32)


def _held_out_cycle(G, F, xs, ys) -> tuple[float, float]:
    cg = cf = 0.0
    for x in xs:
        xb = _batch(x)
        cg += l1_loss(forward(F, forward(G, xb)), xb)
    for y in ys:
        yb = _batch(y)
        cf += l1_loss(forward(G, forward(F, yb)), yb)
    return cg / max(len(xs), 1), cf / max(len(ys), 1)


def train_cyclegan_toy(config: CycleGANConfig) -> CycleGANResult:
    if config.domain_size < 2:
        raise ValueError("need at least 2 images per domain")
    if config.steps < 1:
        raise ValueError("steps must be >= 1")
    xs, ys = make_unpaired_toy_domains(
        config.domain_size, config.resolution, config.seed, config.crop_margin
    )
    n_val = max(1, int(round(config.domain_size * config.val_fraction)))
    xs_train, xs_val = xs[:-n_val], xs[-n_val:]
    ys_train, ys_val = ys[:-n_val], ys[-n_val:]
    if not xs_train or not ys_train:
        raise ValueError("validation split leaves an empty training domain")
    # held-out images still carry the crop margin; evaluate on center crops
    m = config.crop_margin // 2
    r = config.resolution
    xs_val = [x[m : m + r, m : m + r] for x in xs_val]
    ys_val = [y[m : m + r, m : m + r] for y in ys_val]

    model_cfg = ModelConfig(
        resolution=config.resolution,
        base_filters=config.base_filters,
        disc_base_filters=config.disc_base_filters,
        levels=config.levels,
    )
    G = build_generator(model_cfg, role="generator_G")
    F = build_generator(model_cfg, role="generator_F")
    D_X = build_discriminator(model_cfg, role="discriminator_X")
    D_Y = build_discriminator(model_cfg, role="discriminator_Y")
    for i, g in enumerate((G, F, D_X, D_Y)):
        g.init_weights(seed=config.seed * 4 + i)

    schedule = config.schedule or default_cyclegan_schedule().scaled(config.steps / 40000.0)
    w = config.weights
    opt = {id(G): AdamState(), id(F): AdamState(), id(D_X): AdamState(), id(D_Y): AdamState()}
    rng = np.random.default_rng(config.seed + 17)

    meta = {
        "task": "cyclegan_unpaired_toy",
        "domain_size": config.domain_size,
        "resolution": config.resolution,
        "base_filters": config.base_filters,
        "disc_base_filters": config.disc_base_filters,
        "levels": config.levels,
        "steps": config.steps,
        "lambda_G": w.lambda_g,
        "lambda_F": w.lambda_f,
        "identity_weight": w.identity_weight,
        "lr_boundaries": ",".join(str(b) for b in schedule.boundaries),
        "lr_rates": ",".join(format(r_, "g") for r_ in schedule.rates),
        "seed": config.seed,
        "update_order": "D_X, D_Y, then G and F jointly",
        "disc_targets": "real=1 fake=0, per-side loss halved",
        "augmentation": "random horizontal flip + random crop",
    }

    rows = []
    notes = []
    for step in range(config.steps):
        lr = schedule.rate(step)
        x = _batch(_augment(xs_train[int(rng.integers(len(xs_train)))], config.resolution, rng))
        y = _batch(_augment(ys_train[int(rng.integers(len(ys_train)))], config.resolution, rng))

        _update_spectral_u(D_X)

        # generator outputs used as detached fakes for the discriminators
        a = forward(G, x)  # fake Y
        c = forward(F, y)  # fake X

        # discriminator updates
        for D, real, fake in ((D_X, x, c), (D_Y, y, a)):
            pr, tr = forward_training(D, real)
            pf, tf = forward_training(D, fake)
            g1, _ = backward_graph(D, tr, 0.5 * mse_to_const_grad(pr, 1.0))
            g2, _ = backward_graph(D, tf, 0.5 * mse_to_const_grad(pf, 0.0))
            loss_d = 0.5 * (mse_to_const(pr, 1.0) + mse_to_const(pf, 0.0))
            adam_step(opt[id(D)], D.weights, add_grads(g1, g2), lr)
            if D is D_X:
                disc_x_loss = loss_d
            else:
                disc_y_loss = loss_d

        # joint generator update against the refreshed discriminators
        a, tape_g1 = forward_training(G, x)
        b, tape_f1 = forward_training(F, a)
        c, tape_f2 = forward_training(F, y)
        d, tape_g2 = forward_training(G, c)
        id_g, tape_g3 = forward_training(G, y)
        id_f, tape_f4 = forward_training(F, x)
        dy_a, tape_dy = forward_training(D_Y, a)
        dx_c, tape_dx = forward_training(D_X, c)

        gan_g = w.lambda_g * mse_to_const(dy_a, 1.0)
        cyc_g = l1_loss(b, x)
        idt_g = w.identity_weight * l1_loss(id_g, y)
        gan_f = w.lambda_f * mse_to_const(dx_c, 1.0)
        cyc_f = l1_loss(d, y)
        idt_f = w.identity_weight * l1_loss(id_f, x)

        grads_G: dict = {}
        grads_F: dict = {}
        # adversarial terms, gradients flowing through frozen discriminators
        _, d_a = backward_graph(D_Y, tape_dy, w.lambda_g * mse_to_const_grad(dy_a, 1.0))
        _, d_c = backward_graph(D_X, tape_dx, w.lambda_f * mse_to_const_grad(dx_c, 1.0))
        # cycle terms
        gf, d_a2 = backward_graph(F, tape_f1, l1_grad(b, x))
        add_grads(grads_F, gf)
        gg, d_c2 = backward_graph(G, tape_g2, l1_grad(d, y))
        add_grads(grads_G, gg)
        # back into the first-hop generators
        gg, _ = backward_graph(G, tape_g1, d_a + d_a2)
        add_grads(grads_G, gg)
        gf, _ = backward_graph(F, tape_f2, d_c + d_c2)
        add_grads(grads_F, gf)
        # identity terms
        gg, _ = backward_graph(G, tape_g3, w.identity_weight * l1_grad(id_g, y))
        add_grads(grads_G, gg)
        gf, _ = backward_graph(F, tape_f4, w.identity_weight * l1_grad(id_f, x))
        add_grads(grads_F, gf)

        adam_step(opt[id(G)], G.weights, grads_G, lr)
        adam_step(opt[id(F)], F.weights, grads_F, lr)

        rows.append((
            step, lr,
            gan_g + cyc_g + idt_g, gan_g, cyc_g, idt_g,
            gan_f + cyc_f + idt_f, gan_f, cyc_f, idt_f,
            disc_x_loss, disc_y_loss,
        ))
        if config.eval_interval and (step % config.eval_interval == 0 or step == config.steps - 1):
            vg, vf = _held_out_cycle(G, F, xs_val, ys_val)
            notes.append(f"held_out step={step} cycle_G={vg:.6g} cycle_F={vf:.6g}")

    if config.log_path:
        logs.write_training_log(config.log_path, meta, _CG_COLUMNS, rows)
        for note in notes:
            logs.append_log_note(config.log_path, note)
    for graph, path in (
        (G, config.weights_g_path), (F, config.weights_f_path),
        (D_X, config.weights_dx_path), (D_Y, config.weights_dy_path),
    ):
        if path:
            save_weights(graph.weights, path)
    return CycleGANResult(G=G, F=F, D_X=D_X, D_Y=D_Y, rows=rows, columns=_CG_COLUMNS)
