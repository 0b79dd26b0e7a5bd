"""Twelve end-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import time

import numpy as np
import pytest

from conftest import record
from lfdpt import tensor as T
from lfdpt.checkpoint import load_checkpoint, save_checkpoint
from lfdpt.cli import main
from lfdpt.gradcheck import check_gradients
from lfdpt.lightfield import (SyntheticScene, bicubic_resize, export_pgm, generate_scene,
                              read_lfr, read_pgm, write_lfr)
from lfdpt.metrics import evaluate_many, psnr, ssim
from lfdpt.model import (ABLATIONS, IMDB, DptConfig, DptModel, count_params, horizontal_stage,
                         vertical_stage)
from lfdpt.salsa import SalsaConfig, SalsaLayer, attend
from lfdpt.tensor import Tensor, no_grad
from lfdpt.train import TrainConfig, evaluate_model, lr_at, predict, train

GRAD_TOL = 1e-4
GRAD_BUDGET_S = 60.0
OVERFIT_BUDGET_S = 600.0


def rand(shape, seed, scale=1.0):
    return np.random.default_rng(seed).normal(scale=scale, size=shape)


def randomize(module, seed, scale):
    rng = np.random.default_rng(seed)
    for _, p in module.named_parameters():
        p.data = rng.normal(scale=scale, size=p.shape)
    return module


def projected(fn, shape, seed):
    """Scalar loss <fn(), M> for a fixed random M, so every output entry matters."""
    mix = Tensor(rand(shape, seed))
    return lambda: T.tsum(T.mul(fn(), mix))


# -- 1 -------------------------------------------------------------------------------

def gradient_cases():
    cases = {}

    x = Tensor(rand((2, 3, 6, 5), 1), requires_grad=True)
    w = Tensor(rand((4, 3, 3, 3), 2, 0.5), requires_grad=True)
    b = Tensor(rand((4,), 3), requires_grad=True)
    cases["conv2d"] = (projected(lambda: T.conv2d(x, w, b, stride=1, pad=1), (2, 4, 6, 5), 4),
                       [x, w, b])
    xd = Tensor(rand((1, 2, 9, 9), 5), requires_grad=True)
    wd = Tensor(rand((3, 2, 3, 3), 6, 0.5), requires_grad=True)
    cases["conv2d dilated/strided"] = (
        projected(lambda: T.conv2d(xd, wd, None, stride=2, pad=2, dilation=2), (1, 3, 5, 5), 7),
        [xd, wd])

    xu = Tensor(rand((2, 2, 6, 6), 8), requires_grad=True)
    cases["unfold"] = (projected(lambda: T.unfold(xu, (4, 4), (2, 2)), (2 * 4, 32), 9), [xu])
    tok = Tensor(rand((2 * 4, 32), 10), requires_grad=True)
    cases["fold"] = (projected(lambda: T.fold(tok, (2, 2, 6, 6), (4, 4), (2, 2)),
                               (2, 2, 6, 6), 11), [tok])

    s = Tensor(rand((5, 7), 12, 2.0), requires_grad=True)
    cases["softmax"] = (projected(lambda: T.softmax_rows(s), (5, 7), 13), [s])

    ma = Tensor(rand((4, 6), 14), requires_grad=True)
    mb = Tensor(rand((6, 3), 15), requires_grad=True)
    cases["matmul"] = (projected(lambda: T.matmul(ma, mb), (4, 3), 16), [ma, mb])

    ps = Tensor(rand((2, 8, 3, 3), 17), requires_grad=True)
    cases["pixel_shuffle"] = (projected(lambda: T.pixel_shuffle(ps, 2), (2, 2, 6, 6), 18), [ps])

    layer = randomize(SalsaLayer(2, SalsaConfig(patch=(2, 2), stride=(1, 1)),
                                 np.random.default_rng(0)), 19, 0.5)
    sx = Tensor(rand((2, 2, 4, 4), 20), requires_grad=True)
    cases["SA-LSA"] = (projected(lambda: layer(sx), (2, 2, 4, 4), 21),
                       [sx] + layer.parameters())

    cross = randomize(SalsaLayer(2, SalsaConfig(patch=(2, 2), stride=(2, 2)),
                                 np.random.default_rng(0)), 22, 0.5)
    cu = Tensor(rand((2, 2, 4, 4), 23), requires_grad=True)
    cv = Tensor(rand((2, 2, 4, 4), 24), requires_grad=True)
    cases["cross SA-LSA"] = (projected(lambda: cross.cross(cu, cv), (2, 2, 4, 4), 25),
                             [cu, cv] + cross.parameters())

    imdb = randomize(IMDB(8, np.random.default_rng(0)), 26, 0.3)
    ix = Tensor(rand((1, 8, 5, 5), 27), requires_grad=True)
    cases["IMDB"] = (projected(lambda: imdb(ix), (1, 8, 5, 5), 28), [ix] + imdb.parameters())

    # default init is an identity map with dead gradient paths; waking the
    # zero-initialised projections makes every parameter matter
    micro = DptModel(DptConfig(a=2, channels=4, k=1, alpha=2, n_imdb=1, imdb_channels=8))
    wake = np.random.default_rng(29)
    for _, p in micro.named_parameters():
        if not np.any(p.data):
            p.data = wake.normal(scale=0.1, size=p.shape)
    lr = np.random.default_rng(30).uniform(size=(2, 2, 1, 8, 8))
    cases["micro-DPT"] = (projected(lambda: micro(lr), (2, 2, 1, 16, 16), 31),
                          micro.parameters())
    return cases


def test_01_gradient_oracle_suite():
    start = time.perf_counter()
    worst, shrunk, probed, dead = {}, 0, 0, []
    for name, (loss, inputs) in gradient_cases().items():
        # the whole-network case probes a fixed subset of every parameter tensor
        limit = 3 if name == "micro-DPT" else None
        res = check_gradients(loss, inputs, h=1e-4, max_entries=limit, kink_safe=True)
        worst[name] = res.worst if res.on_kink == 0 else np.inf
        shrunk += res.shrunk
        probed += res.probed
        dead += [name for t in inputs if t.grad is None or not np.any(t.grad)]
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    ok = (all(v < GRAD_TOL for v in worst.values()) and not dead
          and elapsed < GRAD_BUDGET_S)
    record(1, "gradient oracle suite", ok,
           f"{len(worst)} layers, {probed} entries, worst {top} {worst[top]:.2e} < "
           f"{GRAD_TOL:g}, {shrunk} steps shrunk off a kink, {len(dead)} dead inputs, "
           f"{elapsed:.1f}s < {GRAD_BUDGET_S:g}s")
    assert ok, (worst, dead)


# -- 2 -------------------------------------------------------------------------------

def test_02_identity_at_init():
    worst = 0.0
    for seed in range(3):
        model = DptModel(DptConfig(), seed=seed)
        for k in range(3):
            lr = np.random.default_rng(10 * seed + k).uniform(size=(3, 3, 1, 8, 12))
            worst = max(worst, float(np.max(np.abs(predict(model, lr) - bicubic_resize(lr, 2)))))
    ok = worst < 1e-9
    record(2, "identity at init", ok, f"max |model - bicubic| = {worst:.1e} < 1e-9")
    assert ok


# -- 3 -------------------------------------------------------------------------------

def random_geometry(rng, disjoint):
    ph, pw = (int(v) for v in rng.integers(1, 5, size=2))
    if disjoint:
        sh, sw = ph, pw
    else:
        sh, sw = int(rng.integers(1, ph + 1)), int(rng.integers(1, pw + 1))
    nh, nw = (int(v) for v in rng.integers(1, 5, size=2))
    b, c = (int(v) for v in rng.integers(1, 4, size=2))
    return (b, c, ph + (nh - 1) * sh, pw + (nw - 1) * sw), (ph, pw), (sh, sw)


def test_03_tokenization_round_trips():
    rng = np.random.default_rng(3)
    exact, worst, overlapping = True, 0.0, 0
    for i in range(50):
        for disjoint in (True, False):
            shape, patch, stride = random_geometry(rng, disjoint)
            x = rand(shape, i)
            back = T.fold(T.unfold(Tensor(x), patch, stride), shape, patch, stride).data
            if disjoint:
                exact &= np.array_equal(back, x)
            else:
                overlapping += stride != patch
                worst = max(worst, float(np.max(np.abs(back - x))))
    ok = exact and worst < 1e-6
    record(3, "tokenization round trips", ok,
           f"50 disjoint exact={exact}; 50 overlapping ({overlapping} truly overlapping) "
           f"max err {worst:.1e} < 1e-6")
    assert ok


# -- 4 -------------------------------------------------------------------------------

def test_04_sequence_independence():
    layer = randomize(SalsaLayer(3, SalsaConfig(), np.random.default_rng(0)), 4, 0.4)
    f = rand((3, 3, 3, 8, 8), 5)
    ok = True
    for stage, axis in ((horizontal_stage, 0), (vertical_stage, 1)):
        base = stage(layer, Tensor(f)).data
        for j in range(3):
            g = f.copy()
            idx = (j, slice(None)) if axis == 0 else (slice(None), j)
            g[idx] += rand(g[idx].shape, 6 + j)
            out = stage(layer, Tensor(g)).data
            for i in range(3):
                same = np.array_equal(np.take(out, i, axis), np.take(base, i, axis))
                ok &= same if i != j else not same
    record(4, "sequence independence", ok,
           "perturbing row/column j leaves every other row/column bit-identical")
    assert ok


# -- 5 -------------------------------------------------------------------------------

def test_05_attention_invariants():
    rng = np.random.default_rng(7)
    worst_sum = 0.0
    for _ in range(200):
        n, m = (int(v) for v in rng.integers(1, 20, size=2))
        scores = rng.normal(scale=float(rng.choice([0.1, 1.0, 30.0, 300.0])), size=(n, m))
        rows = T.softmax_rows(Tensor(scores)).data.sum(axis=1)
        worst_sum = max(worst_sum, float(np.max(np.abs(rows - 1.0))))
    v = Tensor(rand((1, 6), 8))
    single = np.array_equal(attend(Tensor(rand((1, 6), 9)), Tensor(rand((1, 6), 10)), v).data,
                            v.data)
    vals = Tensor(rand((5, 4), 11))
    keys = Tensor(np.tile(rand((1, 4), 12), (5, 1)))
    mean_err = float(np.max(np.abs(attend(Tensor(rand((3, 4), 13)), keys, vals).data
                                   - vals.data.mean(axis=0))))
    layer = randomize(SalsaLayer(2, SalsaConfig(), np.random.default_rng(0)), 14, 0.5)
    u = rand((3, 2, 8, 8), 15)
    cross_self = np.array_equal(layer.cross(Tensor(u), Tensor(u.copy())).data,
                                layer(Tensor(u)).data)
    ok = worst_sum <= 1e-6 and single and mean_err < 1e-12 and cross_self
    record(5, "attention invariants", ok,
           f"row sums within {worst_sum:.1e}; single token = V: {single}; "
           f"identical keys mean err {mean_err:.1e}; cross(U, U) = self: {cross_self}")
    assert ok


# -- 6 -------------------------------------------------------------------------------

@pytest.mark.slow
def test_06_overfit_one_patch():
    hr, lr = generate_scene(SyntheticScene(disparity=1.0, seed=3), 3, 1, 64, 64, 2)
    # non-overlapping tokens keep 300 steps inside the time budget on one core
    cfg = DptConfig(a=3, channels=16, k=2, alpha=2, salsa=SalsaConfig(stride=(4, 4)))
    model = DptModel(cfg, seed=0)
    initial = float(np.mean(np.abs(predict(model, lr) - hr)))
    start = time.perf_counter()
    train(model, [(hr, lr)], TrainConfig(lr0=1e-3, halve_every=10**6, epochs=300, batch=1,
                                         augment=False))
    elapsed = time.perf_counter() - start
    out = predict(model, lr)
    final = float(np.mean(np.abs(out - hr)))
    gain = evaluate_many([out], [hr]).mean_psnr - evaluate_many([bicubic_resize(lr, 2)],
                                                                [hr]).mean_psnr
    ok = final < 0.1 * initial and gain >= 1.0 and elapsed < OVERFIT_BUDGET_S
    record(6, "overfit one patch", ok,
           f"l1 {initial:.4f} -> {final:.4f} (ratio {final / initial:.3f} < 0.1), "
           f"PSNR gain {gain:+.2f} dB >= 1.0, {elapsed:.0f}s < {OVERFIT_BUDGET_S:g}s")
    assert ok


# -- 7 -------------------------------------------------------------------------------

def test_07_schedule_conformance():
    expect = {0: 2e-4, 14: 2e-4, 15: 1e-4, 30: 5e-5, 45: 2.5e-5}
    closed = all(lr_at(e) == 2e-4 * 0.5 ** (e // 15) for e in range(76))
    pinned = all(lr_at(e) == v for e, v in expect.items())
    defaults = TrainConfig()
    ok = closed and pinned and (defaults.lr0, defaults.halve_every) == (2e-4, 15)
    record(7, "learning-rate schedule", ok,
           "lr(e) = 2e-4 * 0.5^floor(e/15) exactly; "
           + ", ".join(f"e={e}:{lr_at(e):g}" for e in expect))
    assert ok


# -- 8 -------------------------------------------------------------------------------

def test_08_param_count_trend():
    by_k = [count_params(DptModel(DptConfig(k=k))) for k in (1, 2, 3, 4)]
    full = count_params(DptModel(DptConfig()))
    content = count_params(DptModel(DptConfig(ablation="content_only")))
    ok = all(a < b for a, b in zip(by_k, by_k[1:])) and content < full
    record(8, "parameter-count trend", ok,
           f"K=1..4: {by_k}; content_only {content} < full {full}")
    assert ok


# -- 9 -------------------------------------------------------------------------------

def test_09_metric_correctness():
    rng = np.random.default_rng(9)
    a = rng.uniform(size=(16, 16))
    cap = psnr(a, a) == 100.0
    twenty = abs(psnr(a, a + 0.1) - 20.0) <= 1e-9
    ident = ssim(a, a) == 1.0
    c, d = 0.4, 0.15
    closed = (2 * c * (c + d) + 1e-4) / (c * c + (c + d) ** 2 + 1e-4)
    const_err = abs(ssim(np.full((12, 12), c), np.full((12, 12), c + d)) - closed)
    truth = [rng.uniform(size=(2, 2, 1, 12, 12)) for _ in range(2)]
    preds = [np.clip(t + rng.normal(scale=0.03, size=t.shape), 0, 1) for t in truth]
    rep = evaluate_many(preds, truth)
    manual = np.mean([psnr(t[u, v, 0], p[u, v, 0]) for p, t in zip(preds, truth)
                      for u in range(2) for v in range(2)])
    means = abs(rep.mean_psnr - manual) < 1e-12 and abs(rep.mean_ssim - rep.ssim.mean()) < 1e-12
    ok = cap and twenty and ident and const_err < 1e-12 and means and rep.n_views == 8
    record(9, "metric correctness", ok,
           f"cap={cap}, 0.1 error -> {psnr(a, a + 0.1):.12f} dB, ssim(a,a)={ssim(a, a)}, "
           f"constant closed-form err {const_err:.1e}, report means match={means}")
    assert ok


# -- 10 ------------------------------------------------------------------------------

def copy_shared(src, dst):
    params = dict(src.named_parameters())
    for name, p in dst.named_parameters():
        p.data = params[name].data.copy()


def test_10_ablation_smoke_matrix():
    hr, lr = generate_scene(SyntheticScene(disparity=0.5, seed=10), 3, 1, 32, 32, 2)
    data = [(hr, lr)]
    finite = {}
    for name in ABLATIONS:
        model = DptModel(DptConfig(ablation=name), seed=0)
        res = train(model, data, TrainConfig(epochs=10, batch=1, seed=0))
        rep = evaluate_model(model, data)
        finite[name] = (len(res.steps) == 10 and all(np.isfinite(s[3]) for s in res.steps)
                        and np.isfinite(rep.mean_psnr) and np.isfinite(rep.mean_ssim))

    full = randomize(DptModel(DptConfig(), seed=1), 2, 0.1)
    for prefix in ("gradient_extractor", "gradient_branch"):
        for _, p in getattr(full, prefix).named_parameters():
            p.data = np.zeros_like(p.data)
    for layer in (full.fusion.horizontal, full.fusion.vertical):
        for _, p in layer.f_p.named_parameters():
            p.data = np.zeros_like(p.data)
    summed = DptModel(DptConfig(ablation="sum_fusion"), seed=1)
    copy_shared(full, summed)
    with no_grad():
        same = np.array_equal(full(lr).data, summed(lr).data)
        nontrivial = not np.allclose(full(lr).data, bicubic_resize(lr, 2))
    ok = all(finite.values()) and same and nontrivial
    record(10, "ablation smoke matrix", ok,
           f"10-step runs finite: {sum(finite.values())}/6; sum_fusion == full with zero "
           f"gradient path and zero f_P: {same}")
    assert ok, finite


# -- 11 ------------------------------------------------------------------------------

def test_11_determinism(tmp_path):
    gen = [main(["gen-data", "--scenes", "2", "--a", "3", "--hw", "32", "--seed", "5",
                 "--out-dir", str(tmp_path / f"d{i}")]) for i in (0, 1)]
    data_same = all((tmp_path / "d0" / f.name).read_bytes() == f.read_bytes()
                    for f in (tmp_path / "d1").glob("*.lfr"))
    flags = ["--data", str(tmp_path / "d0"), "--patch", "32", "--epochs", "2", "--batch", "1",
             "--seed", "9"]
    runs = [main(["train", *flags, "--out-dir", str(tmp_path / f"r{i}")]) for i in (0, 1)]
    blobs = sorted((tmp_path / "r0" / "checkpoint" / "params").glob("*.bin"))
    ckpt_same = bool(blobs) and all(
        b.read_bytes() == (tmp_path / "r1" / "checkpoint" / "params" / b.name).read_bytes()
        for b in blobs)
    ckpt_same &= ((tmp_path / "r0" / "checkpoint" / "manifest.txt").read_bytes()
                  == (tmp_path / "r1" / "checkpoint" / "manifest.txt").read_bytes())
    log_same = ((tmp_path / "r0" / "loss.tsv").read_bytes()
                == (tmp_path / "r1" / "loss.tsv").read_bytes())
    ok = gen == [0, 0] and runs == [0, 0] and data_same and ckpt_same and log_same
    record(11, "determinism", ok,
           f"gen-data identical={data_same}; {len(blobs)} checkpoint blobs identical="
           f"{ckpt_same}; loss logs identical={log_same}")
    assert ok


# -- 12 ------------------------------------------------------------------------------

def test_12_format_round_trips(tmp_path):
    lf = np.random.default_rng(12).uniform(size=(3, 3, 1, 9, 7)).astype(np.float32)
    write_lfr(tmp_path / "x.lfr", lf)
    lfr_exact = np.array_equal(read_lfr(tmp_path / "x.lfr"), lf.astype(np.float64))
    export_pgm(lf.astype(np.float64), tmp_path / "pgm")
    pgm_err = max(float(np.max(np.abs(read_pgm(tmp_path / "pgm" / f"sai_u{u}_v{v}.pgm")
                                      - lf[u, v, 0])))
                  for u in range(3) for v in range(3))
    model = randomize(DptModel(DptConfig(k=1), seed=2), 3, 0.1)
    save_checkpoint(model, tmp_path / "ck")
    restored = load_checkpoint(tmp_path / "ck", expect=model.config)
    lr = np.random.default_rng(13).uniform(size=(3, 3, 1, 8, 8))
    ckpt_exact = np.array_equal(predict(model, lr), predict(restored, lr))
    ok = lfr_exact and pgm_err <= 1 / 65535 and ckpt_exact
    record(12, "format round trips", ok,
           f"LFR bit-exact={lfr_exact}; PGM max err {pgm_err * 65535:.3f}/65535; "
           f"checkpoint forward bit-exact={ckpt_exact}")
    assert ok
