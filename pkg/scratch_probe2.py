"""Probe: smoother images + width 12-96, full 150-epoch protocol (throwaway)."""
import os, sys, time, json
from concurrent.futures import ProcessPoolExecutor

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

SMOOTH = dict(n_shapes=(2, 6), blur=(1.2, 2.2), contrast=0.9)


def make_variant(count, seed, n_shapes, blur, contrast):
    import numpy as np
    from scipy import ndimage
    from odlr.corruption import gaussian_kernel_1d
    from odlr.dataset import ImageRecord
    from odlr.rng import derive_rng
    import odlr.synth as synth

    recs = []
    for i in range(count):
        rng = derive_rng("v2", seed, i)
        base = synth._gradient(rng, 64)
        for _ in range(int(rng.integers(*n_shapes))):
            mask = synth._ellipse_mask(rng, 64) if rng.uniform() < 0.7 else synth._bar_mask(rng, 64)
            base = np.where(mask, rng.uniform(-contrast, contrast), base)
        k = gaussian_kernel_1d(float(rng.uniform(*blur)))
        base = ndimage.correlate1d(base, k, axis=0, mode="reflect")
        base = ndimage.correlate1d(base, k, axis=1, mode="reflect")
        recs.append(ImageRecord(f"v{i}", np.clip(base, -1, 1)[None][None], (64, 64)))
    return recs


def run(kind_text, seed, width):
    from odlr.harness import TrainConfig, train, evaluate_test
    from odlr.schedulers import SchedulerKind

    recs = make_variant(2400, 1000, **SMOOTH)
    train_set, val_set, test_set = recs[:2000], recs[2000:2200], recs[2200:2400]
    tc = TrainConfig(task="denoise", scheduler=SchedulerKind.parse(kind_text),
                     epochs=150, batch_size=100, encoder_channels=width,
                     precision="float32", seed=seed)
    t0 = time.time()
    net, reports = train(tc, train_set, val_set)
    el = time.time() - t0
    tr = evaluate_test(net, test_set, "denoise", trials=2, master_seed=777)
    return {"kind": kind_text, "seed": seed, "train_s": round(el, 1),
            "final_P": [round(float(v), 3) for v in reports[-1].psnr],
            "final_next_alloc": list(reports[-1].next_allocation),
            "test_psnr": [round(float(v), 3) for v in tr.psnr_mean]}


if __name__ == "__main__":
    width = (12, 24, 48, 96)
    jobs = [("on-demand", 21), ("fixated:sigma=10", 21), ("fixated:sigma=90", 21)]
    t0 = time.time()
    with ProcessPoolExecutor(max_workers=2) as ex:
        futs = [ex.submit(run, k, s, width) for k, s in jobs]
        for f in futs:
            print(json.dumps(f.result()), flush=True)
    print(f"total wall {time.time()-t0:.0f}s")
