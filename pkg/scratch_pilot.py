"""Pilot one seed of the desk-scale protocol (throwaway script)."""
import os
import sys
import time
import json
from concurrent.futures import ProcessPoolExecutor

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


def run(kind_text, seed):
    import numpy as np
    from odlr.harness import TrainConfig, train, evaluate_test
    from odlr.schedulers import SchedulerKind
    from odlr.synth import synth_records

    recs = synth_records(2400, channels=1, seed=1000)
    train_set, val_set, test_set = recs[:2000], recs[2000:2200], recs[2200:2400]
    tc = TrainConfig(task="denoise", scheduler=SchedulerKind.parse(kind_text),
                     epochs=150, batch_size=100,
                     encoder_channels=(8, 16, 32, 64), precision="float32",
                     seed=seed)
    t0 = time.time()
    net, reports = train(tc, train_set, val_set)
    el = time.time() - t0
    tr = evaluate_test(net, test_set, "denoise", trials=2, master_seed=777)
    return {
        "kind": kind_text, "seed": seed, "train_s": round(el, 1),
        "final_loss": reports[-1].train_loss,
        "final_P": list(reports[-1].psnr),
        "final_next_alloc": list(reports[-1].next_allocation),
        "test_psnr": [round(float(v), 3) for v in tr.psnr_mean],
    }


if __name__ == "__main__":
    jobs = [("on-demand", 21), ("fixated:sigma=10", 21), ("fixated:sigma=90", 21),
            ("rigid-joint", 21), ("staged-curriculum", 21)]
    t0 = time.time()
    with ProcessPoolExecutor(max_workers=2) as ex:
        results = list(ex.map(run, *zip(*jobs)))
    for r in results:
        print(json.dumps(r))
    print(f"total wall {time.time()-t0:.0f}s")
